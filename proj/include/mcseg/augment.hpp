#ifndef MCSEG_AUGMENT_HPP
#define MCSEG_AUGMENT_HPP

#include "mcseg/core.hpp"
#include "mcseg/preprocess.hpp"
#include "mcseg/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

namespace mcseg {

using Range = std::array<double, 2>;

struct AugmentationConfig {
  bool enable_spatial = true;
  bool enable_intensity = true;
  double per_op_probability = 0.2;
  double rotation_limit_deg = 30.0;
  Range rescale_mm_range{0.75, 1.88};
  Range noise_sigma_range{0.0, 0.03};
  Range gamma_range{0.7, 1.5};
  Range brightness_range{-0.5, 0.5};
  Range contrast_range{-0.5, 0.5};
  Range bilateral_spatial_sigma_range{0.5, 2.0};
  Range bilateral_range_sigma_range{0.05, 0.2};
  std::array<int, 2> crop_size{256, 256};
  // Zero margin added on each side before the random crop, as a fraction of
  // the crop size. It sets how far the heart can be shifted.
  double crop_shift_fraction = 0.125;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
  static AugmentationConfig disabled() {
    AugmentationConfig c;
    c.enable_spatial = c.enable_intensity = false;
    return c;
  }
};

class ParameterError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

inline void check_range(const char* op, const char* what, double v, const Range& r) {
  if (!(v >= r[0] - 1e-12 && v <= r[1] + 1e-12))
    throw ParameterError(std::string(op) + ": " + what + " = " + std::to_string(v) +
                         " outside [" + std::to_string(r[0]) + ", " + std::to_string(r[1]) + "]");
}

template <typename Scalar>
using SlicePair = std::pair<Slice<Scalar>, LabelSlice>;

enum class FlipAxis { horizontal, vertical };

// Horizontal mirrors columns (c -> W-1-c); vertical mirrors rows.
template <typename Scalar>
SlicePair<Scalar> flip(const Slice<Scalar>& img, const LabelSlice& labels, FlipAxis axis) {
  if (axis == FlipAxis::horizontal) return {img.rowwise().reverse(), labels.rowwise().reverse()};
  return {img.colwise().reverse(), labels.colwise().reverse()};
}

namespace detail {

template <typename Scalar>
Scalar bilinear(const Slice<Scalar>& img, double y, double x) {
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0, fx = x - x0;
  auto px = [&](int yy, int xx) -> double {
    return (yy < 0 || yy >= h || xx < 0 || xx >= w) ? 0.0 : double(img(yy, xx));
  };
  const double v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                   fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
  return Scalar(v);
}

inline std::uint8_t nearest(const LabelSlice& l, double y, double x) {
  const int yy = static_cast<int>(std::lround(y)), xx = static_cast<int>(std::lround(x));
  if (yy < 0 || yy >= l.rows() || xx < 0 || xx >= l.cols()) return 0;
  return l(yy, xx);
}

// Resample through an inverse map output(y, x) <- source(map(y, x)).
template <typename Scalar, typename Map>
SlicePair<Scalar> warp(const Slice<Scalar>& img, const LabelSlice& labels, Map map) {
  Slice<Scalar> out(img.rows(), img.cols());
  LabelSlice lout(labels.rows(), labels.cols());
  for (Eigen::Index y = 0; y < img.rows(); ++y)
    for (Eigen::Index x = 0; x < img.cols(); ++x) {
      const auto [sy, sx] = map(double(y), double(x));
      out(y, x) = bilinear(img, sy, sx);
      lout(y, x) = nearest(labels, sy, sx);
    }
  return {std::move(out), std::move(lout)};
}

template <typename Scalar>
void clip01(Slice<Scalar>& s) {
  s = s.max(Scalar(0)).min(Scalar(1));
}

}  // namespace detail

// Rotation about the image centre. Image bilinear, labels nearest; pixels
// mapped from outside the frame become 0 / background.
template <typename Scalar>
SlicePair<Scalar> rotate(const Slice<Scalar>& img, const LabelSlice& labels, double theta_deg,
                         double limit_deg = 30.0) {
  if (std::abs(theta_deg) > limit_deg + 1e-12)
    throw ParameterError("rotate: |theta| = " + std::to_string(std::abs(theta_deg)) +
                         " exceeds limit " + std::to_string(limit_deg));
  if (theta_deg == 0.0) return {img, labels};
  const double t = theta_deg * std::numbers::pi / 180.0;
  const double c = std::cos(t), s = std::sin(t);
  const double cy = (img.rows() - 1) / 2.0, cx = (img.cols() - 1) / 2.0;
  return detail::warp(img, labels, [&](double y, double x) {
    const double dy = y - cy, dx = x - cx;
    return std::pair{cy + c * dy - s * dx, cx + s * dy + c * dx};
  });
}

// Zoom by native_mm / target_mm about the centre, keeping the input shape.
template <typename Scalar>
SlicePair<Scalar> rescale(const Slice<Scalar>& img, const LabelSlice& labels, double target_mm,
                          double native_mm, const Range& allowed = {0.75, 1.88}) {
  if (!(native_mm > 0)) throw ParameterError("rescale: native_mm must be > 0");
  check_range("rescale", "target_mm", target_mm, allowed);
  const double zoom = native_mm / target_mm;
  if (zoom == 1.0) return {img, labels};
  const double cy = (img.rows() - 1) / 2.0, cx = (img.cols() - 1) / 2.0;
  return detail::warp(img, labels, [&](double y, double x) {
    return std::pair{cy + (y - cy) / zoom, cx + (x - cx) / zoom};
  });
}

inline double rescale_zoom_factor(double target_mm, double native_mm) { return native_mm / target_mm; }

// Window of the given size at (row_offset, col_offset); the input is first
// zero-padded symmetrically if it is smaller than the window.
template <typename Scalar>
SlicePair<Scalar> crop_at(const Slice<Scalar>& img, const LabelSlice& labels, int rows, int cols,
                          int row_offset, int col_offset) {
  Slice<Scalar> src = img;
  LabelSlice lsrc = labels;
  if (src.rows() < rows || src.cols() < cols) {
    const int pr = std::max<int>(rows, static_cast<int>(src.rows()));
    const int pc = std::max<int>(cols, static_cast<int>(src.cols()));
    src = crop_or_pad_plane<Scalar>(src, pr, pc);
    lsrc = crop_or_pad_plane<std::uint8_t>(lsrc, pr, pc);
  }
  if (row_offset < 0 || col_offset < 0 || row_offset + rows > src.rows() ||
      col_offset + cols > src.cols())
    throw ParameterError("random_crop: offset outside the valid window");
  return {src.block(row_offset, col_offset, rows, cols), lsrc.block(row_offset, col_offset, rows, cols)};
}

// Number of valid offsets along one axis for a crop of `size` from `extent`.
inline int crop_positions(int extent, int size) { return std::max(extent, size) - size + 1; }

template <typename Scalar>
SlicePair<Scalar> random_crop(const Slice<Scalar>& img, const LabelSlice& labels, int rows, int cols,
                              Rng& rng, std::array<int, 2>* offset_out = nullptr) {
  const int nr = crop_positions(static_cast<int>(img.rows()), rows);
  const int nc = crop_positions(static_cast<int>(img.cols()), cols);
  const int r0 = static_cast<int>(rng.below(nr)), c0 = static_cast<int>(rng.below(nc));
  if (offset_out) *offset_out = {r0, c0};
  return crop_at(img, labels, rows, cols, r0, c0);
}

// Edge-preserving smoothing with a Gaussian spatial kernel truncated at
// 3 sigma and a Gaussian range kernel on intensity differences.
template <typename Scalar>
Slice<Scalar> bilateral_filter(const Slice<Scalar>& img, double spatial_sigma, double range_sigma) {
  if (spatial_sigma < 0 || range_sigma < 0)
    throw ParameterError("bilateral_filter: sigmas must be >= 0");
  if (spatial_sigma == 0 || range_sigma == 0) return img;
  const int rad = std::max(1, static_cast<int>(std::ceil(3.0 * spatial_sigma)));
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  std::vector<double> spatial((2 * rad + 1) * (2 * rad + 1));
  for (int dy = -rad; dy <= rad; ++dy)
    for (int dx = -rad; dx <= rad; ++dx)
      spatial[(dy + rad) * (2 * rad + 1) + dx + rad] =
          std::exp(-(dy * dy + dx * dx) / (2.0 * spatial_sigma * spatial_sigma));
  const double inv2r = 1.0 / (2.0 * range_sigma * range_sigma);
  Slice<Scalar> out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double center = img(y, x);
      double acc = 0, norm = 0;
      for (int dy = -rad; dy <= rad; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -rad; dx <= rad; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          const double v = img(yy, xx);
          const double d = v - center;
          const double wgt = spatial[(dy + rad) * (2 * rad + 1) + dx + rad] * std::exp(-d * d * inv2r);
          acc += wgt * v;
          norm += wgt;
        }
      }
      out(y, x) = Scalar(acc / norm);
    }
  return out;
}

// Additive i.i.d. N(0, sigma^2) noise, clipped to [0, 1].
template <typename Scalar>
Slice<Scalar> gaussian_noise(const Slice<Scalar>& img, double sigma, std::uint64_t seed,
                             const Range& allowed = {0.0, 0.03}) {
  check_range("gaussian_noise", "sigma", sigma, allowed);
  if (sigma == 0.0) return img;
  Rng rng(seed);
  Slice<Scalar> out(img.rows(), img.cols());
  for (Eigen::Index i = 0; i < img.size(); ++i)
    out.data()[i] = Scalar(double(img.data()[i]) + rng.normal(0.0, sigma));
  detail::clip01(out);
  return out;
}

// Forward: x^g. Inverse: 1 - (1 - x)^g, i.e. gamma applied to the inverted image.
template <typename Scalar>
Slice<Scalar> gamma(const Slice<Scalar>& img, double g, bool inverse,
                    const Range& allowed = {0.7, 1.5}) {
  check_range("gamma", "g", g, allowed);
  if (g == 1.0) return img;
  Slice<Scalar> x = img.max(Scalar(0)).min(Scalar(1));
  Slice<Scalar> out = inverse ? Slice<Scalar>(Scalar(1) - (Scalar(1) - x).pow(Scalar(g)))
                              : Slice<Scalar>(x.pow(Scalar(g)));
  detail::clip01(out);
  return out;
}

// clip((x - 0.5) * (1 + c) + 0.5 + b, 0, 1)
template <typename Scalar>
Slice<Scalar> brightness_contrast(const Slice<Scalar>& img, double b, double c,
                                  const Range& b_allowed = {-0.5, 0.5},
                                  const Range& c_allowed = {-0.5, 0.5}) {
  check_range("brightness_contrast", "brightness", b, b_allowed);
  check_range("brightness_contrast", "contrast", c, c_allowed);
  if (b == 0.0 && c == 0.0) return img;
  Slice<Scalar> out = (img - Scalar(0.5)) * Scalar(1.0 + c) + Scalar(0.5 + b);
  detail::clip01(out);
  return out;
}

struct AppliedOp {
  std::string name;
  std::map<std::string, double> params;
  bool operator==(const AppliedOp&) const = default;
};

template <typename Scalar>
struct AugmentedSample {
  Slice<Scalar> image;
  LabelSlice labels;
  std::vector<AppliedOp> applied_ops;
};

inline const std::array<const char*, 4>& spatial_op_names() {
  static const std::array<const char*, 4> n{"flip", "rotate", "rescale", "random_crop"};
  return n;
}
inline const std::array<const char*, 4>& intensity_op_names() {
  static const std::array<const char*, 4> n{"bilateral", "gaussian_noise", "gamma", "brightness_contrast"};
  return n;
}

// Draws one augmented sample. Every enabled operator is included
// independently with cfg.per_op_probability, in the fixed order
// flip, rotate, rescale, crop, bilateral, noise, gamma, brightness/contrast.
// The output has the crop size; labels are only moved by spatial operators.
template <typename Scalar>
AugmentedSample<Scalar> sample_pipeline(const Slice<Scalar>& img, const LabelSlice& labels,
                                        const AugmentationConfig& cfg, std::uint64_t seed,
                                        double native_mm = 1.0) {
  Rng rng(seed);
  const double p = cfg.per_op_probability;
  AugmentedSample<Scalar> s{img, labels, {}};
  const int rows = cfg.crop_size[0], cols = cfg.crop_size[1];

  if (cfg.enable_spatial) {
    if (rng.bernoulli(p)) {
      const bool horiz = rng.bernoulli(0.5);
      std::tie(s.image, s.labels) =
          flip(s.image, s.labels, horiz ? FlipAxis::horizontal : FlipAxis::vertical);
      s.applied_ops.push_back({"flip", {{"horizontal", horiz ? 1.0 : 0.0}}});
    }
    if (rng.bernoulli(p)) {
      const double theta = rng.uniform(-cfg.rotation_limit_deg, cfg.rotation_limit_deg);
      std::tie(s.image, s.labels) = rotate(s.image, s.labels, theta, cfg.rotation_limit_deg);
      s.applied_ops.push_back({"rotate", {{"theta_deg", theta}}});
    }
    if (rng.bernoulli(p)) {
      const double target = rng.uniform(cfg.rescale_mm_range[0], cfg.rescale_mm_range[1]);
      std::tie(s.image, s.labels) = rescale(s.image, s.labels, target, native_mm, cfg.rescale_mm_range);
      s.applied_ops.push_back({"rescale", {{"target_mm", target}, {"native_mm", native_mm}}});
    }
    if (rng.bernoulli(p)) {
      const int mr = static_cast<int>(std::lround(cfg.crop_shift_fraction * rows));
      const int mc = static_cast<int>(std::lround(cfg.crop_shift_fraction * cols));
      const Slice<Scalar> padded = crop_or_pad_plane<Scalar>(
          s.image, static_cast<int>(s.image.rows()) + 2 * mr, static_cast<int>(s.image.cols()) + 2 * mc);
      const LabelSlice lpadded = crop_or_pad_plane<std::uint8_t>(
          s.labels, static_cast<int>(s.labels.rows()) + 2 * mr, static_cast<int>(s.labels.cols()) + 2 * mc);
      std::array<int, 2> off{};
      std::tie(s.image, s.labels) = random_crop(padded, lpadded, rows, cols, rng, &off);
      s.applied_ops.push_back({"random_crop", {{"row_offset", off[0]}, {"col_offset", off[1]}}});
    }
  }
  if (s.image.rows() != rows || s.image.cols() != cols) {
    s.image = crop_or_pad_plane<Scalar>(s.image, rows, cols);
    s.labels = crop_or_pad_plane<std::uint8_t>(s.labels, rows, cols);
  }

  if (cfg.enable_intensity) {
    if (rng.bernoulli(p)) {
      const double ss = rng.uniform(cfg.bilateral_spatial_sigma_range[0], cfg.bilateral_spatial_sigma_range[1]);
      const double rs = rng.uniform(cfg.bilateral_range_sigma_range[0], cfg.bilateral_range_sigma_range[1]);
      s.image = bilateral_filter(s.image, ss, rs);
      s.applied_ops.push_back({"bilateral", {{"spatial_sigma", ss}, {"range_sigma", rs}}});
    }
    if (rng.bernoulli(p)) {
      const double sigma = rng.uniform(cfg.noise_sigma_range[0], cfg.noise_sigma_range[1]);
      const std::uint64_t noise_seed = rng.next();
      s.image = gaussian_noise(s.image, sigma, noise_seed, cfg.noise_sigma_range);
      s.applied_ops.push_back({"gaussian_noise", {{"sigma", sigma}}});
    }
    if (rng.bernoulli(p)) {
      const double g = rng.uniform(cfg.gamma_range[0], cfg.gamma_range[1]);
      const bool inverse = rng.bernoulli(0.5);
      s.image = gamma(s.image, g, inverse, cfg.gamma_range);
      s.applied_ops.push_back({"gamma", {{"g", g}, {"inverse", inverse ? 1.0 : 0.0}}});
    }
    if (rng.bernoulli(p)) {
      const double b = rng.uniform(cfg.brightness_range[0], cfg.brightness_range[1]);
      const double c = rng.uniform(cfg.contrast_range[0], cfg.contrast_range[1]);
      s.image = brightness_contrast(s.image, b, c, cfg.brightness_range, cfg.contrast_range);
      s.applied_ops.push_back({"brightness_contrast", {{"brightness", b}, {"contrast", c}}});
    }
  }
  return s;
}

}  // namespace mcseg

#endif  // MCSEG_AUGMENT_HPP
