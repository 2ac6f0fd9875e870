#ifndef MCSEG_LOSS_HPP
#define MCSEG_LOSS_HPP

#include "mcseg/core.hpp"
#include "mcseg/nn/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mcseg {

// Stack of label slices, N x H x W, row-major per slice.
struct LabelBatch {
  int n = 0, h = 0, w = 0;
  std::vector<std::uint8_t> data;

  LabelBatch() = default;
  LabelBatch(int n_, int h_, int w_) : n(n_), h(h_), w(w_), data(std::size_t(n_) * h_ * w_, 0) {}
  std::uint8_t& at(int i, int y, int x) { return data[(std::size_t(i) * h + y) * w + x]; }
  std::uint8_t at(int i, int y, int x) const { return data[(std::size_t(i) * h + y) * w + x]; }

  // Nearest-neighbour subsampling by an integer factor.
  LabelBatch downsample(int factor) const {
    LabelBatch out(n, h / factor, w / factor);
    for (int i = 0; i < n; ++i)
      for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) out.at(i, y, x) = at(i, y * factor, x * factor);
    return out;
  }
};

// Deep-supervision weights 1, 1/2, 1/4, ... normalized to sum to one.
inline std::vector<double> head_weights(int heads) {
  std::vector<double> w(heads);
  double sum = 0;
  for (int h = 0; h < heads; ++h) sum += (w[h] = std::ldexp(1.0, -h));
  for (auto& v : w) v /= sum;
  return w;
}

template <typename Scalar>
struct LossResult {
  double value = 0;  // weighted sum over heads of (soft Dice + cross entropy)
  double dice = 0;   // weighted soft-Dice part
  double ce = 0;     // weighted cross-entropy part
  std::vector<nn::Tensor<Scalar>> dlogits;  // gradient w.r.t. each head's pre-softmax logits
};

struct LossOptions {
  double dice_smooth = 1e-5;
  double log_floor = 1e-12;
};

// Soft Dice over the foreground classes pooled across the batch, plus mean
// pixel cross entropy, for one head. Gradient goes to `dlogits`.
template <typename Scalar>
void head_loss(const nn::Tensor<Scalar>& p, const LabelBatch& y, const LossOptions& opt,
               double& dice_loss, double& ce, nn::Tensor<Scalar>* dlogits) {
  if (p.n != y.n || p.h != y.h || p.w != y.w)
    throw std::invalid_argument("compound_loss: prediction " + p.shape_string() +
                                " does not match target " + std::to_string(y.n) + "x" +
                                std::to_string(y.h) + "x" + std::to_string(y.w));
  const int C = p.c;
  const Eigen::Index P = p.plane();
  const double npix = double(p.n) * double(P);

  std::vector<double> inter(C, 0.0), psum(C, 0.0), ysum(C, 0.0);
  ce = 0;
  for (int i = 0; i < p.n; ++i) {
    const Scalar* pi = p.sample_ptr(i);
    const std::uint8_t* yi = y.data.data() + std::size_t(i) * P;
    for (Eigen::Index q = 0; q < P; ++q) {
      const int t = yi[q];
      if (t >= C) throw std::invalid_argument("compound_loss: label outside class range");
      const double pt = double(pi[t * P + q]);
      ce -= std::log(std::max(pt, opt.log_floor));
      inter[t] += pt;
      ysum[t] += 1.0;
    }
    for (int c = 0; c < C; ++c)
      psum[c] += double(Eigen::Map<const nn::Vector<Scalar>>(pi + c * P, P).sum());
  }
  ce /= npix;

  const int fg = C - 1;
  const double eps = opt.dice_smooth;
  std::vector<double> coef_y(C, 0.0), coef_c(C, 0.0);
  double dsum = 0;
  for (int c = 1; c < C; ++c) {
    const double s = psum[c] + ysum[c] + eps;
    const double num = 2.0 * inter[c] + eps;
    dsum += num / s;
    // d(1 - mean D)/dp_c = -(1/fg) * (2 y_c s - num) / s^2
    coef_y[c] = -2.0 / (fg * s);
    coef_c[c] = num / (fg * s * s);
  }
  dice_loss = 1.0 - dsum / fg;

  if (!dlogits) return;
  *dlogits = nn::Tensor<Scalar>(p.n, p.c, p.h, p.w);
  std::vector<double> gp(C);
  for (int i = 0; i < p.n; ++i) {
    const Scalar* pi = p.sample_ptr(i);
    Scalar* gi = dlogits->sample_ptr(i);
    const std::uint8_t* yi = y.data.data() + std::size_t(i) * P;
    for (Eigen::Index q = 0; q < P; ++q) {
      const int t = yi[q];
      double dot = 0;
      for (int c = 0; c < C; ++c) {
        gp[c] = coef_c[c] + (c == t ? coef_y[c] : 0.0);
        dot += double(pi[c * P + q]) * gp[c];
      }
      for (int c = 0; c < C; ++c) {
        const double pc = double(pi[c * P + q]);
        // softmax Jacobian for Dice, closed form (p - y) for cross entropy
        const double g = pc * (gp[c] - dot) + (pc - (c == t ? 1.0 : 0.0)) / npix;
        gi[c * P + q] = Scalar(g);
      }
    }
  }
}

// Compound Dice + cross-entropy loss over all deep-supervision heads. probs[0]
// is the full-resolution head; probs[k] sits at 1/2^k and its target is the
// nearest-neighbour downsampled label batch.
template <typename Scalar>
LossResult<Scalar> compound_loss(const std::vector<nn::Tensor<Scalar>>& probs,
                                 const LabelBatch& target, bool with_grad = true,
                                 const LossOptions& opt = {}) {
  if (probs.empty()) throw std::invalid_argument("compound_loss: no heads");
  const auto weights = head_weights(static_cast<int>(probs.size()));
  LossResult<Scalar> r;
  if (with_grad) r.dlogits.resize(probs.size());
  LabelBatch t = target;
  for (std::size_t h = 0; h < probs.size(); ++h) {
    if (h > 0) t = target.downsample(1 << h);
    double d = 0, ce = 0;
    head_loss(probs[h], t, opt, d, ce, with_grad ? &r.dlogits[h] : nullptr);
    r.dice += weights[h] * d;
    r.ce += weights[h] * ce;
    if (with_grad) r.dlogits[h].data *= Scalar(weights[h]);
  }
  r.value = r.dice + r.ce;
  return r;
}

}  // namespace mcseg

#endif  // MCSEG_LOSS_HPP
