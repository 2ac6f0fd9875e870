#include "mcseg/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace mcseg {

Volume minmax_normalize(const Volume& v) {
  const auto& in = v.voxels.values();
  float lo = 0, hi = 0;
  bool first = true;
  for (float x : in) {
    if (!std::isfinite(x)) throw PreprocessError("minmax_normalize: input contains NaN or Inf");
    if (first) {
      lo = hi = x;
      first = false;
    }
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  Volume out{Grid3<float>(v.shape(), 0.0f), v.spacing};
  if (!(hi > lo)) return out;
  auto& dst = out.voxels.values();
  const double range = double(hi) - double(lo);
  for (std::size_t i = 0; i < in.size(); ++i)
    dst[i] = static_cast<float>((double(in[i]) - double(lo)) / range);
  return out;
}

std::pair<Volume, std::optional<LabelMap>> crop_or_pad(const Volume& v,
                                                       const std::optional<LabelMap>& labels,
                                                       int rows, int cols) {
  const Shape3 out_shape{rows, cols, v.shape().slices};
  Volume out{Grid3<float>(out_shape), v.spacing};
  std::optional<LabelMap> out_labels;
  if (labels) out_labels.emplace(out_shape);
  for (int s = 0; s < out_shape.slices; ++s) {
    out.voxels.slice(s) = crop_or_pad_plane<float>(v.voxels.slice(s), rows, cols);
    if (labels) out_labels->slice(s) = crop_or_pad_plane<std::uint8_t>(labels->slice(s), rows, cols);
  }
  return {std::move(out), std::move(out_labels)};
}

CaseRecord preprocess_case(const CaseRecord& c, int rows, int cols) {
  CaseRecord out = c;
  auto [img, lab] = crop_or_pad(c.image, c.labels, rows, cols);
  out.image = minmax_normalize(img);
  out.labels = std::move(lab);
  return out;
}

}  // namespace mcseg
