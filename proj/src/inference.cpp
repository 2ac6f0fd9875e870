#include "mcseg/inference.hpp"

#include <algorithm>
#include <cstring>

namespace mcseg {

nn::Tensor<float> slices_to_tensor(const Volume& v, int first, int count) {
  const Shape3 s = v.shape();
  nn::Tensor<float> x(count, 1, s.rows, s.cols);
  for (int i = 0; i < count; ++i)
    std::memcpy(x.sample_ptr(i), v.voxels.values().data() + std::size_t(first + i) * s.plane(),
                s.plane() * sizeof(float));
  return x;
}

LabelBatch labels_to_batch(const LabelMap& l, int first, int count) {
  const Shape3 s = l.shape();
  LabelBatch b(count, s.rows, s.cols);
  std::memcpy(b.data.data(), l.values().data() + std::size_t(first) * s.plane(), b.data.size());
  return b;
}

LabelMap argmax_labels(const nn::Tensor<float>& probs) {
  LabelMap out(Shape3{probs.h, probs.w, probs.n});
  auto& dst = out.values();
  const Eigen::Index P = probs.plane();
  for (int i = 0; i < probs.n; ++i) {
    const float* p = probs.sample_ptr(i);
    for (Eigen::Index q = 0; q < P; ++q) {
      int best = 0;
      for (int c = 1; c < probs.c; ++c)
        if (p[c * P + q] > p[best * P + q]) best = c;
      dst[std::size_t(i) * P + q] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

VolumePrediction predict_volume(UNet<float>& net, const Volume& v, int batch, const LabelMap* truth) {
  const Shape3 s = v.shape();
  VolumePrediction out{LabelMap(s), 0.0};
  batch = std::max(1, batch);
  for (int first = 0; first < s.slices; first += batch) {
    const int count = std::min(batch, s.slices - first);
    auto probs = net.forward(slices_to_tensor(v, first, count), false);
    const LabelMap part = argmax_labels(probs.front());
    std::copy(part.values().begin(), part.values().end(),
              out.labels.values().begin() + std::ptrdiff_t(first) * std::ptrdiff_t(s.plane()));
    if (truth) {
      const auto r = compound_loss(probs, labels_to_batch(*truth, first, count), false);
      out.loss += r.value * count;
    }
  }
  if (truth && s.slices > 0) out.loss /= s.slices;
  return out;
}

}  // namespace mcseg
