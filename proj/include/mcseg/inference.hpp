#ifndef MCSEG_INFERENCE_HPP
#define MCSEG_INFERENCE_HPP

#include "mcseg/core.hpp"
#include "mcseg/loss.hpp"
#include "mcseg/unet.hpp"

#include <vector>

namespace mcseg {

// Stacks slices [first, first + count) of a volume into an N x 1 x H x W tensor.
nn::Tensor<float> slices_to_tensor(const Volume& v, int first, int count);
LabelBatch labels_to_batch(const LabelMap& l, int first, int count);

// Per-pixel argmax over channels; ties go to the lowest class index.
LabelMap argmax_labels(const nn::Tensor<float>& probs);

struct VolumePrediction {
  LabelMap labels;
  double loss = 0;  // compound loss against `truth`, when given
};

// Slice-wise eval-mode forward in chunks of `batch` slices. The volume must
// already be pre-processed to a size the network accepts.
VolumePrediction predict_volume(UNet<float>& net, const Volume& v, int batch = 16,
                                const LabelMap* truth = nullptr);

}  // namespace mcseg

#endif  // MCSEG_INFERENCE_HPP
