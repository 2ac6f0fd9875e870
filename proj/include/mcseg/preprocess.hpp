#ifndef MCSEG_PREPROCESS_HPP
#define MCSEG_PREPROCESS_HPP

#include "mcseg/core.hpp"

#include <optional>
#include <utility>

namespace mcseg {

class PreprocessError : public Error {
 public:
  using Error::Error;
};

// (v - min) / (max - min); a constant image maps to zeros. Throws on NaN/Inf.
Volume minmax_normalize(const Volume& v);

// Centre-crops or symmetrically zero-pads each in-plane axis to the target
// size; labels follow the same window and are padded with background.
std::pair<Volume, std::optional<LabelMap>> crop_or_pad(const Volume& v,
                                                       const std::optional<LabelMap>& labels,
                                                       int rows, int cols);

// Single-slice version used by the augmentation operators.
template <typename T>
Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> crop_or_pad_plane(
    const Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& in, int rows, int cols,
    T fill = T(0)) {
  Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(rows, cols);
  out.setConstant(fill);
  const int r_in = static_cast<int>(in.rows()), c_in = static_cast<int>(in.cols());
  // source start (crop) or destination start (pad) along each axis
  const int src_r = r_in > rows ? (r_in - rows) / 2 : 0;
  const int dst_r = r_in < rows ? (rows - r_in) / 2 : 0;
  const int src_c = c_in > cols ? (c_in - cols) / 2 : 0;
  const int dst_c = c_in < cols ? (cols - c_in) / 2 : 0;
  const int nr = std::min(rows, r_in), nc = std::min(cols, c_in);
  out.block(dst_r, dst_c, nr, nc) = in.block(src_r, src_c, nr, nc);
  return out;
}

// Pipeline order: crop_or_pad, then minmax_normalize.
CaseRecord preprocess_case(const CaseRecord& c, int rows, int cols);

}  // namespace mcseg

#endif  // MCSEG_PREPROCESS_HPP
