#ifndef MCSEG_NIFTI_HPP
#define MCSEG_NIFTI_HPP

#include "mcseg/core.hpp"

#include <filesystem>

namespace mcseg {

class DataError : public Error {
 public:
  using Error::Error;
};

// Single-file NIfTI-1 (.nii, or gzip-compressed .nii.gz). The file's x axis
// maps to columns, y to rows and z to slices; pixdim[1..3] gives
// (col_mm, row_mm, slice_mm). Any integer or float datatype is read and the
// scl_slope/scl_inter scaling applied.
Volume read_nifti(const std::filesystem::path& path);

// Writes float32 voxels; the round trip through read_nifti is bit-exact.
void write_nifti(const std::filesystem::path& path, const Volume& v);
// Writes uint8 labels with the given spacing.
void write_nifti_labels(const std::filesystem::path& path, const LabelMap& labels,
                        const Spacing& spacing);

}  // namespace mcseg

#endif  // MCSEG_NIFTI_HPP
