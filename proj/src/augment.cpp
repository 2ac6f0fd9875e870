#include "mcseg/augment.hpp"

namespace mcseg {

namespace {

void check_ordered(const char* name, const Range& r) {
  if (!(r[0] <= r[1])) throw ConfigError(std::string("augmentation.") + name + ": min exceeds max");
}

}  // namespace

void AugmentationConfig::validate() const {
  if (!(per_op_probability >= 0.0 && per_op_probability <= 1.0))
    throw ConfigError("augmentation.per_op_probability must be in [0, 1]");
  if (!(rotation_limit_deg >= 0)) throw ConfigError("augmentation.rotation_limit_deg must be >= 0");
  check_ordered("rescale_mm_range", rescale_mm_range);
  check_ordered("noise_sigma_range", noise_sigma_range);
  check_ordered("gamma_range", gamma_range);
  check_ordered("brightness_range", brightness_range);
  check_ordered("contrast_range", contrast_range);
  check_ordered("bilateral_spatial_sigma_range", bilateral_spatial_sigma_range);
  check_ordered("bilateral_range_sigma_range", bilateral_range_sigma_range);
  if (rescale_mm_range[0] <= 0) throw ConfigError("augmentation.rescale_mm_range must be > 0");
  if (noise_sigma_range[0] < 0) throw ConfigError("augmentation.noise_sigma_range must be >= 0");
  if (gamma_range[0] <= 0) throw ConfigError("augmentation.gamma_range must be > 0");
  if (bilateral_spatial_sigma_range[0] < 0 || bilateral_range_sigma_range[0] < 0)
    throw ConfigError("augmentation bilateral sigmas must be >= 0");
  if (crop_size[0] < 1 || crop_size[1] < 1) throw ConfigError("augmentation.crop_size must be >= 1");
  if (crop_shift_fraction < 0) throw ConfigError("augmentation.crop_shift_fraction must be >= 0");
}

}  // namespace mcseg
