#ifndef MCSEG_SYNTHGEN_HPP
#define MCSEG_SYNTHGEN_HPP

#include "mcseg/augment.hpp"
#include "mcseg/core.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mcseg {

struct TissueStats {
  double mean = 0.5;
  double std = 0.05;
  bool operator==(const TissueStats&) const = default;
};

// One synthetic acquisition site. Intensities are drawn per tissue, then the
// whole image goes through x^gamma_bias and additive scanner noise.
struct SyntheticCenterSpec {
  std::string center_id;
  TissueStats background{0.35, 0.04};
  TissueStats pool{0.70, 0.05};
  TissueStats myocardium{0.12, 0.03};
  TissueStats scar{0.85, 0.05};
  double gamma_bias = 1.0;
  double noise_sigma = 0.02;
  Range in_plane_mm{1.5, 1.5};
  Range thickness_mm{8.0, 8.0};
  std::array<int, 2> slices{6, 6};
  double scar_probability = 0.5;
  Range scar_arc_deg{40.0, 120.0};
  int image_size = 128;

  // Anatomy in millimetres.
  Range pool_radius_mm{9.0, 14.0};
  Range wall_thickness_mm{5.0, 8.0};
  Range axis_ratio{0.75, 1.0};
  double rv_probability = 0.8;
  double center_jitter = 0.08;  // fraction of the field of view

  void validate() const;
  // Largest absolute difference over the tissue means, gamma bias and noise.
  double distance(const SyntheticCenterSpec& other) const;
  CenterProfile profile() const;
};

// Deterministic in (spec, seed). Labels are exact by construction; scar is labelled myocardium.
CaseRecord generate_case(const SyntheticCenterSpec& spec, std::uint64_t seed,
                         const std::string& case_id = "");

// Throws ConfigError when two specs differ by less than `min_distance` in every statistic.
std::map<std::string, std::vector<CaseRecord>> generate_cohort(
    const std::vector<SyntheticCenterSpec>& specs, int cases_per_center, std::uint64_t seed,
    double min_distance = 0.05);

// {"centers": [ {...}, ... ]} with optional top-level "image_size" and "cases_per_center".
struct SyntheticCohortFile {
  std::vector<SyntheticCenterSpec> centers;
  int cases_per_center = 30;
  std::uint64_t seed = 0;

  static SyntheticCohortFile load(const std::filesystem::path& path);
};

}  // namespace mcseg

#endif  // MCSEG_SYNTHGEN_HPP
