#ifndef MCSEG_HISTOGRAM_HPP
#define MCSEG_HISTOGRAM_HPP

#include "mcseg/core.hpp"

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mcseg {

inline constexpr int kQuantileLevels = 256;

// Pooled intensity quantiles at levels k / 255 of a center's training images.
struct ReferenceHistogram {
  std::string center_id;
  std::array<double, kQuantileLevels> quantile_values{};

  void save(const std::filesystem::path& path) const;
  static ReferenceHistogram load(const std::filesystem::path& path);
  bool operator==(const ReferenceHistogram&) const = default;
};

// Quantiles of a sample at k / 255, linearly interpolated between order statistics.
std::array<double, kQuantileLevels> quantiles(std::vector<float> values);

// Throws std::invalid_argument for an empty case list.
ReferenceHistogram build_reference_histogram(const std::vector<CaseRecord>& training_cases);

// Monotone remap that sends the image's own 256 quantiles onto the reference
// quantiles, piecewise linear in between. Output is clipped to [0, 1].
Volume histogram_match(const Volume& v, const ReferenceHistogram& ref);

// Piecewise-linear CDF implied by the reference quantiles.
double reference_cdf(const ReferenceHistogram& ref, double x);

// One-sample Kolmogorov-Smirnov distance between the sample and reference_cdf.
double ks_statistic(std::span<const float> values, const ReferenceHistogram& ref);

// Two-sample Kolmogorov-Smirnov distance.
double ks_two_sample(std::vector<float> a, std::vector<float> b);

}  // namespace mcseg

#endif  // MCSEG_HISTOGRAM_HPP
