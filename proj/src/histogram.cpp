#include "mcseg/histogram.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace mcseg {

using nlohmann::json;

void ReferenceHistogram::save(const std::filesystem::path& path) const {
  json j;
  j["center_id"] = center_id;
  j["quantile_values"] = std::vector<double>(quantile_values.begin(), quantile_values.end());
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream(path) << j.dump(1) << "\n";
}

ReferenceHistogram ReferenceHistogram::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("missing file: " + path.string());
  json j;
  is >> j;
  ReferenceHistogram h;
  h.center_id = j.at("center_id").get<std::string>();
  const auto q = j.at("quantile_values").get<std::vector<double>>();
  if (q.size() != kQuantileLevels)
    throw Error("reference histogram " + path.string() + " must hold 256 quantile values");
  std::copy(q.begin(), q.end(), h.quantile_values.begin());
  for (int k = 1; k < kQuantileLevels; ++k)
    if (h.quantile_values[k] < h.quantile_values[k - 1])
      throw Error("reference histogram " + path.string() + " is not monotone");
  return h;
}

std::array<double, kQuantileLevels> quantiles(std::vector<float> values) {
  if (values.empty()) throw std::invalid_argument("quantiles: empty sample");
  std::sort(values.begin(), values.end());
  std::array<double, kQuantileLevels> q{};
  const double last = double(values.size() - 1);
  for (int k = 0; k < kQuantileLevels; ++k) {
    const double pos = last * k / double(kQuantileLevels - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double f = pos - double(lo);
    q[k] = (1.0 - f) * values[lo] + f * values[hi];
  }
  // interpolation can only tie, never invert, but guard against rounding
  for (int k = 1; k < kQuantileLevels; ++k) q[k] = std::max(q[k], q[k - 1]);
  return q;
}

ReferenceHistogram build_reference_histogram(const std::vector<CaseRecord>& training_cases) {
  if (training_cases.empty())
    throw std::invalid_argument("build_reference_histogram: empty case list");
  std::vector<float> pooled;
  for (const auto& c : training_cases) {
    const auto& v = c.image.voxels.values();
    pooled.insert(pooled.end(), v.begin(), v.end());
  }
  ReferenceHistogram h;
  h.center_id = training_cases.front().center_id();
  h.quantile_values = quantiles(std::move(pooled));
  return h;
}

Volume histogram_match(const Volume& v, const ReferenceHistogram& ref) {
  const auto src = quantiles(v.voxels.values());
  const auto& dst = ref.quantile_values;
  // Runs of equal source landmarks map to the mean of their reference values.
  std::vector<double> xs, ys;
  for (int k = 0; k < kQuantileLevels;) {
    int m = k;
    double sum = 0;
    while (m < kQuantileLevels && src[m] == src[k]) sum += dst[m++];
    xs.push_back(src[k]);
    ys.push_back(sum / (m - k));
    k = m;
  }
  Volume out{Grid3<float>(v.shape()), v.spacing};
  const auto& in = v.voxels.values();
  auto& o = out.voxels.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double x = in[i];
    double y;
    if (x <= xs.front()) {
      y = ys.front();
    } else if (x >= xs.back()) {
      y = ys.back();
    } else {
      const auto it = std::upper_bound(xs.begin(), xs.end(), x);
      const std::size_t j = static_cast<std::size_t>(it - xs.begin());
      const double t = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
      y = ys[j - 1] + t * (ys[j] - ys[j - 1]);
    }
    o[i] = static_cast<float>(std::clamp(y, 0.0, 1.0));
  }
  return out;
}

double reference_cdf(const ReferenceHistogram& ref, double x) {
  const auto& q = ref.quantile_values;
  if (x < q.front()) return 0.0;
  if (x >= q.back()) return 1.0;
  const auto it = std::upper_bound(q.begin(), q.end(), x);
  const auto k = static_cast<std::size_t>(it - q.begin()) - 1;
  const double t = (x - q[k]) / (q[k + 1] - q[k]);
  return (double(k) + t) / double(kQuantileLevels - 1);
}

double ks_statistic(std::span<const float> values, const ReferenceHistogram& ref) {
  if (values.empty()) throw std::invalid_argument("ks_statistic: empty sample");
  std::vector<float> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  const double n = double(s.size());
  double d = 0;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t j = i;
    while (j < s.size() && s[j] == s[i]) ++j;
    const double f = reference_cdf(ref, s[i]);
    // empirical CDF jumps from i/n to j/n at this value
    d = std::max({d, std::abs(f - double(i) / n), std::abs(f - double(j) / n)});
    i = j;
  }
  return d;
}

double ks_two_sample(std::vector<float> a, std::vector<float> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    const float x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

}  // namespace mcseg
