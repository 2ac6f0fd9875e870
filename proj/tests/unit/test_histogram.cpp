#include "mcseg/histogram.hpp"
#include "mcseg/preprocess.hpp"
#include "mcseg/synthgen.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <filesystem>

using namespace mcseg;

namespace {

SyntheticCenterSpec small_center(const std::string& id) {
  SyntheticCenterSpec s;
  s.center_id = id;
  s.image_size = 48;
  return s;
}

}  // namespace

TEST_SUITE("histogram") {

TEST_CASE("quantiles match order-statistic interpolation") {
  Rng rng(2);
  std::vector<float> v(1000);
  std::vector<double> d(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) d[i] = v[i] = float(rng.normal(0.4, 0.1));
  const auto q = quantiles(v);
  for (int k : {0, 1, 64, 128, 200, 255})
    CHECK(q[k] == doctest::Approx(oracle::quantile(d, k / 255.0)).epsilon(1e-6));
  CHECK_THROWS_AS(quantiles({}), std::invalid_argument);
}

TEST_CASE("reference CDF inverts the quantiles") {
  Rng rng(5);
  std::vector<float> v(5000);
  for (auto& x : v) x = float(rng.uniform());
  ReferenceHistogram ref{"X", quantiles(v)};
  for (int k : {3, 50, 128, 254}) CHECK(reference_cdf(ref, ref.quantile_values[k]) == doctest::Approx(k / 255.0));
  CHECK(reference_cdf(ref, -1.0) == 0.0);
  CHECK(reference_cdf(ref, 2.0) == 1.0);
}

TEST_CASE("self matching changes pixels by at most one grey level") {
  const auto c = preprocess_case(generate_case(small_center("A"), 9, "a"), 48, 48);
  const ReferenceHistogram ref = build_reference_histogram({c});
  const Volume m = histogram_match(c.image, ref);
  double worst = 0;
  for (std::size_t i = 0; i < m.voxels.size(); ++i)
    worst = std::max(worst, double(std::abs(m.voxels.values()[i] - c.image.voxels.values()[i])));
  CHECK(worst <= 1.0 / 255.0);
}

TEST_CASE("matching moves another center's images toward the reference") {
  auto b = small_center("B");
  b.gamma_bias = 1.5;
  b.background.mean = 0.25;
  const auto cohort = generate_cohort({small_center("A"), b}, 8, 4);
  std::vector<CaseRecord> ref_cases;
  for (const auto& c : cohort.at("A")) ref_cases.push_back(preprocess_case(c, 48, 48));
  const auto ref = build_reference_histogram(ref_cases);
  CHECK(ref.center_id == "A");
  int better = 0;
  for (const auto& raw : cohort.at("B")) {
    const auto c = preprocess_case(raw, 48, 48);
    const Volume m = histogram_match(c.image, ref);
    if (ks_statistic(m.voxels.values(), ref) < ks_statistic(c.image.voxels.values(), ref)) ++better;
  }
  CHECK(better == 8);
}

TEST_CASE("matching is monotone and clipped") {
  Rng rng(1);
  Volume v{Grid3<float>({10, 10, 2}), {}};
  for (auto& x : v.voxels.values()) x = float(rng.uniform());
  std::vector<float> other(400);
  for (auto& x : other) x = float(std::pow(rng.uniform(), 3.0));
  const ReferenceHistogram ref{"R", quantiles(other)};
  const Volume m = histogram_match(v, ref);
  for (std::size_t i = 0; i < v.voxels.size(); ++i)
    for (std::size_t j = 0; j < v.voxels.size(); j += 37)
      if (v.voxels.values()[i] < v.voxels.values()[j]) CHECK(m.voxels.values()[i] <= m.voxels.values()[j]);
  for (float x : m.voxels.values()) CHECK((x >= 0.0f && x <= 1.0f));
}

TEST_CASE("two-sample KS on known samples") {
  CHECK(ks_two_sample({0.1f, 0.2f, 0.3f}, {0.1f, 0.2f, 0.3f}) == 0.0);
  CHECK(ks_two_sample({0.1f, 0.2f}, {0.8f, 0.9f}) == 1.0);
  CHECK(ks_two_sample({0.1f, 0.2f, 0.7f, 0.8f}, {0.15f, 0.75f}) == doctest::Approx(0.25));
}

TEST_CASE("reference histogram JSON round trip") {
  Rng rng(3);
  std::vector<float> v(300);
  for (auto& x : v) x = float(rng.uniform());
  const ReferenceHistogram ref{"C1", quantiles(v)};
  const auto path = std::filesystem::temp_directory_path() / "mcseg_ref_hist.json";
  ref.save(path);
  CHECK(ReferenceHistogram::load(path) == ref);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(build_reference_histogram({}), std::invalid_argument);
}

TEST_CASE("reference from constant images is constant") {
  CaseRecord c = preprocess_case(generate_case(small_center("A"), 1, "a"), 16, 16);
  for (auto& v : c.image.voxels.values()) v = 0.4f;
  const auto ref = build_reference_histogram({c, c});
  for (double q : ref.quantile_values) CHECK(q == doctest::Approx(0.4));
  CHECK_THROWS_AS(build_reference_histogram({}), std::invalid_argument);
}

TEST_CASE("uniform voxels give evenly spaced quantiles") {
  Rng rng(7);
  CaseRecord c = preprocess_case(generate_case(small_center("A"), 1, "a"), 48, 48);
  for (auto& v : c.image.voxels.values()) v = float(rng.uniform());
  const auto ref = build_reference_histogram({c});
  for (int k = 0; k < kQuantileLevels; ++k) CHECK(std::abs(ref.quantile_values[k] - k / 255.0) <= 0.01);
}

TEST_CASE("pooling ignores case order") {
  std::vector<CaseRecord> cases;
  for (std::uint64_t s = 0; s < 4; ++s) cases.push_back(preprocess_case(generate_case(small_center("A"), s, "c"), 32, 32));
  const auto a = build_reference_histogram(cases);
  std::swap(cases[0], cases[3]);
  std::swap(cases[1], cases[2]);
  CHECK(build_reference_histogram(cases) == a);
}

}
