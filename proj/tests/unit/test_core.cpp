#include "mcseg/core.hpp"
#include "mcseg/preprocess.hpp"
#include "mcseg/random.hpp"

#include <doctest.h>

#include <cmath>
#include <memory>
#include <set>

using namespace mcseg;

TEST_SUITE("core") {

TEST_CASE("grid layout is slice-major") {
  Grid3<int> g({2, 3, 4});
  CHECK(g.index(1, 2, 3) == 3 * 6 + 1 * 3 + 2);
  g(1, 2, 3) = 7;
  CHECK(g.slice(3)(1, 2) == 7);
}

TEST_CASE("registry holds the reference centers") {
  const auto reg = CenterRegistry::reference_centers();
  CHECK(reg.ids().size() == 4);
  for (const auto& id : reg.ids()) {
    const auto& p = reg.at(id);
    CHECK(p.typical_in_plane_mm[0] >= 0.75 - 1e-9);
    CHECK(p.typical_in_plane_mm[1] <= 1.88 + 1e-9);
  }
  CenterRegistry r;
  r.add({"X", "", "", std::nullopt, {1, 1}, {8, 8}});
  CHECK_THROWS_AS(r.add({"X", "", "", std::nullopt, {1, 1}, {8, 8}}), std::invalid_argument);
}

TEST_CASE("case validation lists every problem") {
  CaseRecord c;
  c.image.voxels = Grid3<float>({2, 2, 1}, 0.5f);
  c.image.voxels(0, 0, 0) = NAN;
  c.image.spacing.row_mm = 0;
  c.labels = LabelMap({2, 2, 2}, 0);
  const auto v = validate_case(c);
  std::set<std::string> kinds;
  for (const auto& x : v) kinds.insert(x.invariant);
  CHECK(kinds.count("case_id"));
  CHECK(kinds.count("center"));
  CHECK(kinds.count("finite"));
  CHECK(kinds.count("spacing"));
  CHECK(kinds.count("shape mismatch"));
}

TEST_CASE("split spec validation") {
  SplitSpec s;
  s.train_fraction = 0.7;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("rng is reproducible and roughly normal") {
  Rng a(5), b(5);
  for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
  Rng r(9);
  double s = 0, ss = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    ss += x * x;
  }
  CHECK(std::abs(s / n) < 0.03);
  CHECK(std::abs(ss / n - 1.0) < 0.05);
  for (int i = 0; i < 1000; ++i) CHECK(r.below(7) < 7);
}

TEST_CASE("minmax normalization") {
  Volume v{Grid3<float>({1, 3, 1}), {}};
  v.voxels.values() = {2.f, 4.f, 6.f};
  const auto n = minmax_normalize(v);
  CHECK(n.voxels.values() == std::vector<float>{0.f, 0.5f, 1.f});
  Volume flat{Grid3<float>({2, 2, 1}, 3.f), {}};
  const auto zero = minmax_normalize(flat);
  for (float x : zero.voxels.values()) CHECK(x == 0.f);
  v.voxels.values()[1] = INFINITY;
  CHECK_THROWS_AS(minmax_normalize(v), PreprocessError);
}

TEST_CASE("crop or pad keeps the centre") {
  Volume v{Grid3<float>({4, 6, 1}), {}};
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 6; ++c) v.voxels(r, c, 0) = float(10 * r + c);
  LabelMap l({4, 6, 1}, 1);
  const auto [out, lab] = crop_or_pad(v, l, 6, 4);
  CHECK(out.shape() == Shape3{6, 4, 1});
  CHECK(out.voxels(0, 0, 0) == 0.f);  // padded row
  CHECK(out.voxels(1, 0, 0) == 1.f);  // row 0, col 1
  CHECK((*lab)(0, 0, 0) == 0);
  CHECK((*lab)(1, 0, 0) == 1);
}

TEST_CASE("preprocess_case normalizes and resizes both image and labels") {
  CaseRecord c;
  c.case_id = "x";
  c.center = std::make_shared<CenterProfile>(CenterProfile{"Z", "", "", std::nullopt, {1, 1}, {8, 8}});
  c.image.voxels = Grid3<float>({10, 10, 2}, 5.f);
  c.image.voxels(5, 5, 1) = 10.f;
  c.labels = LabelMap({10, 10, 2}, 0);
  const auto p = preprocess_case(c, 8, 12);
  CHECK(p.image.shape() == Shape3{8, 12, 2});
  CHECK(p.labels->shape() == Shape3{8, 12, 2});
  CHECK(*std::max_element(p.image.voxels.values().begin(), p.image.voxels.values().end()) == 1.f);
}

TEST_CASE("minmax maps the observed range onto the unit interval") {
  Volume v{Grid3<float>({1, 3, 1}), {}};
  v.voxels.values() = {5.f, 7.5f, 10.f};
  CHECK(minmax_normalize(v).voxels(0, 1, 0) == 0.5f);
  v.voxels.values() = {0.f, 0.3f, 1.f};
  CHECK(minmax_normalize(v).voxels == v.voxels);
}

TEST_CASE("crop or pad to 256 square") {
  auto ramp = [](int n) {
    Volume v{Grid3<float>({n, n, 10}), {}};
    for (int s = 0; s < 10; ++s)
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) v.voxels(r, c, s) = float(r * 1000 + c);
    return v;
  };
  const auto big = ramp(300);
  const auto [crop, l1] = crop_or_pad(big, std::nullopt, 256, 256);
  CHECK(crop.shape() == Shape3{256, 256, 10});
  CHECK_FALSE(l1);
  CHECK(crop.voxels(0, 0, 3) == big.voxels(22, 22, 3));
  CHECK(crop.voxels(255, 255, 9) == big.voxels(277, 277, 9));

  const auto small = ramp(200);
  const auto [pad, l2] = crop_or_pad(small, std::nullopt, 256, 256);
  CHECK(pad.shape() == Shape3{256, 256, 10});
  CHECK(pad.voxels(27, 100, 0) == 0.f);
  CHECK(pad.voxels(28, 28, 0) == small.voxels(0, 0, 0));
  CHECK(pad.voxels(227, 227, 0) == small.voxels(199, 199, 0));
  CHECK(pad.voxels(228, 100, 0) == 0.f);

  const auto exact = ramp(256);
  CHECK(crop_or_pad(exact, std::nullopt, 256, 256).first.voxels == exact.voxels);
}

}
