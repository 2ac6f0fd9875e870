#include "mcseg/dataset.hpp"
#include "mcseg/evalkit.hpp"
#include "mcseg/synthgen.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace mcseg;
namespace fs = std::filesystem;

namespace {

std::vector<CaseRecord> cases(int n) {
  SyntheticCenterSpec s;
  s.center_id = "A";
  s.image_size = 32;
  s.slices = {3, 3};
  return generate_cohort({s}, n, 1).at("A");
}

}  // namespace

TEST_SUITE("evalkit") {

TEST_CASE("an oracle predictor scores exactly one") {
  const auto r = evaluate_with([](const CaseRecord& c) { return *c.labels; }, cases(3), 32, 32);
  REQUIRE(r.cases.size() == 3);
  CHECK(r.mean == 1.0);
  CHECK(r.std == 0.0);
}

TEST_CASE("post-processing removes a stray blob") {
  auto with_blob = [](const CaseRecord& c) {
    LabelMap l = *c.labels;
    l(0, 0, 0) = l(0, 1, 0) = 1;
    return l;
  };
  const auto kept = evaluate_with(with_blob, cases(2), 32, 32, false);
  const auto cleaned = evaluate_with(with_blob, cases(2), 32, 32, true);
  CHECK(kept.mean < 1.0);
  CHECK(cleaned.mean == 1.0);
}

TEST_CASE("aggregates are the mean and population std over cases") {
  int i = 0;
  auto alternate = [&i](const CaseRecord& c) { return i++ % 2 == 0 ? *c.labels : LabelMap(c.labels->shape(), 0); };
  auto cs = cases(4);
  cs[3].labels.reset();
  const auto r = evaluate_with(alternate, cs, 32, 32);
  REQUIRE(r.cases.size() == 3);
  CHECK(r.skipped == std::vector<std::string>{cs[3].case_id});
  CHECK(r.cases[1].empty_prediction);
  // per-case means 1, 0, 1
  CHECK(r.mean == doctest::Approx(2.0 / 3));
  CHECK(r.std == doctest::Approx(std::sqrt(2.0 / 9)));
  const auto p = fs::temp_directory_path() / "mcseg_test_eval.csv";
  r.save_csv(p);
  std::ifstream is(p);
  std::string line, last;
  int lines = 0;
  while (std::getline(is, line)) {
    last = line;
    ++lines;
  }
  fs::remove(p);
  CHECK(lines == 5);
  CHECK(last == "aggregate,,,,0.666667");
}

TEST_CASE("balanced counts keep the total") {
  const auto c = balanced_counts({"A", "B", "C"}, 24, 6);
  REQUIRE(c.size() == 3);
  for (const auto& x : c) {
    CHECK(x.train == 8);
    CHECK(x.val == 2);
  }
  const auto h = balanced_counts({"A", "B"}, 25, 5);
  CHECK(h[0].train == 13);
  CHECK(h[1].val == 3);
}

TEST_CASE("test cases may not overlap the training cases") {
  const auto cs = cases(4);
  CHECK_NOTHROW(check_disjoint({cs[0], cs[1]}, {cs[2], cs[3]}));
  CHECK_THROWS_WITH_AS(check_disjoint({cs[0], cs[1]}, {cs[1]}), doctest::Contains(cs[1].case_id.c_str()), ConfigError);
}

TEST_CASE("report csv round trip and plots") {
  ExperimentReport r;
  r.experiment_id = "exp3_transfer";
  r.config_hash = "0123456789abcdef";
  r.seed = 4;
  r.rows = {{"none", "A", "B", "0", 0.5, 0.1, 15}, {"none", "A", "B", "median", 0.5, 0.1, 15},
            {"spatial", "A", "B", "median", 0.75, 0.05, 15}};
  r.table5 = {{"B", 0.1, 0.8, 0.4, "median"}, {"B", 1.0, 0.85, 0.86, "median"}};
  const auto dir = fs::temp_directory_path() / "mcseg_test_report";
  fs::remove_all(dir);
  r.save_csv(dir / "report.csv");
  r.save_table5_csv(dir / "table5.csv");
  const auto back = ExperimentReport::load_csv(dir / "report.csv", dir / "table5.csv");
  CHECK(back.experiment_id == r.experiment_id);
  CHECK(back.config_hash == r.config_hash);
  CHECK(back.seed == 4);
  REQUIRE(back.rows.size() == 3);
  CHECK(back.rows[2].mean_dice == 0.75);
  CHECK(back.rows[2].n_cases == 15);
  REQUIRE(back.table5.size() == 2);
  CHECK(back.table5[0].scratch_dice == 0.4);
  REQUIRE(back.find("spatial", "A", "B"));
  CHECK(back.find("spatial", "A", "B")->mean_dice == 0.75);
  CHECK(back.find("spatial", "A", "C") == nullptr);

  const auto plots = r.save_plots(dir / "plots");
  CHECK(plots.size() == 2);
  for (const auto& p : plots) {
    std::ifstream is(p, std::ios::binary);
    char magic[8] = {};
    is.read(magic, 8);
    CHECK(std::string(magic + 1, 3) == "PNG");
  }
  fs::remove_all(dir);
}

TEST_CASE("a missing manifest stops the cohort before any work") {
  ExperimentConfig cfg;
  cfg.datasets = {{"A", "/nonexistent/manifest.json"}};
  CHECK_THROWS_WITH(load_cohort(cfg), doctest::Contains("/nonexistent/manifest.json"));
}

TEST_CASE("synthetic cohorts are split per center") {
  ExperimentConfig cfg;
  SyntheticSource s;
  SyntheticCenterSpec a, b;
  a.center_id = "A";
  b.center_id = "B";
  a.image_size = b.image_size = 16;
  b.gamma_bias = 1.4;
  s.centers = {a, b};
  s.cases_per_center = 20;
  cfg.synthetic = s;
  cfg.splits.test_count = 5;
  const auto cohort = load_cohort(cfg);
  REQUIRE(cohort.size() == 2);
  CHECK(select_split(cohort.at("B"), Split::test).size() == 5);
  CHECK(select_split(cohort.at("B"), Split::val).size() == 3);
}

TEST_CASE("a fifteen-case test set gives fifteen rows and an aggregate") {
  const auto cs = cases(15);
  const auto r = evaluate_with([](const CaseRecord& c) { return *c.labels; }, cs, 32, 32);
  CHECK(r.cases.size() == 15);
  const auto p = fs::temp_directory_path() / "mcseg_eval15.csv";
  r.save_csv(p);
  std::ifstream in(p);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  fs::remove(p);
  REQUIRE(lines.size() == 17);  // header, 15 cases, aggregate
  CHECK(lines.back().rfind("aggregate", 0) == 0);
}

}
