#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run cli(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "cli_output.txt";
  const std::string cmd = std::string(MCSEG_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream is(log);
  std::stringstream ss;
  ss << is.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<fs::path> run_dirs(const fs::path& root, const std::string& suffix) {
  std::vector<fs::path> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::directory_iterator(root))
    if (e.path().filename().string().find(suffix) != std::string::npos) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

struct Workspace {
  fs::path dir = fs::temp_directory_path() / "mcseg_test_cli";
  Workspace() {
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "spec.json") << R"({"image_size": 32, "cases_per_center": 6, "seed": 2,
      "centers": [{"center_id": "A", "slices": [2, 2]},
                  {"center_id": "B", "slices": [2, 2], "gamma_bias": 1.4}]})";
    std::ofstream(dir / "exp.json") << R"({
      "seed": 1,
      "synthetic": {"spec_file": "spec.json", "cases_per_center": 6},
      "network": {"desk_scale": true},
      "augmentation": {"crop_size": [32, 32]},
      "training": {"epochs": 1, "batch_size": 4},
      "splits": {"test_count": 2},
      "plan": {"train_centers": ["A"], "augmentation_settings": ["none", "spatial_intensity"]}
    })";
  }
  ~Workspace() { fs::remove_all(dir); }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help and argument errors map to exit codes") {
  Workspace w;
  CHECK(cli("--help", w.dir).code == 0);
  CHECK(cli("", w.dir).code == 1);
  CHECK(cli("train --no-such-flag", w.dir).code == 1);
  CHECK(cli("train -c " + (w.dir / "missing.json").string(), w.dir).code == 1);
}

TEST_CASE("config validation errors name the offending field") {
  Workspace w;
  const auto r = cli("train -c " + (w.dir / "exp.json").string() + " --set training.epochz=3 --run-root " +
                         (w.dir / "runs").string(),
                     w.dir);
  CHECK(r.code == 1);
  CHECK(r.output.find("validation error at $.training.epochz") != std::string::npos);
  CHECK(run_dirs(w.dir / "runs", "_train").empty());
}

TEST_CASE("synth writes manifests that pass ingest-check") {
  Workspace w;
  const auto out = w.dir / "cohort";
  REQUIRE(cli("synth --spec " + (w.dir / "spec.json").string() + " --out " + out.string(), w.dir).code == 0);
  CHECK(fs::exists(out / "A" / "A_000_image.nii.gz"));
  const auto r = cli("ingest-check " + (out / "A" / "manifest.json").string() + " " +
                         (out / "B" / "manifest.json").string(),
                     w.dir);
  CHECK(r.code == 0);
  CHECK(r.output.find("6 cases, 0 violation(s)") != std::string::npos);
}

TEST_CASE("train, evaluate and predict produce their artifacts") {
  Workspace w;
  const std::string common = " -c " + (w.dir / "exp.json").string() + " --run-root " + (w.dir / "runs").string();
  REQUIRE(cli("train" + common, w.dir).code == 0);
  const auto train_dirs = run_dirs(w.dir / "runs", "_train");
  REQUIRE(train_dirs.size() == 1);
  const auto model = train_dirs[0] / "model.mcsw";
  CHECK(fs::exists(model));
  CHECK(fs::exists(train_dirs[0] / "train_log.csv"));
  CHECK(fs::exists(train_dirs[0] / "resolved_config.json"));

  REQUIRE(cli("evaluate" + common + " --model " + model.string() + " --center B", w.dir).code == 0);
  const auto eval_dirs = run_dirs(w.dir / "runs", "_evaluate");
  REQUIRE(eval_dirs.size() == 1);
  CHECK(slurp(eval_dirs[0] / "evaluation_B.csv").find("aggregate") != std::string::npos);

  REQUIRE(cli("synth --spec " + (w.dir / "spec.json").string() + " --out " + (w.dir / "cohort").string(), w.dir).code == 0);
  const auto img = w.dir / "cohort" / "B" / "B_000_image.nii.gz";
  CHECK(cli("predict --model " + model.string() + " --in " + img.string() + " --out " +
                (w.dir / "pred.nii.gz").string() + " --size 32 32",
            w.dir)
            .code == 0);
  CHECK(fs::exists(w.dir / "pred.nii.gz"));
  // the network needs sizes divisible by 8
  CHECK(cli("predict --model " + model.string() + " --in " + img.string() + " --out " +
                (w.dir / "bad.nii.gz").string() + " --size 30 30",
            w.dir)
            .code == 2);
}

TEST_CASE("experiment reports are reproducible and re-plottable") {
  Workspace w;
  const std::string cmd = "experiment --id exp1_augmentation -c " + (w.dir / "exp.json").string() + " --run-root " +
                          (w.dir / "runs").string();
  REQUIRE(cli(cmd, w.dir).code == 0);
  REQUIRE(cli(cmd, w.dir).code == 0);
  const auto dirs = run_dirs(w.dir / "runs", "_experiment");
  REQUIRE(dirs.size() == 2);
  const std::string a = slurp(dirs[0] / "exp1_augmentation_report.csv");
  CHECK_FALSE(a.empty());
  CHECK(a == slurp(dirs[1] / "exp1_augmentation_report.csv"));
  CHECK(a.find("median") != std::string::npos);
  fs::remove_all(dirs[0] / "plots");
  CHECK(cli("report --run-dir " + dirs[0].string(), w.dir).code == 0);
  CHECK(fs::exists(dirs[0] / "plots" / "exp1_augmentation_A_B.png"));
}

TEST_CASE("the shipped four-center spec yields four manifests") {
  Workspace w;
  const auto out = w.dir / "four";
  REQUIRE(cli("synth --spec " MCSEG_DATA_DIR "/specs/four_centers.json --cases 1 --out " + out.string(), w.dir).code == 0);
  for (const char* c : {"EMIDEC", "MSCMR", "VH", "STPAU"}) {
    CHECK(fs::exists(out / c / "manifest.json"));
    CHECK(fs::exists(out / c / (std::string(c) + "_000_image.nii.gz")));
  }
}

TEST_CASE("the transfer experiment writes its report, table and plots") {
  Workspace w;
  std::ofstream(w.dir / "exp3.json") << R"({
      "seed": 1,
      "synthetic": {"spec_file": "spec.json", "cases_per_center": 6},
      "network": {"desk_scale": true},
      "augmentation": {"crop_size": [32, 32]},
      "training": {"epochs": 1, "batch_size": 4},
      "transfer": {"k_blocks": 2, "epochs": 1},
      "splits": {"test_count": 2},
      "plan": {"train_centers": ["A"], "fractions": [0.5], "block_sweep": false}
    })";
  REQUIRE(cli("experiment --id exp3_transfer -c " + (w.dir / "exp3.json").string() + " --run-root " +
                  (w.dir / "runs").string(),
              w.dir)
              .code == 0);
  const auto dirs = run_dirs(w.dir / "runs", "_experiment");
  REQUIRE(dirs.size() == 1);
  const std::string csv = slurp(dirs[0] / "exp3_transfer_report.csv");
  CHECK(csv.find("finetune_f") != std::string::npos);
  CHECK(csv.find("scratch_f") != std::string::npos);
  CHECK(fs::exists(dirs[0] / "exp3_transfer_table5.csv"));
  CHECK(fs::exists(dirs[0] / "plots" / "exp3_transfer_A_B.png"));
}

}
