// Acceptance checks. Each criterion prints one PASS or FAIL line with what
// was measured; the exit status is non-zero when any requested one fails.
//
//   acceptance            run every criterion
//   acceptance 3 5 10     run the listed ones

#include "mcseg/augment.hpp"
#include "mcseg/config.hpp"
#include "mcseg/evalkit.hpp"
#include "mcseg/histogram.hpp"
#include "mcseg/loss.hpp"
#include "mcseg/metrics.hpp"
#include "mcseg/nn/adam.hpp"
#include "mcseg/preprocess.hpp"
#include "mcseg/synthgen.hpp"
#include "mcseg/translator.hpp"
#include "mcseg/unet.hpp"

#include "../support/oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace mcseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char b[512];
  std::snprintf(b, sizeof b, f, args...);
  return b;
}

const fs::path kData = MCSEG_DATA_DIR;

ExperimentConfig load_config(const std::string& name) {
  const fs::path p = kData / "configs" / name;
  auto cfg = experiment_from_json(load_json_file(p), p.parent_path());
  cfg.propagate_seed();
  cfg.validate();
  return cfg;
}

void progress(const std::string& s) { std::fprintf(stderr, "  %s\n", s.c_str()); }

double median_of(const ExperimentReport& r, const std::string& setting, const std::string& train,
                 const std::string& test) {
  const ReportRow* row = r.find(setting, train, test);
  if (!row) throw std::runtime_error("report has no row " + setting + " / " + train + " / " + test);
  return row->mean_dice;
}

// 1. Dice against explicit voxel sets.
Outcome dice_exact() {
  Rng rng(101);
  double worst = 0;
  for (int t = 0; t < 500; ++t) {
    const auto p = oracle::random_labels(rng, {16, 16, 16}, rng.uniform(0.05, 0.6));
    const auto q = oracle::random_labels(rng, {16, 16, 16}, rng.uniform(0.05, 0.6));
    const DiceScore d = dice_3d(p, q);
    worst = std::max({worst, std::abs(d.pool_dice() - oracle::set_dice(p, q, 1)),
                      std::abs(d.myocardium_dice() - oracle::set_dice(p, q, 2))});
  }
  return {worst <= 1e-12, fmt("500 pairs of 16^3, max |dice - set oracle| = %.3g", worst)};
}

// 2. Largest component against a breadth-first flood fill.
Outcome largest_component_exact() {
  Rng rng(202);
  int mismatches = 0;
  for (int t = 0; t < 200; ++t) {
    const auto m = oracle::random_labels(rng, {20, 20, 20}, rng.uniform(0.01, 0.3));
    if (!(largest_component(m).labels == oracle::flood_fill_largest(m))) ++mismatches;
  }
  return {mismatches == 0, fmt("200 volumes of 20^3, %d mismatches", mismatches)};
}

// Smooth left-ventricle-like phantom: a bright elliptical pool inside a dark
// ring on a mid-grey body, with sigmoid edges and a dark surround at the frame.
std::pair<Slice<float>, LabelSlice> smooth_phantom(Rng& rng, int n) {
  Slice<float> img(n, n);
  LabelSlice lab(n, n);
  const double cy = n / 2.0 + rng.uniform(-4, 4), cx = n / 2.0 + rng.uniform(-4, 4);
  const double a = rng.uniform(6, 10), b = a * rng.uniform(0.75, 1.0), wall = rng.uniform(3, 5);
  const double body = 0.42 * n;
  auto step = [](double d) { return 1.0 / (1.0 + std::exp(d / 1.5)); };  // 1 inside, 0 outside
  for (int r = 0; r < n; ++r)
    for (int q = 0; q < n; ++q) {
      const double e = std::hypot((r - cy) / b, (q - cx) / a);  // 1 on the pool boundary
      const double d_pool = (e - 1) * std::min(a, b), d_ring = (e - 1) * std::min(a, b) - wall;
      const double d_body = std::hypot(r - n / 2.0, q - n / 2.0) - body;
      const double body_v = 0.02 + 0.33 * step(d_body);
      const double ring_v = body_v + (0.12 - body_v) * step(d_ring);
      img(r, q) = float(ring_v + (0.7 - ring_v) * step(d_pool));
      lab(r, q) = d_pool < 0 ? 1 : d_ring < 0 ? 2 : 0;
    }
  return {img, lab};
}

// 3. Augmentation invariants on smooth phantom slices.
Outcome augmentation_suite() {
  Rng rng(303);
  std::vector<std::pair<Slice<float>, LabelSlice>> slices;
  for (int i = 0; i < 60; ++i) slices.push_back(smooth_phantom(rng, 64));

  bool flip_ok = true, gamma_ok = true, noise_ok = true;
  double worst_rot = 0;
  for (const auto& [img, lab] : slices) {
    for (auto axis : {FlipAxis::horizontal, FlipAxis::vertical}) {
      const auto once = flip(img, lab, axis);
      const auto twice = flip(once.first, once.second, axis);
      flip_ok = flip_ok && (twice.first == img).all() && (twice.second == lab).all();
    }
    const double theta = rng.uniform(-30.0, 30.0);
    const auto fwd = rotate(img, lab, theta);
    const auto back = rotate(fwd.first, fwd.second, -theta);
    worst_rot = std::max(worst_rot, double((back.first - img).abs().mean()));
    gamma_ok = gamma_ok && (gamma(img, 1.0, false) == img).all() && (gamma(img, 1.0, true) == img).all();
    noise_ok = noise_ok && (gaussian_noise(img, 0.0, rng.next()) == img).all();
  }

  AugmentationConfig cfg;
  cfg.crop_size = {16, 16};
  const Slice<float> grey = Slice<float>::Constant(16, 16, 0.5f);
  const LabelSlice zero = LabelSlice::Zero(16, 16);
  std::map<std::string, int> counts;
  const int n = 10000;
  for (int t = 0; t < n; ++t)
    for (const auto& op : sample_pipeline(grey, zero, cfg, std::uint64_t(t) * 7919 + 1).applied_ops) ++counts[op.name];
  double lo = 1, hi = 0;
  for (const auto* names : {&spatial_op_names(), &intensity_op_names()})
    for (const char* name : *names) {
      lo = std::min(lo, counts[name] / double(n));
      hi = std::max(hi, counts[name] / double(n));
    }
  const bool freq_ok = lo >= 0.18 && hi <= 0.22;
  return {flip_ok && gamma_ok && noise_ok && worst_rot <= 0.02 && freq_ok,
          fmt("%zu slices: flip %s, rotate round trip worst mean |err| %.4f, gamma(1) %s, noise(0) %s; "
              "inclusion frequency over %d draws in [%.4f, %.4f]",
              slices.size(), flip_ok ? "exact" : "BROKEN", worst_rot, gamma_ok ? "exact" : "BROKEN",
              noise_ok ? "exact" : "BROKEN", n, lo, hi)};
}

// 4. Histogram matching moves unseen centers toward the reference and barely moves the reference itself.
Outcome histogram_suite() {
  const auto specs = SyntheticCohortFile::load(kData / "specs" / "desk_three_centers.json").centers;
  const auto cohort = generate_cohort(specs, 20, 41);
  std::vector<CaseRecord> ref_cases;
  for (const auto& c : cohort.at("A")) ref_cases.push_back(preprocess_case(c, 64, 64));
  const ReferenceHistogram ref = build_reference_histogram(ref_cases);
  int better = 0, total = 0;
  for (const std::string t : {"B", "C"})
    for (const auto& raw : cohort.at(t)) {
      const auto c = preprocess_case(raw, 64, 64);
      const Volume m = histogram_match(c.image, ref);
      better += ks_statistic(m.voxels.values(), ref) < ks_statistic(c.image.voxels.values(), ref);
      ++total;
    }
  double worst_self = 0;
  for (const auto& c : ref_cases) {
    const Volume m = histogram_match(c.image, build_reference_histogram({c}));
    for (std::size_t i = 0; i < m.voxels.size(); ++i)
      worst_self = std::max(worst_self, double(std::abs(m.voxels.values()[i] - c.image.voxels.values()[i])));
  }
  const double share = double(better) / total;
  return {share >= 0.95 && worst_self <= 1.0 / 255.0 + 1e-7,
          fmt("KS decreased for %d/%d cases (%.1f%%); self-match worst change %.5f (bin %.5f)", better, total,
              100 * share, worst_self, 1.0 / 255)};
}

// 5. Analytic gradients of the desk network against central differences.
Outcome gradient_check() {
  UNet<double> net(NetworkConfig{.desk_scale = true});
  net.init(55);
  Rng rng(505);
  nn::Tensor<double> x(2, 1, 16, 16);
  for (Eigen::Index i = 0; i < x.data.size(); ++i) x.data[i] = rng.uniform();
  LabelBatch y(2, 16, 16);
  for (auto& v : y.data) v = std::uint8_t(rng.below(3));
  const auto r = compound_loss(net.forward(x, true), y, true);
  for (auto* p : net.params()) p->grad.setZero();
  net.backward(r.dlogits);

  auto params = net.params();
  std::size_t total = 0;
  for (auto* p : params) total += std::size_t(p->value.size());
  const double h = 1e-5, floor = 1e-6;
  double worst = 0;
  std::string worst_name;
  for (int t = 0; t < 20; ++t) {
    std::size_t k = rng.below(total);
    auto it = params.begin();
    while (k >= std::size_t((*it)->value.size())) k -= std::size_t((*it++)->value.size());
    auto& v = (*it)->value[Eigen::Index(k)];
    const double v0 = v;
    v = v0 + h;
    const double lp = compound_loss(net.forward(x, false), y, false).value;
    v = v0 - h;
    const double lm = compound_loss(net.forward(x, false), y, false).value;
    v = v0;
    const double fd = (lp - lm) / (2 * h), an = (*it)->grad[Eigen::Index(k)];
    // a floor on the denominator keeps inert biases (true gradient 0) from dividing noise by noise
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), floor});
    if (rel > worst) worst = rel, worst_name = (*it)->name;
  }
  return {worst < 1e-3, fmt("20 random parameters of %zu, worst relative error %.3g (%s)", total, worst,
                            worst_name.c_str())};
}

// 6. Frozen blocks of the default network are untouched by optimizer steps.
Outcome freezing() {
  UNet<float> net(NetworkConfig{});
  net.init(66);
  net.set_trainable(NetPart::encoder, 5);
  std::map<std::string, nn::Vector<float>> before;
  for (auto* q : net.params()) before[q->name] = q->value;
  nn::Adam<float> opt(net.params(), {});
  Rng rng(606);
  for (int step = 0; step < 10; ++step) {
    nn::Tensor<float> x(2, 1, 32, 32);
    for (Eigen::Index i = 0; i < x.data.size(); ++i) x.data[i] = float(rng.uniform());
    LabelBatch y(2, 32, 32);
    for (auto& v : y.data) v = std::uint8_t(rng.below(3));
    opt.zero_grad();
    net.backward(compound_loss(net.forward(x, true), y, true).dlogits);
    opt.step();
  }
  const auto flags = net.trainable_flags();
  const auto owner = net.block_index();
  int frozen = 0, frozen_moved = 0, trainable = 0, trainable_moved = 0;
  for (auto* q : net.params()) {
    const bool moved = !(q->value.array() == before[q->name].array()).all();
    if (flags.at(owner.at(q->name))) {
      ++trainable;
      trainable_moved += moved;
    } else {
      ++frozen;
      frozen_moved += moved;
    }
  }
  return {frozen_moved == 0 && trainable_moved > 0,
          fmt("encoder k=5 of 6 levels, 10 Adam steps: %d/%d frozen tensors changed, %d/%d trainable changed",
              frozen_moved, frozen, trainable_moved, trainable)};
}

// 7. Experiment 1: augmentation helps across centers without hurting within the center.
Outcome experiment1() {
  const auto cfg = load_config("exp1_desk.json");
  const auto cohort = load_cohort(cfg);
  const auto rep = run_experiment(cfg, "exp1_augmentation", cohort, progress);
  const double none_a = median_of(rep, "none", "A", "A"), aug_a = median_of(rep, "spatial_intensity", "A", "A");
  double gain = 0;
  std::string per;
  for (const std::string t : {"B", "C"}) {
    const double n = median_of(rep, "none", "A", t), a = median_of(rep, "spatial_intensity", "A", t);
    gain += (a - n) / 2;
    per += fmt(" %s: none %.3f aug %.3f;", t.c_str(), n, a);
  }
  return {gain >= 0.05 && none_a >= 0.85 && aug_a >= 0.85,
          fmt("three-seed medians. within A: none %.3f aug %.3f. cross:%s mean gain %.3f", none_a, aug_a,
              per.c_str(), gain)};
}

// 8. Experiment 3: a few target cases suffice when fine-tuning.
Outcome experiment3() {
  const auto cfg = load_config("exp3_desk.json");
  const auto cohort = load_cohort(cfg);
  const auto rep = run_experiment(cfg, "exp3_transfer", cohort, progress);
  const double ft10 = median_of(rep, "finetune_f0.10", "A", "B");
  const double s10 = median_of(rep, "scratch_f0.10", "A", "B");
  const double s100 = median_of(rep, "scratch_f1.00", "A", "B");
  const double src = median_of(rep, "source_only", "A", "B");
  return {s100 - ft10 <= 0.10 && ft10 - s10 >= 0.15,
          fmt("on B: source only %.3f, fine-tune 10%% %.3f, scratch 10%% %.3f, scratch 100%% %.3f "
              "(gap to scratch 100%% %.3f, margin over scratch 10%% %.3f)",
              src, ft10, s10, s100, s100 - ft10, ft10 - s10)};
}

// 9. Experiment 4: a second center helps an unseen one, less so once augmentation is on.
Outcome experiment4() {
  const auto cfg = load_config("exp4_desk.json");
  const auto cohort = load_cohort(cfg);
  const auto rep = run_experiment(cfg, "exp4_multicenter", cohort, progress);
  const double n1 = median_of(rep, "none", "A", "C"), n2 = median_of(rep, "none", "A+B", "C");
  const double a1 = median_of(rep, "spatial_intensity", "A", "C"), a2 = median_of(rep, "spatial_intensity", "A+B", "C");
  return {n2 - n1 >= 0.03 && a2 - a1 <= n2 - n1,
          fmt("held-out C, three-seed medians. no aug: A %.3f, A+B %.3f (gain %.3f). aug: A %.3f, A+B %.3f "
              "(gain %.3f)",
              n1, n2, n2 - n1, a1, a2, a2 - a1)};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// 10. Same CLI invocation, same seed, same bytes.
Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "mcseg_acceptance_determinism";
  fs::remove_all(root);
  const std::string cmd = std::string(MCSEG_CLI_PATH) + " experiment --id exp1_augmentation --id exp4_multicenter -c " +
                          (kData / "configs" / "quick.json").string() + " --seed 9 --run-root " + root.string() +
                          " > " + (root.string() + ".log") + " 2>&1";
  for (int i = 0; i < 2; ++i)
    if (std::system(cmd.c_str()) != 0) return {false, "CLI run failed, see " + root.string() + ".log"};
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.size() != 2) return {false, fmt("expected two run directories, found %zu", dirs.size())};
  int compared = 0, differing = 0;
  for (const auto& e : fs::directory_iterator(dirs[0])) {
    if (e.path().extension() != ".csv") continue;
    ++compared;
    const fs::path other = dirs[1] / e.path().filename();
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) ++differing;
  }
  fs::remove_all(root);
  fs::remove(root.string() + ".log");
  return {compared > 0 && differing == 0, fmt("%d report CSVs compared across two runs, %d differ", compared, differing)};
}

double mean_intensity(const std::vector<CaseRecord>& cases) {
  double s = 0;
  std::size_t n = 0;
  for (const auto& c : cases) {
    for (float v : c.image.voxels.values()) s += v;
    n += c.image.voxels.size();
  }
  return s / double(n);
}

// 11. The cycle translator learns the gamma-shifted pair.
Outcome translator_suite() {
  const auto f = SyntheticCohortFile::load(kData / "specs" / "translator_pair.json");
  const auto cohort = generate_cohort(f.centers, f.cases_per_center, f.seed);
  std::vector<CaseRecord> a, b;
  for (const auto& c : cohort.at("A")) a.push_back(preprocess_case(c, 64, 64));
  for (const auto& c : cohort.at("B")) b.push_back(preprocess_case(c, 64, 64));
  TranslatorConfig cfg;
  cfg.base_features = 8;
  cfg.disc_features = 8;
  cfg.downsamplings = 1;
  cfg.residual_blocks = 2;
  cfg.epochs = 20;
  cfg.slice_size = {64, 64};
  cfg.seed = 1;
  auto tb = train_translator(a, b, cfg);
  std::vector<CaseRecord> translated = b;
  for (auto& c : translated) c.image = translate(c.image, tb, TranslateDirection::target_to_source);
  const double first = tb.log.front().cycle_error, last = tb.log.back().cycle_error;
  const double ma = mean_intensity(a), mb = mean_intensity(b), mt = mean_intensity(translated);
  return {last <= 0.5 * first && std::abs(mt - ma) < std::abs(mb - ma),
          fmt("cycle error %.5f -> %.5f (%.0f%% drop); means: source %.4f, target %.4f, translated %.4f", first,
              last, 100 * (1 - last / first), ma, mb, mt)};
}

struct Criterion {
  const char* name;
  double limit_s;  // runtime bound, 0 when none applies
  std::function<Outcome()> run;
};

const std::map<int, Criterion>& criteria() {
  static const std::map<int, Criterion> c{
      {1, {"dice matches voxel-set oracle", 10, dice_exact}},
      {2, {"largest component matches flood fill", 30, largest_component_exact}},
      {3, {"augmentation invariants", 120, augmentation_suite}},
      {4, {"histogram matching", 60, histogram_suite}},
      {5, {"network gradient check", 60, gradient_check}},
      {6, {"block freezing", 60, freezing}},
      {7, {"experiment 1 augmentation trend", 0, experiment1}},
      {8, {"experiment 3 transfer trend", 1200, experiment3}},
      {9, {"experiment 4 multi-center trend", 0, experiment4}},
      {10, {"CLI determinism", 0, determinism}},
      {11, {"cycle translator", 0, translator_suite}},
  };
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) ids.push_back(std::atoi(argv[i]));
  if (ids.empty())
    for (const auto& [id, _] : criteria()) ids.push_back(id);
  int failed = 0;
  for (int id : ids) {
    const auto it = criteria().find(id);
    if (it == criteria().end()) {
      std::printf("FAIL %d unknown criterion\n", id);
      ++failed;
      continue;
    }
    const auto& c = it->second;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt("%.1f s", secs);
    if (c.limit_s > 0) {
      timing += fmt(" of %.0f s allowed", c.limit_s);
      if (secs > c.limit_s) o.pass = false;
    }
    std::printf("%s %d %s: %s [%s]\n", o.pass ? "PASS" : "FAIL", id, c.name, o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
