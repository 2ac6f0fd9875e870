#include "mcseg/dataset.hpp"
#include "mcseg/evalkit.hpp"
#include "mcseg/histogram.hpp"
#include "mcseg/plot.hpp"
#include "mcseg/preprocess.hpp"
#include "mcseg/translator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <tuple>

namespace mcseg {

namespace {

std::string fmt(double v, const char* spec = "%.6f") {
  char b[64];
  std::snprintf(b, sizeof b, spec, v);
  return b;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return 0;
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

std::vector<CaseRecord> concat(std::vector<CaseRecord> a, const std::vector<CaseRecord>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<CaseRecord> preprocessed(const std::vector<CaseRecord>& cases, const std::array<int, 2>& size) {
  std::vector<CaseRecord> out;
  out.reserve(cases.size());
  for (const auto& c : cases) out.push_back(preprocess_case(c, size[0], size[1]));
  return out;
}

AugmentationConfig augmentation_for(const std::string& setting, const AugmentationConfig& base) {
  AugmentationConfig a = base;
  if (setting == "none") {
    a.enable_spatial = a.enable_intensity = false;
  } else if (setting == "spatial") {
    a.enable_spatial = true;
    a.enable_intensity = false;
  } else if (setting == "spatial_intensity") {
    a.enable_spatial = a.enable_intensity = true;
  } else {
    throw ConfigPathError("$.plan.augmentation_settings", "unknown augmentation setting " + setting);
  }
  return a;
}

std::string fraction_tag(double f) { return fmt(f, "%.2f"); }

// Collects per-seed scores and appends across-seed medians at the end.
class Runner {
 public:
  Runner(const ExperimentConfig& cfg, const std::string& id, const Cohort& cohort, const ProgressFn& progress)
      : cfg_(cfg), cohort_(cohort), progress_(progress) {
    report_.experiment_id = id;
    report_.config_hash = config_hash(to_json(cfg));
    report_.seed = cfg.seed;
    net_ = cfg.network;
    size_ = cfg.augmentation.crop_size;
    for (const auto& [cid, cases] : cohort) all_.push_back(cid);
    tests_ = cfg.plan.test_centers.empty() ? all_ : cfg.plan.test_centers;
    sources_ = cfg.plan.train_centers.empty() ? std::vector<std::string>{all_.front()} : cfg.plan.train_centers;
    for (const auto& c : concat_ids(tests_, sources_))
      if (!cohort.count(c)) throw ConfigError("experiment references center " + c + " which is not in the cohort");
  }

  ExperimentReport run() {
    const std::string& id = report_.experiment_id;
    if (id == "exp1_augmentation") exp1();
    else if (id == "exp2_harmonization") exp2();
    else if (id == "exp3_transfer") exp3();
    else if (id == "exp4_multicenter") exp4();
    else throw ConfigError("unknown experiment " + id + " (expected one of " + join(experiment_ids(), ", ") + ")");
    finish();
    return std::move(report_);
  }

 private:
  static std::vector<std::string> concat_ids(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }

  void say(const std::string& msg) const {
    if (progress_) progress_("[" + report_.experiment_id + "] " + msg);
  }

  std::vector<CaseRecord> split(const std::string& center, Split s) const {
    return select_split(cohort_.at(center), s);
  }

  TrainingConfig training(std::uint64_t run_seed) const {
    TrainingConfig t = cfg_.training;
    t.seed = cfg_.training.seed + run_seed;
    return t;
  }

  AugmentationConfig augmentation(const AugmentationConfig& a, std::uint64_t run_seed) const {
    AugmentationConfig out = a;
    out.seed = cfg_.augmentation.seed + run_seed;
    return out;
  }

  TrainResult fit(const std::vector<CaseRecord>& tr, const std::vector<CaseRecord>& va, const AugmentationConfig& aug,
                  std::uint64_t run_seed, const std::string& what) const {
    say("seed " + std::to_string(run_seed) + ": training " + what + " on " + std::to_string(tr.size()) + " cases");
    return train(tr, va, net_, training(run_seed), augmentation(aug, run_seed));
  }

  EvaluationResult score(ModelBundle& b, const std::vector<CaseRecord>& train_val, const std::string& test_center,
                         const Harmonizer& h = {}) const {
    const auto test = split(test_center, Split::test);
    check_disjoint(train_val, test);
    return evaluate(b, test, size_[0], size_[1], h);
  }

  void add(const std::string& setting, const std::string& train, const std::string& test, std::uint64_t run_seed,
           const EvaluationResult& r) {
    const auto key = std::make_tuple(setting, train, test);
    if (!groups_.count(key)) order_.push_back(key);
    ReportRow row{setting, train, test, std::to_string(run_seed), r.mean, r.std, int(r.cases.size())};
    groups_[key].push_back(row);
    report_.rows.push_back(row);
    say(setting + " | train " + train + " | test " + test + " | dice " + fmt(r.mean, "%.4f"));
  }

  void finish() {
    for (const auto& key : order_) {
      const auto& rows = groups_.at(key);
      std::vector<double> m, s;
      for (const auto& r : rows) {
        m.push_back(r.mean_dice);
        s.push_back(r.std_dice);
      }
      report_.rows.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), "median", median(m), median(s),
                              rows.front().n_cases});
    }
    std::map<std::pair<std::string, double>, std::vector<const Table5Row*>> t5;
    std::vector<std::pair<std::string, double>> t5_order;
    for (const auto& r : report_.table5) {
      const auto k = std::make_pair(r.target_center, r.fraction);
      if (!t5.count(k)) t5_order.push_back(k);
      t5[k].push_back(&r);
    }
    std::vector<Table5Row> medians;
    for (const auto& k : t5_order) {
      std::vector<double> f, s;
      for (const auto* r : t5.at(k)) {
        f.push_back(r->finetune_dice);
        s.push_back(r->scratch_dice);
      }
      medians.push_back({k.first, k.second, median(f), median(s), "median"});
    }
    report_.table5.insert(report_.table5.end(), medians.begin(), medians.end());
  }

  void exp1() {
    for (const auto& src : sources_)
      for (auto s : cfg_.plan.seeds)
        for (const auto& setting : cfg_.plan.augmentation_settings) {
          const auto tr = split(src, Split::train), va = split(src, Split::val);
          auto model = fit(tr, va, augmentation_for(setting, cfg_.augmentation), s, src + " (" + setting + ")");
          for (const auto& t : tests_) add(setting, src, t, s, score(model.bundle, concat(tr, va), t));
        }
  }

  void exp2() {
    for (const auto& src : sources_)
      for (auto s : cfg_.plan.seeds) {
        const auto tr = split(src, Split::train), va = split(src, Split::val);
        auto model = fit(tr, va, cfg_.augmentation, s, src);
        const auto src_pre = preprocessed(tr, size_);
        const ReferenceHistogram ref = build_reference_histogram(src_pre);
        for (const auto& t : tests_) {
          add("none", src, t, s, score(model.bundle, concat(tr, va), t));
          if (t == src) continue;
          add("histogram_match", src, t, s,
              score(model.bundle, concat(tr, va), t, [&](const Volume& v) { return histogram_match(v, ref); }));

          const TranslatorConfig tc = translator_config(cfg_, training(s).seed);
          say("seed " + std::to_string(s) + ": training translator " + t + " -> " + src);
          // the unseen center contributes images only, taken from its non-test cases
          const auto tgt = preprocessed(concat(split(t, Split::train), split(t, Split::val)), size_);
          TranslatorBundle tb = train_translator(src_pre, tgt, tc, [this](const std::string& w) { say(w); });
          add("cycle_translate", src, t, s, score(model.bundle, concat(tr, va), t, [&](const Volume& v) {
                return translate(v, tb, TranslateDirection::target_to_source);
              }));
        }
      }
  }

  void exp3() {
    const TransferConfig base = cfg_.transfer.value_or(TransferConfig{});
    const int levels = net_.resolved().levels;
    const int k_default = std::min(base.k_blocks, levels);
    for (const auto& src : sources_)
      for (auto s : cfg_.plan.seeds) {
        const auto tr = split(src, Split::train), va = split(src, Split::val);
        auto parent = fit(tr, va, cfg_.augmentation, s, "parent " + src);
        for (const auto& t : tests_) {
          if (t == src) continue;
          const auto ttr = split(t, Split::train), tva = split(t, Split::val);
          const auto seen = concat(concat(tr, va), concat(ttr, tva));
          add("source_only", src, t, s, score(parent.bundle, seen, t));
          auto tune = [&](NetPart part, int k, double fraction) {
            TransferConfig tcfg = base;
            tcfg.part = part;
            tcfg.k_blocks = k;
            tcfg.data_fraction = fraction;
            say("seed " + std::to_string(s) + ": fine-tuning " + to_string(part) + " k=" + std::to_string(k) +
                " on " + fraction_tag(fraction) + " of " + t);
            return finetune(parent.bundle, ttr, tva, tcfg, training(s), augmentation(cfg_.augmentation, s));
          };
          if (cfg_.plan.block_sweep)
            for (NetPart part : {NetPart::encoder, NetPart::decoder})
              for (int k = 1; k <= levels; ++k) {
                auto ft = tune(part, k, base.data_fraction);
                add("finetune_" + to_string(part) + "_k" + std::to_string(k), src, t, s, score(ft.bundle, seen, t));
              }
          for (double f : cfg_.plan.fractions) {
            auto ft = tune(base.part, k_default, f);
            const auto fr = score(ft.bundle, seen, t);
            add("finetune_f" + fraction_tag(f), src, t, s, fr);
            // scratch sees the same subsample the fine-tuning run drew
            const auto str = subsample_cases(ttr, f, nn::mix_seed(training(s).seed, 0x7a));
            const auto sva = tva.empty() ? tva : subsample_cases(tva, f, nn::mix_seed(training(s).seed, 0x7b));
            auto scratch = fit(str, sva, cfg_.augmentation, s, "scratch " + t + " " + fraction_tag(f));
            const auto sr = score(scratch.bundle, seen, t);
            add("scratch_f" + fraction_tag(f), src, t, s, sr);
            report_.table5.push_back({t, f, fr.mean, sr.mean, std::to_string(s)});
          }
        }
      }
  }

  void exp4() {
    const std::vector<std::string> order = cfg_.plan.train_centers.empty() ? all_ : cfg_.plan.train_centers;
    std::vector<std::vector<CenterCount>> combos;
    if (cfg_.multicenter_mix) {
      combos.push_back(*cfg_.multicenter_mix);
    } else {
      const int total_train = int(split(order.front(), Split::train).size());
      const int total_val = int(split(order.front(), Split::val).size());
      for (std::size_t m = 1; m <= order.size(); ++m)
        combos.push_back(
            balanced_counts({order.begin(), order.begin() + std::ptrdiff_t(m)}, total_train, total_val));
    }
    std::vector<std::string> settings{"none"};
    if (cfg_.plan.multicenter_with_augmentation) settings.push_back("spatial_intensity");
    for (const auto& combo : combos) {
      std::vector<std::string> ids;
      for (const auto& c : combo) ids.push_back(c.center_id);
      const std::string name = join(ids, "+");
      for (auto s : cfg_.plan.seeds) {
        const MixedSets mix = mix_centers(cohort_, combo, nn::mix_seed(training(s).seed, 0x3c));
        for (const auto& setting : settings) {
          auto model = fit(mix.train, mix.val, augmentation_for(setting, cfg_.augmentation), s,
                           name + " (" + setting + ")");
          for (const auto& t : tests_) add(setting, name, t, s, score(model.bundle, concat(mix.train, mix.val), t));
        }
      }
    }
  }

  const ExperimentConfig& cfg_;
  const Cohort& cohort_;
  ProgressFn progress_;
  ExperimentReport report_;
  NetworkConfig net_;
  std::array<int, 2> size_{};
  std::vector<std::string> all_, tests_, sources_;
  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, std::vector<ReportRow>> groups_;
  std::vector<Key> order_;
};

}  // namespace

void ExperimentReport::save_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  os << "experiment_id,config_hash,seed,train_setting,train_centers,test_center,run_seed,mean_dice,std_dice,n_cases\n";
  for (const auto& r : rows)
    os << experiment_id << ',' << config_hash << ',' << seed << ',' << r.train_setting << ',' << r.train_centers << ','
       << r.test_center << ',' << r.seed << ',' << fmt(r.mean_dice) << ',' << fmt(r.std_dice) << ',' << r.n_cases
       << '\n';
}

void ExperimentReport::save_table5_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  os << "target_center,fraction,finetune_dice,scratch_dice,run_seed\n";
  for (const auto& r : table5)
    os << r.target_center << ',' << fmt(r.fraction, "%.2f") << ',' << fmt(r.finetune_dice) << ','
       << fmt(r.scratch_dice) << ',' << r.seed << '\n';
}

std::vector<std::filesystem::path> ExperimentReport::save_plots(const std::filesystem::path& dir) const {
  std::vector<std::filesystem::path> out;
  std::vector<std::pair<std::string, std::string>> groups;
  for (const auto& r : rows) {
    if (r.seed != "median") continue;
    const auto g = std::make_pair(r.train_centers, r.test_center);
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
  }
  for (const auto& [train, test] : groups) {
    std::vector<std::string> labels;
    std::vector<double> values;
    for (const auto& r : rows)
      if (r.seed == "median" && r.train_centers == train && r.test_center == test) {
        labels.push_back(r.train_setting);
        values.push_back(r.mean_dice);
      }
    const auto path = dir / (experiment_id + "_" + train + "_" + test + ".png");
    plot::bar_chart(path, experiment_id + " train " + train + " test " + test, labels, values);
    out.push_back(path);
  }
  std::vector<std::string> targets;
  for (const auto& r : table5)
    if (r.seed == "median" && std::find(targets.begin(), targets.end(), r.target_center) == targets.end())
      targets.push_back(r.target_center);
  for (const auto& t : targets) {
    std::vector<double> x;
    plot::Series ft{"finetune", {}}, sc{"scratch", {}};
    for (const auto& r : table5)
      if (r.seed == "median" && r.target_center == t) {
        x.push_back(r.fraction);
        ft.y.push_back(r.finetune_dice);
        sc.y.push_back(r.scratch_dice);
      }
    const auto path = dir / (experiment_id + "_fractions_" + t + ".png");
    plot::line_chart(path, "dice vs fraction of " + t, x, {ft, sc});
    out.push_back(path);
  }
  return out;
}

namespace {

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, std::size_t columns) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(is, line);  // header
  for (int n = 2; std::getline(is, line); ++n) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t comma; (comma = line.find(',', start)) != std::string::npos; start = comma + 1)
      f.push_back(line.substr(start, comma - start));
    f.push_back(line.substr(start));
    if (f.size() != columns)
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": expected " + std::to_string(columns) +
                        " fields, got " + std::to_string(f.size()));
    rows.push_back(std::move(f));
  }
  return rows;
}

}  // namespace

ExperimentReport ExperimentReport::load_csv(const std::filesystem::path& path,
                                            const std::filesystem::path& table5_path) {
  ExperimentReport r;
  for (const auto& f : read_csv(path, 10)) {
    r.experiment_id = f[0];
    r.config_hash = f[1];
    r.seed = std::stoull(f[2]);
    r.rows.push_back({f[3], f[4], f[5], f[6], std::stod(f[7]), std::stod(f[8]), std::stoi(f[9])});
  }
  if (!table5_path.empty() && std::filesystem::exists(table5_path))
    for (const auto& f : read_csv(table5_path, 5))
      r.table5.push_back({f[0], std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), f[4]});
  return r;
}

const ReportRow* ExperimentReport::find(const std::string& setting, const std::string& train, const std::string& test,
                                        const std::string& seed) const {
  for (const auto& r : rows)
    if (r.train_setting == setting && r.train_centers == train && r.test_center == test && r.seed == seed) return &r;
  return nullptr;
}

Cohort load_cohort(const ExperimentConfig& cfg) {
  // every manifest is opened before any generation or training
  std::vector<std::pair<std::string, DatasetManifest>> manifests;
  for (const auto& d : cfg.datasets) {
    if (!std::filesystem::exists(d.manifest))
      throw ConfigError("dataset for center " + d.center_id + " not found: " + d.manifest.string());
    manifests.emplace_back(d.center_id, DatasetManifest::load(d.manifest));
  }
  std::vector<SyntheticCenterSpec> specs;
  if (cfg.synthetic) {
    if (!cfg.synthetic->spec_file.empty()) {
      if (!std::filesystem::exists(cfg.synthetic->spec_file))
        throw ConfigError("synthetic spec file not found: " + cfg.synthetic->spec_file.string());
      specs = SyntheticCohortFile::load(cfg.synthetic->spec_file).centers;
    } else {
      specs = cfg.synthetic->centers;
    }
  }

  Cohort raw;
  const CenterRegistry registry = CenterRegistry::reference_centers();
  for (const auto& [cid, m] : manifests) raw[cid] = load_dataset(m, &registry);
  if (!specs.empty()) {
    for (auto& [cid, cases] : generate_cohort(specs, cfg.synthetic->cases_per_center, cfg.seed)) {
      if (raw.count(cid)) throw ConfigError("center " + cid + " is both a dataset and a synthetic center");
      raw[cid] = std::move(cases);
    }
  }
  if (raw.empty()) throw ConfigError("experiment config names no datasets and no synthetic centers");
  for (auto& [cid, cases] : raw) cases = assign_splits(std::move(cases), cfg.splits);
  return raw;
}

void check_disjoint(const std::vector<CaseRecord>& train, const std::vector<CaseRecord>& test) {
  std::set<std::string> seen;
  for (const auto& c : train) seen.insert(c.center_id() + "/" + c.case_id);
  for (const auto& c : test)
    if (seen.count(c.center_id() + "/" + c.case_id))
      throw ConfigError("test case " + c.case_id + " of center " + c.center_id() + " is also used for training");
}

TranslatorConfig translator_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  TranslatorConfig tc;
  const auto& ts = cfg.translator;
  tc.base_features = ts.base_features;
  tc.disc_features = ts.base_features;
  tc.residual_blocks = ts.residual_blocks;
  // one downsampling keeps a 64 px desk slice at 32 px in the residual trunk
  tc.downsamplings = cfg.network.desk_scale || cfg.augmentation.crop_size[0] < 128 ? 1 : 2;
  tc.cycle_weight = ts.cycle_weight;
  tc.identity_weight = ts.identity_weight;
  tc.learning_rate = ts.learning_rate;
  tc.epochs = ts.epochs;
  tc.max_slices = ts.max_slices;
  tc.slice_size = cfg.augmentation.crop_size;
  tc.seed = seed;
  return tc;
}

std::vector<CenterCount> balanced_counts(const std::vector<std::string>& centers, int total_train, int total_val) {
  if (centers.empty()) throw ConfigError("balanced_counts: no centers");
  const double m = double(centers.size());
  auto half_up = [m](int total) { return int(std::floor(total / m + 0.5)); };
  std::vector<CenterCount> out;
  for (const auto& c : centers) out.push_back({c, half_up(total_train), half_up(total_val)});
  return out;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::string& id, const Cohort& cohort,
                                const ProgressFn& progress) {
  cfg.validate();
  return Runner(cfg, id, cohort, progress).run();
}

}  // namespace mcseg
