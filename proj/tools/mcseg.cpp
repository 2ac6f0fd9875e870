// mcseg: command-line front end for the multi-center segmentation toolkit.
//
// Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.

#include "mcseg/bundle.hpp"
#include "mcseg/config.hpp"
#include "mcseg/dataset.hpp"
#include "mcseg/evalkit.hpp"
#include "mcseg/histogram.hpp"
#include "mcseg/inference.hpp"
#include "mcseg/metrics.hpp"
#include "mcseg/nifti.hpp"
#include "mcseg/preprocess.hpp"
#include "mcseg/synthgen.hpp"
#include "mcseg/trainer.hpp"
#include "mcseg/translator.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mcseg;

namespace {

void note(const std::string& msg) { std::cerr << msg << std::endl; }

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string run_root;
};

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
  if (with_config) {
    cmd->add_option("-c,--config", c.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--set", c.sets, "Override a config leaf, e.g. --set training.epochs=5")->take_all();
  }
  cmd->add_option("--seed", c.seed, "Seed pushed into every module");
  cmd->add_option("--workers", c.workers, "Threads for data loading and augmentation");
  cmd->add_option("--run-root", c.run_root, "Parent of run directories (default $MCSEG_RUN_ROOT or ./runs)");
}

ExperimentConfig load_config(const Common& c) {
  json j = load_json_file(c.config);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigPathError("--set", "expected key=value, got " + s);
    apply_override(j, s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed) j["seed"] = *c.seed;
  if (c.workers) j["training"]["workers"] = *c.workers;
  return experiment_from_json(j, fs::path(c.config).parent_path());
}

fs::path run_root(const Common& c) {
  if (!c.run_root.empty()) return c.run_root;
  if (const char* env = std::getenv("MCSEG_RUN_ROOT"); env && *env) return env;
  return "runs";
}

// <root>/<UTC timestamp>_<config hash>_<command>, holding the resolved config.
fs::path make_run_dir(const Common& c, const std::string& command, const json& resolved) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
  const std::string hash = config_hash(resolved);
  fs::path dir = run_root(c) / (std::string(stamp) + "_" + hash.substr(0, 8) + "_" + command);
  for (int i = 2; fs::exists(dir); ++i)
    dir = run_root(c) / (std::string(stamp) + "_" + hash.substr(0, 8) + "_" + command + "-" + std::to_string(i));
  fs::create_directories(dir);
  std::ofstream(dir / "resolved_config.json") << resolved.dump(2) << '\n';
  std::cout << "run directory: " << dir.string() << '\n' << resolved.dump(2) << std::endl;
  return dir;
}

json resolved_of(const ExperimentConfig& cfg, const std::string& command, const json& args) {
  return {{"command", command}, {"args", args}, {"config", to_json(cfg)}};
}

std::vector<CaseRecord> cases_of(const Cohort& cohort, const std::vector<std::string>& centers, Split s) {
  std::vector<CaseRecord> out;
  for (const auto& id : centers) {
    const auto it = cohort.find(id);
    if (it == cohort.end()) throw ConfigError("center " + id + " is not in the cohort");
    const auto part = select_split(it->second, s);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

EpochCallback epoch_logger() {
  return [](const EpochRecord& e) {
    char b[160];
    std::snprintf(b, sizeof b, "epoch %3d  train %.4f  val %.4f  dice pool %.4f myo %.4f  (%.1fs)", e.epoch,
                  e.train_loss, e.val_loss, e.val_dice_pool, e.val_dice_myo, e.seconds);
    note(b);
  };
}

// Optional test-time harmonizer from a saved reference histogram or translator.
struct HarmonizerFiles {
  std::string histogram;
  std::string translator;
};

void add_harmonizer(CLI::App* cmd, HarmonizerFiles& h) {
  auto* a = cmd->add_option("--histogram", h.histogram, "Reference histogram JSON")->check(CLI::ExistingFile);
  auto* b = cmd->add_option("--translator", h.translator, "Translator bundle")->check(CLI::ExistingFile);
  a->excludes(b);
}

Harmonizer load_harmonizer(const HarmonizerFiles& h) {
  if (!h.histogram.empty()) {
    auto ref = std::make_shared<ReferenceHistogram>(ReferenceHistogram::load(h.histogram));
    return [ref](const Volume& v) { return histogram_match(v, *ref); };
  }
  if (!h.translator.empty()) {
    auto tb = std::make_shared<TranslatorBundle>(TranslatorBundle::load(h.translator));
    return [tb](const Volume& v) { return translate(v, *tb, TranslateDirection::target_to_source); };
  }
  return {};
}

std::vector<CaseRecord> preprocessed(const std::vector<CaseRecord>& cases, const std::array<int, 2>& size) {
  std::vector<CaseRecord> out;
  for (const auto& c : cases) out.push_back(preprocess_case(c, size[0], size[1]));
  return out;
}

void print_rows(const ExperimentReport& r) {
  std::printf("%-28s %-12s %-6s %10s %10s %4s\n", "setting", "train", "test", "mean_dice", "std_dice", "n");
  for (const auto& row : r.rows)
    if (row.seed == "median")
      std::printf("%-28s %-12s %-6s %10.4f %10.4f %4d\n", row.train_setting.c_str(), row.train_centers.c_str(),
                  row.test_center.c_str(), row.mean_dice, row.std_dice, row.n_cases);
  for (const auto& t : r.table5)
    if (t.seed == "median")
      std::printf("table5 %-6s fraction %.2f  finetune %.4f  scratch %.4f\n", t.target_center.c_str(), t.fraction,
                  t.finetune_dice, t.scratch_dice);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-center LV segmentation in LGE-MRI: augmentation, harmonization, transfer and multi-center "
               "training"};
  app.require_subcommand(1);

  // synth
  Common synth_c;
  std::string synth_spec, synth_out;
  std::optional<int> synth_cases;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-center cohort as NIfTI + manifests");
  synth->add_option("--spec", synth_spec, "Cohort spec file (JSON)")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "Output directory, one sub-directory per center")->required();
  synth->add_option("--cases", synth_cases, "Cases per center (overrides the spec file)");
  add_common(synth, synth_c, false);

  // ingest-check
  std::vector<std::string> check_manifests;
  auto* check = app.add_subcommand("ingest-check", "Load manifests and report every violated invariant");
  check->add_option("manifests", check_manifests, "Dataset manifest files")->required()->check(CLI::ExistingFile);

  // train
  Common train_c;
  std::vector<std::string> train_centers;
  auto* train_cmd = app.add_subcommand("train", "Train a network on one or more centers");
  add_common(train_cmd, train_c);
  train_cmd->add_option("--center", train_centers, "Training centers (default: plan.train_centers)");

  // finetune
  Common ft_c;
  std::string ft_parent, ft_center;
  auto* ft_cmd = app.add_subcommand("finetune", "Fine-tune a trained bundle on a new center");
  add_common(ft_cmd, ft_c);
  ft_cmd->add_option("--parent", ft_parent, "Parent bundle (default: transfer.parent)");
  ft_cmd->add_option("--center", ft_center, "Target center")->required();

  // harmonize-fit
  Common hf_c;
  std::string hf_source, hf_target, hf_method;
  auto* hf_cmd = app.add_subcommand("harmonize-fit", "Fit a reference histogram or a translator");
  add_common(hf_cmd, hf_c);
  hf_cmd->add_option("--source", hf_source, "Training (source) center")->required();
  hf_cmd->add_option("--target", hf_target, "Unseen (target) center, needed by the translator");
  hf_cmd->add_option("--method", hf_method, "histogram_match or cycle_translate (default: config harmonization)");

  // harmonize-apply
  std::string ha_in, ha_out;
  std::array<int, 2> ha_size{256, 256};
  HarmonizerFiles ha_h;
  auto* ha_cmd = app.add_subcommand("harmonize-apply", "Pre-process and harmonize one image volume");
  ha_cmd->add_option("--in", ha_in, "Input NIfTI image")->required()->check(CLI::ExistingFile);
  ha_cmd->add_option("--out", ha_out, "Output NIfTI image")->required();
  ha_cmd->add_option("--size", ha_size, "In-plane size after pre-processing (rows cols)");
  add_harmonizer(ha_cmd, ha_h);

  // predict
  std::string pr_model, pr_in, pr_out;
  std::array<int, 2> pr_size{256, 256};
  HarmonizerFiles pr_h;
  auto* pr_cmd = app.add_subcommand("predict", "Segment one image volume");
  pr_cmd->add_option("--model", pr_model, "Segmentation bundle")->required()->check(CLI::ExistingFile);
  pr_cmd->add_option("--in", pr_in, "Input NIfTI image")->required()->check(CLI::ExistingFile);
  pr_cmd->add_option("--out", pr_out, "Output NIfTI label map (pre-processed geometry)")->required();
  pr_cmd->add_option("--size", pr_size, "In-plane size after pre-processing (rows cols)");
  add_harmonizer(pr_cmd, pr_h);

  // evaluate
  Common ev_c;
  std::string ev_model;
  std::vector<std::string> ev_centers;
  HarmonizerFiles ev_h;
  auto* ev_cmd = app.add_subcommand("evaluate", "Score a bundle on the test split of one or more centers");
  add_common(ev_cmd, ev_c);
  ev_cmd->add_option("--model", ev_model, "Segmentation bundle")->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--center", ev_centers, "Test centers (default: plan.test_centers or all)");
  add_harmonizer(ev_cmd, ev_h);

  // experiment
  Common ex_c;
  std::vector<std::string> ex_ids;
  auto* ex_cmd = app.add_subcommand("experiment", "Run one or more experiment grids");
  add_common(ex_cmd, ex_c);
  ex_cmd->add_option("--id", ex_ids, "exp1_augmentation, exp2_harmonization, exp3_transfer, exp4_multicenter")
      ->required()
      ->check(CLI::IsMember(experiment_ids()));

  // report
  std::string rp_dir;
  auto* rp_cmd = app.add_subcommand("report", "Summarize a run directory and redraw its plots");
  rp_cmd->add_option("--run-dir", rp_dir, "Run directory written by `experiment`")->required()->check(
      CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      auto file = SyntheticCohortFile::load(synth_spec);
      if (synth_cases) file.cases_per_center = *synth_cases;
      if (synth_c.seed) file.seed = *synth_c.seed;
      if (file.cases_per_center < 1) throw ConfigPathError("--cases", "must be >= 1");
      json resolved{{"command", "synth"}, {"spec", synth_spec}, {"out", synth_out},
                    {"cases_per_center", file.cases_per_center}, {"seed", file.seed}};
      std::cout << resolved.dump(2) << std::endl;
      const auto cohort = generate_cohort(file.centers, file.cases_per_center, file.seed);
      for (const auto& [id, cases] : cohort) {
        save_dataset(cases, id, fs::path(synth_out) / id);
        note("wrote " + std::to_string(cases.size()) + " cases to " + (fs::path(synth_out) / id / "manifest.json").string());
      }
      return 0;
    }

    if (*check) {
      int bad = 0;
      const CenterRegistry registry = CenterRegistry::reference_centers();
      for (const auto& m : check_manifests) {
        const auto cases = load_dataset(DatasetManifest::load(m), &registry);
        const auto violations = validate_dataset(cases);
        std::cout << m << ": " << cases.size() << " cases, " << violations.size() << " violation(s)\n";
        for (const auto& v : violations) std::cout << "  " << v.invariant << ": " << v.detail << '\n';
        bad += int(violations.size());
      }
      return bad ? 1 : 0;
    }

    if (*train_cmd) {
      const auto cfg = load_config(train_c);
      auto centers = train_centers.empty() ? cfg.plan.train_centers : train_centers;
      const auto cohort = load_cohort(cfg);
      if (centers.empty()) centers = {cohort.begin()->first};
      const auto dir = make_run_dir(train_c, "train", resolved_of(cfg, "train", {{"centers", centers}}));
      auto r = train(cases_of(cohort, centers, Split::train), cases_of(cohort, centers, Split::val), cfg.network,
                     cfg.training, cfg.augmentation, epoch_logger());
      save_bundle(r.bundle, dir / "model.mcsw");
      r.log.save_csv(dir / "train_log.csv");
      r.log.save_header(dir / "train_header.json");
      note("best epoch " + std::to_string(r.log.best_epoch) + ", val dice " + std::to_string(r.log.best_val_dice));
      return 0;
    }

    if (*ft_cmd) {
      const auto cfg = load_config(ft_c);
      TransferConfig tcfg = cfg.transfer.value_or(TransferConfig{});
      if (!ft_parent.empty()) tcfg.parent = ft_parent;
      if (tcfg.parent.empty()) throw ConfigPathError("$.transfer.parent", "no parent bundle given");
      const ModelBundle parent = load_bundle(tcfg.parent);
      tcfg.validate(parent.config().levels);
      const auto cohort = load_cohort(cfg);
      const auto dir = make_run_dir(ft_c, "finetune",
                                    resolved_of(cfg, "finetune", {{"parent", tcfg.parent.string()}, {"center", ft_center}}));
      auto r = finetune(parent, cases_of(cohort, {ft_center}, Split::train), cases_of(cohort, {ft_center}, Split::val),
                        tcfg, cfg.training, cfg.augmentation, epoch_logger());
      save_bundle(r.bundle, dir / "model.mcsw");
      r.log.save_csv(dir / "train_log.csv");
      r.log.save_header(dir / "train_header.json");
      return 0;
    }

    if (*hf_cmd) {
      const auto cfg = load_config(hf_c);
      const Harmonization method = hf_method.empty() ? cfg.harmonization : harmonization_from_string(hf_method);
      if (method == Harmonization::none) throw ConfigPathError("$.harmonization", "no harmonization method selected");
      if (method == Harmonization::cycle_translate && hf_target.empty())
        throw ConfigPathError("--target", "the translator needs a target center");
      const auto cohort = load_cohort(cfg);
      const auto dir = make_run_dir(
          hf_c, "harmonize-fit",
          resolved_of(cfg, "harmonize-fit", {{"source", hf_source}, {"target", hf_target}, {"method", to_string(method)}}));
      const auto src = preprocessed(cases_of(cohort, {hf_source}, Split::train), cfg.augmentation.crop_size);
      if (method == Harmonization::histogram_match) {
        build_reference_histogram(src).save(dir / "reference_histogram.json");
      } else {
        const auto tgt = preprocessed(cases_of(cohort, {hf_target}, Split::train), cfg.augmentation.crop_size);
        auto tb = train_translator(src, tgt, translator_config(cfg, cfg.training.seed),
                                   [](const std::string& w) { note("warning: " + w); },
                                   [](const TranslatorEpoch& e) {
                                     note("epoch " + std::to_string(e.epoch) + " cycle " + std::to_string(e.cycle_error) +
                                         " G " + std::to_string(e.generator_loss) + " D " +
                                         std::to_string(e.discriminator_loss));
                                   });
        tb.save(dir / "translator.mcsw");
      }
      return 0;
    }

    if (*ha_cmd) {
      const Volume v = minmax_normalize(crop_or_pad(read_nifti(ha_in), std::nullopt, ha_size[0], ha_size[1]).first);
      const Harmonizer h = load_harmonizer(ha_h);
      write_nifti(ha_out, h ? h(v) : v);
      return 0;
    }

    if (*pr_cmd) {
      ModelBundle bundle = load_bundle(pr_model);
      const Volume v = minmax_normalize(crop_or_pad(read_nifti(pr_in), std::nullopt, pr_size[0], pr_size[1]).first);
      const Harmonizer h = load_harmonizer(pr_h);
      auto comp = largest_component(predict_volume(bundle.net, h ? h(v) : v).labels);
      if (comp.empty_warning) note("warning: empty prediction for " + pr_in);
      write_nifti_labels(pr_out, comp.labels, v.spacing);
      return 0;
    }

    if (*ev_cmd) {
      const auto cfg = load_config(ev_c);
      auto centers = ev_centers.empty() ? cfg.plan.test_centers : ev_centers;
      ModelBundle bundle = load_bundle(ev_model);
      const auto cohort = load_cohort(cfg);
      if (centers.empty())
        for (const auto& [id, cases] : cohort) centers.push_back(id);
      const auto dir = make_run_dir(ev_c, "evaluate",
                                    resolved_of(cfg, "evaluate", {{"model", ev_model}, {"centers", centers},
                                                                  {"histogram", ev_h.histogram},
                                                                  {"translator", ev_h.translator}}));
      const Harmonizer h = load_harmonizer(ev_h);
      for (const auto& c : centers) {
        const auto r = evaluate(bundle, cases_of(cohort, {c}, Split::test), cfg.augmentation.crop_size[0],
                                cfg.augmentation.crop_size[1], h);
        for (const auto& s : r.skipped) note("skipped unlabeled case " + s);
        r.save_csv(dir / ("evaluation_" + c + ".csv"));
        std::printf("%-8s mean dice %.4f  std %.4f  n %zu\n", c.c_str(), r.mean, r.std, r.cases.size());
      }
      return 0;
    }

    if (*ex_cmd) {
      const auto cfg = load_config(ex_c);
      const auto cohort = load_cohort(cfg);
      const auto dir = make_run_dir(ex_c, "experiment", resolved_of(cfg, "experiment", {{"ids", ex_ids}}));
      for (const auto& id : ex_ids) {
        const auto report = run_experiment(cfg, id, cohort, note);
        report.save_csv(dir / (id + "_report.csv"));
        if (!report.table5.empty()) report.save_table5_csv(dir / (id + "_table5.csv"));
        for (const auto& p : report.save_plots(dir / "plots")) note("plot " + p.string());
        print_rows(report);
      }
      return 0;
    }

    if (*rp_cmd) {
      int found = 0;
      for (const auto& id : experiment_ids()) {
        const fs::path csv = fs::path(rp_dir) / (id + "_report.csv");
        if (!fs::exists(csv)) continue;
        ++found;
        const auto report = ExperimentReport::load_csv(csv, fs::path(rp_dir) / (id + "_table5.csv"));
        std::cout << "== " << id << " (config " << report.config_hash << ")\n";
        print_rows(report);
        report.save_plots(fs::path(rp_dir) / "plots");
      }
      if (!found) throw ConfigError("no experiment report CSVs in " + rp_dir);
      return 0;
    }
  } catch (const ConfigPathError& e) {
    std::cerr << "validation error at " << e.path() << ": " << e.what() << std::endl;
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "validation error: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
