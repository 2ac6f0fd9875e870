#ifndef MCSEG_EVALKIT_HPP
#define MCSEG_EVALKIT_HPP

#include "mcseg/bundle.hpp"
#include "mcseg/config.hpp"
#include "mcseg/core.hpp"
#include "mcseg/metrics.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace mcseg {

struct CaseScore {
  std::string case_id;
  std::string center_id;
  DiceScore dice;
  bool empty_prediction = false;
};

struct EvaluationResult {
  std::vector<CaseScore> cases;
  std::vector<std::string> skipped;  // case ids without labels
  double mean = 0;  // mean over cases of the per-case mean Dice
  double std = 0;   // population standard deviation of the same

  // case_id,center_id,dice_pool,dice_myo,dice_mean plus an "aggregate" row
  void save_csv(const std::filesystem::path& path) const;
};

// Intensity transform applied to a pre-processed volume before inference.
using Harmonizer = std::function<Volume(const Volume&)>;
// Produces a label map for a pre-processed case.
using Predictor = std::function<LabelMap(const CaseRecord&)>;

// Per case: pre-process to `rows x cols`, predict, keep the largest
// component, score against the (identically pre-processed) labels.
EvaluationResult evaluate_with(const Predictor& predict, const std::vector<CaseRecord>& cases, int rows,
                               int cols, bool postprocess = true);

EvaluationResult evaluate(ModelBundle& bundle, const std::vector<CaseRecord>& cases, int rows, int cols,
                          const Harmonizer& harmonizer = {}, int batch = 16);

struct ReportRow {
  std::string train_setting;
  std::string train_centers;
  std::string test_center;
  std::string seed;  // a number, or "median" for the across-seed summary
  double mean_dice = 0;
  double std_dice = 0;
  int n_cases = 0;
};

struct Table5Row {
  std::string target_center;
  double fraction = 0;
  double finetune_dice = 0;
  double scratch_dice = 0;
  std::string seed;
};

struct ExperimentReport {
  std::string experiment_id;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<ReportRow> rows;
  std::vector<Table5Row> table5;

  // experiment_id,config_hash,seed,train_setting,train_centers,test_center,run_seed,mean_dice,std_dice,n_cases
  void save_csv(const std::filesystem::path& path) const;
  // target_center,fraction,finetune_dice,scratch_dice,run_seed
  void save_table5_csv(const std::filesystem::path& path) const;
  // One bar chart per (train_centers, test_center) group: <experiment>_<train>_<test>.png
  std::vector<std::filesystem::path> save_plots(const std::filesystem::path& dir) const;

  // Reads back what save_csv and save_table5_csv wrote; the table-5 file is optional.
  static ExperimentReport load_csv(const std::filesystem::path& path, const std::filesystem::path& table5_path = {});

  const ReportRow* find(const std::string& setting, const std::string& train, const std::string& test,
                        const std::string& seed = "median") const;
};

inline const std::vector<std::string>& experiment_ids() {
  static const std::vector<std::string> ids{"exp1_augmentation", "exp2_harmonization", "exp3_transfer",
                                            "exp4_multicenter"};
  return ids;
}

using Cohort = std::map<std::string, std::vector<CaseRecord>>;

// Builds the cohort an experiment config describes: manifests are loaded,
// synthetic centers generated, then every center is split by cfg.splits.
// Missing datasets raise before anything else happens.
Cohort load_cohort(const ExperimentConfig& cfg);

// Throws ConfigError when any test case id also appears in the training or validation lists.
void check_disjoint(const std::vector<CaseRecord>& train, const std::vector<CaseRecord>& test);

using ProgressFn = std::function<void(const std::string&)>;

ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::string& id, const Cohort& cohort,
                                const ProgressFn& progress = {});

// Maps the config's translator settings onto a translator sized for the crop.
struct TranslatorConfig;
TranslatorConfig translator_config(const ExperimentConfig& cfg, std::uint64_t seed);

// Balanced per-center counts keeping the total constant: round-half-up of total / m.
std::vector<CenterCount> balanced_counts(const std::vector<std::string>& centers, int total_train,
                                         int total_val);

}  // namespace mcseg

#endif  // MCSEG_EVALKIT_HPP
