#ifndef MCSEG_CONFIG_HPP
#define MCSEG_CONFIG_HPP

#include "mcseg/augment.hpp"
#include "mcseg/core.hpp"
#include "mcseg/synthgen.hpp"
#include "mcseg/trainer.hpp"
#include "mcseg/unet.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mcseg {

// A configuration error tied to a location in the JSON document, e.g. "$.training.epochs".
class ConfigPathError : public ConfigError {
 public:
  ConfigPathError(std::string path, const std::string& message)
      : ConfigError(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

enum class Harmonization { none, histogram_match, cycle_translate };
std::string to_string(Harmonization h);
Harmonization harmonization_from_string(const std::string& s);

struct DatasetRef {
  std::string center_id;
  std::filesystem::path manifest;
};

// Cohort generated in memory instead of read from manifests.
struct SyntheticSource {
  std::filesystem::path spec_file;  // resolved against the config file's directory
  std::vector<SyntheticCenterSpec> centers;  // used when spec_file is empty
  int cases_per_center = 45;
};

struct TranslatorSettings {
  int epochs = 20;
  int residual_blocks = 2;
  int base_features = 8;
  double cycle_weight = 10.0;
  double identity_weight = 0.0;
  double learning_rate = 2e-4;
  int max_slices = 0;  // 0 = all balanced slices
};

// Which parts of the experiment grid to execute and how often to repeat them.
struct ExperimentPlan {
  std::vector<std::string> train_centers;  // exp1/exp2/exp3 source centers; exp4 combination order
  std::vector<std::string> test_centers;   // empty = every center
  std::vector<std::uint64_t> seeds{0};
  std::vector<std::string> augmentation_settings{"none", "spatial", "spatial_intensity"};
  std::vector<double> fractions{0.1, 0.25, 0.5, 1.0};
  bool block_sweep = true;
  bool multicenter_with_augmentation = true;
};

struct ExperimentConfig {
  std::vector<DatasetRef> datasets;
  std::optional<SyntheticSource> synthetic;
  AugmentationConfig augmentation;
  Harmonization harmonization = Harmonization::none;
  std::optional<TransferConfig> transfer;
  std::optional<std::vector<CenterCount>> multicenter_mix;
  NetworkConfig network;
  TrainingConfig training;
  SplitSpec splits;
  TranslatorSettings translator;
  ExperimentPlan plan;
  std::uint64_t seed = 0;

  // Pushes the top-level seed into every module's own seed field.
  void propagate_seed();
  // Cross-field checks (center ids, harmonization mode); throws ConfigPathError.
  void validate() const;
};

nlohmann::json to_json(const AugmentationConfig& c);
nlohmann::json to_json(const TrainingConfig& c);
nlohmann::json to_json(const TransferConfig& c);
nlohmann::json to_json(const SplitSpec& c);
nlohmann::json to_json(const SyntheticCenterSpec& c);
nlohmann::json to_json(const ExperimentConfig& c);

// Strict parsers: unknown keys and wrong types raise ConfigPathError.
AugmentationConfig augmentation_from_json(const nlohmann::json& j, const std::string& path = "$.augmentation");
TrainingConfig training_from_json(const nlohmann::json& j, const std::string& path = "$.training");
TransferConfig transfer_from_json(const nlohmann::json& j, const std::string& path = "$.transfer");
NetworkConfig network_from_json(const nlohmann::json& j, const std::string& path = "$.network");
SyntheticCenterSpec synthetic_center_from_json(const nlohmann::json& j, const std::string& path);
ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

// Reads and parses a config file; "--set a.b=value" style overrides are
// applied to the JSON tree before parsing.
nlohmann::json load_json_file(const std::filesystem::path& path);
void apply_override(nlohmann::json& j, const std::string& dotted_path, const std::string& value);

// Stable 16-hex-digit hash of a JSON document's canonical dump.
std::string config_hash(const nlohmann::json& j);
std::string fnv1a_hex(const std::string& s);

}  // namespace mcseg

#endif  // MCSEG_CONFIG_HPP
