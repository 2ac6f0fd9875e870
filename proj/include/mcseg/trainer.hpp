#ifndef MCSEG_TRAINER_HPP
#define MCSEG_TRAINER_HPP

#include "mcseg/augment.hpp"
#include "mcseg/bundle.hpp"
#include "mcseg/core.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace mcseg {

class TrainingError : public Error {
 public:
  using Error::Error;
};

struct TrainingConfig {
  int epochs = 250;
  int batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  int workers = 1;  // threads used to draw augmented samples

  void validate() const;
};

struct TransferConfig {
  std::filesystem::path parent;
  NetPart part = NetPart::encoder;
  int k_blocks = 5;
  double data_fraction = 0.1;
  int epochs = 50;

  void validate(int levels) const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_dice_pool = 0;
  double val_dice_myo = 0;
  double seconds = 0;

  double val_dice() const { return 0.5 * (val_dice_pool + val_dice_myo); }
};

struct TrainLog {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_dice = -1;

  // epoch,train_loss,val_loss,val_dice_pool,val_dice_myo,seconds
  void save_csv(const std::filesystem::path& path) const;
  void save_header(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
};

struct TrainResult {
  ModelBundle bundle;
  TrainLog log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains a fresh network on the training cases, keeping the weights of the
// epoch with the best mean validation Dice. Cases are pre-processed to the
// augmentation crop size first. Throws TrainingError on a non-finite loss.
TrainResult train(const std::vector<CaseRecord>& train_cases, const std::vector<CaseRecord>& val_cases,
                  const NetworkConfig& net_cfg, const TrainingConfig& cfg, const AugmentationConfig& aug,
                  const EpochCallback& on_epoch = {});

// max(1, round(fraction * n))
int subsample_count(int n, double fraction);
// Deterministic subset of `subsample_count(cases.size(), fraction)` cases.
std::vector<CaseRecord> subsample_cases(const std::vector<CaseRecord>& cases, double fraction,
                                        std::uint64_t seed);

// Fine-tunes a copy of `parent` on a subsample of the new center's cases with
// only tcfg.k_blocks blocks of tcfg.part trainable. The training and
// validation lists are both subsampled by tcfg.data_fraction; cfg.epochs is
// replaced by tcfg.epochs.
TrainResult finetune(const ModelBundle& parent, const std::vector<CaseRecord>& train_cases,
                     const std::vector<CaseRecord>& val_cases, const TransferConfig& tcfg,
                     const TrainingConfig& cfg, const AugmentationConfig& aug,
                     const EpochCallback& on_epoch = {});

struct CenterCount {
  std::string center_id;
  int train = 0;
  int val = 0;
};

struct MixedSets {
  std::vector<CaseRecord> train;
  std::vector<CaseRecord> val;
};

// Draws the requested number of train and val cases (by their split field)
// from each center and shuffles the merged lists. Throws ConfigError naming
// the center when a count exceeds what it has.
MixedSets mix_centers(const std::map<std::string, std::vector<CaseRecord>>& by_center,
                      const std::vector<CenterCount>& counts, std::uint64_t seed);

}  // namespace mcseg

#endif  // MCSEG_TRAINER_HPP
