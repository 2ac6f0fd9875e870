#include "mcseg/trainer.hpp"

#include "mcseg/config.hpp"
#include "mcseg/dataset.hpp"
#include "mcseg/inference.hpp"
#include "mcseg/loss.hpp"
#include "mcseg/metrics.hpp"
#include "mcseg/nn/adam.hpp"
#include "mcseg/preprocess.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

namespace mcseg {

using nlohmann::json;

void TrainingConfig::validate() const {
  if (epochs < 1) throw ConfigError("training.epochs must be >= 1, got " + std::to_string(epochs));
  if (batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("training.learning_rate must be > 0");
  if (workers < 1) throw ConfigError("training.workers must be >= 1");
}

void TransferConfig::validate(int levels) const {
  if (!(data_fraction > 0 && data_fraction <= 1)) throw ConfigError("transfer.data_fraction must be in (0, 1]");
  if (k_blocks == 0) throw ConfigError("transfer.k_blocks: nothing trainable (k = 0)");
  if (k_blocks < 1 || k_blocks > levels)
    throw ConfigError("transfer.k_blocks must be in [1, " + std::to_string(levels) + "]");
  if (epochs < 1) throw ConfigError("transfer.epochs must be >= 1");
}

void TrainLog::save_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  os << "epoch,train_loss,val_loss,val_dice_pool,val_dice_myo,seconds\n";
  char buf[256];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.8f,%.8f,%.6f,%.6f,%.3f\n", e.epoch, e.train_loss, e.val_loss,
                  e.val_dice_pool, e.val_dice_myo, e.seconds);
    os << buf;
  }
}

void TrainLog::save_header(const std::filesystem::path& path, const json& extra) const {
  json j = extra.is_object() ? extra : json::object();
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["epochs"] = epochs.size();
  j["best_epoch"] = best_epoch;
  j["best_val_dice"] = best_val_dice;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream(path) << j.dump(2) << "\n";
}

namespace {

struct SliceSample {
  Slice<float> image;
  LabelSlice labels;
  double native_mm = 1.0;
};

std::vector<CaseRecord> prepare(const std::vector<CaseRecord>& cases, const AugmentationConfig& aug,
                                const char* what) {
  std::vector<CaseRecord> out;
  out.reserve(cases.size());
  for (const auto& c : cases) {
    if (!c.labels) throw TrainingError(std::string(what) + " case " + c.case_id + " has no labels");
    out.push_back(preprocess_case(c, aug.crop_size[0], aug.crop_size[1]));
  }
  return out;
}

std::vector<SliceSample> extract_slices(const std::vector<CaseRecord>& cases) {
  std::vector<SliceSample> s;
  for (const auto& c : cases)
    for (int z = 0; z < c.image.shape().slices; ++z)
      s.push_back({c.image.voxels.slice(z), c.labels->slice(z), c.image.spacing.row_mm});
  return s;
}

struct ValResult {
  double loss = 0, pool = 0, myo = 0;
};

ValResult validate_net(UNet<float>& net, const std::vector<CaseRecord>& val, int batch) {
  ValResult r;
  if (val.empty()) return r;
  for (const auto& c : val) {
    const auto pred = predict_volume(net, c.image, batch, &*c.labels);
    const auto d = dice_3d(pred.labels, *c.labels);
    r.loss += pred.loss;
    r.pool += d.pool_dice();
    r.myo += d.myocardium_dice();
  }
  const double n = double(val.size());
  return {r.loss / n, r.pool / n, r.myo / n};
}

using Snapshot = std::vector<nn::Vector<float>>;

Snapshot snapshot(UNet<float>& net) {
  Snapshot s;
  for (auto* p : net.params()) s.push_back(p->value);
  return s;
}

void restore(UNet<float>& net, const Snapshot& s) {
  auto params = net.params();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s[i];
}

// Core loop shared by training from scratch and fine-tuning. Only trainable
// parameters are updated; the best-validation weights are restored at the end.
TrainLog run_training(UNet<float>& net, const std::vector<CaseRecord>& train_cases,
                      const std::vector<CaseRecord>& val_cases, const TrainingConfig& cfg,
                      const AugmentationConfig& aug, const EpochCallback& on_epoch) {
  cfg.validate();
  aug.validate();
  if (train_cases.empty()) throw TrainingError("training needs at least one training case");
  const auto train = prepare(train_cases, aug, "training");
  const auto val = prepare(val_cases, aug, "validation");
  const auto slices = extract_slices(train);
  const int rows = aug.crop_size[0], cols = aug.crop_size[1];

  nn::Adam<float> adam(net.params(), {cfg.learning_rate, 0.9, 0.999, 1e-8});
  TrainLog log;
  log.seed = cfg.seed;
  Snapshot best;

  std::vector<std::size_t> order(slices.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t epoch_seed = nn::mix_seed(cfg.seed, std::uint64_t(epoch));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(epoch_seed);
    rng.shuffle(order);

    double loss_sum = 0;
    int batches = 0;
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
      const int b = static_cast<int>(std::min<std::size_t>(cfg.batch_size, order.size() - first));
      nn::Tensor<float> x(b, 1, rows, cols);
      LabelBatch y(b, rows, cols);
      // every sample draws from its own seed, so the result does not depend on the worker count
      auto draw = [&](int i) {
        const std::size_t idx = order[first + i];
        const auto& s = slices[idx];
        auto a = sample_pipeline(s.image, s.labels, aug, nn::mix_seed(epoch_seed, idx), s.native_mm);
        std::memcpy(x.sample_ptr(i), a.image.data(), sizeof(float) * rows * cols);
        std::memcpy(y.data.data() + std::size_t(i) * rows * cols, a.labels.data(), std::size_t(rows) * cols);
      };
      const int workers = std::min(cfg.workers, b);
      if (workers <= 1) {
        for (int i = 0; i < b; ++i) draw(i);
      } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
          pool.emplace_back([&, w] {
            for (int i = w; i < b; i += workers) draw(i);
          });
        for (auto& t : pool) t.join();
      }

      auto probs = net.forward(x, true);
      auto loss = compound_loss(probs, y, true);
      if (!std::isfinite(loss.value))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches + 1) + " (dice " + std::to_string(loss.dice) +
                            ", ce " + std::to_string(loss.ce) + ")");
      adam.zero_grad();
      net.backward(loss.dlogits);
      adam.step();
      loss_sum += loss.value;
      ++batches;
    }
    net.release();

    const ValResult v = validate_net(net, val, cfg.batch_size);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / std::max(1, batches);
    rec.val_loss = v.loss;
    rec.val_dice_pool = v.pool;
    rec.val_dice_myo = v.myo;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back(rec);
    // without validation cases the last epoch is kept
    if (val.empty() || rec.val_dice() > log.best_val_dice) {
      log.best_val_dice = rec.val_dice();
      log.best_epoch = epoch;
      best = snapshot(net);
    }
    if (on_epoch) on_epoch(rec);
  }
  restore(net, best);
  return log;
}

json run_header(const NetworkConfig& net, const TrainingConfig& cfg, const AugmentationConfig& aug) {
  return {{"network", to_json(net)}, {"training", to_json(cfg)}, {"augmentation", to_json(aug)}};
}

std::vector<std::string> centers_of(const std::vector<CaseRecord>& cases) {
  std::vector<std::string> ids;
  for (const auto& c : cases)
    if (std::find(ids.begin(), ids.end(), c.center_id()) == ids.end()) ids.push_back(c.center_id());
  return ids;
}

}  // namespace

TrainResult train(const std::vector<CaseRecord>& train_cases, const std::vector<CaseRecord>& val_cases,
                  const NetworkConfig& net_cfg, const TrainingConfig& cfg, const AugmentationConfig& aug,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  TrainResult r{build_network(net_cfg, nn::mix_seed(cfg.seed, 0x1417)), {}};
  r.log = run_training(r.bundle.net, train_cases, val_cases, cfg, aug, on_epoch);
  r.log.config_hash = config_hash(run_header(net_cfg.resolved(), cfg, aug));
  r.bundle.provenance.training_centers = centers_of(train_cases);
  r.bundle.provenance.epochs = cfg.epochs;
  r.bundle.provenance.seed = cfg.seed;
  r.bundle.provenance.bundle_id = r.bundle.weights_digest();
  return r;
}

int subsample_count(int n, double fraction) {
  if (n <= 0) return 0;
  return std::clamp(static_cast<int>(std::lround(fraction * n)), 1, n);
}

std::vector<CaseRecord> subsample_cases(const std::vector<CaseRecord>& cases, double fraction,
                                        std::uint64_t seed) {
  const int n = subsample_count(static_cast<int>(cases.size()), fraction);
  std::vector<std::size_t> idx(cases.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  std::vector<CaseRecord> out;
  for (auto i : idx) out.push_back(cases[i]);
  return out;
}

TrainResult finetune(const ModelBundle& parent, const std::vector<CaseRecord>& train_cases,
                     const std::vector<CaseRecord>& val_cases, const TransferConfig& tcfg,
                     const TrainingConfig& cfg, const AugmentationConfig& aug, const EpochCallback& on_epoch) {
  tcfg.validate(parent.config().levels);
  TrainingConfig c = cfg;
  c.epochs = tcfg.epochs;
  c.validate();
  const auto tr = subsample_cases(train_cases, tcfg.data_fraction, nn::mix_seed(cfg.seed, 0x7a));
  const auto va = val_cases.empty() ? val_cases
                                    : subsample_cases(val_cases, tcfg.data_fraction, nn::mix_seed(cfg.seed, 0x7b));
  TrainResult r{parent, {}};
  r.bundle.net.set_trainable(tcfg.part, tcfg.k_blocks);
  r.log = run_training(r.bundle.net, tr, va, c, aug, on_epoch);
  json h = run_header(parent.config(), c, aug);
  h["transfer"] = to_json(tcfg);
  h["parent"] = parent.provenance.bundle_id;
  r.log.config_hash = config_hash(h);
  auto& p = r.bundle.provenance;
  p.parent_id = parent.provenance.bundle_id;
  p.training_centers = parent.provenance.training_centers;
  for (const auto& id : centers_of(tr))
    if (std::find(p.training_centers.begin(), p.training_centers.end(), id) == p.training_centers.end())
      p.training_centers.push_back(id);
  p.epochs = tcfg.epochs;
  p.seed = cfg.seed;
  p.note = "fine-tuned " + to_string(tcfg.part) + " k=" + std::to_string(tcfg.k_blocks) + " on " +
           std::to_string(tr.size()) + " cases";
  p.bundle_id = r.bundle.weights_digest();
  if (p.bundle_id == p.parent_id) p.bundle_id += "-ft";
  return r;
}

MixedSets mix_centers(const std::map<std::string, std::vector<CaseRecord>>& by_center,
                      const std::vector<CenterCount>& counts, std::uint64_t seed) {
  MixedSets out;
  for (const auto& cc : counts) {
    const auto it = by_center.find(cc.center_id);
    if (it == by_center.end()) throw ConfigError("mix_centers: unknown center " + cc.center_id);
    const auto train = select_split(it->second, Split::train);
    const auto val = select_split(it->second, Split::val);
    if (cc.train > static_cast<int>(train.size()) || cc.val > static_cast<int>(val.size()) || cc.train < 0 ||
        cc.val < 0)
      throw ConfigError("mix_centers: center " + cc.center_id + " has " + std::to_string(train.size()) +
                        " train / " + std::to_string(val.size()) + " val cases, requested " +
                        std::to_string(cc.train) + " / " + std::to_string(cc.val));
    const std::uint64_t s = nn::mix_seed(seed, hash_string(cc.center_id));
    auto pick = [](std::vector<CaseRecord> v, int n, std::uint64_t sd) {
      Rng rng(sd);
      rng.shuffle(v);
      v.resize(n);
      return v;
    };
    for (auto& c : pick(train, cc.train, nn::mix_seed(s, 1))) out.train.push_back(std::move(c));
    for (auto& c : pick(val, cc.val, nn::mix_seed(s, 2))) out.val.push_back(std::move(c));
  }
  Rng rng(nn::mix_seed(seed, 3));
  rng.shuffle(out.train);
  rng.shuffle(out.val);
  return out;
}

}  // namespace mcseg
