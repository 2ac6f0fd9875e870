#include "mcseg/translator.hpp"

#include "mcseg/bundle.hpp"
#include "mcseg/inference.hpp"
#include "mcseg/nn/adam.hpp"
#include "mcseg/trainer.hpp"

#include <cmath>
#include <cstring>

namespace mcseg {

using nlohmann::json;
using T = nn::Tensor<float>;

void TranslatorConfig::validate() const {
  if (base_features < 1 || disc_features < 1) throw ConfigError("translator feature widths must be >= 1");
  if (downsamplings < 0 || residual_blocks < 0) throw ConfigError("translator depth must be >= 0");
  if (epochs < 1) throw ConfigError("translator.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("translator.batch_size must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("translator.learning_rate must be > 0");
  if (cycle_weight < 0 || identity_weight < 0) throw ConfigError("translator loss weights must be >= 0");
  const int div = std::max(4, 1 << downsamplings);
  if (slice_size[0] % div || slice_size[1] % div)
    throw ConfigError("translator slice size must be divisible by " + std::to_string(div));
}

TranslatorBundle::TranslatorBundle(const TranslatorConfig& cfg)
    : config(cfg), g_ab("g_ab", cfg), g_ba("g_ba", cfg), d_a("d_a", cfg.disc_features), d_b("d_b", cfg.disc_features) {}

void TranslatorBundle::init(std::uint64_t seed) {
  Rng rng(seed);
  g_ab.init(rng);
  g_ba.init(rng);
  d_a.init(rng);
  d_b.init(rng);
}

namespace {

json config_json(const TranslatorConfig& c) {
  return {{"base_features", c.base_features}, {"downsamplings", c.downsamplings},
          {"residual_blocks", c.residual_blocks}, {"disc_features", c.disc_features},
          {"cycle_weight", c.cycle_weight},     {"identity_weight", c.identity_weight},
          {"learning_rate", c.learning_rate},   {"beta1", c.beta1},
          {"epochs", c.epochs},                 {"batch_size", c.batch_size},
          {"max_slices", c.max_slices},         {"identity_init", c.identity_init},
          {"seed", c.seed},                     {"slice_size", c.slice_size}};
}

TranslatorConfig config_from(const json& j) {
  TranslatorConfig c;
  c.base_features = j.at("base_features");
  c.downsamplings = j.at("downsamplings");
  c.residual_blocks = j.at("residual_blocks");
  c.disc_features = j.at("disc_features");
  c.cycle_weight = j.at("cycle_weight");
  c.identity_weight = j.at("identity_weight");
  c.learning_rate = j.at("learning_rate");
  c.beta1 = j.at("beta1");
  c.epochs = j.at("epochs");
  c.batch_size = j.at("batch_size");
  c.max_slices = j.at("max_slices");
  c.identity_init = j.at("identity_init");
  c.seed = j.at("seed");
  c.slice_size = j.at("slice_size").get<std::array<int, 2>>();
  return c;
}

template <typename Net>
void put(WeightArchive& a, Net& net) {
  for (auto* p : net.params()) a.tensors[p->name] = std::vector<float>(p->value.data(), p->value.data() + p->value.size());
}

template <typename Net>
void take(const WeightArchive& a, Net& net, const std::string& where) {
  for (auto* p : net.params()) {
    const auto it = a.tensors.find(p->name);
    if (it == a.tensors.end() || static_cast<Eigen::Index>(it->second.size()) != p->value.size())
      throw ArchiveError(where + "missing or mis-sized tensor " + p->name);
    std::memcpy(p->value.data(), it->second.data(), it->second.size() * sizeof(float));
  }
}

std::vector<Slice<float>> slices_of(const std::vector<CaseRecord>& cases, const std::array<int, 2>& size) {
  std::vector<Slice<float>> out;
  for (const auto& c : cases) {
    const Shape3 s = c.image.shape();
    if (s.rows != size[0] || s.cols != size[1])
      throw std::invalid_argument("translator expects " + std::to_string(size[0]) + "x" + std::to_string(size[1]) +
                                  " slices, case " + c.case_id + " is " + to_string(s));
    for (int z = 0; z < s.slices; ++z) out.push_back(c.image.voxels.slice(z));
  }
  return out;
}

T batch_of(const std::vector<Slice<float>>& slices, const std::vector<std::size_t>& order, std::size_t first, int n) {
  const auto& s0 = slices[order[first]];
  T x(n, 1, static_cast<int>(s0.rows()), static_cast<int>(s0.cols()));
  for (int i = 0; i < n; ++i) {
    const auto& s = slices[order[first + i]];
    std::memcpy(x.sample_ptr(i), s.data(), sizeof(float) * s.size());
  }
  return x;
}

// Least-squares adversarial loss mean((d - target)^2) and its gradient.
double lsgan(const T& d, float target, T* grad, double scale) {
  const double n = double(d.data.size());
  const auto diff = (d.data - target).eval();
  if (grad) {
    *grad = T(d.n, d.c, d.h, d.w);
    grad->data = diff * float(2.0 * scale / n);
  }
  return diff.square().sum() / n;
}

// L1 loss mean|y - x| with its (sub)gradient.
double l1(const T& y, const T& x, T* grad, double scale) {
  const double n = double(y.data.size());
  const auto diff = (y.data - x.data).eval();
  if (grad) {
    *grad = T(y.n, y.c, y.h, y.w);
    grad->data = diff.sign() * float(scale / n);
  }
  return diff.abs().sum() / n;
}

void set_trainable(nn::ParamList<float> params, bool on) {
  for (auto* p : params) p->trainable = on;
}

struct CycleStats {
  double cycle = 0, gen = 0;
};

// One direction of the generator update: x -> G(x) -> F(G(x)) with the
// adversarial term from the discriminator on G's domain.
CycleStats cycle_pass(const T& x, nn::Generator<float>& g, nn::Generator<float>& f, nn::Discriminator<float>& d,
                      const TranslatorConfig& cfg, T& fake_out) {
  T fake = g.forward(x, true);
  T score = d.forward(fake, true);
  T rec = f.forward(fake, true);
  T d_score, d_rec;
  CycleStats s;
  s.gen = lsgan(score, 1.0f, &d_score, 1.0);
  s.cycle = l1(rec, x, &d_rec, cfg.cycle_weight);
  T dfake = d.backward(d_score);
  dfake.data += f.backward(d_rec).data;
  g.backward(dfake);
  s.gen += cfg.cycle_weight * s.cycle;
  fake_out = std::move(fake);
  return s;
}

double identity_pass(const T& y, nn::Generator<float>& g, double weight) {
  if (weight <= 0) return 0;
  T out = g.forward(y, true);
  T grad;
  const double v = l1(out, y, &grad, weight);
  g.backward(grad);
  return weight * v;
}

double disc_pass(nn::Discriminator<float>& d, const T& real, const T& fake) {
  T g;
  double loss = 0.5 * lsgan(d.forward(real, true), 1.0f, &g, 0.5);
  d.backward(g);
  loss += 0.5 * lsgan(d.forward(fake, true), 0.0f, &g, 0.5);
  d.backward(g);
  return loss;
}

}  // namespace

void TranslatorBundle::save(const std::filesystem::path& path) {
  WeightArchive a;
  a.header["kind"] = "translator";
  a.header["config"] = config_json(config);
  a.header["source_center"] = source_center;
  a.header["target_center"] = target_center;
  a.header["source_cases_used"] = source_cases_used;
  a.header["target_cases_used"] = target_cases_used;
  json lg = json::array();
  for (const auto& e : log)
    lg.push_back({{"epoch", e.epoch}, {"cycle_error", e.cycle_error}, {"generator_loss", e.generator_loss},
                  {"discriminator_loss", e.discriminator_loss}});
  a.header["log"] = lg;
  put(a, g_ab);
  put(a, g_ba);
  put(a, d_a);
  put(a, d_b);
  a.write(path);
}

TranslatorBundle TranslatorBundle::load(const std::filesystem::path& path) {
  const WeightArchive a = WeightArchive::read(path);
  const std::string where = "corrupt archive " + path.string() + ": ";
  try {
    if (a.header.value("kind", "") != "translator") throw ArchiveError(where + "not a translator bundle");
    TranslatorBundle b(config_from(a.header.at("config")));
    b.source_center = a.header.at("source_center");
    b.target_center = a.header.at("target_center");
    b.source_cases_used = a.header.value("source_cases_used", 0);
    b.target_cases_used = a.header.value("target_cases_used", 0);
    for (const auto& e : a.header.at("log"))
      b.log.push_back({e.at("epoch"), e.at("cycle_error"), e.at("generator_loss"), e.at("discriminator_loss")});
    take(a, b.g_ab, where);
    take(a, b.g_ba, where);
    take(a, b.d_a, where);
    take(a, b.d_b, where);
    return b;
  } catch (const json::exception& e) {
    throw ArchiveError(where + e.what());
  }
}

TranslatorBundle train_translator(const std::vector<CaseRecord>& source_cases,
                                  const std::vector<CaseRecord>& target_cases, const TranslatorConfig& cfg,
                                  const WarningFn& warn, const std::function<void(const TranslatorEpoch&)>& on_epoch) {
  cfg.validate();
  if (source_cases.empty() || target_cases.empty())
    throw ConfigError("train_translator needs cases on both sides");
  std::vector<CaseRecord> src = source_cases, tgt = target_cases;
  if (src.size() != tgt.size()) {
    const std::size_t n = std::min(src.size(), tgt.size());
    if (warn)
      warn("unbalanced translator inputs (" + std::to_string(src.size()) + " source vs " +
           std::to_string(tgt.size()) + " target cases); subsampling both to " + std::to_string(n));
    Rng rng(nn::mix_seed(cfg.seed, 0xba1));
    auto trim = [&](std::vector<CaseRecord>& v) {
      if (v.size() == n) return;
      rng.shuffle(v);
      v.resize(n);
    };
    trim(src);
    trim(tgt);
  }

  TranslatorBundle b(cfg);
  b.init(nn::mix_seed(cfg.seed, 0x6a));
  b.source_center = src.front().center_id();
  b.target_center = tgt.front().center_id();
  b.source_cases_used = static_cast<int>(src.size());
  b.target_cases_used = static_cast<int>(tgt.size());

  const auto a_slices = slices_of(src, cfg.slice_size);
  const auto b_slices = slices_of(tgt, cfg.slice_size);
  std::size_t per_epoch = std::min(a_slices.size(), b_slices.size());
  if (cfg.max_slices > 0) per_epoch = std::min<std::size_t>(per_epoch, cfg.max_slices);

  auto gen_params = b.g_ab.params();
  for (auto* p : b.g_ba.params()) gen_params.push_back(p);
  auto disc_params = b.d_a.params();
  for (auto* p : b.d_b.params()) disc_params.push_back(p);
  const nn::AdamOptions opt{cfg.learning_rate, cfg.beta1, 0.999, 1e-8};
  nn::Adam<float> gen_opt(gen_params, opt), disc_opt(disc_params, opt);

  std::vector<std::size_t> oa(a_slices.size()), ob(b_slices.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(nn::mix_seed(cfg.seed, std::uint64_t(epoch)));
    for (std::size_t i = 0; i < oa.size(); ++i) oa[i] = i;
    for (std::size_t i = 0; i < ob.size(); ++i) ob[i] = i;
    rng.shuffle(oa);
    rng.shuffle(ob);
    TranslatorEpoch rec;
    rec.epoch = epoch;
    int steps = 0;
    for (std::size_t first = 0; first < per_epoch; first += cfg.batch_size) {
      const int n = static_cast<int>(std::min<std::size_t>(cfg.batch_size, per_epoch - first));
      const T xa = batch_of(a_slices, oa, first, n);
      const T xb = batch_of(b_slices, ob, first, n);

      // generators, with discriminators held fixed
      set_trainable(disc_params, false);
      set_trainable(gen_params, true);
      gen_opt.zero_grad();
      T fake_b, fake_a;
      const CycleStats sa = cycle_pass(xa, b.g_ab, b.g_ba, b.d_b, cfg, fake_b);
      const CycleStats sb = cycle_pass(xb, b.g_ba, b.g_ab, b.d_a, cfg, fake_a);
      double gen_loss = sa.gen + sb.gen;
      gen_loss += identity_pass(xa, b.g_ba, cfg.identity_weight) + identity_pass(xb, b.g_ab, cfg.identity_weight);
      gen_opt.step();

      // discriminators on real images and the fakes from this step
      set_trainable(gen_params, false);
      set_trainable(disc_params, true);
      disc_opt.zero_grad();
      const double disc_loss = disc_pass(b.d_a, xa, fake_a) + disc_pass(b.d_b, xb, fake_b);
      disc_opt.step();
      set_trainable(gen_params, true);

      if (!std::isfinite(gen_loss) || !std::isfinite(disc_loss))
        throw TrainingError("translator diverged at epoch " + std::to_string(epoch) + " (generator loss " +
                                 std::to_string(gen_loss) + ", discriminator loss " + std::to_string(disc_loss) + ")");
      rec.cycle_error += 0.5 * (sa.cycle + sb.cycle);
      rec.generator_loss += gen_loss;
      rec.discriminator_loss += disc_loss;
      ++steps;
    }
    if (steps) {
      rec.cycle_error /= steps;
      rec.generator_loss /= steps;
      rec.discriminator_loss /= steps;
    }
    b.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  b.g_ab.release();
  b.g_ba.release();
  b.d_a.release();
  b.d_b.release();
  return b;
}

Volume translate(const Volume& v, TranslatorBundle& bundle, TranslateDirection direction) {
  const Shape3 s = v.shape();
  const auto& size = bundle.config.slice_size;
  if (s.rows != size[0] || s.cols != size[1])
    throw std::invalid_argument("translate: expected " + std::to_string(size[0]) + "x" + std::to_string(size[1]) +
                                " slices after pre-processing, got " + to_string(s));
  auto& g = direction == TranslateDirection::target_to_source ? bundle.g_ba : bundle.g_ab;
  Volume out{Grid3<float>(s), v.spacing};
  for (int z = 0; z < s.slices; ++z) {
    T y = g.forward(slices_to_tensor(v, z, 1), false);
    y.data = y.data.max(0.0f).min(1.0f);
    std::memcpy(out.voxels.values().data() + std::size_t(z) * s.plane(), y.data.data(), sizeof(float) * s.plane());
  }
  return out;
}

}  // namespace mcseg
