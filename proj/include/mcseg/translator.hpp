#ifndef MCSEG_TRANSLATOR_HPP
#define MCSEG_TRANSLATOR_HPP

#include "mcseg/core.hpp"
#include "mcseg/nn/layers.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace mcseg {

struct TranslatorConfig {
  int base_features = 64;
  int downsamplings = 2;
  int residual_blocks = 9;
  int disc_features = 64;
  double cycle_weight = 10.0;
  double identity_weight = 0.0;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  int epochs = 20;
  int batch_size = 1;
  int max_slices = 0;  // per epoch and side; 0 = every balanced slice
  bool identity_init = false;  // zero output head, so an untrained generator is the identity
  std::uint64_t seed = 0;
  std::array<int, 2> slice_size{256, 256};

  void validate() const;
};

namespace nn {

// x + f(x) with f = conv-norm-relu-conv-norm.
template <typename Scalar>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(const std::string& name, int ch)
      : unit(name + ".unit", ch, ch, 3, 1, 1, 0.0), conv(name + ".conv", ch, ch, 3, 1, 1), norm(name + ".norm", ch) {}

  void init(Rng& rng) {
    unit.init(rng);
    conv.init(rng, 0.0);
  }
  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool cache) {
    Tensor<Scalar> y = norm.forward(conv.forward(unit.forward(x, cache), cache), cache);
    y.data += x.data;
    return y;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& dy) {
    Tensor<Scalar> dx = unit.backward(conv.backward(norm.backward(dy)));
    dx.data += dy.data;
    return dx;
  }
  ParamList<Scalar> params() {
    auto p = unit.params();
    for (auto* q : conv.params()) p.push_back(q);
    for (auto* q : norm.params()) p.push_back(q);
    return p;
  }
  void release() {
    unit.release();
    conv.release();
    norm.release();
  }

 private:
  ConvUnit<Scalar> unit;
  Conv2d<Scalar> conv;
  InstanceNorm<Scalar> norm;
};

// Residual image-to-image generator: output = input + g(input).
template <typename Scalar>
class Generator {
 public:
  Generator() = default;
  Generator(const std::string& name, const TranslatorConfig& cfg) {
    int f = cfg.base_features;
    stem_ = ConvUnit<Scalar>(name + ".stem", 1, f, 3, 1, 1, 0.0);
    for (int i = 0; i < cfg.downsamplings; ++i, f *= 2)
      down_.emplace_back(name + ".down" + std::to_string(i + 1), f, 2 * f, 3, 2, 1, 0.0);
    for (int i = 0; i < cfg.residual_blocks; ++i) res_.emplace_back(name + ".res" + std::to_string(i + 1), f);
    for (int i = 0; i < cfg.downsamplings; ++i, f /= 2) {
      const std::string n = name + ".up" + std::to_string(i + 1);
      up_.push_back({UpConv2x2<Scalar>(n + ".up", f, f / 2), InstanceNorm<Scalar>(n + ".norm", f / 2), LeakyReLU<Scalar>(0.0)});
    }
    head_ = Conv2d<Scalar>(name + ".head", f, 1, 3, 1, 1);
    identity_init_ = cfg.identity_init;
    divisor_ = 1 << cfg.downsamplings;
  }

  void init(Rng& rng) {
    stem_.init(rng);
    for (auto& d : down_) d.init(rng);
    for (auto& r : res_) r.init(rng);
    for (auto& u : up_) u.up.init(rng, 0.0);
    head_.init(rng, 1.0, 0.1);
    if (identity_init_) head_.weight.value.setZero();
  }

  int divisor() const { return divisor_; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool cache) {
    if (x.c != 1 || x.h % divisor_ || x.w % divisor_)
      throw std::invalid_argument("generator input must be Nx1xHxW with H, W divisible by " +
                                  std::to_string(divisor_) + ", got " + x.shape_string());
    Tensor<Scalar> h = stem_.forward(x, cache);
    for (auto& d : down_) h = d.forward(h, cache);
    for (auto& r : res_) h = r.forward(h, cache);
    for (auto& u : up_) h = u.act.forward(u.norm.forward(u.up.forward(h, cache), cache), cache);
    Tensor<Scalar> y = head_.forward(h, cache);
    y.data += x.data;
    return y;
  }

  // Returns the gradient with respect to the input image.
  Tensor<Scalar> backward(const Tensor<Scalar>& dy) {
    Tensor<Scalar> g = head_.backward(dy);
    for (auto it = up_.rbegin(); it != up_.rend(); ++it) g = it->up.backward(it->norm.backward(it->act.backward(g)));
    for (auto it = res_.rbegin(); it != res_.rend(); ++it) g = it->backward(g);
    for (auto it = down_.rbegin(); it != down_.rend(); ++it) g = it->backward(g);
    g = stem_.backward(g);
    g.data += dy.data;
    return g;
  }

  ParamList<Scalar> params() {
    auto p = stem_.params();
    auto add = [&p](ParamList<Scalar> q) { p.insert(p.end(), q.begin(), q.end()); };
    for (auto& d : down_) add(d.params());
    for (auto& r : res_) add(r.params());
    for (auto& u : up_) {
      add(u.up.params());
      add(u.norm.params());
    }
    add(head_.params());
    return p;
  }

  void release() {
    stem_.release();
    for (auto& d : down_) d.release();
    for (auto& r : res_) r.release();
    for (auto& u : up_) {
      u.up.release();
      u.norm.release();
      u.act.release();
    }
    head_.release();
  }

 private:
  struct UpStage {
    UpConv2x2<Scalar> up;
    InstanceNorm<Scalar> norm;
    LeakyReLU<Scalar> act;
  };
  ConvUnit<Scalar> stem_;
  std::vector<ConvUnit<Scalar>> down_;
  std::vector<ResidualBlock<Scalar>> res_;
  std::vector<UpStage> up_;
  Conv2d<Scalar> head_;
  bool identity_init_ = false;
  int divisor_ = 1;
};

// Patch discriminator: a map of real/fake scores at 1/4 resolution. There is
// no normalization, so absolute intensity stays visible to it.
template <typename Scalar>
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const std::string& name, int f)
      : c1_(name + ".c1", 1, f, 4, 2, 1), c2_(name + ".c2", f, 2 * f, 4, 2, 1),
        c3_(name + ".c3", 2 * f, 4 * f, 3, 1, 1), out_(name + ".out", 4 * f, 1, 3, 1, 1) {}

  void init(Rng& rng) {
    c1_.init(rng, 0.2);
    c2_.init(rng, 0.2);
    c3_.init(rng, 0.2);
    out_.init(rng, 1.0);
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool cache) {
    Tensor<Scalar> h = a1_.forward(c1_.forward(x, cache), cache);
    h = a2_.forward(c2_.forward(h, cache), cache);
    h = a3_.forward(c3_.forward(h, cache), cache);
    return out_.forward(h, cache);
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& dy) {
    Tensor<Scalar> g = a3_.backward(out_.backward(dy));
    g = a2_.backward(c3_.backward(g));
    g = a1_.backward(c2_.backward(g));
    return c1_.backward(g);
  }
  ParamList<Scalar> params() {
    auto p = c1_.params();
    for (auto* c : {&c2_, &c3_, &out_})
      for (auto* q : c->params()) p.push_back(q);
    return p;
  }
  void release() {
    for (auto* c : {&c1_, &c2_, &c3_, &out_}) c->release();
    for (auto* a : {&a1_, &a2_, &a3_}) a->release();
  }

 private:
  Conv2d<Scalar> c1_, c2_, c3_, out_;
  LeakyReLU<Scalar> a1_{0.2}, a2_{0.2}, a3_{0.2};
};

}  // namespace nn

struct TranslatorEpoch {
  int epoch = 0;
  double cycle_error = 0;  // mean |G_BA(G_AB(a)) - a| and |G_AB(G_BA(b)) - b|, averaged
  double generator_loss = 0;
  double discriminator_loss = 0;
};

enum class TranslateDirection { target_to_source, source_to_target };

// Domain A is the source (training) center, domain B the unseen target center.
struct TranslatorBundle {
  explicit TranslatorBundle(const TranslatorConfig& cfg = {});

  TranslatorConfig config;
  std::string source_center;
  std::string target_center;
  nn::Generator<float> g_ab;  // source -> target
  nn::Generator<float> g_ba;  // target -> source
  nn::Discriminator<float> d_a;
  nn::Discriminator<float> d_b;
  std::vector<TranslatorEpoch> log;
  int source_cases_used = 0;
  int target_cases_used = 0;

  void init(std::uint64_t seed);
  void save(const std::filesystem::path& path);
  static TranslatorBundle load(const std::filesystem::path& path);
};

using WarningFn = std::function<void(const std::string&)>;

// CycleGAN-style training with least-squares adversarial losses. The larger
// side is subsampled (with a warning) so both sides contribute equally many
// cases. Cases are expected pre-processed to cfg.slice_size.
TranslatorBundle train_translator(const std::vector<CaseRecord>& source_cases,
                                  const std::vector<CaseRecord>& target_cases, const TranslatorConfig& cfg,
                                  const WarningFn& warn = {},
                                  const std::function<void(const TranslatorEpoch&)>& on_epoch = {});

// Slice-by-slice translation, clipped to [0, 1]. Throws std::invalid_argument
// when the in-plane size differs from the translator's slice size.
Volume translate(const Volume& v, TranslatorBundle& bundle, TranslateDirection direction);

}  // namespace mcseg

#endif  // MCSEG_TRANSLATOR_HPP
