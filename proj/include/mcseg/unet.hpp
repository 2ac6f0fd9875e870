#ifndef MCSEG_UNET_HPP
#define MCSEG_UNET_HPP

#include "mcseg/core.hpp"
#include "mcseg/nn/layers.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mcseg {

struct NetworkConfig {
  int levels = 6;
  int base_features = 32;
  int in_channels = 1;
  int num_classes = 3;
  double leaky_slope = 0.01;
  int deep_supervision_heads = 3;
  bool desk_scale = false;

  // Applies the desk-scale override (levels 4, base 8, heads clamped to levels - 2).
  NetworkConfig resolved() const;
  // Throws ConfigError. Call on a resolved config.
  void validate() const;
  // Feature width of each resolution level, capped at 1024.
  std::vector<int> widths() const;
  bool operator==(const NetworkConfig&) const = default;
};

enum class NetPart { encoder, decoder };
NetPart net_part_from_string(const std::string& s);
std::string to_string(NetPart p);

template <typename Scalar>
class UNet {
 public:
  using T = nn::Tensor<Scalar>;

  struct EncoderBlock {
    nn::ConvUnit<Scalar> unit1, unit2, down;
  };
  struct DecoderBlock {
    nn::UpConv2x2<Scalar> up;
    nn::ConvUnit<Scalar> unit1, unit2;
    std::optional<nn::Conv2d<Scalar>> head;
  };

  explicit UNet(const NetworkConfig& cfg) : cfg_(cfg.resolved()) {
    cfg_.validate();
    const auto w = cfg_.widths();
    const int L = cfg_.levels;
    const double s = cfg_.leaky_slope;
    int in = cfg_.in_channels;
    for (int k = 1; k < L; ++k) {
      const std::string n = "enc" + std::to_string(k);
      const int wk = w[k - 1];
      enc_.push_back({nn::ConvUnit<Scalar>(n + ".unit1", in, wk, 3, 1, 1, s),
                      nn::ConvUnit<Scalar>(n + ".unit2", wk, wk, 3, 1, 1, s),
                      nn::ConvUnit<Scalar>(n + ".down", wk, wk, 2, 2, 0, s)});
      in = wk;
    }
    bott1_ = nn::ConvUnit<Scalar>("bottleneck.unit1", in, w[L - 1], 3, 1, 1, s);
    bott2_ = nn::ConvUnit<Scalar>("bottleneck.unit2", w[L - 1], w[L - 1], 3, 1, 1, s);
    // dec_[j-1] is decoder block j; block 1 is at full resolution.
    for (int j = 1; j < L; ++j) {
      const std::string n = "dec" + std::to_string(j);
      const int wj = w[j - 1];
      DecoderBlock d{nn::UpConv2x2<Scalar>(n + ".up", w[j], wj),
                     nn::ConvUnit<Scalar>(n + ".unit1", 2 * wj, wj, 3, 1, 1, s),
                     nn::ConvUnit<Scalar>(n + ".unit2", wj, wj, 3, 1, 1, s),
                     std::nullopt};
      if (j == 1 || j - 1 <= cfg_.deep_supervision_heads)
        d.head.emplace(n + ".head", wj, cfg_.num_classes, 1, 1, 0);
      dec_.push_back(std::move(d));
    }
  }

  const NetworkConfig& config() const { return cfg_; }
  int levels() const { return cfg_.levels; }
  int divisor() const { return 1 << (cfg_.levels - 1); }

  void init(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& e : enc_) {
      e.unit1.init(rng);
      e.unit2.init(rng);
      e.down.init(rng);
    }
    bott1_.init(rng);
    bott2_.init(rng);
    for (auto& d : dec_) {
      d.up.init(rng, cfg_.leaky_slope);
      d.unit1.init(rng);
      d.unit2.init(rng);
      if (d.head) d.head->init(rng, 0.0, 0.5);
    }
  }

  // Per-class probabilities: index 0 is the full-resolution map, index k the
  // auxiliary map at 1/2^k resolution. With train=true activations are cached.
  std::vector<T> forward(const T& x, bool train) {
    check_input(x);
    const int L = cfg_.levels;
    std::vector<T> skips(L - 1);
    T h = x;
    for (int k = 0; k < L - 1; ++k) {
      auto& e = enc_[k];
      h = e.unit2.forward(e.unit1.forward(h, train), train);
      skips[k] = h;
      h = e.down.forward(h, train);
    }
    h = bott2_.forward(bott1_.forward(h, train), train);
    std::vector<T> logits(1 + cfg_.deep_supervision_heads);
    for (int j = L - 1; j >= 1; --j) {
      auto& d = dec_[j - 1];
      T u = d.up.forward(h, train);
      T cat = nn::concat_channels(skips[j - 1], u);
      skips[j - 1] = T();
      h = d.unit2.forward(d.unit1.forward(cat, train), train);
      if (d.head) logits[j - 1] = d.head->forward(h, train);
    }
    std::vector<T> probs;
    probs.reserve(logits.size());
    for (auto& z : logits) probs.push_back(nn::softmax_channels(z));
    return probs;
  }

  // Back-propagates gradients with respect to the logits of every head.
  void backward(const std::vector<T>& dlogits) {
    const int L = cfg_.levels;
    if (static_cast<int>(dlogits.size()) != 1 + cfg_.deep_supervision_heads)
      throw std::invalid_argument("UNet::backward: expected one gradient per head");
    std::vector<T> dskip(L - 1);
    T g;  // gradient w.r.t. the output of the block being processed
    T below;
    for (int j = 1; j < L; ++j) {
      auto& d = dec_[j - 1];
      T dh;
      if (d.head) dh = d.head->backward(dlogits[j - 1]);
      if (j > 1) dh = dh.n ? add(dh, below) : below;
      T dcat = d.unit1.backward(d.unit2.backward(dh));
      T du;
      nn::split_channels(dcat, cfg_.widths()[j - 1], dskip[j - 1], du);
      below = d.up.backward(du);
    }
    if (!any_encoder_trainable(L)) return;
    g = bott1_.backward(bott2_.backward(below));
    for (int k = L - 1; k >= 1; --k) {
      if (!any_encoder_trainable(k)) return;
      auto& e = enc_[k - 1];
      T gs = e.down.backward(g);
      gs.data += dskip[k - 1].data;
      g = e.unit1.backward(e.unit2.backward(gs), k > 1);
    }
  }

  void release() {
    for (auto& e : enc_) {
      e.unit1.release();
      e.unit2.release();
      e.down.release();
    }
    bott1_.release();
    bott2_.release();
    for (auto& d : dec_) {
      d.up.release();
      d.unit1.release();
      d.unit2.release();
      if (d.head) d.head->release();
    }
  }

  // Block names in input-to-output order: enc1.., bottleneck, dec(L-1)..dec1.
  std::vector<std::string> block_names() const {
    std::vector<std::string> names;
    for (int k = 1; k < cfg_.levels; ++k) names.push_back("enc" + std::to_string(k));
    names.push_back("bottleneck");
    for (int j = cfg_.levels - 1; j >= 1; --j) names.push_back("dec" + std::to_string(j));
    return names;
  }

  nn::ParamList<Scalar> block_params(const std::string& block) {
    nn::ParamList<Scalar> p;
    auto add_all = [&p](nn::ParamList<Scalar> q) { p.insert(p.end(), q.begin(), q.end()); };
    if (block == "bottleneck") {
      add_all(bott1_.params());
      add_all(bott2_.params());
      return p;
    }
    const int idx = std::stoi(block.substr(3));
    if (block.rfind("enc", 0) == 0 && idx >= 1 && idx < cfg_.levels) {
      auto& e = enc_[idx - 1];
      add_all(e.unit1.params());
      add_all(e.unit2.params());
      add_all(e.down.params());
    } else if (block.rfind("dec", 0) == 0 && idx >= 1 && idx < cfg_.levels) {
      auto& d = dec_[idx - 1];
      add_all(d.up.params());
      add_all(d.unit1.params());
      add_all(d.unit2.params());
      if (d.head) add_all(d.head->params());
    } else {
      throw std::invalid_argument("unknown block: " + block);
    }
    return p;
  }

  nn::ParamList<Scalar> params() {
    nn::ParamList<Scalar> all;
    for (const auto& b : block_names()) {
      auto p = block_params(b);
      all.insert(all.end(), p.begin(), p.end());
    }
    return all;
  }

  // parameter name -> owning block
  std::map<std::string, std::string> block_index() {
    std::map<std::string, std::string> idx;
    for (const auto& b : block_names())
      for (auto* p : block_params(b)) idx[p->name] = b;
    return idx;
  }

  // Makes exactly k blocks of one part trainable (encoder counted from the
  // input, decoder from the output) and freezes everything else. The
  // bottleneck becomes trainable only when k equals the number of levels.
  void set_trainable(NetPart part, int k) {
    set_all_trainable(false);
    add_trainable(part, k);
  }

  // Unfreezes k blocks of a part without freezing the rest.
  void add_trainable(NetPart part, int k) {
    if (k == 0) throw ConfigError("set_trainable: nothing trainable (k = 0)");
    if (k < 1 || k > cfg_.levels)
      throw ConfigError("set_trainable: k must be in [1, " + std::to_string(cfg_.levels) +
                        "], got " + std::to_string(k));
    const std::string prefix = part == NetPart::encoder ? "enc" : "dec";
    for (int i = 1; i <= std::min(k, cfg_.levels - 1); ++i)
      for (auto* p : block_params(prefix + std::to_string(i))) p->trainable = true;
    if (k == cfg_.levels)
      for (auto* p : block_params("bottleneck")) p->trainable = true;
  }

  void set_all_trainable(bool on) {
    for (auto* p : params()) p->trainable = on;
  }

  std::map<std::string, bool> trainable_flags() {
    std::map<std::string, bool> flags;
    for (const auto& b : block_names()) {
      bool any = false;
      for (auto* p : block_params(b)) any = any || p->trainable;
      flags[b] = any;
    }
    return flags;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : params()) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

  // Input channel count of each decoder block's first conv unit.
  int decoder_input_channels(int j) const { return dec_[j - 1].unit1.conv.in_channels(); }
  int decoder_up_channels(int j) const { return dec_[j - 1].up.out_channels(); }
  int skip_channels(int k) const { return enc_[k - 1].unit2.conv.out_channels(); }

  void check_input(const T& x) const {
    if (x.c != cfg_.in_channels || x.h % divisor() != 0 || x.w % divisor() != 0 || x.h == 0 ||
        x.w == 0)
      throw std::invalid_argument("UNet input must be Bx" + std::to_string(cfg_.in_channels) +
                                  "xHxW with H, W divisible by " + std::to_string(divisor()) +
                                  ", got " + x.shape_string());
  }

 private:
  static T add(const T& a, const T& b) {
    T out = a;
    out.data += b.data;
    return out;
  }

  // True when any encoder block 1..k (or the bottleneck when k == levels) is trainable.
  bool any_encoder_trainable(int k) {
    for (int i = 1; i <= std::min(k, cfg_.levels - 1); ++i)
      for (auto* p : block_params("enc" + std::to_string(i)))
        if (p->trainable) return true;
    if (k >= cfg_.levels)
      for (auto* p : block_params("bottleneck"))
        if (p->trainable) return true;
    return false;
  }

  NetworkConfig cfg_;
  std::vector<EncoderBlock> enc_;
  nn::ConvUnit<Scalar> bott1_, bott2_;
  std::vector<DecoderBlock> dec_;
};

}  // namespace mcseg

#endif  // MCSEG_UNET_HPP
