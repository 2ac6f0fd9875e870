#ifndef MCSEG_NN_TENSOR_HPP
#define MCSEG_NN_TENSOR_HPP

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcseg::nn {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// NCHW activation tensor. Each sample is viewed as a (C x H*W) row-major matrix.
template <typename Scalar>
struct Tensor {
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using SampleMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstSampleMap = Eigen::Map<const RowMatrix<Scalar>>;

  int n = 0, c = 0, h = 0, w = 0;
  Storage data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {
    data.setZero(static_cast<Eigen::Index>(n) * c * h * w);
  }

  Eigen::Index plane() const { return static_cast<Eigen::Index>(h) * w; }
  Eigen::Index sample_size() const { return plane() * c; }
  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  std::string shape_string() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w);
  }

  Scalar* sample_ptr(int i) { return data.data() + i * sample_size(); }
  const Scalar* sample_ptr(int i) const { return data.data() + i * sample_size(); }
  SampleMap sample(int i) { return SampleMap(sample_ptr(i), c, plane()); }
  ConstSampleMap sample(int i) const { return ConstSampleMap(sample_ptr(i), c, plane()); }

  Scalar& at(int i, int ch, int y, int x) {
    return data[((static_cast<Eigen::Index>(i) * c + ch) * h + y) * w + x];
  }
  Scalar at(int i, int ch, int y, int x) const {
    return data[((static_cast<Eigen::Index>(i) * c + ch) * h + y) * w + x];
  }
};

template <typename Scalar>
struct Parameter {
  std::string name;
  Vector<Scalar> value;
  Vector<Scalar> grad;
  bool trainable = true;

  void resize(Eigen::Index size) {
    value.setZero(size);
    grad.setZero(size);
  }
  // Gradients of frozen parameters are never accumulated, so they stay exactly zero.
  template <typename Expr>
  void accumulate(const Expr& g) {
    if (trainable) grad += g;
  }
};

template <typename Scalar>
using ParamList = std::vector<Parameter<Scalar>*>;

// Concatenate along channels: out = [a ; b].
template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw std::invalid_argument("concat_channels: incompatible shapes " + a.shape_string() +
                                " and " + b.shape_string());
  Tensor<Scalar> out(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    out.sample(i).topRows(a.c) = a.sample(i);
    out.sample(i).bottomRows(b.c) = b.sample(i);
  }
  return out;
}

template <typename Scalar>
void split_channels(const Tensor<Scalar>& g, int first, Tensor<Scalar>& ga, Tensor<Scalar>& gb) {
  ga = Tensor<Scalar>(g.n, first, g.h, g.w);
  gb = Tensor<Scalar>(g.n, g.c - first, g.h, g.w);
  for (int i = 0; i < g.n; ++i) {
    ga.sample(i) = g.sample(i).topRows(first);
    gb.sample(i) = g.sample(i).bottomRows(g.c - first);
  }
}

// Softmax over channels at each pixel.
template <typename Scalar>
Tensor<Scalar> softmax_channels(const Tensor<Scalar>& logits) {
  Tensor<Scalar> p(logits.n, logits.c, logits.h, logits.w);
  for (int i = 0; i < logits.n; ++i) {
    auto z = logits.sample(i);
    auto out = p.sample(i);
    Eigen::Array<Scalar, 1, Eigen::Dynamic> mx = z.colwise().maxCoeff().array();
    out = (z.array().rowwise() - mx).exp().matrix();
    Eigen::Array<Scalar, 1, Eigen::Dynamic> sum = out.colwise().sum().array();
    out = (out.array().rowwise() / sum).matrix();
  }
  return p;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace mcseg::nn

#endif  // MCSEG_NN_TENSOR_HPP
