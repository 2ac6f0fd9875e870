#ifndef MCSEG_NN_LAYERS_HPP
#define MCSEG_NN_LAYERS_HPP

#include "mcseg/nn/tensor.hpp"
#include "mcseg/random.hpp"

#include <cmath>

namespace mcseg::nn {

// Unfold one sample (C x H x W) into a (C*k*k) x (Ho*Wo) row-major matrix.
template <typename Scalar>
void im2col(const Scalar* x, int channels, int h, int w, int k, int stride, int pad, int ho,
            int wo, RowMatrix<Scalar>& cols) {
  cols.resize(static_cast<Eigen::Index>(channels) * k * k, static_cast<Eigen::Index>(ho) * wo);
  for (int ci = 0; ci < channels; ++ci) {
    const Scalar* plane = x + static_cast<Eigen::Index>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Scalar* row = cols.data() + ((static_cast<Eigen::Index>(ci) * k + ky) * k + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          Scalar* dst = row + static_cast<Eigen::Index>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, Scalar(0));
            continue;
          }
          const Scalar* src = plane + static_cast<Eigen::Index>(iy) * w;
          if (stride == 1) {
            // contiguous run with zero borders
            const int lo = std::max(0, pad - kx);
            const int hi = std::min(wo, w + pad - kx);
            std::fill(dst, dst + std::min(lo, wo), Scalar(0));
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox - pad + kx];
            if (hi < wo) std::fill(dst + std::max(hi, 0), dst + wo, Scalar(0));
          } else {
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              dst[ox] = (ix >= 0 && ix < w) ? src[ix] : Scalar(0);
            }
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const RowMatrix<Scalar>& cols, int channels, int h, int w, int k, int stride, int pad,
            int ho, int wo, Scalar* x) {
  for (int ci = 0; ci < channels; ++ci) {
    Scalar* plane = x + static_cast<Eigen::Index>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* row =
            cols.data() + ((static_cast<Eigen::Index>(ci) * k + ky) * k + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const Scalar* src = row + static_cast<Eigen::Index>(oy) * wo;
          Scalar* dst = plane + static_cast<Eigen::Index>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_ch, int out_ch, int k, int stride, int pad)
      : in_(in_ch), out_(out_ch), k_(k), stride_(stride), pad_(pad) {
    weight.name = name + ".weight";
    bias.name = name + ".bias";
    weight.resize(static_cast<Eigen::Index>(out_ch) * in_ch * k * k);
    bias.resize(out_ch);
  }

  // Kaiming-normal weights for a leaky activation with the given slope.
  void init(Rng& rng, double slope, double scale = 1.0) {
    const double fan_in = double(in_) * k_ * k_;
    const double std = scale * std::sqrt(2.0 / ((1.0 + slope * slope) * fan_in));
    for (Eigen::Index i = 0; i < weight.value.size(); ++i) weight.value[i] = Scalar(rng.normal(0.0, std));
    bias.value.setZero();
  }

  int out_size(int n) const { return (n + 2 * pad_ - k_) / stride_ + 1; }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool cache) {
    if (x.c != in_)
      throw std::invalid_argument(weight.name + ": expected " + std::to_string(in_) +
                                  " input channels, got " + x.shape_string());
    const int ho = out_size(x.h), wo = out_size(x.w);
    Tensor<Scalar> y(x.n, out_, ho, wo);
    auto wmat = weights();
    RowMatrix<Scalar> cols;
    for (int i = 0; i < x.n; ++i) {
      auto out = y.sample(i);
      if (is_pointwise()) {
        out.noalias() = wmat * x.sample(i);
      } else {
        im2col(x.sample_ptr(i), in_, x.h, x.w, k_, stride_, pad_, ho, wo, cols);
        out.noalias() = wmat * cols;
      }
      out.colwise() += bias.value;
    }
    if (cache) input_ = x;
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, bool need_dx = true) {
    const Tensor<Scalar>& x = input_;
    Tensor<Scalar> dx;
    if (need_dx) dx = Tensor<Scalar>(x.n, x.c, x.h, x.w);
    auto wmat = weights();
    RowMatrix<Scalar> cols, dcols;
    RowMatrix<Scalar> dw = RowMatrix<Scalar>::Zero(out_, static_cast<Eigen::Index>(in_) * k_ * k_);
    Vector<Scalar> db = Vector<Scalar>::Zero(out_);
    for (int i = 0; i < x.n; ++i) {
      auto g = dy.sample(i);
      if (bias.trainable) db += g.rowwise().sum();
      if (is_pointwise()) {
        if (weight.trainable) dw.noalias() += g * x.sample(i).transpose();
        if (need_dx) dx.sample(i).noalias() = wmat.transpose() * g;
      } else {
        if (weight.trainable) {
          im2col(x.sample_ptr(i), in_, x.h, x.w, k_, stride_, pad_, dy.h, dy.w, cols);
          dw.noalias() += g * cols.transpose();
        }
        if (need_dx) {
          dcols.noalias() = wmat.transpose() * g;
          col2im(dcols, in_, x.h, x.w, k_, stride_, pad_, dy.h, dy.w, dx.sample_ptr(i));
        }
      }
    }
    weight.accumulate(Eigen::Map<const Vector<Scalar>>(dw.data(), dw.size()));
    bias.accumulate(db);
    return dx;
  }

  ParamList<Scalar> params() { return {&weight, &bias}; }
  void release() { input_ = Tensor<Scalar>(); }

  Parameter<Scalar> weight;
  Parameter<Scalar> bias;

 private:
  bool is_pointwise() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }
  Eigen::Map<RowMatrix<Scalar>> weights() {
    return Eigen::Map<RowMatrix<Scalar>>(weight.value.data(), out_,
                                         static_cast<Eigen::Index>(in_) * k_ * k_);
  }

  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  Tensor<Scalar> input_;
};

// Transposed convolution with kernel 2 and stride 2 (exact 2x upsampling).
template <typename Scalar>
class UpConv2x2 {
 public:
  UpConv2x2() = default;
  UpConv2x2(std::string name, int in_ch, int out_ch) : in_(in_ch), out_(out_ch) {
    weight.name = name + ".weight";
    bias.name = name + ".bias";
    weight.resize(static_cast<Eigen::Index>(in_ch) * out_ch * 4);
    bias.resize(out_ch);
  }

  void init(Rng& rng, double slope) {
    const double std = std::sqrt(2.0 / ((1.0 + slope * slope) * in_));
    for (Eigen::Index i = 0; i < weight.value.size(); ++i) weight.value[i] = Scalar(rng.normal(0.0, std));
    bias.value.setZero();
  }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool cache) {
    if (x.c != in_) throw std::invalid_argument(weight.name + ": channel mismatch");
    Tensor<Scalar> y(x.n, out_, x.h * 2, x.w * 2);
    auto wmat = weights();  // in x (out*4)
    RowMatrix<Scalar> cols;
    for (int i = 0; i < x.n; ++i) {
      cols.noalias() = wmat.transpose() * x.sample(i);  // (out*4) x P
      for (int co = 0; co < out_; ++co) {
        const Scalar b = bias.value[co];
        for (int a = 0; a < 2; ++a)
          for (int bb = 0; bb < 2; ++bb) {
            const Scalar* src = cols.data() + (static_cast<Eigen::Index>(co) * 4 + a * 2 + bb) * x.plane();
            for (int yy = 0; yy < x.h; ++yy)
              for (int xx = 0; xx < x.w; ++xx)
                y.at(i, co, 2 * yy + a, 2 * xx + bb) = src[yy * x.w + xx] + b;
          }
      }
    }
    if (cache) input_ = x;
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, bool need_dx = true) {
    const Tensor<Scalar>& x = input_;
    Tensor<Scalar> dx;
    if (need_dx) dx = Tensor<Scalar>(x.n, x.c, x.h, x.w);
    auto wmat = weights();
    RowMatrix<Scalar> dcols(static_cast<Eigen::Index>(out_) * 4, x.plane());
    RowMatrix<Scalar> dw = RowMatrix<Scalar>::Zero(in_, static_cast<Eigen::Index>(out_) * 4);
    Vector<Scalar> db = Vector<Scalar>::Zero(out_);
    for (int i = 0; i < x.n; ++i) {
      for (int co = 0; co < out_; ++co)
        for (int a = 0; a < 2; ++a)
          for (int bb = 0; bb < 2; ++bb) {
            Scalar* dst = dcols.data() + (static_cast<Eigen::Index>(co) * 4 + a * 2 + bb) * x.plane();
            for (int yy = 0; yy < x.h; ++yy)
              for (int xx = 0; xx < x.w; ++xx) dst[yy * x.w + xx] = dy.at(i, co, 2 * yy + a, 2 * xx + bb);
          }
      if (bias.trainable) db += dy.sample(i).rowwise().sum();
      if (weight.trainable) dw.noalias() += x.sample(i) * dcols.transpose();
      if (need_dx) dx.sample(i).noalias() = wmat * dcols;
    }
    weight.accumulate(Eigen::Map<const Vector<Scalar>>(dw.data(), dw.size()));
    bias.accumulate(db);
    return dx;
  }

  ParamList<Scalar> params() { return {&weight, &bias}; }
  void release() { input_ = Tensor<Scalar>(); }

  Parameter<Scalar> weight;
  Parameter<Scalar> bias;

 private:
  Eigen::Map<RowMatrix<Scalar>> weights() {
    return Eigen::Map<RowMatrix<Scalar>>(weight.value.data(), in_,
                                         static_cast<Eigen::Index>(out_) * 4);
  }
  int in_ = 0, out_ = 0;
  Tensor<Scalar> input_;
};

// Per-sample, per-channel normalization with a learnable affine transform.
template <typename Scalar>
class InstanceNorm {
 public:
  InstanceNorm() = default;
  InstanceNorm(std::string name, int channels, double eps = 1e-5) : channels_(channels), eps_(eps) {
    gamma.name = name + ".gamma";
    beta.name = name + ".beta";
    gamma.resize(channels);
    beta.resize(channels);
    gamma.value.setOnes();
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool cache) {
    Tensor<Scalar> y(x.n, x.c, x.h, x.w);
    if (cache) {
      xhat_ = Tensor<Scalar>(x.n, x.c, x.h, x.w);
      invstd_.resize(static_cast<Eigen::Index>(x.n) * x.c);
    }
    const Scalar inv_n = Scalar(1) / Scalar(x.plane());
    for (int i = 0; i < x.n; ++i) {
      auto in = x.sample(i);
      auto out = y.sample(i);
      for (int ch = 0; ch < x.c; ++ch) {
        const Scalar mean = in.row(ch).sum() * inv_n;
        const Scalar var = (in.row(ch).array() - mean).square().sum() * inv_n;
        const Scalar istd = Scalar(1) / std::sqrt(var + Scalar(eps_));
        out.row(ch) = ((in.row(ch).array() - mean) * istd).matrix();
        if (cache) {
          xhat_.sample(i).row(ch) = out.row(ch);
          invstd_[i * x.c + ch] = istd;
        }
        out.row(ch) = (out.row(ch).array() * gamma.value[ch] + beta.value[ch]).matrix();
      }
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, bool need_dx = true) {
    Tensor<Scalar> dx;
    if (need_dx) dx = Tensor<Scalar>(dy.n, dy.c, dy.h, dy.w);
    const Scalar n = Scalar(dy.plane());
    Vector<Scalar> dg = Vector<Scalar>::Zero(channels_), dbeta = Vector<Scalar>::Zero(channels_);
    for (int i = 0; i < dy.n; ++i) {
      auto g = dy.sample(i);
      auto xh = xhat_.sample(i);
      for (int ch = 0; ch < dy.c; ++ch) {
        const Scalar sum_g = g.row(ch).sum();
        const Scalar sum_gx = g.row(ch).dot(xh.row(ch));
        dbeta[ch] += sum_g;
        dg[ch] += sum_gx;
        if (need_dx) {
          const Scalar k = gamma.value[ch] * invstd_[i * dy.c + ch] / n;
          dx.sample(i).row(ch) =
              ((g.row(ch).array() * n - sum_g - xh.row(ch).array() * sum_gx) * k).matrix();
        }
      }
    }
    gamma.accumulate(dg);
    beta.accumulate(dbeta);
    return dx;
  }

  ParamList<Scalar> params() { return {&gamma, &beta}; }
  void release() {
    xhat_ = Tensor<Scalar>();
    invstd_.resize(0);
  }

  Parameter<Scalar> gamma;
  Parameter<Scalar> beta;

 private:
  int channels_ = 0;
  double eps_ = 1e-5;
  Tensor<Scalar> xhat_;
  Vector<Scalar> invstd_;
};

// Leaky ReLU; slope 0 gives a plain ReLU.
template <typename Scalar>
class LeakyReLU {
 public:
  explicit LeakyReLU(double slope = 0.01) : slope_(Scalar(slope)) {}

  Tensor<Scalar> forward(Tensor<Scalar> x, bool cache) {
    x.data = (x.data > Scalar(0)).select(x.data, x.data * slope_);
    if (cache) output_ = x;
    return x;
  }
  Tensor<Scalar> backward(Tensor<Scalar> dy) const {
    dy.data = (output_.data > Scalar(0)).select(dy.data, dy.data * slope_);
    return dy;
  }
  void release() { output_ = Tensor<Scalar>(); }

 private:
  Scalar slope_;
  Tensor<Scalar> output_;
};

// conv -> instance norm -> leaky ReLU
template <typename Scalar>
class ConvUnit {
 public:
  ConvUnit() = default;
  ConvUnit(const std::string& name, int in_ch, int out_ch, int k, int stride, int pad, double slope)
      : conv(name + ".conv", in_ch, out_ch, k, stride, pad), norm(name + ".norm", out_ch),
        act(slope), slope_(slope) {}

  void init(Rng& rng) { conv.init(rng, slope_); }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool cache) {
    return act.forward(norm.forward(conv.forward(x, cache), cache), cache);
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& dy, bool need_dx = true) {
    return conv.backward(norm.backward(act.backward(dy)), need_dx);
  }
  ParamList<Scalar> params() {
    auto p = conv.params();
    for (auto* q : norm.params()) p.push_back(q);
    return p;
  }
  void release() {
    conv.release();
    norm.release();
    act.release();
  }

  Conv2d<Scalar> conv;
  InstanceNorm<Scalar> norm;
  LeakyReLU<Scalar> act{0.01};

 private:
  double slope_ = 0.01;
};

template <typename Scalar>
void zero_grad(const ParamList<Scalar>& params) {
  for (auto* p : params) p->grad.setZero();
}

}  // namespace mcseg::nn

#endif  // MCSEG_NN_LAYERS_HPP
