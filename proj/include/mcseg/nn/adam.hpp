#ifndef MCSEG_NN_ADAM_HPP
#define MCSEG_NN_ADAM_HPP

#include "mcseg/nn/tensor.hpp"

#include <cmath>
#include <unordered_map>

namespace mcseg::nn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
class Adam {
 public:
  Adam(ParamList<Scalar> params, AdamOptions opt) : params_(std::move(params)), opt_(opt) {
    for (auto* p : params_) {
      m_[p].setZero(p->value.size());
      v_[p].setZero(p->value.size());
    }
  }

  // Frozen parameters are skipped entirely.
  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, double(t_));
    const Scalar b1 = Scalar(opt_.beta1), b2 = Scalar(opt_.beta2);
    const Scalar lr = Scalar(opt_.learning_rate / c1);
    const Scalar inv_c2 = Scalar(1.0 / c2);
    for (auto* p : params_) {
      if (!p->trainable) continue;
      auto& m = m_[p];
      auto& v = v_[p];
      m = b1 * m + (Scalar(1) - b1) * p->grad;
      v = b2 * v + (Scalar(1) - b2) * p->grad.cwiseAbs2();
      p->value.array() -=
          lr * m.array() / ((v.array() * inv_c2).sqrt() + Scalar(opt_.eps));
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->grad.setZero();
  }

  long steps() const { return t_; }

 private:
  ParamList<Scalar> params_;
  AdamOptions opt_;
  std::unordered_map<Parameter<Scalar>*, Vector<Scalar>> m_, v_;
  long t_ = 0;
};

}  // namespace mcseg::nn

#endif  // MCSEG_NN_ADAM_HPP
