#pragma once

#include "basgcn/nn/tape.hpp"

#include <cmath>

namespace basgcn::nn {

// Adam with bias correction over a fixed set of parameters. step() consumes
// whatever gradients have been accumulated in Parameter::grad.
template <class Scalar>
class Adam {
 public:
  explicit Adam(std::vector<Parameter<Scalar>*> params, Scalar lr = Scalar(5e-5),
                Scalar beta1 = Scalar(0.9), Scalar beta2 = Scalar(0.999),
                Scalar epsilon = Scalar(1e-8))
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
    slots_.reserve(params_.size());
    for (auto* p : params_) {
      slots_.push_back(Slot{MatrixX<Scalar>::Zero(p->value.rows(), p->value.cols()),
                            MatrixX<Scalar>::Zero(p->value.rows(), p->value.cols())});
    }
  }

  void step() {
    ++t_;
    const Scalar bc1 = Scalar(1) - std::pow(beta1_, Scalar(t_));
    const Scalar bc2 = Scalar(1) - std::pow(beta2_, Scalar(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter<Scalar>& p = *params_[i];
      Slot& s = slots_[i];
      s.m = beta1_ * s.m + (Scalar(1) - beta1_) * p.grad;
      s.v = beta2_ * s.v + (Scalar(1) - beta2_) * p.grad.cwiseProduct(p.grad);
      p.value.array() -= lr_ * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + epsilon_);
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  long step_count() const { return t_; }
  Scalar learning_rate() const { return lr_; }

  struct Slot {
    MatrixX<Scalar> m, v;
  };
  std::vector<Slot>& slots() { return slots_; }
  long& mutable_step_count() { return t_; }

 private:
  std::vector<Parameter<Scalar>*> params_;
  std::vector<Slot> slots_;
  long t_ = 0;
  Scalar lr_, beta1_, beta2_, epsilon_;
};

}  // namespace basgcn::nn
