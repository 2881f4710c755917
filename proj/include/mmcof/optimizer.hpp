#pragma once

#include <unordered_map>

#include "mmcof/params.hpp"

namespace mmcof {

enum class OptimizerKind { Sgd, Adam };

// SGD or Adam over the trainable entries of a ParameterSet.
class Optimizer {
  public:
    Optimizer(OptimizerKind kind, float lr, float beta1 = 0.9f, float beta2 = 0.999f,
              float eps = 1e-8f)
        : kind_(kind), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // Requires populated gradients (a backward pass must have run).
    void step(ParameterSet& params);

    float learning_rate() const { return lr_; }
    void set_learning_rate(float lr) { lr_ = lr; }

  private:
    struct Moments {
        Tensor m, v;
    };
    OptimizerKind kind_;
    float lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::unordered_map<std::string, Moments> state_;
};

// Zeroes gradients, back-propagates from `loss`, then applies one optimizer
// step. Throws std::logic_error if the loss graph reaches no parameter.
void backward_and_step(const ag::Var& loss, ParameterSet& params, Optimizer& opt);

}  // namespace mmcof
