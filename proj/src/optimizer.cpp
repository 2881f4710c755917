#include "mmcof/optimizer.hpp"

#include <cmath>

namespace mmcof {

void Optimizer::step(ParameterSet& params) {
    ++t_;
    for (auto& e : params.entries()) {
        if (!e.trainable) continue;
        if (e.var->grad.data.empty())
            throw std::logic_error("Optimizer::step: no gradient for " + e.name +
                                   " (step before forward/backward)");
        Tensor& v = e.var->value;
        const Tensor& g = e.var->grad;
        if (kind_ == OptimizerKind::Sgd) {
            for (size_t i = 0; i < v.data.size(); ++i) v.data[i] -= lr_ * g.data[i];
            continue;
        }
        auto it = state_.find(e.name);
        if (it == state_.end())
            it = state_.emplace(e.name, Moments{Tensor(v.shape), Tensor(v.shape)}).first;
        Tensor& m = it->second.m;
        Tensor& s = it->second.v;
        float c1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
        float c2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
        for (size_t i = 0; i < v.data.size(); ++i) {
            m.data[i] = beta1_ * m.data[i] + (1.0f - beta1_) * g.data[i];
            s.data[i] = beta2_ * s.data[i] + (1.0f - beta2_) * g.data[i] * g.data[i];
            float mh = m.data[i] / c1;
            float sh = s.data[i] / c2;
            v.data[i] -= lr_ * mh / (std::sqrt(sh) + eps_);
        }
    }
}

void backward_and_step(const ag::Var& loss, ParameterSet& params, Optimizer& opt) {
    params.zero_grad();
    ag::backward(loss);
    opt.step(params);
}

}  // namespace mmcof
