#pragma once

#include <functional>
#include <random>
#include <string>

#include "mmcof/optimizer.hpp"

namespace mmcof {

struct GradEntryReport {
    std::string name;
    float max_rel_error = 0.0f;
    int coords_checked = 0;
    int coords_skipped = 0;  // probes that straddled a relu/maxpool kink
};

struct GradReport {
    std::vector<GradEntryReport> per_parameter;
    float tolerance = 1e-3f;
    bool pass = false;

    float max_error() const {
        float m = 0.0f;
        for (const auto& e : per_parameter) m = std::max(m, e.max_rel_error);
        return m;
    }
};

// Compares analytic gradients of a scalar-valued model fragment against
// central finite differences. `forward` must rebuild the graph from the
// current parameter values and return the scalar loss node.
//
// Large tensors are probed at up to `coords_per_param` coordinates chosen by
// `rng`; relative error uses max(|analytic|, |numeric|, abs_floor) as the
// denominator so near-zero gradients are compared absolutely.
GradReport grad_check(const std::function<ag::Var()>& forward, ParameterSet& params,
                      float step = 1e-2f, float tolerance = 1e-3f, int coords_per_param = 20,
                      std::mt19937* rng = nullptr, float abs_floor = 5e-2f);

}  // namespace mmcof
