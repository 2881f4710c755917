#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mmcof/tensor.hpp"

namespace mmcof::ag {

// Reverse-mode tape node. Graphs are DAGs built in forward order; `seq`
// records creation order so backward() can process nodes newest-first.
struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // accumulates into parents' grads
    long seq = 0;

    Tensor& ensure_grad() {
        if (grad.data.empty()) grad = Tensor(value.shape);
        return grad;
    }
    void zero_grad() {
        if (!grad.data.empty()) std::fill(grad.data.begin(), grad.data.end(), 0.0f);
    }
};

using Var = std::shared_ptr<Node>;

Var make_leaf(Tensor value, bool requires_grad = true);
Var make_const(Tensor value);

// Internal: allocate an op result node wired to its parents.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop);

// Seeds the root gradient with ones and back-propagates through every
// reachable node that requires a gradient. Root is normally scalar.
void backward(const Var& root);

bool any_requires_grad(const std::vector<Var>& vars);

}  // namespace mmcof::ag
