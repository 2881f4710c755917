#include "mmcof/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

namespace mmcof::ag {

namespace {
std::atomic<long> g_seq{0};
}

Var make_leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->seq = g_seq.fetch_add(1);
    return n;
}

Var make_const(Tensor value) { return make_leaf(std::move(value), false); }

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = any_requires_grad(parents);
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    n->seq = g_seq.fetch_add(1);
    return n;
}

bool any_requires_grad(const std::vector<Var>& vars) {
    for (const auto& v : vars)
        if (v && v->requires_grad) return true;
    return false;
}

void backward(const Var& root) {
    if (!root) throw std::invalid_argument("backward: null root");
    if (!root->requires_grad)
        throw std::logic_error("backward: root does not depend on any parameter");

    // Collect reachable grad-requiring nodes, then run newest-first.
    std::vector<Node*> nodes;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        nodes.push_back(n);
        for (const auto& p : n->parents) {
            if (p && p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(nodes.begin(), nodes.end(), [](Node* a, Node* b) { return a->seq > b->seq; });

    Tensor& g = root->ensure_grad();
    std::fill(g.data.begin(), g.data.end(), 1.0f);
    for (Node* n : nodes) {
        if (n->backprop && !n->grad.data.empty()) n->backprop(*n);
    }
}

}  // namespace mmcof::ag
