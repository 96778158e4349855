// SPDX-License-Identifier: Apache-2.0
#include "bseg/nn/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace bseg::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape(), 0.0f);
    return grad;
}

Var constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return node;
}

Var leaf(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    return node;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (!g_grad_enabled) return node;
    bool any = false;
    for (const auto& in : inputs) any = any || (in && in->requires_grad);
    if (!any) return node;
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward_fn = std::move(backward_fn);
    return node;
}

void backward(const Var& root, const Tensor& seed) {
    if (!root) throw std::invalid_argument("backward: null root");
    if (seed.shape() != root->value.shape()) {
        throw std::invalid_argument("backward: seed shape " + to_string(seed.shape()) +
                                    " does not match root " + to_string(root->value.shape()));
    }
    if (!root->requires_grad) return;

    // Iterative post-order DFS gives a topological order of the recorded graph.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child && child->requires_grad && visited.insert(child).second) {
                stack.emplace_back(child, 0);
            }
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }

    Tensor& g = root->grad_buffer();
    const float* s = seed.data();
    float* d = g.data();
    for (std::size_t i = 0; i < g.numel(); ++i) d[i] += s[i];

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && node->has_grad()) node->backward_fn(*node);
    }
}

}  // namespace bseg::nn
