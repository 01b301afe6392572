#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "mixscale/core/tensor.hpp"

namespace mixscale {

// Reverse-mode tape. Every op produces a Node whose backprop closure
// accumulates into the gradients of its parents. Graphs are built only
// while grad mode is enabled; otherwise ops return detached leaves.
template <typename T>
class Node {
  public:
    TensorT<T> value;
    TensorT<T> grad;  // allocated lazily by ensure_grad()
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;
    bool requires_grad = false;

    Node() = default;
    explicit Node(TensorT<T> val) : value(std::move(val)) {}

    void ensure_grad() {
        if (grad.v.empty()) grad = TensorT<T>::zeros_like(value);
    }
    bool is_leaf() const { return parents.empty(); }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}
inline bool grad_enabled() { return grad_mode_flag(); }

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode_flag()) { grad_mode_flag() = false; }
    ~NoGradGuard() { grad_mode_flag() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename T>
Var<T> make_leaf(TensorT<T> value, bool requires_grad = false) {
    auto node = std::make_shared<Node<T>>(std::move(value));
    node->requires_grad = requires_grad;
    return node;
}

// Wires a freshly computed node into the tape. `out` carries the forward
// value; parents/backprop are attached only when grad mode is active and
// some parent needs gradients.
template <typename T>
Var<T> make_op(TensorT<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backprop) {
    auto node = std::make_shared<Node<T>>(std::move(value));
    bool need = false;
    if (grad_enabled()) {
        for (const auto& p : parents)
            if (p && p->requires_grad) { need = true; break; }
    }
    if (need) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backprop = std::move(backprop);
    }
    return node;
}

// Runs reverse accumulation from a scalar root. Node visitation order is
// a deterministic reverse topological order of the recorded graph.
template <typename T>
void backward(const Var<T>& root) {
    check(root != nullptr, "backward: null root");
    check(root->value.size() == 1, "backward: root must be scalar");
    if (!root->requires_grad) return;

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, child] = stack.back();
        if (child < node->parents.size()) {
            Node<T>* next = node->parents[child].get();
            ++child;
            if (next && next->requires_grad && !seen.count(next)) {
                seen.insert(next);
                stack.push_back({next, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad.v[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backprop) {
            for (auto& p : node->parents)
                if (p && p->requires_grad) p->ensure_grad();
            node->backprop(*node);
        }
    }
}

}  // namespace mixscale
