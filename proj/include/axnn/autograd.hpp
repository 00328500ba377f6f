#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "axnn/tensor.hpp"

namespace axnn {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the backward tape. `backward_fn` scatters this node's grad
// into its parents; it must read parent values through the node pointers
// (never captured copies) so that checkpointed values can be rematerialized
// lazily by the engine.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    bool is_checkpointed = false;  // value may be dropped after forward
    bool value_dropped = false;
    std::string op;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;
    std::function<Tensor(Node&)> recompute_fn;  // required when is_checkpointed

    void accumulate_grad(const Tensor& g) {
        if (!requires_grad) return;
        if (grad.empty()) {
            grad = g;
            return;
        }
        if (grad.shape != g.shape) throw internal_error("grad shape mismatch on op '" + op + "'");
        for (int64_t i = 0; i < grad.numel(); ++i) grad[i] += g[i];
    }
};

inline NodePtr make_leaf(Tensor value, bool requires_grad, std::string op = "leaf") {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->op = std::move(op);
    return n;
}

inline NodePtr make_param(Tensor value) { return make_leaf(std::move(value), true, "param"); }
inline NodePtr make_const(Tensor value) { return make_leaf(std::move(value), false, "const"); }

namespace detail {

inline void topo_visit(Node* n, std::unordered_set<Node*>& seen, std::vector<Node*>& order) {
    // Iterative DFS postorder; graphs can be a few thousand nodes deep.
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(n, 0);
    seen.insert(n);
    while (!stack.empty()) {
        auto& [cur, idx] = stack.back();
        if (idx < cur->parents.size()) {
            Node* p = cur->parents[idx++].get();
            if (!seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(cur);
            stack.pop_back();
        }
    }
}

}  // namespace detail

inline std::vector<Node*> topo_order(const NodePtr& root) {
    std::unordered_set<Node*> seen;
    std::vector<Node*> order;
    detail::topo_visit(root.get(), seen, order);
    return order;
}

// Rematerialize a dropped value (and, recursively, any dropped ancestors it
// needs). Recomputation must be deterministic; the pointwise op registry
// enforces that at registration time.
inline void materialize(Node& n) {
    if (!n.value_dropped) return;
    for (auto& p : n.parents) materialize(*p);
    if (!n.recompute_fn) throw internal_error("checkpointed node '" + n.op + "' has no recompute_fn");
    n.value = n.recompute_fn(n);
    n.value_dropped = false;
    counters().checkpoint_recomputes++;
}

// Drop the stored outputs of checkpointed nodes. Called once after the
// forward pass; consumers computed eagerly, so the values are no longer
// needed until backward rematerializes them.
inline void release_checkpoints(const NodePtr& root) {
    for (Node* n : topo_order(root)) {
        if (n->is_checkpointed && !n->value_dropped) {
            n->value = Tensor{};
            n->value_dropped = true;
        }
    }
}

// Bytes of activation storage currently held by the graph. The checkpointing
// acceptance check compares this quantity, measured after release, with and
// without checkpointing.
inline int64_t stored_activation_bytes(const NodePtr& root) {
    int64_t bytes = 0;
    for (Node* n : topo_order(root)) bytes += static_cast<int64_t>(n->value.data.size()) * 4;
    return bytes;
}

// Reverse-topological gradient accumulation. `loss` must be scalar.
inline void backward(const NodePtr& loss) {
    if (loss->value_dropped) materialize(*loss);
    if (loss->value.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss->value.shape));
    auto order = topo_order(loss);
    loss->grad = Tensor::scalar(1.0f);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->backward_fn || n->grad.empty() || !n->requires_grad) continue;
        materialize(*n);
        for (auto& p : n->parents) materialize(*p);
        n->backward_fn(*n);
    }
}

inline void zero_grads(const std::vector<NodePtr>& params) {
    for (auto& p : params) p->grad = Tensor{};
}

// Elementwise op description for checkpointed_apply. `forward` maps input
// tensors to one output of the same shape; `backward` returns one grad per
// input. Both may be called more than once (recompute), so they must be
// pure given the inputs — `deterministic` is the author's promise of that.
struct PointwiseFn {
    std::string name;
    bool deterministic = true;
    std::function<Tensor(const std::vector<Tensor>&)> forward;
    std::function<std::vector<Tensor>(const std::vector<Tensor>&, const Tensor& out_grad)> backward;
};

inline NodePtr apply_pointwise(const PointwiseFn& fn, std::vector<NodePtr> inputs, bool checkpoint) {
    if (checkpoint && !fn.deterministic)
        throw std::invalid_argument("checkpointed_apply: pointwise fn '" + fn.name +
                                    "' is not deterministic; it cannot be recomputed in backward");
    auto n = std::make_shared<Node>();
    n->op = fn.name;
    n->parents = std::move(inputs);
    std::vector<Tensor> vals;
    vals.reserve(n->parents.size());
    for (auto& p : n->parents) {
        n->requires_grad = n->requires_grad || p->requires_grad;
        vals.push_back(p->value);
    }
    n->value = fn.forward(vals);
    n->backward_fn = [fn](Node& self) {
        std::vector<Tensor> ins;
        ins.reserve(self.parents.size());
        for (auto& p : self.parents) ins.push_back(p->value);
        auto grads = fn.backward(ins, self.grad);
        if (grads.size() != self.parents.size()) throw internal_error("pointwise backward arity mismatch");
        for (size_t i = 0; i < grads.size(); ++i)
            if (self.parents[i]->requires_grad) self.parents[i]->accumulate_grad(grads[i]);
    };
    if (checkpoint) {
        n->is_checkpointed = true;
        n->recompute_fn = [fn](Node& self) {
            std::vector<Tensor> ins;
            ins.reserve(self.parents.size());
            for (auto& p : self.parents) ins.push_back(p->value);
            return fn.forward(ins);
        };
    }
    return n;
}

// Forward stores only the inputs; the output is recomputed during backward.
inline NodePtr checkpointed_apply(const PointwiseFn& fn, std::vector<NodePtr> inputs) {
    return apply_pointwise(fn, std::move(inputs), /*checkpoint=*/true);
}

// Forward value comes from `accurate_value` (computed outside the graph by
// an accurate hardware-simulation kernel); gradients flow unchanged into the
// proxy subgraph. This is the straight-through substitution used whenever
// the accurate kernels drive the forward pass.
inline NodePtr straight_through(NodePtr proxy, Tensor accurate_value) {
    if (proxy->value.shape != accurate_value.shape)
        throw std::invalid_argument("straight_through: proxy shape " + shape_str(proxy->value.shape) +
                                    " vs accurate shape " + shape_str(accurate_value.shape));
    auto n = std::make_shared<Node>();
    n->op = "straight_through";
    n->value = std::move(accurate_value);
    n->requires_grad = proxy->requires_grad;
    n->parents = {std::move(proxy)};
    n->backward_fn = [](Node& self) { self.parents[0]->accumulate_grad(self.grad); };
    return n;
}

}  // namespace axnn
