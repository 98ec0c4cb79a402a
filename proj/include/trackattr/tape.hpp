#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trackattr/kernels.hpp"
#include "trackattr/tensor.hpp"

namespace trackattr {

// Margin below which an activation counts as sitting on a kink of relu,
// maxpool, or l2_distance. Used for the tape's structure hash, which gradient
// checking consults to skip parameters whose finite-difference window
// straddles a kink.
inline constexpr double kKinkEps = 1e-6;

// Eager reverse-mode tape. Recording an op evaluates it immediately and
// checks the result for NaN/Inf; backward() walks the recorded nodes once in
// reverse creation order, which is a valid topological order.
class Tape {
public:
    using NodeId = int;

    // Non-differentiable value (data, masks, targets).
    NodeId constant(Tensor value, std::string name = "constant");
    // Differentiable leaf (parameters, or inputs under gradient test).
    NodeId leaf(Tensor value, std::string name);

    // x[N,I], w[I,O], b[O] -> [N,O]
    NodeId dense(NodeId x, NodeId w, NodeId b);
    // x[N,H,W,Ci], k[kh,kw,Ci,Co], b[Co], same padding -> [N,Ho,Wo,Co]
    NodeId conv2d(NodeId x, NodeId k, NodeId b, int stride = 1);
    NodeId relu(NodeId x);
    // 2x2 window, stride 2; H and W must be even.
    NodeId maxpool2(NodeId x);
    // All inputs [N,F_k] -> [N, sum F_k]
    NodeId concat(const std::vector<NodeId>& xs);
    // [N, d1, d2, ...] -> [N, d1*d2*...]
    NodeId flatten(NodeId x);
    // u[N,D], v[N,D] -> [N]; gradient 0 at distance 0.
    NodeId l2_distance(NodeId u, NodeId v);
    // logits[N,C], one class id per row -> per-row loss [N]
    NodeId softmax_cross_entropy(NodeId logits, std::vector<int> classes);
    // logits[N,K], targets[N,K] in [0,1] -> per-element loss [N,K]
    NodeId sigmoid_bce(NodeId logits, Tensor targets);
    NodeId scale(NodeId x, double s);
    NodeId add_scalar(NodeId x, double c);
    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId sum(NodeId x);
    NodeId mean(NodeId x);

    const Tensor& value(NodeId id) const;
    // Valid after backward(). Leaves that never influenced the loss hold zeros.
    const Tensor& grad(NodeId id) const;
    bool needs_grad(NodeId id) const;

    void backward(NodeId loss);

    // Hash of the discrete decisions made during forward evaluation: relu
    // signs, pool argmax choices, zero-distance flags, plus near-kink flags at
    // kKinkEps resolution. Two evaluations with the same hash took the same
    // piecewise-linear region end to end.
    std::uint64_t structure_hash() const { return structure_; }

    std::size_t size() const { return nodes_.size(); }

private:
    enum class OpKind {
        leaf,
        constant,
        dense,
        conv2d,
        relu,
        maxpool2,
        concat,
        flatten,
        l2_distance,
        softmax_xent,
        sigmoid_bce,
        scale,
        add_scalar,
        add,
        mul,
        sum,
        mean
    };

    struct Node {
        OpKind kind = OpKind::constant;
        std::vector<NodeId> inputs;
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        bool grad_live = false;
        std::string name;
        double scalar = 0.0;
        kernels::Conv2dDims conv;
        std::vector<int> classes;
        std::vector<std::int64_t> argmax;
        Tensor cache;  // softmax probs / sigmoid values / bce targets
    };

    const Node& node(NodeId id) const;
    Node& node(NodeId id);
    NodeId push(Node n);
    void ensure_grad(NodeId id);
    void accumulate(NodeId id, const Tensor& g);
    void fold_structure(std::uint64_t v);
    void backward_node(NodeId id);

    std::vector<Node> nodes_;
    std::uint64_t structure_ = 1469598103934665603ull;  // FNV-1a offset basis
    bool backward_done_ = false;
};

}  // namespace trackattr
