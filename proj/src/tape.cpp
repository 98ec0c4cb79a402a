#include "trackattr/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "trackattr/error.hpp"

namespace trackattr {

namespace {

const char* op_name(int kind_tag) {
    static const char* names[] = {"leaf",        "constant",     "dense",      "conv2d",
                                  "relu",        "maxpool2",     "concat",     "flatten",
                                  "l2_distance", "softmax_xent", "sigmoid_bce", "scale",
                                  "add_scalar",  "add",          "mul",        "sum",
                                  "mean"};
    return names[kind_tag];
}

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
    throw ShapeError(std::string(op) + ": " + detail);
}

}  // namespace

const Tape::Node& Tape::node(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw Error("tape node id out of range: " + std::to_string(id));
    return nodes_[static_cast<std::size_t>(id)];
}

Tape::Node& Tape::node(NodeId id) {
    return const_cast<Node&>(static_cast<const Tape*>(this)->node(id));
}

Tape::NodeId Tape::push(Node n) {
    if (backward_done_) throw Error("tape already ran backward; record ops on a fresh tape");
    check_finite(n.value, std::string("output of ") + op_name(static_cast<int>(n.kind)) +
                              (n.name.empty() ? "" : " '" + n.name + "'"));
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::fold_structure(std::uint64_t v) {
    structure_ ^= v;
    structure_ *= 1099511628211ull;  // FNV-1a prime
}

const Tensor& Tape::value(NodeId id) const { return node(id).value; }

bool Tape::needs_grad(NodeId id) const { return node(id).needs_grad; }

const Tensor& Tape::grad(NodeId id) const {
    if (!backward_done_) throw Error("grad() requires backward() first");
    const Node& n = node(id);
    if (!n.grad_live)
        throw Error("no gradient recorded for node " + std::to_string(id) +
                    (n.name.empty() ? "" : " '" + n.name + "'"));
    return n.grad;
}

Tape::NodeId Tape::constant(Tensor value, std::string name) {
    Node n;
    n.kind = OpKind::constant;
    n.value = std::move(value);
    n.name = std::move(name);
    return push(std::move(n));
}

Tape::NodeId Tape::leaf(Tensor value, std::string name) {
    Node n;
    n.kind = OpKind::leaf;
    n.value = std::move(value);
    n.needs_grad = true;
    n.name = std::move(name);
    return push(std::move(n));
}

Tape::NodeId Tape::dense(NodeId x, NodeId w, NodeId b) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    const Tensor& bv = value(b);
    if (xv.ndim() != 2 || wv.ndim() != 2 || bv.ndim() != 1)
        shape_error("dense", "expected x[N,I], w[I,O], b[O], got " + shape_string(xv.shape) + " " +
                                 shape_string(wv.shape) + " " + shape_string(bv.shape));
    if (xv.dim(1) != wv.dim(0) || wv.dim(1) != bv.dim(0))
        shape_error("dense", "mismatched dims " + shape_string(xv.shape) + " x " +
                                 shape_string(wv.shape) + " + " + shape_string(bv.shape));
    int n = xv.dim(0), i = xv.dim(1), o = wv.dim(1);
    Node out;
    out.kind = OpKind::dense;
    out.inputs = {x, w, b};
    out.needs_grad = node(x).needs_grad || node(w).needs_grad || node(b).needs_grad;
    out.value = Tensor({n, o});
    kernels::dense_forward(xv.data.data(), wv.data.data(), bv.data.data(), out.value.data.data(),
                           n, i, o);
    return push(std::move(out));
}

Tape::NodeId Tape::conv2d(NodeId x, NodeId k, NodeId b, int stride) {
    const Tensor& xv = value(x);
    const Tensor& kv = value(k);
    const Tensor& bv = value(b);
    if (xv.ndim() != 4 || kv.ndim() != 4 || bv.ndim() != 1)
        shape_error("conv2d", "expected x[N,H,W,Ci], k[kh,kw,Ci,Co], b[Co], got " +
                                  shape_string(xv.shape) + " " + shape_string(kv.shape) + " " +
                                  shape_string(bv.shape));
    if (kv.dim(2) != xv.dim(3) || kv.dim(3) != bv.dim(0))
        shape_error("conv2d", "mismatched channels " + shape_string(xv.shape) + " vs " +
                                  shape_string(kv.shape) + " + " + shape_string(bv.shape));
    Node out;
    out.kind = OpKind::conv2d;
    out.inputs = {x, k, b};
    out.needs_grad = node(x).needs_grad || node(k).needs_grad || node(b).needs_grad;
    out.conv = kernels::conv2d_dims(xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), kv.dim(0),
                                    kv.dim(1), kv.dim(3), stride);
    out.value = Tensor({out.conv.n, out.conv.ho, out.conv.wo, out.conv.co});
    kernels::conv2d_forward(xv.data.data(), kv.data.data(), bv.data.data(), out.value.data.data(),
                            out.conv);
    return push(std::move(out));
}

Tape::NodeId Tape::relu(NodeId x) {
    const Tensor& xv = value(x);
    Node out;
    out.kind = OpKind::relu;
    out.inputs = {x};
    out.needs_grad = node(x).needs_grad;
    out.value = Tensor(xv.shape);
    for (std::size_t i = 0; i < xv.numel(); ++i) {
        double v = xv[i];
        out.value[i] = v > 0 ? v : 0.0;
        fold_structure((v > 0 ? 1u : 0u) | (std::abs(v) <= kKinkEps ? 2u : 0u));
    }
    return push(std::move(out));
}

Tape::NodeId Tape::maxpool2(NodeId x) {
    const Tensor& xv = value(x);
    if (xv.ndim() != 4) shape_error("maxpool2", "expected [N,H,W,C], got " + shape_string(xv.shape));
    int n = xv.dim(0), h = xv.dim(1), w = xv.dim(2), c = xv.dim(3);
    if (h % 2 != 0 || w % 2 != 0)
        shape_error("maxpool2", "H and W must be even, got " + shape_string(xv.shape));
    int ho = h / 2, wo = w / 2;
    Node out;
    out.kind = OpKind::maxpool2;
    out.inputs = {x};
    out.needs_grad = node(x).needs_grad;
    out.value = Tensor({n, ho, wo, c});
    out.argmax.resize(out.value.numel());
    std::size_t oi = 0;
    for (int bn = 0; bn < n; ++bn)
        for (int i = 0; i < ho; ++i)
            for (int j = 0; j < wo; ++j)
                for (int ch = 0; ch < c; ++ch, ++oi) {
                    double best = -std::numeric_limits<double>::infinity();
                    double second = best;
                    std::int64_t best_idx = 0;
                    int best_win = 0;
                    for (int di = 0; di < 2; ++di)
                        for (int dj = 0; dj < 2; ++dj) {
                            std::int64_t idx =
                                ((static_cast<std::int64_t>(bn) * h + 2 * i + di) * w + 2 * j +
                                 dj) *
                                    c +
                                ch;
                            double v = xv[static_cast<std::size_t>(idx)];
                            if (v > best) {
                                second = best;
                                best = v;
                                best_idx = idx;
                                best_win = di * 2 + dj;
                            } else if (v > second) {
                                second = v;
                            }
                        }
                    out.value[oi] = best;
                    out.argmax[oi] = best_idx;
                    fold_structure(static_cast<std::uint64_t>(best_win) |
                                   (best - second <= kKinkEps ? 4u : 0u));
                }
    return push(std::move(out));
}

Tape::NodeId Tape::concat(const std::vector<NodeId>& xs) {
    if (xs.empty()) shape_error("concat", "needs at least one input");
    int n = value(xs[0]).dim(0);
    int total = 0;
    for (NodeId id : xs) {
        const Tensor& v = value(id);
        if (v.ndim() != 2 || v.dim(0) != n)
            shape_error("concat", "inputs must be [N,F] with equal N, got " +
                                      shape_string(v.shape) + " vs N=" + std::to_string(n));
        total += v.dim(1);
    }
    Node out;
    out.kind = OpKind::concat;
    out.inputs = xs;
    for (NodeId id : xs) out.needs_grad = out.needs_grad || node(id).needs_grad;
    out.value = Tensor({n, total});
    for (int row = 0; row < n; ++row) {
        std::size_t off = static_cast<std::size_t>(row) * total;
        for (NodeId id : xs) {
            const Tensor& v = value(id);
            int f = v.dim(1);
            for (int j = 0; j < f; ++j)
                out.value[off + static_cast<std::size_t>(j)] =
                    v[static_cast<std::size_t>(row) * f + j];
            off += static_cast<std::size_t>(f);
        }
    }
    return push(std::move(out));
}

Tape::NodeId Tape::flatten(NodeId x) {
    const Tensor& xv = value(x);
    if (xv.ndim() < 2) shape_error("flatten", "expected [N,...], got " + shape_string(xv.shape));
    int n = xv.dim(0);
    int rest = static_cast<int>(xv.numel() / static_cast<std::size_t>(n));
    Node out;
    out.kind = OpKind::flatten;
    out.inputs = {x};
    out.needs_grad = node(x).needs_grad;
    out.value = Tensor({n, rest}, xv.data);
    return push(std::move(out));
}

Tape::NodeId Tape::l2_distance(NodeId u, NodeId v) {
    const Tensor& uv = value(u);
    const Tensor& vv = value(v);
    if (uv.ndim() != 2 || !uv.same_shape(vv))
        shape_error("l2_distance", "expected matching [N,D], got " + shape_string(uv.shape) +
                                       " vs " + shape_string(vv.shape));
    int n = uv.dim(0), d = uv.dim(1);
    Node out;
    out.kind = OpKind::l2_distance;
    out.inputs = {u, v};
    out.needs_grad = node(u).needs_grad || node(v).needs_grad;
    out.value = Tensor({n});
    for (int row = 0; row < n; ++row) {
        double acc = 0.0;
        for (int j = 0; j < d; ++j) {
            double diff = uv[static_cast<std::size_t>(row) * d + j] -
                          vv[static_cast<std::size_t>(row) * d + j];
            acc += diff * diff;
        }
        double dist = std::sqrt(acc);
        out.value[static_cast<std::size_t>(row)] = dist;
        fold_structure(dist <= kKinkEps ? 1u : 0u);
    }
    return push(std::move(out));
}

Tape::NodeId Tape::softmax_cross_entropy(NodeId logits, std::vector<int> classes) {
    const Tensor& zv = value(logits);
    if (zv.ndim() != 2)
        shape_error("softmax_xent", "expected logits [N,C], got " + shape_string(zv.shape));
    int n = zv.dim(0), c = zv.dim(1);
    if (static_cast<int>(classes.size()) != n)
        shape_error("softmax_xent", "got " + std::to_string(classes.size()) + " class ids for " +
                                        std::to_string(n) + " rows");
    for (int cls : classes)
        if (cls < 0 || cls >= c)
            throw ValidationError("softmax_xent: class id " + std::to_string(cls) +
                                  " outside [0," + std::to_string(c) + ")");
    Node out;
    out.kind = OpKind::softmax_xent;
    out.inputs = {logits};
    out.needs_grad = node(logits).needs_grad;
    out.classes = std::move(classes);
    out.value = Tensor({n});
    out.cache = Tensor({n, c});
    for (int row = 0; row < n; ++row) {
        const double* z = zv.data.data() + static_cast<std::size_t>(row) * c;
        double zmax = z[0];
        for (int j = 1; j < c; ++j) zmax = std::max(zmax, z[j]);
        double denom = 0.0;
        for (int j = 0; j < c; ++j) denom += std::exp(z[j] - zmax);
        double log_denom = std::log(denom);
        for (int j = 0; j < c; ++j)
            out.cache[static_cast<std::size_t>(row) * c + j] = std::exp(z[j] - zmax) / denom;
        int cls = out.classes[static_cast<std::size_t>(row)];
        out.value[static_cast<std::size_t>(row)] = log_denom - (z[cls] - zmax);
    }
    return push(std::move(out));
}

Tape::NodeId Tape::sigmoid_bce(NodeId logits, Tensor targets) {
    const Tensor& zv = value(logits);
    if (zv.ndim() != 2)
        shape_error("sigmoid_bce", "expected logits [N,K], got " + shape_string(zv.shape));
    if (!zv.same_shape(targets))
        shape_error("sigmoid_bce", "targets " + shape_string(targets.shape) +
                                       " must match logits " + shape_string(zv.shape));
    for (double t : targets.data)
        if (!(t >= 0.0 && t <= 1.0))
            throw ValidationError("sigmoid_bce: targets must lie in [0,1]");
    Node out;
    out.kind = OpKind::sigmoid_bce;
    out.inputs = {logits};
    out.needs_grad = node(logits).needs_grad;
    out.value = Tensor(zv.shape);
    out.cache = Tensor(zv.shape);  // sigmoid(z)
    for (std::size_t i = 0; i < zv.numel(); ++i) {
        double z = zv[i];
        double t = targets[i];
        out.cache[i] = 1.0 / (1.0 + std::exp(-z));
        out.value[i] = std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
    Node holder;  // targets ride along as a constant input for the backward pass
    holder.kind = OpKind::constant;
    holder.value = std::move(targets);
    holder.name = "bce_targets";
    NodeId tid = push(std::move(holder));
    out.inputs.push_back(tid);
    return push(std::move(out));
}

Tape::NodeId Tape::scale(NodeId x, double s) {
    const Tensor& xv = value(x);
    Node out;
    out.kind = OpKind::scale;
    out.inputs = {x};
    out.needs_grad = node(x).needs_grad;
    out.scalar = s;
    out.value = Tensor(xv.shape);
    for (std::size_t i = 0; i < xv.numel(); ++i) out.value[i] = s * xv[i];
    return push(std::move(out));
}

Tape::NodeId Tape::add_scalar(NodeId x, double c) {
    const Tensor& xv = value(x);
    Node out;
    out.kind = OpKind::add_scalar;
    out.inputs = {x};
    out.needs_grad = node(x).needs_grad;
    out.scalar = c;
    out.value = Tensor(xv.shape);
    for (std::size_t i = 0; i < xv.numel(); ++i) out.value[i] = xv[i] + c;
    return push(std::move(out));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv))
        shape_error("add", shape_string(av.shape) + " vs " + shape_string(bv.shape));
    Node out;
    out.kind = OpKind::add;
    out.inputs = {a, b};
    out.needs_grad = node(a).needs_grad || node(b).needs_grad;
    out.value = Tensor(av.shape);
    for (std::size_t i = 0; i < av.numel(); ++i) out.value[i] = av[i] + bv[i];
    return push(std::move(out));
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv))
        shape_error("mul", shape_string(av.shape) + " vs " + shape_string(bv.shape));
    Node out;
    out.kind = OpKind::mul;
    out.inputs = {a, b};
    out.needs_grad = node(a).needs_grad || node(b).needs_grad;
    out.value = Tensor(av.shape);
    for (std::size_t i = 0; i < av.numel(); ++i) out.value[i] = av[i] * bv[i];
    return push(std::move(out));
}

Tape::NodeId Tape::sum(NodeId x) {
    const Tensor& xv = value(x);
    double acc = 0.0;
    for (double v : xv.data) acc += v;
    Node out;
    out.kind = OpKind::sum;
    out.inputs = {x};
    out.needs_grad = node(x).needs_grad;
    out.value = Tensor::scalar(acc);
    return push(std::move(out));
}

Tape::NodeId Tape::mean(NodeId x) {
    const Tensor& xv = value(x);
    if (xv.numel() == 0) shape_error("mean", "empty input");
    double acc = 0.0;
    for (double v : xv.data) acc += v;
    Node out;
    out.kind = OpKind::mean;
    out.inputs = {x};
    out.needs_grad = node(x).needs_grad;
    out.value = Tensor::scalar(acc / static_cast<double>(xv.numel()));
    return push(std::move(out));
}

void Tape::ensure_grad(NodeId id) {
    Node& n = node(id);
    if (!n.grad_live) {
        n.grad = Tensor(n.value.shape);
        n.grad_live = true;
    }
}

void Tape::accumulate(NodeId id, const Tensor& g) {
    Node& n = node(id);
    if (!n.needs_grad) return;
    ensure_grad(id);
    for (std::size_t i = 0; i < g.numel(); ++i) n.grad[i] += g[i];
}

void Tape::backward(NodeId loss) {
    if (backward_done_) throw Error("backward() already ran on this tape");
    const Node& ln = node(loss);
    if (ln.value.numel() != 1)
        throw ShapeError("backward requires a scalar loss, got " + shape_string(ln.value.shape));
    backward_done_ = true;
    ensure_grad(loss);
    node(loss).grad[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
        Node& n = node(id);
        if (!n.grad_live || !n.needs_grad || n.inputs.empty()) continue;
        check_finite(n.grad, std::string("gradient of ") + op_name(static_cast<int>(n.kind)) +
                                 (n.name.empty() ? "" : " '" + n.name + "'"));
        backward_node(id);
    }
    // Leaves that never influenced the loss report zero gradients.
    for (Node& n : nodes_)
        if (n.kind == OpKind::leaf && !n.grad_live) {
            n.grad = Tensor(n.value.shape);
            n.grad_live = true;
        }
}

void Tape::backward_node(NodeId id) {
    Node& n = node(id);
    const Tensor& gy = n.grad;
    switch (n.kind) {
        case OpKind::dense: {
            NodeId x = n.inputs[0], w = n.inputs[1], b = n.inputs[2];
            const Tensor& xv = value(x);
            const Tensor& wv = value(w);
            int bn = xv.dim(0), i = xv.dim(1), o = wv.dim(1);
            Tensor gx({bn, i}), gw({i, o}), gb({o});
            bool wx = node(x).needs_grad, ww = node(w).needs_grad, wb = node(b).needs_grad;
            kernels::dense_backward(xv.data.data(), wv.data.data(), gy.data.data(),
                                    wx ? gx.data.data() : nullptr, ww ? gw.data.data() : nullptr,
                                    wb ? gb.data.data() : nullptr, bn, i, o);
            if (wx) accumulate(x, gx);
            if (ww) accumulate(w, gw);
            if (wb) accumulate(b, gb);
            break;
        }
        case OpKind::conv2d: {
            NodeId x = n.inputs[0], k = n.inputs[1], b = n.inputs[2];
            const Tensor& xv = value(x);
            const Tensor& kv = value(k);
            Tensor gx(xv.shape), gk(kv.shape), gb({n.conv.co});
            bool wx = node(x).needs_grad, wk = node(k).needs_grad, wb = node(b).needs_grad;
            kernels::conv2d_backward(xv.data.data(), kv.data.data(), gy.data.data(),
                                     wx ? gx.data.data() : nullptr, wk ? gk.data.data() : nullptr,
                                     wb ? gb.data.data() : nullptr, n.conv);
            if (wx) accumulate(x, gx);
            if (wk) accumulate(k, gk);
            if (wb) accumulate(b, gb);
            break;
        }
        case OpKind::relu: {
            const Tensor& xv = value(n.inputs[0]);
            Tensor gx(xv.shape);
            for (std::size_t i = 0; i < xv.numel(); ++i) gx[i] = xv[i] > 0 ? gy[i] : 0.0;
            accumulate(n.inputs[0], gx);
            break;
        }
        case OpKind::maxpool2: {
            const Tensor& xv = value(n.inputs[0]);
            Tensor gx(xv.shape);
            for (std::size_t i = 0; i < n.argmax.size(); ++i)
                gx[static_cast<std::size_t>(n.argmax[i])] += gy[i];
            accumulate(n.inputs[0], gx);
            break;
        }
        case OpKind::concat: {
            int rows = n.value.dim(0);
            int total = n.value.dim(1);
            int off = 0;
            for (NodeId in : n.inputs) {
                const Tensor& v = value(in);
                int f = v.dim(1);
                if (node(in).needs_grad) {
                    Tensor gx({rows, f});
                    for (int r = 0; r < rows; ++r)
                        for (int j = 0; j < f; ++j)
                            gx[static_cast<std::size_t>(r) * f + j] =
                                gy[static_cast<std::size_t>(r) * total + off + j];
                    accumulate(in, gx);
                }
                off += f;
            }
            break;
        }
        case OpKind::flatten: {
            const Tensor& xv = value(n.inputs[0]);
            Tensor gx(xv.shape, gy.data);
            accumulate(n.inputs[0], gx);
            break;
        }
        case OpKind::l2_distance: {
            NodeId u = n.inputs[0], v = n.inputs[1];
            const Tensor& uv = value(u);
            const Tensor& vv = value(v);
            int rows = uv.dim(0), d = uv.dim(1);
            Tensor gu(uv.shape), gv(vv.shape);
            for (int r = 0; r < rows; ++r) {
                double dist = n.value[static_cast<std::size_t>(r)];
                if (dist <= 0.0) continue;  // subgradient 0 at the kink
                double g = gy[static_cast<std::size_t>(r)] / dist;
                for (int j = 0; j < d; ++j) {
                    std::size_t idx = static_cast<std::size_t>(r) * d + j;
                    double diff = uv[idx] - vv[idx];
                    gu[idx] = g * diff;
                    gv[idx] = -g * diff;
                }
            }
            if (node(u).needs_grad) accumulate(u, gu);
            if (node(v).needs_grad) accumulate(v, gv);
            break;
        }
        case OpKind::softmax_xent: {
            NodeId z = n.inputs[0];
            const Tensor& zv = value(z);
            int rows = zv.dim(0), c = zv.dim(1);
            Tensor gz(zv.shape);
            for (int r = 0; r < rows; ++r) {
                double g = gy[static_cast<std::size_t>(r)];
                int cls = n.classes[static_cast<std::size_t>(r)];
                for (int j = 0; j < c; ++j) {
                    std::size_t idx = static_cast<std::size_t>(r) * c + j;
                    gz[idx] = g * (n.cache[idx] - (j == cls ? 1.0 : 0.0));
                }
            }
            accumulate(z, gz);
            break;
        }
        case OpKind::sigmoid_bce: {
            NodeId z = n.inputs[0];
            const Tensor& targets = value(n.inputs[1]);
            const Tensor& zv = value(z);
            Tensor gz(zv.shape);
            for (std::size_t i = 0; i < zv.numel(); ++i) gz[i] = gy[i] * (n.cache[i] - targets[i]);
            accumulate(z, gz);
            break;
        }
        case OpKind::scale: {
            const Tensor& xv = value(n.inputs[0]);
            Tensor gx(xv.shape);
            for (std::size_t i = 0; i < xv.numel(); ++i) gx[i] = n.scalar * gy[i];
            accumulate(n.inputs[0], gx);
            break;
        }
        case OpKind::add_scalar:
            accumulate(n.inputs[0], gy);
            break;
        case OpKind::add:
            if (node(n.inputs[0]).needs_grad) accumulate(n.inputs[0], gy);
            if (node(n.inputs[1]).needs_grad) accumulate(n.inputs[1], gy);
            break;
        case OpKind::mul: {
            NodeId a = n.inputs[0], b = n.inputs[1];
            if (node(a).needs_grad) {
                const Tensor& bv = value(b);
                Tensor ga(bv.shape);
                for (std::size_t i = 0; i < bv.numel(); ++i) ga[i] = gy[i] * bv[i];
                accumulate(a, ga);
            }
            if (node(b).needs_grad) {
                const Tensor& av = value(a);
                Tensor gb(av.shape);
                for (std::size_t i = 0; i < av.numel(); ++i) gb[i] = gy[i] * av[i];
                accumulate(b, gb);
            }
            break;
        }
        case OpKind::sum: {
            const Tensor& xv = value(n.inputs[0]);
            Tensor gx = Tensor::full(xv.shape, gy[0]);
            accumulate(n.inputs[0], gx);
            break;
        }
        case OpKind::mean: {
            const Tensor& xv = value(n.inputs[0]);
            Tensor gx = Tensor::full(xv.shape, gy[0] / static_cast<double>(xv.numel()));
            accumulate(n.inputs[0], gx);
            break;
        }
        case OpKind::leaf:
        case OpKind::constant:
            break;
    }
}

}  // namespace trackattr
