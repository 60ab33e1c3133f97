#pragma once
// Define-by-run reverse-mode autodiff on dense row-major tensors.
//
// Every op builds a fresh graph node holding its forward value and a backprop
// closure; backward() topologically sorts the DAG from a scalar root and runs
// each closure exactly once, accumulating gradients (so d(x+x)/dx == 2).
// The scalar type is a template parameter: float is the production type,
// double is instantiated by tests for finite-difference gradient checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "phasebeat/common.hpp"

namespace phasebeat {

namespace detail {

template <typename S>
struct tnode {
    std::vector<std::int64_t> shape;
    std::vector<S> value;
    std::vector<S> grad;  // sized lazily; empty means "no gradient yet"
    bool requires_grad = false;
    std::vector<std::shared_ptr<tnode>> parents;
    std::function<void(tnode&)> backprop;  // reads this->grad, accumulates into parents
    std::size_t visits = 0;                // times processed by the last backward()

    std::int64_t numel() const {
        std::int64_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }
    void ensure_grad() {
        if (grad.empty()) grad.assign(static_cast<std::size_t>(numel()), S(0));
    }
};

}  // namespace detail

// Graph construction can be globally disabled (inference / cached stage inputs):
// ops executed under no_grad_guard produce constant leaves.
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

struct no_grad_guard {
    bool prev;
    no_grad_guard() : prev(grad_mode()) { grad_mode() = false; }
    ~no_grad_guard() { grad_mode() = prev; }
};

template <typename S>
class tensor;

// Named parameters in a fixed serialization order.
template <typename S>
using param_list = std::vector<std::pair<std::string, tensor<S>>>;

template <typename S>
class tensor {
  public:
    using node = detail::tnode<S>;
    using shape_t = std::vector<std::int64_t>;

    tensor() = default;

    static tensor zeros(shape_t shape, bool requires_grad = false) {
        return filled(std::move(shape), S(0), requires_grad);
    }
    static tensor filled(shape_t shape, S v, bool requires_grad = false) {
        auto n = std::make_shared<node>();
        n->shape = std::move(shape);
        n->value.assign(static_cast<std::size_t>(n->numel()), v);
        n->requires_grad = requires_grad;
        return tensor(std::move(n));
    }
    static tensor from(shape_t shape, std::vector<S> data, bool requires_grad = false) {
        auto n = std::make_shared<node>();
        n->shape = std::move(shape);
        require(static_cast<std::int64_t>(data.size()) == n->numel(),
                "tensor::from: data size does not match shape");
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return tensor(std::move(n));
    }
    static tensor scalar(S v, bool requires_grad = false) {
        return from({1}, {v}, requires_grad);
    }

    bool defined() const { return static_cast<bool>(n_); }
    const shape_t& shape() const { return n_->shape; }
    std::int64_t numel() const { return n_->numel(); }
    bool requires_grad() const { return n_->requires_grad; }
    // Takes effect for operations built after the call.
    void requires_grad(bool v) { n_->requires_grad = v; }

    const std::vector<S>& value() const { return n_->value; }
    // Mutable access is for leaves (parameter updates, test perturbations);
    // mutating an interior node invalidates the recorded forward pass.
    std::vector<S>& value_mut() { return n_->value; }

    const std::vector<S>& grad() const { return n_->grad; }
    void zero_grad() { n_->grad.clear(); }

    S item() const {
        require(numel() == 1, "tensor::item: tensor is not scalar");
        return n_->value[0];
    }

    // Reverse-mode sweep from a scalar root. Gradients accumulate into any
    // pre-existing grad buffers, which is what batch accumulation relies on.
    void backward() const {
        require(numel() == 1, "backward: root must be scalar");
        std::vector<node*> order;
        std::unordered_set<node*> seen;
        std::vector<std::pair<node*, std::size_t>> stack;
        stack.emplace_back(n_.get(), 0);
        seen.insert(n_.get());
        while (!stack.empty()) {
            auto& [cur, idx] = stack.back();
            if (idx < cur->parents.size()) {
                node* p = cur->parents[idx++].get();
                if (p->requires_grad && !seen.count(p)) {
                    seen.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(cur);
                stack.pop_back();
            }
        }
        for (node* n : order) n->visits = 0;
        n_->ensure_grad();
        n_->grad[0] += S(1);
        // order is post-order (parents before children); reverse it so each
        // node's grad is complete before its backprop fires.
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            node* n = *it;
            n->visits++;
            if (n->backprop) n->backprop(*n);
        }
    }

    std::size_t backward_visits() const { return n_->visits; }
    const std::shared_ptr<node>& impl() const { return n_; }

    explicit tensor(std::shared_ptr<node> n) : n_(std::move(n)) {}

  private:
    std::shared_ptr<node> n_;
};

namespace detail {

// Builds an op node. When grad mode is off or no parent needs gradients the
// node is a constant leaf and the closure is dropped.
template <typename S>
tensor<S> make_op(std::vector<std::int64_t> shape, std::vector<S> value,
                  std::vector<tensor<S>> parents,
                  std::function<void(tnode<S>&)> backprop) {
    auto n = std::make_shared<tnode<S>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool need = false;
    if (grad_mode()) {
        for (const auto& p : parents) need = need || p.requires_grad();
    }
    if (need) {
        n->requires_grad = true;
        for (auto& p : parents) n->parents.push_back(p.impl());
        n->backprop = std::move(backprop);
    }
    return tensor<S>(std::move(n));
}

inline std::vector<std::int64_t> row_major_strides(const std::vector<std::int64_t>& shape) {
    std::vector<std::int64_t> st(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
        st[static_cast<std::size_t>(i)] = st[static_cast<std::size_t>(i) + 1] * shape[static_cast<std::size_t>(i) + 1];
    return st;
}

// Right-aligned broadcast: each dimension must match or be 1.
inline std::vector<std::int64_t> broadcast_shape(const std::vector<std::int64_t>& a,
                                                 const std::vector<std::int64_t>& b) {
    const std::size_t r = std::max(a.size(), b.size());
    std::vector<std::int64_t> out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const std::int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const std::int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        require(da == db || da == 1 || db == 1, "broadcast: incompatible shapes");
        out[i] = std::max(da, db);
    }
    return out;
}

// Strides into the (rank-aligned) input for each output dimension; 0 where the
// input is broadcast along that dimension.
inline std::vector<std::int64_t> broadcast_strides(const std::vector<std::int64_t>& in,
                                                   const std::vector<std::int64_t>& out) {
    std::vector<std::int64_t> aligned(out.size(), 1);
    std::copy(in.begin(), in.end(), aligned.begin() + (out.size() - in.size()));
    auto st = row_major_strides(aligned);
    for (std::size_t i = 0; i < out.size(); ++i)
        if (aligned[i] == 1 && out[i] != 1) st[i] = 0;
    return st;
}

// Walks an output shape while tracking linear offsets into two broadcast inputs.
template <typename Fn>
void broadcast_walk(const std::vector<std::int64_t>& out_shape,
                    const std::vector<std::int64_t>& sa,
                    const std::vector<std::int64_t>& sb, Fn&& fn) {
    const std::size_t r = out_shape.size();
    std::vector<std::int64_t> coord(r, 0);
    std::int64_t total = 1;
    for (auto d : out_shape) total *= d;
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t o = 0; o < total; ++o) {
        fn(o, ia, ib);
        for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
            auto ud = static_cast<std::size_t>(d);
            ++coord[ud];
            ia += sa[ud];
            ib += sb[ud];
            if (coord[ud] < out_shape[ud]) break;
            ia -= sa[ud] * out_shape[ud];
            ib -= sb[ud] * out_shape[ud];
            coord[ud] = 0;
        }
    }
}

template <typename S>
tensor<S> binary_broadcast(const tensor<S>& a, const tensor<S>& b,
                           S (*f)(S, S), S (*dfa)(S, S), S (*dfb)(S, S)) {
    auto out_shape = broadcast_shape(a.shape(), b.shape());
    auto sa = broadcast_strides(a.shape(), out_shape);
    auto sb = broadcast_strides(b.shape(), out_shape);
    std::int64_t total = 1;
    for (auto d : out_shape) total *= d;
    std::vector<S> out(static_cast<std::size_t>(total));
    const auto& av = a.value();
    const auto& bv = b.value();
    broadcast_walk(out_shape, sa, sb, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
        out[static_cast<std::size_t>(o)] = f(av[static_cast<std::size_t>(ia)], bv[static_cast<std::size_t>(ib)]);
    });
    return make_op<S>(
        out_shape, std::move(out), {a, b},
        [out_shape, sa, sb, dfa, dfb](tnode<S>& n) {
            auto& pa = *n.parents[0];
            auto& pb = *n.parents[1];
            if (pa.requires_grad) pa.ensure_grad();
            if (pb.requires_grad) pb.ensure_grad();
            broadcast_walk(out_shape, sa, sb, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
                const S g = n.grad[static_cast<std::size_t>(o)];
                const S va = pa.value[static_cast<std::size_t>(ia)];
                const S vb = pb.value[static_cast<std::size_t>(ib)];
                if (pa.requires_grad) pa.grad[static_cast<std::size_t>(ia)] += g * dfa(va, vb);
                if (pb.requires_grad) pb.grad[static_cast<std::size_t>(ib)] += g * dfb(va, vb);
            });
        });
}

// Elementwise unary op from value/derivative functions of the input value.
template <typename S>
tensor<S> unary_map(const tensor<S>& a, S (*f)(S), S (*df)(S)) {
    std::vector<S> out(a.value().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.value()[i]);
    return make_op<S>(
        a.shape(), std::move(out), {a},
        [df](tnode<S>& n) {
            auto& p = *n.parents[0];
            p.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                p.grad[i] += n.grad[i] * df(p.value[i]);
        });
}

}  // namespace detail

// ---- elementwise arithmetic -------------------------------------------------

template <typename S>
tensor<S> add(const tensor<S>& a, const tensor<S>& b) {
    return detail::binary_broadcast<S>(
        a, b, [](S x, S y) { return x + y; }, [](S, S) { return S(1); },
        [](S, S) { return S(1); });
}

template <typename S>
tensor<S> sub(const tensor<S>& a, const tensor<S>& b) {
    return detail::binary_broadcast<S>(
        a, b, [](S x, S y) { return x - y; }, [](S, S) { return S(1); },
        [](S, S) { return S(-1); });
}

template <typename S>
tensor<S> mul(const tensor<S>& a, const tensor<S>& b) {
    return detail::binary_broadcast<S>(
        a, b, [](S x, S y) { return x * y; }, [](S, S y) { return y; },
        [](S x, S) { return x; });
}

template <typename S>
tensor<S> div(const tensor<S>& a, const tensor<S>& b) {
    return detail::binary_broadcast<S>(
        a, b, [](S x, S y) { return x / y; }, [](S, S y) { return S(1) / y; },
        [](S x, S y) { return -x / (y * y); });
}

template <typename S>
tensor<S> scale(const tensor<S>& a, S c) {
    std::vector<S> out(a.value());
    for (auto& v : out) v *= c;
    return detail::make_op<S>(a.shape(), std::move(out), {a}, [c](detail::tnode<S>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * c;
    });
}

template <typename S>
tensor<S> add_scalar(const tensor<S>& a, S c) {
    std::vector<S> out(a.value());
    for (auto& v : out) v += c;
    return detail::make_op<S>(a.shape(), std::move(out), {a}, [](detail::tnode<S>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    });
}

template <typename S>
tensor<S> neg(const tensor<S>& a) { return scale(a, S(-1)); }

template <typename S>
tensor<S> square(const tensor<S>& a) {
    return detail::unary_map<S>(a, [](S x) { return x * x; }, [](S x) { return S(2) * x; });
}

template <typename S>
tensor<S> sqrt_t(const tensor<S>& a) {
    return detail::unary_map<S>(
        a, [](S x) { return S(std::sqrt(double(x))); },
        [](S x) { return S(0.5) / S(std::sqrt(double(x))); });
}

template <typename S>
tensor<S> abs_t(const tensor<S>& a) {
    return detail::unary_map<S>(
        a, [](S x) { return x < S(0) ? -x : x; },
        [](S x) { return x < S(0) ? S(-1) : S(1); });
}

template <typename S>
tensor<S> sigmoid(const tensor<S>& a) {
    return detail::unary_map<S>(
        a,
        [](S x) {
            const double v = 1.0 / (1.0 + std::exp(-double(x)));
            return S(v);
        },
        [](S x) {
            const double v = 1.0 / (1.0 + std::exp(-double(x)));
            return S(v * (1.0 - v));
        });
}

// hardswish(x) = x * clamp(x + 3, 0, 6) / 6; derivative 0 below -3, 1 above 3,
// (2x + 3)/6 in between.
template <typename S>
tensor<S> hardswish(const tensor<S>& a) {
    return detail::unary_map<S>(
        a,
        [](S x) {
            const S r = std::clamp(x + S(3), S(0), S(6));
            return x * r / S(6);
        },
        [](S x) {
            if (x <= S(-3)) return S(0);
            if (x >= S(3)) return S(1);
            return (S(2) * x + S(3)) / S(6);
        });
}

// ---- reductions and shape ops -----------------------------------------------

template <typename S>
tensor<S> sum(const tensor<S>& a) {
    S acc = S(0);
    for (S v : a.value()) acc += v;
    return detail::make_op<S>({1}, {acc}, {a}, [](detail::tnode<S>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (auto& g : p.grad) g += n.grad[0];
    });
}

template <typename S>
tensor<S> mean(const tensor<S>& a) {
    return scale(sum(a), S(1) / S(a.numel()));
}

template <typename S>
tensor<S> reshape(const tensor<S>& a, std::vector<std::int64_t> shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    require(n == a.numel(), "reshape: element count mismatch");
    std::vector<S> out(a.value());
    return detail::make_op<S>(std::move(shape), std::move(out), {a}, [](detail::tnode<S>& n_) {
        auto& p = *n_.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n_.grad.size(); ++i) p.grad[i] += n_.grad[i];
    });
}

// Contiguous slice along axis 0.
template <typename S>
tensor<S> slice0(const tensor<S>& a, std::int64_t start, std::int64_t len) {
    require(start >= 0 && len > 0 && start + len <= a.shape()[0], "slice0: out of range");
    std::int64_t inner = 1;
    for (std::size_t i = 1; i < a.shape().size(); ++i) inner *= a.shape()[i];
    std::vector<S> out(static_cast<std::size_t>(len * inner));
    std::copy_n(a.value().begin() + start * inner, len * inner, out.begin());
    auto shape = a.shape();
    shape[0] = len;
    return detail::make_op<S>(std::move(shape), std::move(out), {a},
                              [start, inner](detail::tnode<S>& n) {
                                  auto& p = *n.parents[0];
                                  p.ensure_grad();
                                  for (std::size_t i = 0; i < n.grad.size(); ++i)
                                      p.grad[static_cast<std::size_t>(start * inner) + i] += n.grad[i];
                              });
}

// Mean of the entries at the given (constant) flat indices; duplicates allowed.
template <typename S>
tensor<S> gather_mean(const tensor<S>& a, std::vector<std::int64_t> idx) {
    require(!idx.empty(), "gather_mean: empty index set");
    S acc = S(0);
    for (auto i : idx) {
        require(i >= 0 && i < a.numel(), "gather_mean: index out of range");
        acc += a.value()[static_cast<std::size_t>(i)];
    }
    acc /= S(idx.size());
    const S w = S(1) / S(idx.size());
    return detail::make_op<S>({1}, {acc}, {a}, [idx = std::move(idx), w](detail::tnode<S>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (auto i : idx) p.grad[static_cast<std::size_t>(i)] += n.grad[0] * w;
    });
}

// ---- axis reductions used by the attention and head blocks -------------------

// [C,T,H,W] -> [C,T] spatial mean.
template <typename S>
tensor<S> mean_hw(const tensor<S>& a) {
    require(a.shape().size() == 4, "mean_hw: expects rank-4 input");
    const auto C = a.shape()[0], T = a.shape()[1], H = a.shape()[2], W = a.shape()[3];
    const std::int64_t hw = H * W;
    std::vector<S> out(static_cast<std::size_t>(C * T), S(0));
    const auto& v = a.value();
    for (std::int64_t ct = 0; ct < C * T; ++ct) {
        S acc = S(0);
        for (std::int64_t i = 0; i < hw; ++i) acc += v[static_cast<std::size_t>(ct * hw + i)];
        out[static_cast<std::size_t>(ct)] = acc / S(hw);
    }
    return detail::make_op<S>({C, T}, std::move(out), {a}, [hw](detail::tnode<S>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        const S w = S(1) / S(hw);
        for (std::size_t ct = 0; ct < n.grad.size(); ++ct)
            for (std::int64_t i = 0; i < hw; ++i)
                p.grad[ct * static_cast<std::size_t>(hw) + static_cast<std::size_t>(i)] += n.grad[ct] * w;
    });
}

// [C,T,H,W] -> [C,T] spatial max; gradient routes to the first maximum in scan order.
template <typename S>
tensor<S> max_hw(const tensor<S>& a) {
    require(a.shape().size() == 4, "max_hw: expects rank-4 input");
    const auto C = a.shape()[0], T = a.shape()[1], H = a.shape()[2], W = a.shape()[3];
    const std::int64_t hw = H * W;
    std::vector<S> out(static_cast<std::size_t>(C * T));
    std::vector<std::int64_t> arg(static_cast<std::size_t>(C * T));
    const auto& v = a.value();
    for (std::int64_t ct = 0; ct < C * T; ++ct) {
        std::int64_t best = 0;
        S bv = v[static_cast<std::size_t>(ct * hw)];
        for (std::int64_t i = 1; i < hw; ++i) {
            const S x = v[static_cast<std::size_t>(ct * hw + i)];
            if (x > bv) { bv = x; best = i; }
        }
        out[static_cast<std::size_t>(ct)] = bv;
        arg[static_cast<std::size_t>(ct)] = ct * hw + best;
    }
    return detail::make_op<S>({C, T}, std::move(out), {a}, [arg = std::move(arg)](detail::tnode<S>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t ct = 0; ct < n.grad.size(); ++ct)
            p.grad[static_cast<std::size_t>(arg[ct])] += n.grad[ct];
    });
}

// [C,T,H,W] -> [C,1,H,W] temporal mean.
template <typename S>
tensor<S> mean_over_t(const tensor<S>& a) {
    require(a.shape().size() == 4, "mean_over_t: expects rank-4 input");
    const auto C = a.shape()[0], T = a.shape()[1], H = a.shape()[2], W = a.shape()[3];
    const std::int64_t hw = H * W;
    std::vector<S> out(static_cast<std::size_t>(C * hw), S(0));
    const auto& v = a.value();
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t t = 0; t < T; ++t)
            for (std::int64_t i = 0; i < hw; ++i)
                out[static_cast<std::size_t>(c * hw + i)] += v[static_cast<std::size_t>((c * T + t) * hw + i)];
    for (auto& x : out) x /= S(T);
    return detail::make_op<S>({C, 1, H, W}, std::move(out), {a}, [T, hw](detail::tnode<S>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        const auto C = n.shape[0];
        const S w = S(1) / S(T);
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t t = 0; t < T; ++t)
                for (std::int64_t i = 0; i < hw; ++i)
                    p.grad[static_cast<std::size_t>((c * T + t) * hw + i)] +=
                        n.grad[static_cast<std::size_t>(c * hw + i)] * w;
    });
}

// [C,T] -> [C] temporal mean (global average pooling over time).
template <typename S>
tensor<S> gap_time(const tensor<S>& a) {
    require(a.shape().size() == 2, "gap_time: expects rank-2 input");
    const auto C = a.shape()[0], T = a.shape()[1];
    std::vector<S> out(static_cast<std::size_t>(C), S(0));
    for (std::int64_t c = 0; c < C; ++c) {
        S acc = S(0);
        for (std::int64_t t = 0; t < T; ++t) acc += a.value()[static_cast<std::size_t>(c * T + t)];
        out[static_cast<std::size_t>(c)] = acc / S(T);
    }
    return detail::make_op<S>({C}, std::move(out), {a}, [T](detail::tnode<S>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        const S w = S(1) / S(T);
        for (std::size_t c = 0; c < n.grad.size(); ++c)
            for (std::int64_t t = 0; t < T; ++t)
                p.grad[c * static_cast<std::size_t>(T) + static_cast<std::size_t>(t)] += n.grad[c] * w;
    });
}

// ---- softmax and scalar losses ------------------------------------------------

// Numerically stable softmax along the given axis.
template <typename S>
tensor<S> softmax(const tensor<S>& a, std::size_t axis) {
    const auto& shape = a.shape();
    require(axis < shape.size(), "softmax: axis out of range");
    const auto strides = detail::row_major_strides(shape);
    const std::int64_t n_axis = shape[axis];
    const std::int64_t stride = strides[axis];
    const std::int64_t total = a.numel();
    const std::int64_t lanes = total / n_axis;
    std::vector<S> out(static_cast<std::size_t>(total));
    const auto& v = a.value();
    // Enumerate lanes: all index combinations with the axis coordinate zero.
    std::vector<std::int64_t> lane_base(static_cast<std::size_t>(lanes));
    {
        std::int64_t li = 0;
        for (std::int64_t flat = 0; flat < total; ++flat) {
            const std::int64_t coord = (flat / stride) % n_axis;
            if (coord == 0) lane_base[static_cast<std::size_t>(li++)] = flat;
        }
    }
    for (auto base : lane_base) {
        double mx = -1e300;
        for (std::int64_t k = 0; k < n_axis; ++k)
            mx = std::max(mx, double(v[static_cast<std::size_t>(base + k * stride)]));
        double z = 0;
        for (std::int64_t k = 0; k < n_axis; ++k)
            z += std::exp(double(v[static_cast<std::size_t>(base + k * stride)]) - mx);
        for (std::int64_t k = 0; k < n_axis; ++k)
            out[static_cast<std::size_t>(base + k * stride)] =
                S(std::exp(double(v[static_cast<std::size_t>(base + k * stride)]) - mx) / z);
    }
    std::vector<S> saved = out;
    return detail::make_op<S>(
        shape, std::move(out), {a},
        [lane_base = std::move(lane_base), saved = std::move(saved), n_axis, stride](detail::tnode<S>& n) {
            auto& p = *n.parents[0];
            p.ensure_grad();
            for (auto base : lane_base) {
                S dot = S(0);
                for (std::int64_t k = 0; k < n_axis; ++k) {
                    const auto i = static_cast<std::size_t>(base + k * stride);
                    dot += n.grad[i] * saved[i];
                }
                for (std::int64_t k = 0; k < n_axis; ++k) {
                    const auto i = static_cast<std::size_t>(base + k * stride);
                    p.grad[i] += saved[i] * (n.grad[i] - dot);
                }
            }
        });
}

// Huber penalty of a scalar prediction against a constant target:
// 0.5 d^2 for |d| < delta, else delta * (|d| - delta/2).
template <typename S>
tensor<S> huber(const tensor<S>& pred, S target, S delta) {
    require(pred.numel() == 1, "huber: expects scalar prediction");
    const S d = pred.value()[0] - target;
    const S ad = d < S(0) ? -d : d;
    const S v = ad < delta ? S(0.5) * d * d : delta * (ad - S(0.5) * delta);
    return detail::make_op<S>({1}, {v}, {pred}, [target, delta](detail::tnode<S>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        const S d = p.value[0] - target;
        const S ad = d < S(0) ? -d : d;
        const S dd = ad < delta ? d : (d < S(0) ? -delta : delta);
        p.grad[0] += n.grad[0] * dd;
    });
}

// L2 norm as a composition: sqrt(sum(square(x))).
template <typename S>
tensor<S> l2_norm(const tensor<S>& a) {
    return sqrt_t(sum(square(a)));
}

}  // namespace phasebeat
