#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "hdrfuse/tensor.hpp"

namespace hdrfuse {
namespace ag {

// Runtime multiply-accumulate counters for the attention cores. Only the
// score and value products are counted; projections are ordinary linears.
struct MacCounter {
    std::uint64_t spatial_attention = 0;
    std::uint64_t channel_attention = 0;
};

// When false, ops do not record the graph (inference mode).
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    NoGradGuard() : saved(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = saved; }
    bool saved;
};

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad; // allocated on first backward touch
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backprop;

    void ensure_grad() {
        if (grad.numel() != value.numel()) grad = Tensor<T>(value.shape(), T(0));
    }
};

// Handle to a node in the dynamically recorded computation graph.
template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

    static Var constant(Tensor<T> value) {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(value);
        n->requires_grad = false;
        return Var(std::move(n));
    }

    static Var param(Tensor<T> value) {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(value);
        n->requires_grad = true;
        return Var(std::move(n));
    }

    bool defined() const { return node_ != nullptr; }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& mutable_value() { return node_->value; }
    const Tensor<T>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    std::shared_ptr<Node<T>> node() const { return node_; }

    void zero_grad() {
        if (node_) {
            node_->ensure_grad();
            node_->grad.fill(T(0));
        }
    }

    // Reverse-mode sweep from this node. `upstream` defaults to ones.
    void backward(const Tensor<T>* upstream = nullptr) const {
        if (!node_ || !node_->requires_grad)
            throw std::logic_error("backward() called on a value with no recorded forward state");
        if (upstream && upstream->shape() != node_->value.shape())
            throw std::invalid_argument("upstream gradient shape " + shape_str(upstream->shape()) +
                                        " does not match value shape " + shape_str(node_->value.shape()));

        // iterative post-order topological sort
        std::vector<Node<T>*> topo;
        std::unordered_set<Node<T>*> seen;
        std::vector<std::pair<Node<T>*, std::size_t>> stack;
        stack.push_back({node_.get(), 0});
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, idx] = stack.back();
            if (idx < n->parents.size()) {
                Node<T>* p = n->parents[idx++].get();
                if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
            } else {
                topo.push_back(n);
                stack.pop_back();
            }
        }

        // interior grads are per-sweep scratch; only leaves accumulate across sweeps
        for (Node<T>* n : topo)
            if (!n->parents.empty()) {
                n->ensure_grad();
                n->grad.fill(T(0));
            }
        node_->ensure_grad();
        if (upstream) {
            for (std::int64_t i = 0; i < node_->grad.numel(); ++i) node_->grad[i] += (*upstream)[i];
        } else {
            for (std::int64_t i = 0; i < node_->grad.numel(); ++i) node_->grad[i] += T(1);
        }
        for (auto it = topo.rbegin(); it != topo.rend(); ++it)
            if ((*it)->backprop) (*it)->backprop(**it);
    }

private:
    std::shared_ptr<Node<T>> node_;
};

namespace detail {

// C = A[m,k] * B[k,n], accumulating into C when acc is true.
template <typename T>
void mm_nn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n, bool acc) {
    if (!acc)
        for (std::int64_t i = 0; i < m * n; ++i) c[i] = T(0);
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t t = 0; t < k; ++t) {
            const T av = a[i * k + t];
            const T* brow = b + t * n;
            T* crow = c + i * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
}

// C = A[m,k] * B^T where B is [n,k].
template <typename T>
void mm_nt(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n, bool acc) {
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            T s = acc ? c[i * n + j] : T(0);
            const T* arow = a + i * k;
            const T* brow = b + j * k;
            for (std::int64_t t = 0; t < k; ++t) s += arow[t] * brow[t];
            c[i * n + j] = s;
        }
}

// C = A^T * B where A is [k,m], B is [k,n].
template <typename T>
void mm_tn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n, bool acc) {
    if (!acc)
        for (std::int64_t i = 0; i < m * n; ++i) c[i] = T(0);
    for (std::int64_t t = 0; t < k; ++t) {
        const T* arow = a + t * m;
        const T* brow = b + t * n;
        for (std::int64_t i = 0; i < m; ++i) {
            const T av = arow[i];
            T* crow = c + i * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void softmax_rows_inplace(T* s, std::int64_t rows, std::int64_t cols) {
    for (std::int64_t r = 0; r < rows; ++r) {
        T* row = s + r * cols;
        T mx = row[0];
        for (std::int64_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        T sum = T(0);
        for (std::int64_t j = 0; j < cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::int64_t j = 0; j < cols; ++j) row[j] /= sum;
    }
}

// dS = A .* (dA - rowsum(dA .* A)); operates in place on dA.
template <typename T>
void softmax_rows_backward_inplace(const T* a, T* da, std::int64_t rows, std::int64_t cols) {
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* arow = a + r * cols;
        T* drow = da + r * cols;
        T dot = T(0);
        for (std::int64_t j = 0; j < cols; ++j) dot += drow[j] * arow[j];
        for (std::int64_t j = 0; j < cols; ++j) drow[j] = arow[j] * (drow[j] - dot);
    }
}

template <typename T>
std::shared_ptr<Node<T>> make_op(Tensor<T> value, std::vector<Var<T>> inputs,
                                 std::function<void(Node<T>&)> backprop) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    bool req = false;
    if (grad_mode())
        for (const auto& v : inputs) req = req || v.requires_grad();
    n->requires_grad = req;
    if (req) {
        for (auto& v : inputs) n->parents.push_back(v.node());
        n->backprop = std::move(backprop);
    }
    return n;
}

template <typename T>
void accum(Node<T>& dst, const Tensor<T>& g) {
    dst.ensure_grad();
    for (std::int64_t i = 0; i < g.numel(); ++i) dst.grad[i] += g[i];
}

} // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    if (!a.value().same_shape(b.value()))
        throw std::invalid_argument("add shape mismatch: " + shape_str(a.value().shape()) + " vs " +
                                    shape_str(b.value().shape()));
    Tensor<T> out(a.value().shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
    auto an = a.node(), bn = b.node();
    return Var<T>(detail::make_op<T>(std::move(out), {a, b}, [an, bn](Node<T>& n) {
        if (an->requires_grad) detail::accum(*an, n.grad);
        if (bn->requires_grad) detail::accum(*bn, n.grad);
    }));
}

// a + alpha * b
template <typename T>
Var<T> add_scaled(const Var<T>& a, const Var<T>& b, T alpha) {
    if (!a.value().same_shape(b.value())) throw std::invalid_argument("add_scaled shape mismatch");
    Tensor<T> out(a.value().shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + alpha * b.value()[i];
    auto an = a.node(), bn = b.node();
    return Var<T>(detail::make_op<T>(std::move(out), {a, b}, [an, bn, alpha](Node<T>& n) {
        if (an->requires_grad) detail::accum(*an, n.grad);
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) bn->grad[i] += alpha * n.grad[i];
        }
    }));
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
    Tensor<T> out(a.value().shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * s;
    auto an = a.node();
    return Var<T>(detail::make_op<T>(std::move(out), {a}, [an, s](Node<T>& n) {
        an->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.numel(); ++i) an->grad[i] += s * n.grad[i];
    }));
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    Tensor<T> out = ops::matmul(a.value(), b.value());
    auto an = a.node(), bn = b.node();
    const std::int64_t m = a.value().dim(0), k = a.value().dim(1), n2 = b.value().dim(1);
    return Var<T>(detail::make_op<T>(std::move(out), {a, b}, [an, bn, m, k, n2](Node<T>& n) {
        if (an->requires_grad) {
            an->ensure_grad();
            detail::mm_nt(n.grad.data(), bn->value.data(), an->grad.data(), m, n2, k, true);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            detail::mm_tn(an->value.data(), n.grad.data(), bn->grad.data(), k, m, n2, true);
        }
    }));
}

// y = x * W^T + b with x [n,in], W [out,in], b [out]
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    const std::int64_t rows = x.value().dim(0), in = x.value().dim(1), out = w.value().dim(0);
    if (w.value().dim(1) != in || b.value().numel() != out)
        throw std::invalid_argument("linear shape mismatch: x " + shape_str(x.value().shape()) + " w " +
                                    shape_str(w.value().shape()));
    Tensor<T> y({rows, out});
    detail::mm_nt(x.value().data(), w.value().data(), y.data(), rows, in, out, false);
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t j = 0; j < out; ++j) y.at(r, j) += b.value()[j];
    auto xn = x.node(), wn = w.node(), bn = b.node();
    return Var<T>(detail::make_op<T>(std::move(y), {x, w, b}, [xn, wn, bn, rows, in, out](Node<T>& n) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            detail::mm_nn(n.grad.data(), wn->value.data(), xn->grad.data(), rows, out, in, true);
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            detail::mm_tn(n.grad.data(), xn->value.data(), wn->grad.data(), out, rows, in, true);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t j = 0; j < out; ++j) bn->grad[j] += n.grad.at(r, j);
        }
    }));
}

template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
    Tensor<T> y = x.value();
    detail::softmax_rows_inplace(y.data(), y.numel() / y.dim(y.rank() - 1), y.dim(y.rank() - 1));
    auto xn = x.node();
    auto saved = std::make_shared<Tensor<T>>(y);
    return Var<T>(detail::make_op<T>(std::move(y), {x}, [xn, saved](Node<T>& n) {
        xn->ensure_grad();
        const std::int64_t cols = saved->dim(saved->rank() - 1);
        const std::int64_t rows = saved->numel() / cols;
        Tensor<T> dx = n.grad;
        detail::softmax_rows_backward_inplace(saved->data(), dx.data(), rows, cols);
        detail::accum(*xn, dx);
    }));
}

// LayerNorm over the last axis.
template <typename T>
Var<T> layernorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
    const std::int64_t c = x.value().dim(x.value().rank() - 1);
    const std::int64_t rows = x.value().numel() / c;
    if (gamma.value().numel() != c || beta.value().numel() != c)
        throw std::invalid_argument("layernorm gamma/beta length must equal " + std::to_string(c));
    Tensor<T> y(x.value().shape());
    auto xhat = std::make_shared<Tensor<T>>(x.value().shape());
    auto invstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* xa = x.value().data() + r * c;
        T mean = T(0);
        for (std::int64_t i = 0; i < c; ++i) mean += xa[i];
        mean /= static_cast<T>(c);
        T var = T(0);
        for (std::int64_t i = 0; i < c; ++i) {
            const T d = xa[i] - mean;
            var += d * d;
        }
        var /= static_cast<T>(c);
        const T inv = T(1) / std::sqrt(var + eps);
        (*invstd)[static_cast<std::size_t>(r)] = inv;
        for (std::int64_t i = 0; i < c; ++i) {
            const T xh = (xa[i] - mean) * inv;
            (*xhat)[r * c + i] = xh;
            y[r * c + i] = xh * gamma.value()[i] + beta.value()[i];
        }
    }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    return Var<T>(detail::make_op<T>(std::move(y), {x, gamma, beta}, [xn, gn, bn, xhat, invstd, rows, c](Node<T>& n) {
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t i = 0; i < c; ++i) bn->grad[i] += n.grad[r * c + i];
        }
        if (gn->requires_grad) {
            gn->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t i = 0; i < c; ++i) gn->grad[i] += n.grad[r * c + i] * (*xhat)[r * c + i];
        }
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r) {
                T sum_dxh = T(0), sum_dxh_xh = T(0);
                for (std::int64_t i = 0; i < c; ++i) {
                    const T dxh = n.grad[r * c + i] * gn->value[i];
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * (*xhat)[r * c + i];
                }
                const T inv = (*invstd)[static_cast<std::size_t>(r)];
                for (std::int64_t i = 0; i < c; ++i) {
                    const T dxh = n.grad[r * c + i] * gn->value[i];
                    xn->grad[r * c + i] +=
                        inv * (dxh - sum_dxh / static_cast<T>(c) - (*xhat)[r * c + i] * sum_dxh_xh / static_cast<T>(c));
                }
            }
        }
    }));
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
    Tensor<T> y = ops::gelu(x.value());
    auto xn = x.node();
    return Var<T>(detail::make_op<T>(std::move(y), {x}, [xn](Node<T>& n) {
        xn->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
            const T v = xn->value[i];
            const T cdf = T(0.5) * (T(1) + std::erf(v * T(0.7071067811865475244)));
            const T pdf = std::exp(T(-0.5) * v * v) * T(0.3989422804014326779);
            xn->grad[i] += n.grad[i] * (cdf + v * pdf);
        }
    }));
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
    Tensor<T> y = ops::sigmoid(x.value());
    auto xn = x.node();
    auto saved = std::make_shared<Tensor<T>>(y);
    return Var<T>(detail::make_op<T>(std::move(y), {x}, [xn, saved](Node<T>& n) {
        xn->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
            const T s = (*saved)[i];
            xn->grad[i] += n.grad[i] * s * (T(1) - s);
        }
    }));
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::int64_t stride = 1, std::int64_t pad = 0) {
    Tensor<T> y = ops::conv2d(x.value(), w.value(), b.value(), stride, pad);
    auto xn = x.node(), wn = w.node(), bn = b.node();
    return Var<T>(detail::make_op<T>(std::move(y), {x, w, b}, [xn, wn, bn, stride, pad](Node<T>& n) {
        const auto& xv = xn->value;
        const auto& wv = wn->value;
        const std::int64_t ci = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
        const std::int64_t co = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
        const std::int64_t ho = n.value.dim(1), wo = n.value.dim(2);
        if (xn->requires_grad) xn->ensure_grad();
        if (wn->requires_grad) wn->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (std::int64_t oc = 0; oc < co; ++oc) {
            for (std::int64_t oy = 0; oy < ho; ++oy) {
                for (std::int64_t ox = 0; ox < wo; ++ox) {
                    const T g = n.grad.at(oc, oy, ox);
                    if (bn->requires_grad) bn->grad[oc] += g;
                    if (!xn->requires_grad && !wn->requires_grad) continue;
                    for (std::int64_t ic = 0; ic < ci; ++ic) {
                        for (std::int64_t ky = 0; ky < kh; ++ky) {
                            const std::int64_t iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= h) continue;
                            for (std::int64_t kx = 0; kx < kw; ++kx) {
                                const std::int64_t ix = ox * stride + kx - pad;
                                if (ix < 0 || ix >= wd) continue;
                                const std::int64_t widx = ((oc * ci + ic) * kh + ky) * kw + kx;
                                if (xn->requires_grad) xn->grad.at(ic, iy, ix) += wv[widx] * g;
                                if (wn->requires_grad) wn->grad[widx] += xv.at(ic, iy, ix) * g;
                            }
                        }
                    }
                }
            }
        }
    }));
}

// out[i] = x[index[i]]; index entries may repeat (reflect padding).
template <typename T>
Var<T> gather_flat(const Var<T>& x, std::shared_ptr<const std::vector<std::int64_t>> index, Shape out_shape) {
    if (static_cast<std::int64_t>(index->size()) != shape_numel(out_shape))
        throw std::invalid_argument("gather_flat index length does not match output shape");
    Tensor<T> y(std::move(out_shape));
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = x.value()[(*index)[static_cast<std::size_t>(i)]];
    auto xn = x.node();
    return Var<T>(detail::make_op<T>(std::move(y), {x}, [xn, index](Node<T>& n) {
        xn->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.numel(); ++i)
            xn->grad[(*index)[static_cast<std::size_t>(i)]] += n.grad[i];
    }));
}

// Column-range view of a [rows, cols] matrix.
template <typename T>
Var<T> slice_cols(const Var<T>& x, std::int64_t c0, std::int64_t c1) {
    const std::int64_t rows = x.value().dim(0), cols = x.value().dim(1);
    if (c0 < 0 || c1 > cols || c0 >= c1) throw std::invalid_argument("slice_cols range invalid");
    const std::int64_t w = c1 - c0;
    Tensor<T> y({rows, w});
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t j = 0; j < w; ++j) y.at(r, j) = x.value().at(r, c0 + j);
    auto xn = x.node();
    return Var<T>(detail::make_op<T>(std::move(y), {x}, [xn, rows, w, c0](Node<T>& n) {
        xn->ensure_grad();
        const std::int64_t cols2 = xn->value.dim(1);
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t j = 0; j < w; ++j) xn->grad[r * cols2 + c0 + j] += n.grad.at(r, j);
    }));
}

// Concatenate [rows, c_i] matrices along columns.
template <typename T>
Var<T> hstack(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw std::invalid_argument("hstack needs at least one part");
    const std::int64_t rows = parts[0].value().dim(0);
    std::int64_t cols = 0;
    for (const auto& p : parts) {
        if (p.value().rank() != 2 || p.value().dim(0) != rows) throw std::invalid_argument("hstack row mismatch");
        cols += p.value().dim(1);
    }
    Tensor<T> y({rows, cols});
    std::vector<std::int64_t> offsets;
    std::int64_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const std::int64_t w = p.value().dim(1);
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t j = 0; j < w; ++j) y.at(r, off + j) = p.value().at(r, j);
        off += w;
    }
    std::vector<std::shared_ptr<Node<T>>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    return Var<T>(detail::make_op<T>(std::move(y), parts, [nodes, offsets, rows, cols](Node<T>& n) {
        for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
            auto& pn = *nodes[pi];
            if (!pn.requires_grad) continue;
            pn.ensure_grad();
            const std::int64_t w = pn.value.dim(1);
            const std::int64_t o = offsets[pi];
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t j = 0; j < w; ++j) pn.grad[r * w + j] += n.grad[r * cols + o + j];
        }
    }));
}

// Multi-head self-attention over contiguous row blocks of `tokens_per_window`
// rows. q,k,v are [N, C] with N a multiple of tokens_per_window and C a
// multiple of heads. Scores are scaled by 1/sqrt(C/heads).
template <typename T>
Var<T> spatial_attention_core(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::int64_t tokens_per_window,
                              std::int64_t heads, MacCounter* macs = nullptr) {
    const std::int64_t n = q.value().dim(0), c = q.value().dim(1);
    if (!q.value().same_shape(k.value()) || !q.value().same_shape(v.value()))
        throw std::invalid_argument("attention q/k/v shape mismatch");
    if (n % tokens_per_window != 0) throw std::invalid_argument("token count not a multiple of the window size");
    if (c % heads != 0) throw std::invalid_argument("embedding dim not divisible by head count");
    const std::int64_t nw = n / tokens_per_window, tw = tokens_per_window, dh = c / heads;
    const T scl = T(1) / std::sqrt(static_cast<T>(dh));

    // attention maps saved per (window, head) for the backward pass
    auto attn = std::make_shared<std::vector<T>>(static_cast<std::size_t>(nw * heads * tw * tw));
    Tensor<T> out({n, c});
    std::vector<T> qh(static_cast<std::size_t>(tw * dh)), kh(qh.size()), vh(qh.size()), oh(qh.size());
    for (std::int64_t w = 0; w < nw; ++w) {
        for (std::int64_t hd = 0; hd < heads; ++hd) {
            const std::int64_t r0 = w * tw, c0 = hd * dh;
            for (std::int64_t r = 0; r < tw; ++r)
                for (std::int64_t j = 0; j < dh; ++j) {
                    qh[static_cast<std::size_t>(r * dh + j)] = q.value().at(r0 + r, c0 + j) * scl;
                    kh[static_cast<std::size_t>(r * dh + j)] = k.value().at(r0 + r, c0 + j);
                    vh[static_cast<std::size_t>(r * dh + j)] = v.value().at(r0 + r, c0 + j);
                }
            T* a = attn->data() + (w * heads + hd) * tw * tw;
            detail::mm_nt(qh.data(), kh.data(), a, tw, dh, tw, false);
            detail::softmax_rows_inplace(a, tw, tw);
            detail::mm_nn(a, vh.data(), oh.data(), tw, tw, dh, false);
            if (macs) macs->spatial_attention += static_cast<std::uint64_t>(2 * tw * tw * dh);
            for (std::int64_t r = 0; r < tw; ++r)
                for (std::int64_t j = 0; j < dh; ++j) out.at(r0 + r, c0 + j) = oh[static_cast<std::size_t>(r * dh + j)];
        }
    }

    auto qn = q.node(), kn = k.node(), vn = v.node();
    return Var<T>(detail::make_op<T>(std::move(out), {q, k, v}, [qn, kn, vn, attn, nw, tw, dh, heads, scl](Node<T>& nd) {
        const std::int64_t c2 = qn->value.dim(1);
        qn->ensure_grad();
        kn->ensure_grad();
        vn->ensure_grad();
        std::vector<T> gout(static_cast<std::size_t>(tw * dh)), vh(gout.size()), qh(gout.size()), kh(gout.size());
        std::vector<T> da(static_cast<std::size_t>(tw * tw)), tmp(gout.size());
        for (std::int64_t w = 0; w < nw; ++w) {
            for (std::int64_t hd = 0; hd < heads; ++hd) {
                const std::int64_t r0 = w * tw, c0 = hd * dh;
                const T* a = attn->data() + (w * heads + hd) * tw * tw;
                for (std::int64_t r = 0; r < tw; ++r)
                    for (std::int64_t j = 0; j < dh; ++j) {
                        gout[static_cast<std::size_t>(r * dh + j)] = nd.grad.at(r0 + r, c0 + j);
                        vh[static_cast<std::size_t>(r * dh + j)] = vn->value.at(r0 + r, c0 + j);
                        qh[static_cast<std::size_t>(r * dh + j)] = qn->value.at(r0 + r, c0 + j);
                        kh[static_cast<std::size_t>(r * dh + j)] = kn->value.at(r0 + r, c0 + j);
                    }
                // dV = A^T * dO
                detail::mm_tn(a, gout.data(), tmp.data(), tw, tw, dh, false);
                for (std::int64_t r = 0; r < tw; ++r)
                    for (std::int64_t j = 0; j < dh; ++j)
                        vn->grad[(r0 + r) * c2 + c0 + j] += tmp[static_cast<std::size_t>(r * dh + j)];
                // dA = dO * V^T, then softmax backward in place
                detail::mm_nt(gout.data(), vh.data(), da.data(), tw, dh, tw, false);
                detail::softmax_rows_backward_inplace(a, da.data(), tw, tw);
                // dQ = dS * K * scl
                detail::mm_nn(da.data(), kh.data(), tmp.data(), tw, tw, dh, false);
                for (std::int64_t r = 0; r < tw; ++r)
                    for (std::int64_t j = 0; j < dh; ++j)
                        qn->grad[(r0 + r) * c2 + c0 + j] += tmp[static_cast<std::size_t>(r * dh + j)] * scl;
                // dK = dS^T * Q * scl
                detail::mm_tn(da.data(), qh.data(), tmp.data(), tw, tw, dh, false);
                for (std::int64_t r = 0; r < tw; ++r)
                    for (std::int64_t j = 0; j < dh; ++j)
                        kn->grad[(r0 + r) * c2 + c0 + j] += tmp[static_cast<std::size_t>(r * dh + j)] * scl;
            }
        }
    }));
}

// Channel-wise cross-attention: q,k,v are [N, G] token matrices; the score
// matrix lives on the channel axis ((G/heads)^2 per head) and the output is
// v attended along channels. Scores scaled by 1/sqrt(G/heads).
template <typename T>
Var<T> channel_attention_core(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::int64_t heads,
                              MacCounter* macs = nullptr) {
    const std::int64_t n = q.value().dim(0), g = q.value().dim(1);
    if (!q.value().same_shape(k.value()) || !q.value().same_shape(v.value()))
        throw std::invalid_argument("attention q/k/v shape mismatch");
    if (g % heads != 0) throw std::invalid_argument("channel group not divisible by head count");
    const std::int64_t dh = g / heads;
    const T scl = T(1) / std::sqrt(static_cast<T>(dh));

    auto attn = std::make_shared<std::vector<T>>(static_cast<std::size_t>(heads * dh * dh));
    Tensor<T> out({n, g});
    for (std::int64_t hd = 0; hd < heads; ++hd) {
        const std::int64_t c0 = hd * dh;
        T* a = attn->data() + hd * dh * dh;
        // S[i][j] = scl * sum_t q[t][c0+i] * k[t][c0+j]
        for (std::int64_t i = 0; i < dh; ++i)
            for (std::int64_t j = 0; j < dh; ++j) {
                T s = T(0);
                for (std::int64_t t = 0; t < n; ++t) s += q.value().at(t, c0 + i) * k.value().at(t, c0 + j);
                a[i * dh + j] = s * scl;
            }
        detail::softmax_rows_inplace(a, dh, dh);
        // out[t][c0+i] = sum_j A[i][j] * v[t][c0+j]
        for (std::int64_t t = 0; t < n; ++t)
            for (std::int64_t i = 0; i < dh; ++i) {
                T s = T(0);
                for (std::int64_t j = 0; j < dh; ++j) s += a[i * dh + j] * v.value().at(t, c0 + j);
                out.at(t, c0 + i) = s;
            }
        if (macs) macs->channel_attention += static_cast<std::uint64_t>(2 * dh * dh * n);
    }

    auto qn = q.node(), kn = k.node(), vn = v.node();
    return Var<T>(detail::make_op<T>(std::move(out), {q, k, v}, [qn, kn, vn, attn, n, dh, heads, scl](Node<T>& nd) {
        const std::int64_t g2 = qn->value.dim(1);
        qn->ensure_grad();
        kn->ensure_grad();
        vn->ensure_grad();
        std::vector<T> da(static_cast<std::size_t>(dh * dh));
        for (std::int64_t hd = 0; hd < heads; ++hd) {
            const std::int64_t c0 = hd * dh;
            const T* a = attn->data() + hd * dh * dh;
            // dV[t][c0+j] += sum_i A[i][j] * dO[t][c0+i]
            for (std::int64_t t = 0; t < n; ++t)
                for (std::int64_t j = 0; j < dh; ++j) {
                    T s = T(0);
                    for (std::int64_t i = 0; i < dh; ++i) s += a[i * dh + j] * nd.grad.at(t, c0 + i);
                    vn->grad[t * g2 + c0 + j] += s;
                }
            // dA[i][j] = sum_t dO[t][c0+i] * v[t][c0+j]
            for (std::int64_t i = 0; i < dh; ++i)
                for (std::int64_t j = 0; j < dh; ++j) {
                    T s = T(0);
                    for (std::int64_t t = 0; t < n; ++t) s += nd.grad.at(t, c0 + i) * vn->value.at(t, c0 + j);
                    da[static_cast<std::size_t>(i * dh + j)] = s;
                }
            detail::softmax_rows_backward_inplace(a, da.data(), dh, dh);
            // dq[t][c0+i] += scl * sum_j dS[i][j] * k[t][c0+j]
            // dk[t][c0+j] += scl * sum_i dS[i][j] * q[t][c0+i]
            for (std::int64_t t = 0; t < n; ++t) {
                for (std::int64_t i = 0; i < dh; ++i) {
                    T s = T(0);
                    for (std::int64_t j = 0; j < dh; ++j) s += da[static_cast<std::size_t>(i * dh + j)] * kn->value.at(t, c0 + j);
                    qn->grad[t * g2 + c0 + i] += s * scl;
                }
                for (std::int64_t j = 0; j < dh; ++j) {
                    T s = T(0);
                    for (std::int64_t i = 0; i < dh; ++i) s += da[static_cast<std::size_t>(i * dh + j)] * qn->value.at(t, c0 + i);
                    kn->grad[t * g2 + c0 + j] += s * scl;
                }
            }
        }
    }));
}

// mu-law tone map, elementwise; expects x >= 0.
template <typename T>
Var<T> mu_law_map(const Var<T>& x, T mu) {
    const T lg = std::log1p(mu);
    Tensor<T> y(x.value().shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = std::log1p(mu * x.value()[i]) / lg;
    auto xn = x.node();
    return Var<T>(detail::make_op<T>(std::move(y), {x}, [xn, mu, lg](Node<T>& n) {
        xn->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.numel(); ++i)
            xn->grad[i] += n.grad[i] * mu / ((T(1) + mu * xn->value[i]) * lg);
    }));
}

// mean |x - target| against a fixed target; scalar output.
template <typename T>
Var<T> l1_vs_const(const Var<T>& x, Tensor<T> target) {
    if (!x.value().same_shape(target))
        throw std::invalid_argument("l1 shape mismatch: " + shape_str(x.value().shape()) + " vs " +
                                    shape_str(target.shape()));
    const std::int64_t n = x.value().numel();
    T acc = T(0);
    for (std::int64_t i = 0; i < n; ++i) acc += std::abs(x.value()[i] - target[i]);
    Tensor<T> y({1});
    y[0] = acc / static_cast<T>(n);
    auto xn = x.node();
    auto tgt = std::make_shared<Tensor<T>>(std::move(target));
    return Var<T>(detail::make_op<T>(std::move(y), {x}, [xn, tgt, n](Node<T>& nd) {
        xn->ensure_grad();
        const T g = nd.grad[0] / static_cast<T>(n);
        for (std::int64_t i = 0; i < n; ++i) {
            const T d = xn->value[i] - (*tgt)[i];
            xn->grad[i] += d > T(0) ? g : (d < T(0) ? -g : T(0));
        }
    }));
}

// Per-token MLP: linear, gelu, linear.
template <typename T>
Var<T> mlp(const Var<T>& x, const Var<T>& w1, const Var<T>& b1, const Var<T>& w2, const Var<T>& b2) {
    return linear(gelu(linear(x, w1, b1)), w2, b2);
}

} // namespace ag
} // namespace hdrfuse
