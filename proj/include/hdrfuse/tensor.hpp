#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdrfuse {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

// Dense row-major N-d array. T is float on the training path and double on
// the verification path; everything downstream is templated on it.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0))
        : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {
        check_shape();
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_))
            throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_str(shape_));
    }

    const Shape& shape() const { return shape_; }
    std::int64_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const { return shape_.size(); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    T operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    T& at(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
    T at(std::int64_t i, std::int64_t j) const { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
    T& at(std::int64_t c, std::int64_t y, std::int64_t x) {
        return data_[static_cast<std::size_t>((c * shape_[1] + y) * shape_[2] + x)];
    }
    T at(std::int64_t c, std::int64_t y, std::int64_t x) const {
        return data_[static_cast<std::size_t>((c * shape_[1] + y) * shape_[2] + x)];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
        return out;
    }

private:
    void check_shape() const {
        for (auto d : shape_)
            if (d <= 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape_));
    }

    Shape shape_;
    std::vector<T> data_;
};

namespace ops {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul dimension mismatch: " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> c({m, n}, T(0));
    for (std::int64_t i = 0; i < m; ++i) {
        const T* arow = a.data() + i * k;
        T* crow = c.data() + i * n;
        for (std::int64_t t = 0; t < k; ++t) {
            const T av = arow[t];
            const T* brow = b.data() + t * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    if (a.rank() != 2) throw std::invalid_argument("transpose expects a 2-d tensor, got " + shape_str(a.shape()));
    Tensor<T> out({a.dim(1), a.dim(0)});
    for (std::int64_t i = 0; i < a.dim(0); ++i)
        for (std::int64_t j = 0; j < a.dim(1); ++j) out.at(j, i) = a.at(i, j);
    return out;
}

// Softmax along `axis`, computed with max-subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    if (axis < 0) axis += static_cast<int>(x.rank());
    if (axis < 0 || axis >= static_cast<int>(x.rank()))
        throw std::invalid_argument("softmax axis out of range for " + shape_str(x.shape()));
    std::int64_t inner = 1, outer = 1;
    const std::int64_t len = x.dim(static_cast<std::size_t>(axis));
    for (int i = 0; i < axis; ++i) outer *= x.dim(static_cast<std::size_t>(i));
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < x.rank(); ++i) inner *= x.dim(i);

    Tensor<T> out(x.shape());
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * len * inner + in;
            T mx = x[base];
            for (std::int64_t t = 1; t < len; ++t) mx = std::max(mx, x[base + t * inner]);
            T sum = T(0);
            for (std::int64_t t = 0; t < len; ++t) {
                const T e = std::exp(x[base + t * inner] - mx);
                out[base + t * inner] = e;
                sum += e;
            }
            for (std::int64_t t = 0; t < len; ++t) out[base + t * inner] /= sum;
        }
    }
    return out;
}

// LayerNorm over the last axis; gamma/beta have that axis' length.
template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
    const std::int64_t c = x.dim(x.rank() - 1);
    if (gamma.numel() != c || beta.numel() != c)
        throw std::invalid_argument("layernorm gamma/beta length must equal the embedding dim " + std::to_string(c));
    const std::int64_t rows = x.numel() / c;
    Tensor<T> out(x.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* xa = x.data() + r * c;
        T* oa = out.data() + r * c;
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
        for (std::int64_t i = 0; i < c; ++i) oa[i] = (xa[i] - mean) * inv * gamma[i] + beta[i];
    }
    return out;
}

template <typename T>
T gelu_scalar(T x) {
    // exact (erf) form
    return x * T(0.5) * (T(1) + std::erf(x * T(0.7071067811865475244)));
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = gelu_scalar(x[i]);
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const T v = x[i];
        out[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
    }
    return out;
}

// Cross-correlation of a CHW image with an OIHW kernel.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::int64_t stride = 1,
                 std::int64_t pad = 0) {
    if (x.rank() != 3 || w.rank() != 4)
        throw std::invalid_argument("conv2d expects x as CxHxW and w as OxIxKhxKw");
    const std::int64_t ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const std::int64_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != ci)
        throw std::invalid_argument("conv2d channel mismatch: input " + shape_str(x.shape()) + " kernel " +
                                    shape_str(w.shape()));
    if (b.numel() != co) throw std::invalid_argument("conv2d bias length must equal output channels");
    if (kh > h + 2 * pad || kw > wd + 2 * pad)
        throw std::invalid_argument("conv2d kernel " + shape_str(w.shape()) + " larger than padded input " +
                                    shape_str(x.shape()));
    const std::int64_t ho = (h + 2 * pad - kh) / stride + 1;
    const std::int64_t wo = (wd + 2 * pad - kw) / stride + 1;
    Tensor<T> out({co, ho, wo});
    for (std::int64_t oc = 0; oc < co; ++oc) {
        for (std::int64_t oy = 0; oy < ho; ++oy) {
            for (std::int64_t ox = 0; ox < wo; ++ox) {
                T acc = b[oc];
                for (std::int64_t ic = 0; ic < ci; ++ic) {
                    for (std::int64_t ky = 0; ky < kh; ++ky) {
                        const std::int64_t iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        for (std::int64_t kx = 0; kx < kw; ++kx) {
                            const std::int64_t ix = ox * stride + kx - pad;
                            if (ix < 0 || ix >= wd) continue;
                            acc += x.at(ic, iy, ix) * w[((oc * ci + ic) * kh + ky) * kw + kx];
                        }
                    }
                }
                out.at(oc, oy, ox) = acc;
            }
        }
    }
    return out;
}

// Per-token two-layer MLP: W2*gelu(W1*x + b1) + b2, rows of x are tokens.
template <typename T>
Tensor<T> mlp(const Tensor<T>& x, const Tensor<T>& w1, const Tensor<T>& b1, const Tensor<T>& w2,
              const Tensor<T>& b2) {
    Tensor<T> h = matmul(x, transpose(w1));
    for (std::int64_t r = 0; r < h.dim(0); ++r)
        for (std::int64_t j = 0; j < h.dim(1); ++j) h.at(r, j) = gelu_scalar(h.at(r, j) + b1[j]);
    Tensor<T> out = matmul(h, transpose(w2));
    for (std::int64_t r = 0; r < out.dim(0); ++r)
        for (std::int64_t j = 0; j < out.dim(1); ++j) out.at(r, j) += b2[j];
    return out;
}

} // namespace ops
} // namespace hdrfuse
