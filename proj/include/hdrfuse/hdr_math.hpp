#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "hdrfuse/tensor.hpp"

namespace hdrfuse {

constexpr float kGamma = 2.2f;
constexpr float kMuLaw = 5000.0f;

// One exposure: 3xHxW pixels in [0,1], exposure time in seconds and the
// log2 EV offset relative to the bracket's reference exposure.
struct LdrImage {
    Tensor<float> pixels;
    float exposure_time = 1.0f;
    float ev = 0.0f;

    LdrImage() = default;
    LdrImage(Tensor<float> px, float t, float ev_offset = 0.0f)
        : pixels(std::move(px)), exposure_time(t), ev(ev_offset) {
        if (pixels.rank() != 3 || pixels.dim(0) != 3)
            throw std::invalid_argument("LdrImage expects 3xHxW pixels, got " + shape_str(pixels.shape()));
        if (!(exposure_time > 0.0f)) throw std::domain_error("LdrImage exposure time must be > 0");
        for (std::int64_t i = 0; i < pixels.numel(); ++i)
            pixels[i] = std::min(std::max(pixels[i], 0.0f), 1.0f);
    }

    std::int64_t height() const { return pixels.dim(1); }
    std::int64_t width() const { return pixels.dim(2); }
};

// Linear-radiance image, values >= 0.
struct HdrImage {
    Tensor<float> pixels;

    HdrImage() = default;
    explicit HdrImage(Tensor<float> px) : pixels(std::move(px)) {
        if (pixels.rank() != 3 || pixels.dim(0) != 3)
            throw std::invalid_argument("HdrImage expects 3xHxW pixels, got " + shape_str(pixels.shape()));
    }

    std::int64_t height() const { return pixels.dim(1); }
    std::int64_t width() const { return pixels.dim(2); }
};

// Three exposures ordered short/reference/long (strictly increasing time).
struct LdrBracket {
    LdrImage short_exp;
    LdrImage reference;
    LdrImage long_exp;

    LdrBracket() = default;
    LdrBracket(LdrImage s, LdrImage r, LdrImage l)
        : short_exp(std::move(s)), reference(std::move(r)), long_exp(std::move(l)) {
        if (!(short_exp.exposure_time < reference.exposure_time &&
              reference.exposure_time < long_exp.exposure_time))
            throw std::invalid_argument("bracket exposure times must be strictly increasing");
        if (!short_exp.pixels.same_shape(reference.pixels) || !reference.pixels.same_shape(long_exp.pixels))
            throw std::invalid_argument("bracket images must share one shape");
    }

    const LdrImage& at(int i) const { return i == 0 ? short_exp : (i == 1 ? reference : long_exp); }
};

// H = L^gamma / t, the projection of an exposure into the linear HDR domain.
inline HdrImage gamma_project(const LdrImage& ldr, float gamma = kGamma) {
    if (!(ldr.exposure_time > 0.0f)) throw std::domain_error("gamma_project requires exposure time > 0");
    Tensor<float> out(ldr.pixels.shape());
    const float inv_t = 1.0f / ldr.exposure_time;
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out[i] = std::pow(ldr.pixels[i], gamma) * inv_t;
    return HdrImage(std::move(out));
}

// T(x) = log(1 + mu*x) / log(1 + mu) on [0,1]; input clamped into range.
template <typename T>
Tensor<T> mu_law(const Tensor<T>& x, T mu = T(kMuLaw)) {
    const T lg = std::log1p(mu);
    Tensor<T> out(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const T v = std::min(std::max(x[i], T(0)), T(1));
        out[i] = std::log1p(mu * v) / lg;
    }
    return out;
}

template <typename T>
T mu_law_scalar(T x, T mu = T(kMuLaw)) {
    const T v = std::min(std::max(x, T(0)), T(1));
    return std::log1p(mu * v) / std::log1p(mu);
}

// Blending weights over the reference luminance (mean of RGB):
//   short  peaks where the reference is over-exposed,
//   long   peaks where it is under-exposed,
//   medium peaks at mid-gray.
// Floored at 1e-6 so the blend denominator never vanishes.
inline std::array<Tensor<float>, 3> triangle_weights(const LdrImage& ref) {
    const std::int64_t h = ref.height(), w = ref.width();
    std::array<Tensor<float>, 3> maps{Tensor<float>({h, w}), Tensor<float>({h, w}), Tensor<float>({h, w})};
    constexpr float kFloor = 1e-6f;
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            const float z =
                (ref.pixels.at(0, y, x) + ref.pixels.at(1, y, x) + ref.pixels.at(2, y, x)) / 3.0f;
            const float ws = std::min(std::max(2.0f * z - 1.0f, 0.0f), 1.0f);
            const float wl = std::min(std::max(1.0f - 2.0f * z, 0.0f), 1.0f);
            const float wm = 1.0f - std::fabs(2.0f * z - 1.0f);
            maps[0].at(y, x) = std::max(ws, kFloor);
            maps[1].at(y, x) = std::max(wm, kFloor);
            maps[2].at(y, x) = std::max(wl, kFloor);
        }
    }
    return maps;
}

// Per-pixel weighted mean of three projected exposures; weight maps are HxW
// and shared across channels. Order matches the bracket: short, ref, long.
inline HdrImage blend(const std::array<HdrImage, 3>& h, const std::array<Tensor<float>, 3>& w) {
    const std::int64_t hh = h[0].height(), ww = h[0].width();
    for (int n = 1; n < 3; ++n)
        if (!h[0].pixels.same_shape(h[n].pixels)) throw std::invalid_argument("blend inputs must share one shape");
    for (int n = 0; n < 3; ++n)
        if (w[n].dim(0) != hh || w[n].dim(1) != ww) throw std::invalid_argument("blend weight map shape mismatch");
    Tensor<float> out(h[0].pixels.shape());
    for (std::int64_t y = 0; y < hh; ++y) {
        for (std::int64_t x = 0; x < ww; ++x) {
            const float wsum = w[0].at(y, x) + w[1].at(y, x) + w[2].at(y, x);
            if (!(wsum > 0.0f)) throw std::domain_error("blend weight sum is zero");
            for (std::int64_t c = 0; c < 3; ++c) {
                const float v = w[0].at(y, x) * h[0].pixels.at(c, y, x) +
                                w[1].at(y, x) * h[1].pixels.at(c, y, x) +
                                w[2].at(y, x) * h[2].pixels.at(c, y, x);
                out.at(c, y, x) = v / wsum;
            }
        }
    }
    return HdrImage(std::move(out));
}

// Hat weight for radiance recovery: trusts mid-range samples.
inline float debevec_weight(float z) {
    constexpr float kFloor = 1e-3f;
    return std::max(std::min(z, 1.0f - z), kFloor);
}

// Weighted radiance estimate over an exposure stack. Pixels saturated in
// every exposure fall back to the shortest (bright) or longest (dark)
// exposure's projection.
inline HdrImage debevec_merge(const std::vector<LdrImage>& stack, float gamma = kGamma) {
    if (stack.empty()) throw std::invalid_argument("debevec_merge needs at least one image");
    for (std::size_t i = 1; i < stack.size(); ++i) {
        if (!stack[0].pixels.same_shape(stack[i].pixels))
            throw std::invalid_argument("debevec_merge images must share one shape");
        for (std::size_t j = 0; j < i; ++j)
            if (stack[i].exposure_time == stack[j].exposure_time)
                throw std::invalid_argument("debevec_merge exposure times must be distinct");
    }
    std::size_t shortest = 0, longest = 0;
    for (std::size_t i = 1; i < stack.size(); ++i) {
        if (stack[i].exposure_time < stack[shortest].exposure_time) shortest = i;
        if (stack[i].exposure_time > stack[longest].exposure_time) longest = i;
    }
    Tensor<float> out(stack[0].pixels.shape());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        float acc = 0.0f, wsum = 0.0f;
        bool all_high = true, all_low = true;
        for (const auto& img : stack) {
            const float z = img.pixels[i];
            all_high = all_high && z >= 1.0f;
            all_low = all_low && z <= 0.0f;
            const float wz = debevec_weight(z);
            acc += wz * std::pow(z, gamma) / img.exposure_time;
            wsum += wz;
        }
        if (all_high)
            out[i] = 1.0f / stack[shortest].exposure_time;
        else if (all_low)
            out[i] = std::pow(0.0f, gamma) / stack[longest].exposure_time;
        else
            out[i] = acc / wsum;
    }
    return HdrImage(std::move(out));
}

// Rescale a merged radiance map by its stack's theoretical maximum
// (the all-white shortest exposure), putting it in [0,1].
inline HdrImage normalize_by_stack_max(const HdrImage& h, float shortest_exposure_time) {
    Tensor<float> out(h.pixels.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = h.pixels[i] * shortest_exposure_time;
    return HdrImage(std::move(out));
}

} // namespace hdrfuse
