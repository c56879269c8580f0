#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdrfuse/loss.hpp"
#include "hdrfuse/model.hpp"
#include "hdrfuse/rng.hpp"

namespace hdrfuse {

struct TrainConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t patch = 128;
    std::int64_t stride = 64;
    std::int64_t steps = 200;
    std::int64_t batch = 1;
    std::uint64_t seed = 1;
    bool augment = true;
    std::int64_t ckpt_every = 0; // 0: final checkpoint only
    double alpha = 0.01;         // perceptual weight

    void validate() const {
        if (!(lr >= 0.0)) throw std::invalid_argument("lr must be >= 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
            throw std::invalid_argument("betas must lie in [0,1)");
        if (!(eps > 0.0)) throw std::invalid_argument("eps must be > 0");
        if (patch < 1 || stride < 1 || steps < 0 || batch < 1)
            throw std::invalid_argument("patch/stride/batch must be >= 1 and steps >= 0");
    }
};

// First/second moment buffers mirroring the parameter set.
struct OptimizerState {
    std::vector<Tensor<float>> m;
    std::vector<Tensor<float>> v;
    std::int64_t step = 0;
};

template <typename T>
OptimizerState make_optimizer_state(const ParamStore<T>& params) {
    OptimizerState st;
    for (const auto& [name, var] : params.entries()) {
        st.m.emplace_back(var.value().shape(), 0.0f);
        st.v.emplace_back(var.value().shape(), 0.0f);
    }
    return st;
}

// One Adam update with bias correction. Gradients are read from the
// parameter nodes; a NaN gradient aborts naming the parameter.
inline void adam_step(ParamStore<float>& params, OptimizerState& st, const TrainConfig& cfg) {
    cfg.validate();
    if (st.m.size() != params.size()) throw std::invalid_argument("optimizer state does not mirror the parameters");
    st.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
    std::size_t pi = 0;
    for (auto& [name, var] : params.entries()) {
        auto node = var.node();
        node->ensure_grad();
        Tensor<float>& m = st.m[pi];
        Tensor<float>& v = st.v[pi];
        ++pi;
        for (std::int64_t i = 0; i < node->value.numel(); ++i) {
            const double g = node->grad[i];
            if (std::isnan(g)) throw std::runtime_error("NaN gradient in parameter '" + name + "'");
            const double mn = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            const double vn = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            m[i] = static_cast<float>(mn);
            v[i] = static_cast<float>(vn);
            const double mhat = mn / bc1;
            const double vhat = vn / bc2;
            node->value[i] = static_cast<float>(node->value[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

// ---- patch sampling ----------------------------------------------------------

struct PatchAnchor {
    std::int64_t y = 0;
    std::int64_t x = 0;
    bool padded = false; // image smaller than the patch; center-padded crop
};

// Regular grid with the last row/column anchored to the image edge so the
// patches cover the image completely.
inline std::vector<PatchAnchor> patch_grid(std::int64_t h, std::int64_t w, std::int64_t patch, std::int64_t stride) {
    if (patch < 1 || stride < 1) throw std::invalid_argument("patch and stride must be >= 1");
    if (h < patch || w < patch) return {PatchAnchor{(h - patch) / 2, (w - patch) / 2, true}};
    auto axis = [&](std::int64_t extent) {
        std::vector<std::int64_t> pos;
        for (std::int64_t p = 0; p + patch <= extent; p += stride) pos.push_back(p);
        if (pos.back() != extent - patch) pos.push_back(extent - patch);
        return pos;
    };
    std::vector<PatchAnchor> out;
    for (std::int64_t y : axis(h))
        for (std::int64_t x : axis(w)) out.push_back(PatchAnchor{y, x, false});
    return out;
}

// Crop with zero fill outside the source (used only for padded anchors).
inline Tensor<float> crop_image(const Tensor<float>& img, std::int64_t y0, std::int64_t x0, std::int64_t patch) {
    const std::int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    Tensor<float> out({c, patch, patch}, 0.0f);
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t y = 0; y < patch; ++y) {
            const std::int64_t sy = y0 + y;
            if (sy < 0 || sy >= h) continue;
            for (std::int64_t x = 0; x < patch; ++x) {
                const std::int64_t sx = x0 + x;
                if (sx < 0 || sx >= w) continue;
                out.at(ch, y, x) = img.at(ch, sy, sx);
            }
        }
    return out;
}

// ---- dihedral augmentation -----------------------------------------------------

// id 0..7: rotation by 90*(id&3) degrees, then horizontal flip if id&4.
inline Tensor<float> apply_dihedral(const Tensor<float>& img, int id) {
    if (img.dim(1) != img.dim(2)) throw std::invalid_argument("dihedral transforms need square patches");
    const std::int64_t c = img.dim(0), n = img.dim(1);
    Tensor<float> out(img.shape());
    const int rot = id & 3;
    const bool flip = (id & 4) != 0;
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t y = 0; y < n; ++y)
            for (std::int64_t x = 0; x < n; ++x) {
                std::int64_t sy = y, sx = x;
                switch (rot) { // inverse rotation of the output coordinate
                    case 1: sy = x; sx = n - 1 - y; break;
                    case 2: sy = n - 1 - y; sx = n - 1 - x; break;
                    case 3: sy = n - 1 - x; sx = y; break;
                    default: break;
                }
                const std::int64_t fy = sy;
                const std::int64_t fx = flip ? n - 1 - sx : sx;
                out.at(ch, y, x) = img.at(ch, fy, fx);
            }
    return out;
}

// ---- training loop ----------------------------------------------------------

struct TrainSample {
    std::string id;
    LdrBracket bracket;
    HdrImage gt;
};

struct StepRecord {
    std::int64_t step = 0;
    double loss = 0.0;
    double l1 = 0.0;
    double lp = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<StepRecord> trace;
    std::int64_t padded_patches = 0; // count of undersized-image fallbacks
};

inline std::string format_trace_line(const StepRecord& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%lld %.10g %.10g %.10g %.10g", static_cast<long long>(r.step), r.loss, r.l1,
                  r.lp, r.lr);
    return std::string(buf);
}

// Runs the optimization loop over (seeded) sampled, augmented patches.
// The trace file gets one "step loss l1 lp lr" line per step; checkpoints
// are written at the configured cadence plus a final one.
template <typename WriteCkpt>
TrainResult train_loop(const std::vector<TrainSample>& samples, Network<float>& net, const TrainConfig& cfg,
                       const FeatureExtractor<float>& phi, std::ostream* trace_out, WriteCkpt&& write_ckpt) {
    cfg.validate();
    net.config.validate();
    if (samples.empty()) throw std::invalid_argument("training needs a non-empty dataset");
    for (const auto& s : samples)
        if (!s.bracket.reference.pixels.same_shape(s.gt.pixels))
            throw std::runtime_error("sample '" + s.id + "': ground truth shape does not match the bracket");

    Rng sample_rng = Rng::stream(cfg.seed, 1);
    Rng augment_rng = Rng::stream(cfg.seed, 2);
    OptimizerState opt = make_optimizer_state(net.params);
    TrainResult result;

    for (std::int64_t step = 1; step <= cfg.steps; ++step) {
        net.params.zero_grads();
        double loss_acc = 0.0, l1_acc = 0.0, lp_acc = 0.0;
        for (std::int64_t b = 0; b < cfg.batch; ++b) {
            const TrainSample& s = samples[sample_rng.below(static_cast<std::uint64_t>(samples.size()))];
            const std::int64_t h = s.bracket.reference.height(), w = s.bracket.reference.width();
            const auto grid = patch_grid(h, w, cfg.patch, cfg.stride);
            const PatchAnchor anchor = grid[sample_rng.below(static_cast<std::uint64_t>(grid.size()))];
            if (anchor.padded) ++result.padded_patches;
            const int transform = cfg.augment ? static_cast<int>(augment_rng.below(8)) : 0;

            auto prep = [&](const Tensor<float>& img) {
                return apply_dihedral(crop_image(img, anchor.y, anchor.x, cfg.patch), transform);
            };
            LdrBracket patch(
                LdrImage(prep(s.bracket.short_exp.pixels), s.bracket.short_exp.exposure_time, s.bracket.short_exp.ev),
                LdrImage(prep(s.bracket.reference.pixels), s.bracket.reference.exposure_time, s.bracket.reference.ev),
                LdrImage(prep(s.bracket.long_exp.pixels), s.bracket.long_exp.exposure_time, s.bracket.long_exp.ev));
            Tensor<float> gt = prep(s.gt.pixels);

            ag::Var<float> pred = forward(net, patch);
            LossParts parts;
            ag::Var<float> loss = total_loss(pred, gt, phi, static_cast<float>(cfg.alpha), kMuLaw, &parts);
            loss.backward();
            loss_acc += parts.total;
            l1_acc += parts.l1;
            lp_acc += parts.lp;
        }
        adam_step(net.params, opt, cfg);

        StepRecord rec{step, loss_acc / static_cast<double>(cfg.batch), l1_acc / static_cast<double>(cfg.batch),
                       lp_acc / static_cast<double>(cfg.batch), cfg.lr};
        result.trace.push_back(rec);
        if (trace_out) *trace_out << format_trace_line(rec) << "\n";
        if (cfg.ckpt_every > 0 && step % cfg.ckpt_every == 0 && step != cfg.steps) write_ckpt(net, step);
    }
    write_ckpt(net, -1); // final
    return result;
}

} // namespace hdrfuse
