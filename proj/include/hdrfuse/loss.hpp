#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdrfuse/autograd.hpp"
#include "hdrfuse/checkpoint.hpp"
#include "hdrfuse/hdr_math.hpp"
#include "hdrfuse/rng.hpp"

namespace hdrfuse {

struct PhiConfig {
    int stages = 3;               // tap after every stage
    std::int64_t base_channels = 8;
    std::uint64_t seed = 0x9E0F;  // fixed features; identical seed => identical taps
};

// Fixed feature extractor for the perceptual term: a seeded stack of
// stride-2 convolutions with GELU after each stage. Its weights never
// receive updates; gradients still flow through it to the prediction.
// load_phi() below accepts an external weight file as a drop-in.
template <typename T>
struct FeatureExtractor {
    PhiConfig config;
    std::vector<Tensor<T>> weights; // per stage
    std::vector<Tensor<T>> biases;

    std::int64_t min_input_extent() const { return std::int64_t(1) << config.stages; }
};

template <typename T>
FeatureExtractor<T> make_phi(const PhiConfig& cfg = PhiConfig{}) {
    if (cfg.stages < 1 || cfg.base_channels < 1) throw std::invalid_argument("phi needs >=1 stage and channel");
    FeatureExtractor<T> phi;
    phi.config = cfg;
    Rng rng = Rng::stream(cfg.seed, 0x50E);
    std::int64_t cin = 3;
    std::int64_t cout = cfg.base_channels;
    for (int s = 0; s < cfg.stages; ++s) {
        Tensor<T> w({cout, cin, 3, 3});
        const double sigma = std::sqrt(2.0 / static_cast<double>(cin * 9));
        for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal(0.0, sigma));
        phi.weights.push_back(std::move(w));
        phi.biases.push_back(Tensor<T>({cout}, T(0)));
        cin = cout;
        cout *= 2;
    }
    return phi;
}

template <typename T>
Checkpoint phi_to_checkpoint(const FeatureExtractor<T>& phi) {
    Checkpoint ck;
    ck.config = {{"kind", "phi"},
                 {"stages", std::to_string(phi.config.stages)},
                 {"base_channels", std::to_string(phi.config.base_channels)}};
    for (std::size_t s = 0; s < phi.weights.size(); ++s) {
        for (int kind = 0; kind < 2; ++kind) {
            const Tensor<T>& t = kind == 0 ? phi.weights[s] : phi.biases[s];
            CheckpointRecord r;
            r.name = "phi." + std::to_string(s) + (kind == 0 ? ".weight" : ".bias");
            r.shape = t.shape();
            r.data.resize(static_cast<std::size_t>(t.numel()));
            for (std::int64_t i = 0; i < t.numel(); ++i) r.data[static_cast<std::size_t>(i)] = static_cast<float>(t[i]);
            ck.records.push_back(std::move(r));
        }
    }
    return ck;
}

template <typename T>
FeatureExtractor<T> load_phi(const Checkpoint& ck) {
    FeatureExtractor<T> phi;
    phi.config.stages = std::stoi(ck.config_value("stages"));
    phi.config.base_channels = std::stoll(ck.config_value("base_channels"));
    for (int s = 0; s < phi.config.stages; ++s) {
        for (int kind = 0; kind < 2; ++kind) {
            const std::string name = "phi." + std::to_string(s) + (kind == 0 ? ".weight" : ".bias");
            const CheckpointRecord* r = ck.find(name);
            if (!r) throw std::runtime_error("phi weight file is missing '" + name + "'");
            Tensor<T> t(r->shape);
            for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(r->data[static_cast<std::size_t>(i)]);
            (kind == 0 ? phi.weights : phi.biases).push_back(std::move(t));
        }
    }
    return phi;
}

namespace detail_loss {

// Tap activations for a fixed input (no graph).
template <typename T>
std::vector<Tensor<T>> phi_taps(const FeatureExtractor<T>& phi, const Tensor<T>& x) {
    std::vector<Tensor<T>> taps;
    Tensor<T> cur = x;
    for (std::size_t s = 0; s < phi.weights.size(); ++s) {
        cur = ops::gelu(ops::conv2d(cur, phi.weights[s], phi.biases[s], 2, 1));
        taps.push_back(cur);
    }
    return taps;
}

} // namespace detail_loss

// L1 between mu-law tone maps, averaged over pixels. pred must lie in
// [0,1]; gt is clamped.
template <typename T>
ag::Var<T> l1_tonemapped(const ag::Var<T>& pred, const Tensor<T>& gt, T mu = T(kMuLaw)) {
    if (!pred.value().same_shape(gt))
        throw std::invalid_argument("loss shape mismatch: " + shape_str(pred.value().shape()) + " vs " +
                                    shape_str(gt.shape()));
    return ag::l1_vs_const(ag::mu_law_map(pred, mu), mu_law(gt, mu));
}

// Sum over tap layers of mean |phi(T(pred)) - phi(T(gt))|.
template <typename T>
ag::Var<T> perceptual(const ag::Var<T>& pred, const Tensor<T>& gt, const FeatureExtractor<T>& phi,
                      T mu = T(kMuLaw)) {
    const std::int64_t h = pred.value().dim(1), w = pred.value().dim(2);
    if (h < phi.min_input_extent() || w < phi.min_input_extent())
        throw std::invalid_argument("perceptual loss input smaller than the extractor's receptive stride");
    const std::vector<Tensor<T>> target_taps = detail_loss::phi_taps(phi, mu_law(gt, mu));
    ag::Var<T> cur = ag::mu_law_map(pred, mu);
    ag::Var<T> total;
    for (std::size_t s = 0; s < phi.weights.size(); ++s) {
        cur = ag::gelu(ag::conv2d(cur, ag::Var<T>::constant(phi.weights[s]), ag::Var<T>::constant(phi.biases[s]), 2, 1));
        ag::Var<T> term = ag::l1_vs_const(cur, target_taps[s]);
        total = s == 0 ? term : ag::add(total, term);
    }
    return total;
}

struct LossParts {
    double total = 0.0;
    double l1 = 0.0;
    double lp = 0.0;
};

// L = L1 + alpha * Lp.
template <typename T>
ag::Var<T> total_loss(const ag::Var<T>& pred, const Tensor<T>& gt, const FeatureExtractor<T>& phi,
                      T alpha = T(0.01), T mu = T(kMuLaw), LossParts* parts = nullptr) {
    ag::Var<T> l1 = l1_tonemapped(pred, gt, mu);
    ag::Var<T> lp = perceptual(pred, gt, phi, mu);
    ag::Var<T> tot = ag::add_scaled(l1, lp, alpha);
    if (parts) {
        parts->l1 = static_cast<double>(l1.value()[0]);
        parts->lp = static_cast<double>(lp.value()[0]);
        parts->total = static_cast<double>(tot.value()[0]);
    }
    return tot;
}

} // namespace hdrfuse
