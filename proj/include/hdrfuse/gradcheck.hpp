#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "hdrfuse/loss.hpp"
#include "hdrfuse/model.hpp"
#include "hdrfuse/rng.hpp"

namespace hdrfuse {
namespace gradcheck {

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

struct GradCheck {
    double max_rel_error = 0.0;
    std::string worst;
    std::int64_t coords_checked = 0;
};

// Central-difference verification in 64-bit. `build` re-runs the forward
// pass reading the current leaf values; its output is contracted to a
// scalar with a fixed random upstream so both paths differentiate the same
// functional. Probes every coordinate unless `max_coords_per_leaf` > 0.
inline GradCheck check_gradients(std::vector<ag::Var<double>> leaves,
                                 const std::function<ag::Var<double>()>& build, std::uint64_t seed,
                                 double h = 1e-4, std::int64_t max_coords_per_leaf = 0) {
    Rng rng = Rng::stream(seed, 0xFD);

    ag::Var<double> out = build();
    Tensor<double> upstream(out.value().shape());
    for (std::int64_t i = 0; i < upstream.numel(); ++i) upstream[i] = rng.uniform(-1.0, 1.0);

    for (auto& l : leaves) l.zero_grad();
    out.backward(&upstream);

    auto eval = [&]() {
        ag::NoGradGuard ng;
        const Tensor<double> y = build().value();
        double s = 0.0;
        for (std::int64_t i = 0; i < y.numel(); ++i) s += y[i] * upstream[i];
        return s;
    };

    GradCheck result;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto node = leaves[li].node();
        const std::int64_t n = node->value.numel();
        std::vector<std::int64_t> coords;
        if (max_coords_per_leaf <= 0 || n <= max_coords_per_leaf) {
            for (std::int64_t i = 0; i < n; ++i) coords.push_back(i);
        } else {
            for (std::int64_t k = 0; k < max_coords_per_leaf; ++k)
                coords.push_back(static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n))));
        }
        for (std::int64_t c : coords) {
            const double saved = node->value[c];
            node->value[c] = saved + h;
            const double fp = eval();
            node->value[c] = saved - h;
            const double fm = eval();
            node->value[c] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double analytic = node->grad[c];
            const double denom = std::max({1.0, std::fabs(numeric), std::fabs(analytic)});
            const double rel = std::fabs(numeric - analytic) / denom;
            ++result.coords_checked;
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst = "leaf" + std::to_string(li) + "[" + std::to_string(c) + "]";
            }
        }
    }
    return result;
}

struct SuiteResult {
    bool pass = true;
    double max_rel_error = 0.0;
    std::string worst_check;
};

// Finite-difference sweep over every differentiable op plus the full
// network-and-loss composition at the given configuration.
inline SuiteResult run_gradient_suite(const ModelConfig& cfg, double tol, int n_seeds, std::ostream& os) {
    SuiteResult suite;
    auto record = [&](const std::string& name, const GradCheck& res) {
        os << "  " << name << ": max_rel=" << res.max_rel_error << " (" << res.coords_checked << " coords)"
           << (res.max_rel_error <= tol ? "" : "  <-- over tolerance") << "\n";
        if (res.max_rel_error > suite.max_rel_error) {
            suite.max_rel_error = res.max_rel_error;
            suite.worst_check = name;
        }
        if (res.max_rel_error > tol) suite.pass = false;
    };

    for (int s = 1; s <= n_seeds; ++s) {
        const auto seed = static_cast<std::uint64_t>(1000 * s);
        Rng rng(seed);
        os << "seed " << s << ":\n";
        {
            auto a = ag::Var<double>::param(random_tensor<double>({3, 4}, rng));
            auto b = ag::Var<double>::param(random_tensor<double>({4, 2}, rng));
            record("matmul", check_gradients({a, b}, [&] { return ag::matmul(a, b); }, seed));
        }
        {
            auto x = ag::Var<double>::param(random_tensor<double>({5, 3}, rng));
            auto w = ag::Var<double>::param(random_tensor<double>({4, 3}, rng));
            auto b = ag::Var<double>::param(random_tensor<double>({4}, rng));
            record("linear", check_gradients({x, w, b}, [&] { return ag::linear(x, w, b); }, seed));
        }
        {
            auto x = ag::Var<double>::param(random_tensor<double>({4, 5}, rng, -3.0, 3.0));
            record("softmax", check_gradients({x}, [&] { return ag::softmax_rows(x); }, seed));
        }
        {
            auto x = ag::Var<double>::param(random_tensor<double>({6, 5}, rng, -2.0, 2.0));
            auto g = ag::Var<double>::param(random_tensor<double>({5}, rng, 0.5, 1.5));
            auto b = ag::Var<double>::param(random_tensor<double>({5}, rng));
            record("layernorm", check_gradients({x, g, b}, [&] { return ag::layernorm(x, g, b); }, seed));
        }
        {
            auto x = ag::Var<double>::param(random_tensor<double>({3, 4}, rng, -2.0, 2.0));
            record("gelu+sigmoid", check_gradients({x}, [&] { return ag::sigmoid(ag::gelu(x)); }, seed));
        }
        {
            auto x = ag::Var<double>::param(random_tensor<double>({2, 5, 6}, rng));
            auto w = ag::Var<double>::param(random_tensor<double>({3, 2, 3, 3}, rng));
            auto b = ag::Var<double>::param(random_tensor<double>({3}, rng));
            record("conv2d", check_gradients({x, w, b}, [&] { return ag::conv2d(x, w, b, 1, 1); }, seed));
            record("conv2d_strided", check_gradients({x, w, b}, [&] { return ag::conv2d(x, w, b, 2, 1); }, seed + 1));
        }
        {
            auto x = ag::Var<double>::param(random_tensor<double>({4, 3}, rng));
            auto w1 = ag::Var<double>::param(random_tensor<double>({6, 3}, rng));
            auto b1 = ag::Var<double>::param(random_tensor<double>({6}, rng));
            auto w2 = ag::Var<double>::param(random_tensor<double>({3, 6}, rng));
            auto b2 = ag::Var<double>::param(random_tensor<double>({3}, rng));
            record("mlp", check_gradients({x, w1, b1, w2, b2}, [&] { return ag::mlp(x, w1, b1, w2, b2); }, seed));
        }
        {
            auto q = ag::Var<double>::param(random_tensor<double>({8, 6}, rng));
            auto k = ag::Var<double>::param(random_tensor<double>({8, 6}, rng));
            auto v = ag::Var<double>::param(random_tensor<double>({8, 6}, rng));
            record("spatial_attention",
                   check_gradients({q, k, v}, [&] { return ag::spatial_attention_core(q, k, v, 4, 2); }, seed));
            record("channel_attention",
                   check_gradients({q, k, v}, [&] { return ag::channel_attention_core(q, k, v, 2); }, seed));
        }
        {
            auto x = ag::Var<double>::param(random_tensor<double>({3, 4}, rng, 0.05, 0.95));
            Tensor<double> target = random_tensor<double>({3, 4}, rng, 0.05, 0.95);
            for (std::int64_t i = 0; i < target.numel(); ++i)
                if (std::fabs(x.value()[i] - target[i]) < 5e-3) target[i] += 0.01;
            record("mu_law+l1",
                   check_gradients({x}, [&] { return ag::l1_vs_const(ag::mu_law_map(x, 5000.0), target); }, seed));
        }
        {
            auto net = make_network<double>(cfg, seed);
            Rng brng(seed + 7);
            auto ldr = [&](float t, float ev) {
                return LdrImage(random_tensor<float>({3, 8, 8}, brng, 0.02, 0.98), t, ev);
            };
            const LdrBracket bracket(ldr(0.25f, -2), ldr(1.0f, 0), ldr(4.0f, 2));
            std::array<ag::Var<double>, 3> inputs;
            for (int i = 0; i < 3; ++i) inputs[i] = ag::Var<double>::constant(make_input<double>(bracket.at(i)));
            const Tensor<double> gt = random_tensor<double>({3, 8, 8}, brng, 0.05, 0.95);
            const auto phi = make_phi<double>();
            std::vector<ag::Var<double>> leaves;
            for (auto& [name, var] : net.params.entries()) leaves.push_back(var);
            record("network+loss", check_gradients(
                                       leaves, [&] { return total_loss(forward(net, inputs), gt, phi, 0.01); },
                                       seed, 1e-4, 3));
        }
    }
    return suite;
}

} // namespace gradcheck
} // namespace hdrfuse
