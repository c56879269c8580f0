#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hdrfuse/hdr_math.hpp"
#include "testutil.hpp"

using namespace hdrfuse;
using testutil::random_tensor;

namespace {

LdrImage uniform_ldr(float value, float t, std::int64_t h = 2, std::int64_t w = 2) {
    return LdrImage(Tensor<float>({3, h, w}, value), t);
}

} // namespace

TEST_CASE("gamma projection follows L^gamma / t") {
    const HdrImage one = gamma_project(uniform_ldr(1.0f, 1.0f));
    CHECK(one.pixels[0] == 1.0f);

    const HdrImage zero = gamma_project(uniform_ldr(0.0f, 0.5f));
    CHECK(zero.pixels[0] == 0.0f);

    const HdrImage mid = gamma_project(uniform_ldr(0.5f, 0.25f));
    const double oracle = std::pow(0.5, 2.2) / 0.25;
    CHECK(mid.pixels[0] == Catch::Approx(oracle).epsilon(1e-6));
}

TEST_CASE("exposure time must be positive") {
    CHECK_THROWS_AS(uniform_ldr(0.5f, 0.0f), std::domain_error);
    CHECK_THROWS_AS(uniform_ldr(0.5f, -1.0f), std::domain_error);
}

TEST_CASE("exposure-consistent projections agree up to clipping") {
    // the same radiance observed at two exposure times projects identically
    Rng rng(41);
    Tensor<float> radiance = random_tensor<float>({3, 4, 4}, rng, 0.01, 0.9);
    auto expose_noq = [&](float t) {
        Tensor<float> px(radiance.shape());
        for (std::int64_t i = 0; i < px.numel(); ++i)
            px[i] = std::min(std::pow(radiance[i] * t, 1.0f / kGamma), 1.0f);
        return LdrImage(std::move(px), t);
    };
    const HdrImage a = gamma_project(expose_noq(0.5f));
    const HdrImage b = gamma_project(expose_noq(1.0f));
    for (std::int64_t i = 0; i < a.pixels.numel(); ++i)
        CHECK(a.pixels[i] == Catch::Approx(b.pixels[i]).epsilon(1e-5));
}

TEST_CASE("mu-law endpoints are exact and the map is strictly monotone") {
    const Tensor<double> ends = mu_law(Tensor<double>({2}, {0.0, 1.0}));
    CHECK(ends[0] == 0.0);
    CHECK(ends[1] == 1.0);

    const Tensor<double> probe = mu_law(Tensor<double>({1}, {0.2}));
    CHECK(probe[0] == Catch::Approx(std::log(1001.0) / std::log(5001.0)).epsilon(1e-12));

    // clamp above 1
    const Tensor<double> over = mu_law(Tensor<double>({1}, {1.5}));
    CHECK(over[0] == 1.0);

    Rng rng(13);
    std::vector<double> xs;
    for (int i = 0; i < 200; ++i) xs.push_back(rng.uniform());
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 1; i < xs.size(); ++i) {
        if (xs[i] == xs[i - 1]) continue;
        CHECK(mu_law_scalar(xs[i]) > mu_law_scalar(xs[i - 1]));
    }
}

TEST_CASE("triangle weights peak where expected and never vanish") {
    const auto mid = triangle_weights(uniform_ldr(0.5f, 1.0f));
    CHECK(mid[1].at(0, 0) == 1.0f);           // medium at its apex
    CHECK(mid[0].at(0, 0) == Catch::Approx(0.0f).margin(1e-5));

    const auto bright = triangle_weights(uniform_ldr(1.0f, 1.0f));
    CHECK(bright[0].at(0, 0) == 1.0f);        // short-exposure weight maximal

    const auto dark = triangle_weights(uniform_ldr(0.0f, 1.0f));
    CHECK(dark[2].at(0, 0) == 1.0f);          // long-exposure weight maximal

    // exhaustive scan over the 256 8-bit levels
    Tensor<float> ramp({3, 1, 256});
    for (std::int64_t i = 0; i < 256; ++i)
        for (std::int64_t c = 0; c < 3; ++c) ramp.at(c, 0, i) = static_cast<float>(i) / 255.0f;
    const auto maps = triangle_weights(LdrImage(std::move(ramp), 1.0f));
    for (std::int64_t i = 0; i < 256; ++i) {
        const float sum = maps[0].at(0, i) + maps[1].at(0, i) + maps[2].at(0, i);
        CHECK(sum > 0.0f);
        for (int n = 0; n < 3; ++n) CHECK(maps[n].at(0, i) >= 0.0f);
    }
}

TEST_CASE("blend reduces to means, selections and hand values") {
    auto img = [](float v) { return HdrImage(Tensor<float>({3, 1, 1}, v)); };
    auto wmap = [](float v) { return Tensor<float>({1, 1}, v); };

    const HdrImage mean = blend({img(0.0f), img(3.0f), img(6.0f)}, {wmap(1), wmap(1), wmap(1)});
    CHECK(mean.pixels[0] == 3.0f);

    const HdrImage pick = blend({img(0.25f), img(0.5f), img(0.75f)}, {wmap(0), wmap(1), wmap(0)});
    CHECK(pick.pixels[0] == 0.5f);

    const HdrImage hand = blend({img(0.0f), img(3.0f), img(6.0f)}, {wmap(1), wmap(2), wmap(1)});
    CHECK(hand.pixels[0] == 3.0f);

    CHECK_THROWS_AS(blend({img(1), img(2), img(3)}, {wmap(0), wmap(0), wmap(0)}), std::domain_error);
}

TEST_CASE("blend output stays in the convex hull of its inputs") {
    Rng rng(19);
    std::array<HdrImage, 3> h{HdrImage(random_tensor<float>({3, 5, 5}, rng, 0.0, 4.0)),
                              HdrImage(random_tensor<float>({3, 5, 5}, rng, 0.0, 4.0)),
                              HdrImage(random_tensor<float>({3, 5, 5}, rng, 0.0, 4.0))};
    std::array<Tensor<float>, 3> w{random_tensor<float>({5, 5}, rng, 0.001, 1.0),
                                   random_tensor<float>({5, 5}, rng, 0.001, 1.0),
                                   random_tensor<float>({5, 5}, rng, 0.001, 1.0)};
    const HdrImage out = blend(h, w);
    for (std::int64_t i = 0; i < out.pixels.numel(); ++i) {
        const float lo = std::min({h[0].pixels[i], h[1].pixels[i], h[2].pixels[i]});
        const float hi = std::max({h[0].pixels[i], h[1].pixels[i], h[2].pixels[i]});
        CHECK(out.pixels[i] >= lo - 1e-6f);
        CHECK(out.pixels[i] <= hi + 1e-6f);
    }
}

TEST_CASE("debevec merge degenerate stacks") {
    const LdrImage single = uniform_ldr(0.5f, 0.5f);
    const HdrImage merged = debevec_merge({single});
    const HdrImage projected = gamma_project(single);
    for (std::int64_t i = 0; i < merged.pixels.numel(); ++i)
        CHECK(merged.pixels[i] == Catch::Approx(projected.pixels[i]).epsilon(1e-6));

    // two identical images at different times: hand-computed two-term formula
    const LdrImage a = uniform_ldr(0.4f, 0.5f);
    const LdrImage b = uniform_ldr(0.4f, 2.0f);
    const HdrImage two = debevec_merge({a, b});
    const double w = 0.4; // min(z, 1-z)
    const double e = (w * std::pow(0.4, 2.2) / 0.5 + w * std::pow(0.4, 2.2) / 2.0) / (2 * w);
    CHECK(two.pixels[0] == Catch::Approx(e).epsilon(1e-6));

    CHECK_THROWS_AS(debevec_merge({}), std::invalid_argument);
    CHECK_THROWS_AS(debevec_merge({a, uniform_ldr(0.3f, 0.5f)}), std::invalid_argument);
}

TEST_CASE("debevec merge recovers radiance from a noiseless synthetic stack") {
    // radiance low enough that no exposure clips anywhere
    Rng rng(47);
    Tensor<float> radiance = random_tensor<float>({3, 6, 6}, rng, 1.0 / 1024.0, 1.0 / 18.0);
    std::vector<LdrImage> stack;
    for (int ev = -2; ev <= 2; ++ev) {
        const float t = std::exp2(static_cast<float>(ev)) * 4.0f; // 1..64, max E*t < 1
        Tensor<float> px(radiance.shape());
        for (std::int64_t i = 0; i < px.numel(); ++i) {
            const float l = std::min(std::max(std::pow(radiance[i] * t, 1.0f / kGamma), 0.0f), 1.0f);
            px[i] = static_cast<float>(std::lround(l * 65535.0f)) / 65535.0f;
        }
        stack.emplace_back(std::move(px), t);
    }
    const HdrImage merged = debevec_merge(stack);
    const float t_min = stack.front().exposure_time;
    const HdrImage normalized = normalize_by_stack_max(merged, t_min);
    const float step = 1.0f / 65535.0f;
    for (std::int64_t i = 0; i < radiance.numel(); ++i) {
        const float expected = radiance[i] * t_min;
        CHECK(std::fabs(normalized.pixels[i] - expected) <= step);
    }
}

TEST_CASE("debevec merge falls back on fully saturated pixels") {
    const HdrImage high = debevec_merge({uniform_ldr(1.0f, 0.25f), uniform_ldr(1.0f, 1.0f)});
    CHECK(high.pixels[0] == 4.0f); // shortest exposure projection 1/t

    const HdrImage low = debevec_merge({uniform_ldr(0.0f, 0.25f), uniform_ldr(0.0f, 1.0f)});
    CHECK(low.pixels[0] == 0.0f);
}
