#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hdrfuse/loss.hpp"
#include "testutil.hpp"

using namespace hdrfuse;
using testutil::check_gradients;
using testutil::random_tensor;

TEST_CASE("l1 tone-mapped loss oracle values") {
    Rng rng(61);
    const Tensor<float> img = random_tensor<float>({3, 8, 8}, rng, 0.0, 1.0);
    auto pred = ag::Var<float>::constant(img);
    {
        ag::NoGradGuard ng;
        CHECK(l1_tonemapped(pred, img).value()[0] == 0.0f);

        auto zeros = ag::Var<float>::constant(Tensor<float>({3, 4, 4}, 0.0f));
        const Tensor<float> ones({3, 4, 4}, 1.0f);
        CHECK(l1_tonemapped(zeros, ones).value()[0] == 1.0f); // T(0)=0, T(1)=1

        auto point2 = ag::Var<float>::constant(Tensor<float>({3, 4, 4}, 0.2f));
        const float oracle = static_cast<float>(std::log(1001.0) / std::log(5001.0));
        CHECK(l1_tonemapped(point2, Tensor<float>({3, 4, 4}, 0.0f)).value()[0] ==
              Catch::Approx(oracle).epsilon(1e-5));
    }
    CHECK_THROWS_AS(l1_tonemapped(pred, Tensor<float>({3, 4, 4}, 0.0f)), std::invalid_argument);
}

TEST_CASE("phi is deterministic under its seed and round-trips through the container") {
    const auto a = make_phi<float>();
    const auto b = make_phi<float>();
    REQUIRE(a.weights.size() == b.weights.size());
    for (std::size_t s = 0; s < a.weights.size(); ++s)
        for (std::int64_t i = 0; i < a.weights[s].numel(); ++i) REQUIRE(a.weights[s][i] == b.weights[s][i]);

    PhiConfig other;
    other.seed = 123;
    const auto c = make_phi<float>(other);
    bool any_diff = false;
    for (std::int64_t i = 0; i < a.weights[0].numel(); ++i) any_diff = any_diff || a.weights[0][i] != c.weights[0][i];
    CHECK(any_diff);

    // optional external weight hook uses the checkpoint container
    const Checkpoint ck = phi_to_checkpoint(a);
    const auto back = load_phi<float>(deserialize_checkpoint(serialize_checkpoint(ck)));
    for (std::size_t s = 0; s < a.weights.size(); ++s)
        for (std::int64_t i = 0; i < a.weights[s].numel(); ++i) REQUIRE(a.weights[s][i] == back.weights[s][i]);
}

TEST_CASE("perceptual loss is zero at equality, non-negative, and motion-sensitive") {
    const auto phi = make_phi<float>();
    Rng rng(67);
    const Tensor<float> img = random_tensor<float>({3, 16, 16}, rng, 0.0, 1.0);
    ag::NoGradGuard ng;
    CHECK(perceptual(ag::Var<float>::constant(img), img, phi).value()[0] == 0.0f);

    const Tensor<float> other = random_tensor<float>({3, 16, 16}, rng, 0.0, 1.0);
    const float lp = perceptual(ag::Var<float>::constant(img), other, phi).value()[0];
    CHECK(lp > 0.0f);
    CHECK(std::isfinite(lp));

    // shifting the target by one pixel moves the loss by a finite amount
    Tensor<float> shifted({3, 16, 16}, 0.0f);
    for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t y = 0; y < 16; ++y)
            for (std::int64_t x = 1; x < 16; ++x) shifted.at(c, y, x) = img.at(c, y, x - 1);
    const float lshift = perceptual(ag::Var<float>::constant(img), shifted, phi).value()[0];
    CHECK(lshift > 0.0f);
    CHECK(std::isfinite(lshift));
    CHECK(lshift != lp);
}

TEST_CASE("total loss composition and degenerate alpha") {
    const auto phi = make_phi<float>();
    Rng rng(71);
    const Tensor<float> img = random_tensor<float>({3, 16, 16}, rng, 0.05, 0.95);
    const Tensor<float> gt = random_tensor<float>({3, 16, 16}, rng, 0.05, 0.95);
    ag::NoGradGuard ng;

    CHECK(total_loss(ag::Var<float>::constant(img), img, phi).value()[0] == 0.0f);

    LossParts parts;
    const float with_alpha = total_loss(ag::Var<float>::constant(img), gt, phi, 0.01f, kMuLaw, &parts).value()[0];
    CHECK(with_alpha >= 0.0f);
    CHECK(with_alpha == Catch::Approx(parts.l1 + 0.01 * parts.lp).epsilon(1e-5));

    const float alpha0 = total_loss(ag::Var<float>::constant(img), gt, phi, 0.0f).value()[0];
    const float l1_only = l1_tonemapped(ag::Var<float>::constant(img), gt).value()[0];
    CHECK(alpha0 == l1_only);
}

TEST_CASE("scaling a uniform prediction toward a uniform target decreases the l1 loss") {
    const Tensor<float> gt({3, 8, 8}, 0.8f);
    ag::NoGradGuard ng;
    double prev = 1e9;
    for (float v : {0.1f, 0.3f, 0.5f, 0.7f, 0.79f}) {
        const double cur = l1_tonemapped(ag::Var<float>::constant(Tensor<float>({3, 8, 8}, v)), gt).value()[0];
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("total loss gradient matches finite differences") {
    const auto phi = make_phi<double>();
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        Rng rng(seed);
        auto pred = ag::Var<double>::param(random_tensor<double>({3, 8, 8}, rng, 0.10, 0.45));
        const Tensor<double> gt = random_tensor<double>({3, 8, 8}, rng, 0.55, 0.90);
        auto res = check_gradients(
            {pred}, [&] { return total_loss(pred, gt, phi, 0.01); }, seed, 1e-4, 24);
        CAPTURE(res.worst);
        CHECK(res.max_rel_error < 1e-4);
    }
}
