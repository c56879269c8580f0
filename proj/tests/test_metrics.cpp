#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "hdrfuse/metrics.hpp"
#include "testutil.hpp"

using namespace hdrfuse;
using testutil::random_tensor;

namespace {

// Direct per-window SSIM: no separable filtering, every window accumulated
// with explicit double loops. Single-plane input.
double ssim_naive(const Tensor<double>& a, const Tensor<double>& b) {
    const int win = 11;
    const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
    const std::int64_t h = a.dim(0), w = a.dim(1);
    std::vector<double> kernel(win * win);
    double ksum = 0.0;
    for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
            const double dy = y - 5, dx = x - 5;
            kernel[static_cast<std::size_t>(y * win + x)] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            ksum += kernel[static_cast<std::size_t>(y * win + x)];
        }
    for (auto& k : kernel) k /= ksum;

    double total = 0.0;
    std::int64_t count = 0;
    for (std::int64_t y0 = 0; y0 + win <= h; ++y0)
        for (std::int64_t x0 = 0; x0 + win <= w; ++x0) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int y = 0; y < win; ++y)
                for (int x = 0; x < win; ++x) {
                    const double k = kernel[static_cast<std::size_t>(y * win + x)];
                    const double va = a.at(y0 + y, x0 + x), vb = b.at(y0 + y, x0 + x);
                    ma += k * va;
                    mb += k * vb;
                    saa += k * va * va;
                    sbb += k * vb * vb;
                    sab += k * va * vb;
                }
            const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
            ++count;
        }
    return total / static_cast<double>(count);
}

} // namespace

TEST_CASE("psnr oracle values") {
    Rng rng(101);
    const Tensor<double> a = random_tensor<double>({3, 8, 8}, rng, 0.0, 1.0);
    CHECK(std::isinf(psnr(a, a)));

    Tensor<double> b = a;
    for (std::int64_t i = 0; i < b.numel(); ++i) b[i] += 0.1;
    CHECK(psnr(a, b) == Catch::Approx(20.0).margin(1e-3));

    CHECK(psnr(a, b, 2.0) - psnr(a, b, 1.0) == Catch::Approx(20.0 * std::log10(2.0)).margin(1e-9)); // ~6.02 dB
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK_THROWS_AS(psnr(a, Tensor<double>({3, 4, 4}, 0.0)), std::invalid_argument);
}

TEST_CASE("ssim basics and symmetry") {
    Rng rng(103);
    const Tensor<double> a = random_tensor<double>({3, 16, 16}, rng, 0.0, 1.0);
    CHECK(ssim(a, a) == Catch::Approx(1.0).margin(1e-12));

    Tensor<double> inverted(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) inverted[i] = 1.0 - a[i];
    CHECK(ssim(a, inverted) < 1.0);
    CHECK(ssim(a, inverted) == Catch::Approx(ssim(inverted, a)).margin(1e-12));

    CHECK_THROWS_AS(ssim(Tensor<double>({3, 8, 8}, 0.5), Tensor<double>({3, 8, 8}, 0.5)), std::domain_error);
}

TEST_CASE("ssim matches the naive sliding-window oracle within 1e-6") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        Rng rng(seed);
        const Tensor<double> a = random_tensor<double>({32, 32}, rng, 0.0, 1.0);
        const Tensor<double> b = random_tensor<double>({32, 32}, rng, 0.0, 1.0);
        CHECK(ssim(a, b) == Catch::Approx(ssim_naive(a, b)).margin(1e-6));
    }
}

TEST_CASE("mu and PU encodings hit their endpoints and are strictly monotone") {
    const Tensor<double> ends({2}, {0.0, 1.0});
    const Tensor<double> mu = mu_domain(ends);
    CHECK(mu[0] == 0.0);
    CHECK(mu[1] == 1.0);
    const Tensor<double> pu = pu_domain(ends);
    CHECK(pu[0] == Catch::Approx(0.0).margin(1e-12));
    CHECK(pu[1] == Catch::Approx(1.0).margin(1e-12));

    // pairwise scan over 1000 sampled radiances
    Tensor<double> samples({1000});
    for (std::int64_t i = 0; i < 1000; ++i) samples[i] = static_cast<double>(i) / 999.0;
    const Tensor<double> enc_mu = mu_domain(samples);
    const Tensor<double> enc_pu = pu_domain(samples);
    for (std::int64_t i = 1; i < 1000; ++i) {
        CHECK(enc_mu[i] > enc_mu[i - 1]);
        CHECK(enc_pu[i] > enc_pu[i - 1]);
    }
}

TEST_CASE("pu21 encoder reproduces published anchor values") {
    // the banding-glare fit maps 100 cd/m^2 to ~256 and its floor to ~0
    CHECK(pu21_encode(100.0) == Catch::Approx(256.0).margin(1.0));
    CHECK(pu21_encode(0.005) == Catch::Approx(0.0).margin(0.01));
    CHECK(pu21_encode(10000.0) > 590.0);
    // clamped outside the calibrated range
    CHECK(pu21_encode(0.0001) == pu21_encode(0.005));
    CHECK(pu21_encode(20000.0) == pu21_encode(10000.0));
}

TEST_CASE("display model black level") {
    DisplayModel d;
    // 100/1000 plus the ambient reflection term 10 * 0.005 / pi
    CHECK(d.black_level() == Catch::Approx(0.1 + 10.0 * 0.005 / 3.14159265358979).epsilon(1e-12));
}

TEST_CASE("evaluate produces per-sample rows, aggregates and domain-scoped keys") {
    Rng rng(107);
    const Tensor<double> gt1 = random_tensor<double>({3, 16, 16}, rng, 0.0, 1.0);
    const Tensor<double> gt2 = random_tensor<double>({3, 16, 16}, rng, 0.0, 1.0);
    Tensor<double> off1 = gt1;
    for (std::int64_t i = 0; i < off1.numel(); ++i) off1[i] = std::min(1.0, off1[i] + 0.05);

    const EvalReport self = evaluate({{"a", gt1, gt1}, {"b", gt2, gt2}}, {"mu", "pu", "linear"});
    for (const auto& id : self.sample_ids) {
        CHECK(std::isinf(self.per_sample.at(id).at("mu_psnr")));
        CHECK(self.per_sample.at(id).at("mu_ssim") == Catch::Approx(1.0).margin(1e-12));
        CHECK(self.per_sample.at(id).at("pu_ssim") == Catch::Approx(1.0).margin(1e-12));
        CHECK(self.per_sample.at(id).at("l_ssim") == Catch::Approx(1.0).margin(1e-12));
    }

    const EvalReport rep = evaluate({{"a", off1, gt1}, {"b", gt2, gt2}}, {"mu"});
    CHECK(rep.per_sample.at("a").count("mu_psnr") == 1);
    CHECK(rep.per_sample.at("a").count("l_psnr") == 0); // only requested domains
    CHECK(rep.per_sample.at("a").count("pu_psnr") == 0);

    // two-sample aggregate is the arithmetic mean
    const EvalReport two = evaluate({{"a", off1, gt1}, {"b", off1, gt2}}, {"linear"});
    const double mean = (two.per_sample.at("a").at("l_psnr") + two.per_sample.at("b").at("l_psnr")) / 2.0;
    CHECK(two.aggregate.at("l_psnr") == Catch::Approx(mean).margin(1e-12));

    CHECK_THROWS_AS(evaluate({{"a", gt1, gt1}}, {"bogus"}), std::invalid_argument);
}

TEST_CASE("report writers format decimals and sentinels as specified") {
    Rng rng(109);
    const Tensor<double> gt = random_tensor<double>({3, 16, 16}, rng, 0.0, 1.0);
    Tensor<double> off = gt;
    for (std::int64_t i = 0; i < off.numel(); ++i) off[i] = std::min(1.0, off[i] + 0.1);
    const EvalReport rep = evaluate({{"x", off, gt}, {"y", gt, gt}}, {"linear"}, {"lost_sample"});

    std::ostringstream flat;
    write_report_flat(rep, flat);
    const std::string s = flat.str();
    CHECK(s.find("y.l_psnr = inf") != std::string::npos);
    CHECK(s.find("y.l_ssim = 1.000000") != std::string::npos);
    CHECK(s.find("missing.lost_sample = 1") != std::string::npos);

    // PSNR carries 4 fractional digits, SSIM 6
    const std::size_t at = s.find("x.l_psnr = ");
    REQUIRE(at != std::string::npos);
    const std::string val = s.substr(at + 11, s.find('\n', at) - at - 11);
    CHECK(val.find('.') == val.size() - 5);

    std::ostringstream text;
    write_report_text(rep, text);
    CHECK(text.str().find("ssim_mode = per-channel-average") != std::string::npos);
    CHECK(text.str().find("# missing: lost_sample") != std::string::npos);
    CHECK(text.str().find("mean") != std::string::npos);
}

TEST_CASE("encoding monotonicity preserves per-pixel intensity ranking") {
    Rng rng(113);
    const Tensor<double> a = random_tensor<double>({64}, rng, 0.0, 1.0);
    const Tensor<double> em = mu_domain(a);
    const Tensor<double> ep = pu_domain(a);
    std::int64_t arg_a = 0, arg_m = 0, arg_p = 0;
    for (std::int64_t i = 1; i < 64; ++i) {
        if (a[i] > a[arg_a]) arg_a = i;
        if (em[i] > em[arg_m]) arg_m = i;
        if (ep[i] > ep[arg_p]) arg_p = i;
    }
    CHECK(arg_a == arg_m);
    CHECK(arg_a == arg_p);
}
