#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdrfuse/hdr_math.hpp"
#include "hdrfuse/tensor.hpp"

namespace hdrfuse {

// Viewing conditions for the PU-encoded domain.
struct DisplayModel {
    double peak_luminance = 100.0; // cd/m^2
    double contrast = 1000.0;      // peak : black
    double ambient_lux = 10.0;
    double reflectivity = 0.005;   // screen reflectance factor

    double black_level() const {
        const double refl = ambient_lux * reflectivity / 3.14159265358979323846;
        return peak_luminance / contrast + refl;
    }
};

inline double psnr(const Tensor<double>& a, const Tensor<double>& b, double peak = 1.0) {
    if (!a.same_shape(b))
        throw std::invalid_argument("psnr shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double mse = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

namespace detail_metrics {

inline std::vector<double> gaussian_kernel(int size, double sigma) {
    std::vector<double> k(static_cast<std::size_t>(size));
    const int half = size / 2;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        const double d = i - half;
        k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += k[static_cast<std::size_t>(i)];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// Separable valid-mode Gaussian filter of an HxW plane.
inline Tensor<double> gauss_valid(const Tensor<double>& img, const std::vector<double>& k) {
    const std::int64_t h = img.dim(0), w = img.dim(1);
    const std::int64_t n = static_cast<std::int64_t>(k.size());
    Tensor<double> tmp({h, w - n + 1}, 0.0);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x + n <= w; ++x) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < n; ++i) acc += img.at(y, x + i) * k[static_cast<std::size_t>(i)];
            tmp.at(y, x) = acc;
        }
    Tensor<double> out({h - n + 1, w - n + 1}, 0.0);
    for (std::int64_t y = 0; y + n <= h; ++y)
        for (std::int64_t x = 0; x < tmp.dim(1); ++x) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < n; ++i) acc += tmp.at(y + i, x) * k[static_cast<std::size_t>(i)];
            out.at(y, x) = acc;
        }
    return out;
}

} // namespace detail_metrics

// Structural similarity with the standard 11-tap Gaussian window
// (sigma 1.5, k1 0.01, k2 0.03, dynamic range 1), mean over valid window
// positions. 3xHxW inputs are evaluated per channel and averaged.
inline double ssim(const Tensor<double>& a, const Tensor<double>& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("ssim shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    constexpr int kWin = 11;
    constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
    const bool chw = a.rank() == 3;
    const std::int64_t channels = chw ? a.dim(0) : 1;
    const std::int64_t h = chw ? a.dim(1) : a.dim(0);
    const std::int64_t w = chw ? a.dim(2) : a.dim(1);
    if (h < kWin || w < kWin)
        throw std::domain_error("ssim input " + shape_str(a.shape()) + " smaller than the 11x11 window");

    const auto kernel = detail_metrics::gaussian_kernel(kWin, 1.5);
    double total = 0.0;
    for (std::int64_t c = 0; c < channels; ++c) {
        Tensor<double> pa({h, w}), pb({h, w}), paa({h, w}), pbb({h, w}), pab({h, w});
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) {
                const double va = chw ? a.at(c, y, x) : a.at(y, x);
                const double vb = chw ? b.at(c, y, x) : b.at(y, x);
                pa.at(y, x) = va;
                pb.at(y, x) = vb;
                paa.at(y, x) = va * va;
                pbb.at(y, x) = vb * vb;
                pab.at(y, x) = va * vb;
            }
        const Tensor<double> mu_a = detail_metrics::gauss_valid(pa, kernel);
        const Tensor<double> mu_b = detail_metrics::gauss_valid(pb, kernel);
        const Tensor<double> m_aa = detail_metrics::gauss_valid(paa, kernel);
        const Tensor<double> m_bb = detail_metrics::gauss_valid(pbb, kernel);
        const Tensor<double> m_ab = detail_metrics::gauss_valid(pab, kernel);
        double acc = 0.0;
        for (std::int64_t i = 0; i < mu_a.numel(); ++i) {
            const double ma = mu_a[i], mb = mu_b[i];
            const double sa = m_aa[i] - ma * ma;
            const double sb = m_bb[i] - mb * mb;
            const double sab = m_ab[i] - ma * mb;
            acc += ((2.0 * ma * mb + kC1) * (2.0 * sab + kC2)) / ((ma * ma + mb * mb + kC1) * (sa + sb + kC2));
        }
        total += acc / static_cast<double>(mu_a.numel());
    }
    return total / static_cast<double>(channels);
}

// mu-law tone-mapped domain.
inline Tensor<double> mu_domain(const Tensor<double>& a) { return mu_law(a, static_cast<double>(kMuLaw)); }

// PU21 banding-glare encoding (Mantiuk & Azimi 2021), absolute luminance in.
inline double pu21_encode(double luminance) {
    constexpr double p0 = 0.353487901, p1 = 0.3734658629, p2 = 8.277049286e-05, p3 = 0.9062562627,
                     p4 = 0.09150303166, p5 = 0.9099517204, p6 = 596.3148142;
    const double y = std::min(std::max(luminance, 0.005), 10000.0);
    const double yp = std::pow(y, p3);
    return p6 * (std::pow((p0 + p1 * yp) / (1.0 + p2 * yp), p4) - p5);
}

// Normalized radiance -> display luminance -> PU21, rescaled so the display
// range maps onto [0,1].
inline Tensor<double> pu_domain(const Tensor<double>& a, const DisplayModel& display = DisplayModel{}) {
    const double black = display.black_level();
    if (!(display.peak_luminance > black && black > 0.0))
        throw std::invalid_argument("display model requires peak > black level > 0");
    const double lo = pu21_encode(black);
    const double hi = pu21_encode(display.peak_luminance);
    Tensor<double> out(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const double v = std::min(std::max(a[i], 0.0), 1.0);
        const double y = std::max(black + (display.peak_luminance - black) * v, black);
        out[i] = (pu21_encode(y) - lo) / (hi - lo);
    }
    return out;
}

// ---- evaluation report --------------------------------------------------------

struct EvalPair {
    std::string id;
    Tensor<double> pred; // 3xHxW normalized radiance
    Tensor<double> gt;
};

struct EvalReport {
    std::vector<std::string> header;           // run information lines
    std::vector<std::string> sample_ids;       // sorted
    std::map<std::string, std::map<std::string, double>> per_sample; // id -> metric -> value
    std::map<std::string, double> aggregate;
    std::vector<std::string> missing;          // ids excluded from the aggregate
};

inline std::string format_metric(const std::string& name, double v) {
    char buf[64];
    if (std::isinf(v)) return "inf";
    if (name.find("psnr") != std::string::npos)
        std::snprintf(buf, sizeof(buf), "%.4f", v);
    else
        std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

// Computes PSNR/SSIM in every requested domain ("mu", "pu", "linear").
inline EvalReport evaluate(const std::vector<EvalPair>& pairs, const std::vector<std::string>& domains,
                           const std::vector<std::string>& missing = {},
                           const DisplayModel& display = DisplayModel{}) {
    for (const auto& d : domains)
        if (d != "mu" && d != "pu" && d != "linear")
            throw std::invalid_argument("unknown metric domain '" + d + "' (expected mu, pu or linear)");
    EvalReport rep;
    rep.missing = missing;
    rep.header.push_back("ssim_mode = per-channel-average");
    rep.header.push_back("display = peak " + std::to_string(display.peak_luminance) + " cd/m2, contrast " +
                         std::to_string(display.contrast) + ":1, ambient " + std::to_string(display.ambient_lux) +
                         " lux");

    std::vector<const EvalPair*> sorted;
    for (const auto& p : pairs) sorted.push_back(&p);
    std::sort(sorted.begin(), sorted.end(), [](const EvalPair* x, const EvalPair* y) { return x->id < y->id; });

    for (const EvalPair* p : sorted) {
        rep.sample_ids.push_back(p->id);
        auto& row = rep.per_sample[p->id];
        for (const auto& d : domains) {
            Tensor<double> ea, eb;
            std::string prefix;
            if (d == "mu") {
                ea = mu_domain(p->pred);
                eb = mu_domain(p->gt);
                prefix = "mu";
            } else if (d == "pu") {
                ea = pu_domain(p->pred, display);
                eb = pu_domain(p->gt, display);
                prefix = "pu";
            } else {
                ea = p->pred;
                eb = p->gt;
                prefix = "l";
            }
            row[prefix + "_psnr"] = psnr(ea, eb);
            row[prefix + "_ssim"] = ssim(ea, eb);
        }
    }
    if (!rep.per_sample.empty()) {
        for (const auto& [metric, unused] : rep.per_sample.begin()->second) {
            (void)unused;
            double acc = 0.0;
            for (const auto& id : rep.sample_ids) acc += rep.per_sample[id].at(metric);
            rep.aggregate[metric] = acc / static_cast<double>(rep.sample_ids.size());
        }
    }
    return rep;
}

inline void write_report_text(const EvalReport& rep, std::ostream& os) {
    for (const auto& h : rep.header) os << "# " << h << "\n";
    std::vector<std::string> metrics;
    if (!rep.per_sample.empty())
        for (const auto& [m, v] : rep.per_sample.begin()->second) {
            (void)v;
            metrics.push_back(m);
        }
    os << "sample";
    for (const auto& m : metrics) os << "\t" << m;
    os << "\n";
    for (const auto& id : rep.sample_ids) {
        os << id;
        for (const auto& m : metrics) os << "\t" << format_metric(m, rep.per_sample.at(id).at(m));
        os << "\n";
    }
    os << "mean";
    for (const auto& m : metrics) os << "\t" << format_metric(m, rep.aggregate.at(m));
    os << "\n";
    for (const auto& id : rep.missing) os << "# missing: " << id << "\n";
}

inline void write_report_flat(const EvalReport& rep, std::ostream& os) {
    for (const auto& id : rep.sample_ids)
        for (const auto& [m, v] : rep.per_sample.at(id)) os << id << "." << m << " = " << format_metric(m, v) << "\n";
    for (const auto& [m, v] : rep.aggregate) os << "aggregate." << m << " = " << format_metric(m, v) << "\n";
    for (const auto& id : rep.missing) os << "missing." << id << " = 1\n";
}

} // namespace hdrfuse
