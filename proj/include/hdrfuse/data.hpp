#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdrfuse/config.hpp"
#include "hdrfuse/hdr_math.hpp"
#include "hdrfuse/image_io.hpp"
#include "hdrfuse/rng.hpp"

namespace hdrfuse {

// ---- scene taxonomy -----------------------------------------------------------

enum class MotionClass { Local, Ego, Full, Static };
enum class LightClass { Day, Sunset, Night };

inline std::string to_string(MotionClass m) {
    switch (m) {
        case MotionClass::Local: return "local";
        case MotionClass::Ego: return "ego";
        case MotionClass::Full: return "full";
        case MotionClass::Static: return "static";
    }
    return "?";
}

inline std::string to_string(LightClass l) {
    switch (l) {
        case LightClass::Day: return "day";
        case LightClass::Sunset: return "sunset";
        case LightClass::Night: return "night";
    }
    return "?";
}

inline MotionClass parse_motion(const std::string& s) {
    if (s == "local") return MotionClass::Local;
    if (s == "ego") return MotionClass::Ego;
    if (s == "full") return MotionClass::Full;
    if (s == "static") return MotionClass::Static;
    throw std::runtime_error("unknown motion class '" + s + "'");
}

inline LightClass parse_light(const std::string& s) {
    if (s == "day") return LightClass::Day;
    if (s == "sunset") return LightClass::Sunset;
    if (s == "night") return LightClass::Night;
    throw std::runtime_error("unknown light class '" + s + "'");
}

// Radiance span in log2 stops per light class.
inline double light_span_log2(LightClass l) {
    switch (l) {
        case LightClass::Day: return 4.0;
        case LightClass::Sunset: return 7.0;
        case LightClass::Night: return 10.0;
    }
    return 4.0;
}

// ---- manifest -------------------------------------------------------------------

struct SceneManifest {
    std::string id;
    MotionClass motion = MotionClass::Static;
    LightClass light = LightClass::Day;
    double t_ref = 1.0;
    int selected_i = 0;
    std::array<double, 3> ev{};             // log2 offsets, ascending
    std::array<std::string, 3> files{};     // EV-ordered LDR file names
};

// ---- scene folder layout ----------------------------------------------------
// <id>/input_1.png input_2.png input_3.png exposure.txt gt.pfm manifest.txt

struct LoadedScene {
    LdrBracket bracket;
    HdrImage gt;
    SceneManifest manifest;
};

inline LoadedScene load_bracket(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    for (const char* req : {"manifest.txt", "exposure.txt", "gt.pfm"})
        if (!fs::exists(root / req))
            throw std::runtime_error("scene '" + dir + "' is missing " + std::string(req));

    SceneManifest man;
    std::map<std::string, std::string> kv;
    for (const auto& [k, v] : read_flat_kv_file((root / "manifest.txt").string())) kv[k] = v;
    for (const char* req : {"id", "motion", "light", "t_ref", "selected_i"})
        if (!kv.count(req))
            throw std::runtime_error("scene '" + dir + "': manifest.txt is missing key '" + std::string(req) + "'");
    man.id = kv["id"];
    man.motion = parse_motion(kv["motion"]);
    man.light = parse_light(kv["light"]);
    man.t_ref = std::stod(kv["t_ref"]);
    man.selected_i = std::stoi(kv["selected_i"]);
    if (!(man.t_ref > 0.0)) throw std::runtime_error("scene '" + dir + "': t_ref must be > 0");

    std::ifstream ef((root / "exposure.txt").string());
    std::vector<std::pair<double, std::string>> entries;
    for (int i = 0; i < 3; ++i) {
        std::string line;
        if (!std::getline(ef, line))
            throw std::runtime_error("scene '" + dir + "': exposure.txt needs three EV lines");
        entries.emplace_back(std::stod(trim(line)), "input_" + std::to_string(i + 1) + ".png");
    }
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (!(entries[0].first < entries[1].first && entries[1].first < entries[2].first))
        throw std::runtime_error("scene '" + dir + "': EV offsets must be strictly increasing");

    std::array<LdrImage, 3> ldr;
    for (int i = 0; i < 3; ++i) {
        const fs::path p = root / entries[static_cast<std::size_t>(i)].second;
        if (!fs::exists(p)) throw std::runtime_error("scene '" + dir + "' is missing " + p.filename().string());
        const double ev = entries[static_cast<std::size_t>(i)].first;
        const float t = static_cast<float>(man.t_ref * std::exp2(ev));
        ldr[static_cast<std::size_t>(i)] = LdrImage(read_png(p.string()), t, static_cast<float>(ev));
        man.ev[static_cast<std::size_t>(i)] = ev;
        man.files[static_cast<std::size_t>(i)] = p.filename().string();
    }
    Tensor<float> gt = read_pfm((root / "gt.pfm").string());
    if (!gt.same_shape(ldr[0].pixels))
        throw std::runtime_error("scene '" + dir + "': ground truth shape " + shape_str(gt.shape()) +
                                 " does not match the LDR shape " + shape_str(ldr[0].pixels.shape()));
    for (std::int64_t i = 0; i < gt.numel(); ++i)
        if (!std::isfinite(gt[i]) || gt[i] < 0.0f)
            throw std::runtime_error("scene '" + dir + "': gt.pfm holds negative or non-finite radiance");
    LoadedScene out{LdrBracket(std::move(ldr[0]), std::move(ldr[1]), std::move(ldr[2])), HdrImage(std::move(gt)),
                    std::move(man)};
    return out;
}

// ---- synthetic scenes -----------------------------------------------------------

struct Sprite {
    int kind = 0;                      // 0 disk, 1 rectangle
    double cx = 0, cy = 0;             // world-space center at stop 0
    double vx = 0, vy = 0;             // per-stop velocity (local/full motion)
    double rx = 8, ry = 8;             // radius / half extents
    double log2_radiance = 0;
    std::array<double, 3> tint{1, 1, 1};
};

struct SyntheticSceneSpec {
    std::uint64_t seed = 0;
    std::int64_t height = 128, width = 192;
    MotionClass motion = MotionClass::Static;
    LightClass light = LightClass::Day;
    double t_ref = 1.0;
    // background: log2 radiance ramp plus a low-frequency texture
    double grad_angle = 0.0;
    double grad_lo = -2.0, grad_hi = 2.0;
    double tex_amp = 0.3;
    double tex_fx = 0.05, tex_fy = 0.03, tex_phase = 0.0;
    std::array<double, 3> bg_tint{1, 1, 1};
    std::vector<Sprite> sprites;
    std::int64_t cam_dx = 0, cam_dy = 0; // camera translation per stop (ego/full)
};

inline SyntheticSceneSpec make_scene_spec(std::uint64_t seed, MotionClass motion, LightClass light,
                                          std::int64_t height, std::int64_t width) {
    SyntheticSceneSpec spec;
    spec.seed = seed;
    spec.height = height;
    spec.width = width;
    spec.motion = motion;
    spec.light = light;
    Rng rng = Rng::stream(seed, 0xDA7A);

    const double span = light_span_log2(light);
    spec.grad_lo = -span / 2.0;
    spec.grad_hi = span / 2.0;
    spec.grad_angle = rng.uniform(0.0, 6.283185307179586);
    spec.tex_amp = span * rng.uniform(0.04, 0.10);
    spec.tex_fx = rng.uniform(2.0, 6.0) * 6.283185307179586 / static_cast<double>(width);
    spec.tex_fy = rng.uniform(2.0, 6.0) * 6.283185307179586 / static_cast<double>(height);
    spec.tex_phase = rng.uniform(0.0, 6.283185307179586);
    for (auto& t : spec.bg_tint) t = rng.uniform(0.85, 1.15);

    const double ext = static_cast<double>(std::min(height, width));
    const bool sprites_move = motion == MotionClass::Local || motion == MotionClass::Full;
    const int n_sprites = 2 + static_cast<int>(rng.below(3));
    for (int s = 0; s < n_sprites; ++s) {
        Sprite sp;
        sp.kind = static_cast<int>(rng.below(2));
        sp.rx = ext * rng.uniform(0.06, 0.14);
        sp.ry = sp.kind == 0 ? sp.rx : ext * rng.uniform(0.06, 0.14);
        sp.cx = rng.uniform(sp.rx * 1.5, static_cast<double>(width) - sp.rx * 1.5);
        sp.cy = rng.uniform(sp.ry * 1.5, static_cast<double>(height) - sp.ry * 1.5);
        if (sprites_move) {
            sp.vx = rng.uniform(-0.04, 0.04) * static_cast<double>(width);
            sp.vy = rng.uniform(-0.04, 0.04) * static_cast<double>(height);
            // keep the trajectory in frame across the three stops
            for (int stop = 0; stop < 3; ++stop) {
                const double px = sp.cx + stop * sp.vx, py = sp.cy + stop * sp.vy;
                if (px < sp.rx || px > width - sp.rx || py < sp.ry || py > height - sp.ry) {
                    sp.vx *= 0.4;
                    sp.vy *= 0.4;
                }
            }
        }
        sp.log2_radiance = rng.uniform(spec.grad_lo * 0.8, spec.grad_hi * 0.8);
        for (auto& t : sp.tint) t = rng.uniform(0.7, 1.3);
        spec.sprites.push_back(sp);
    }
    if (motion == MotionClass::Ego || motion == MotionClass::Full) {
        auto shift = [&](std::int64_t extent) {
            const std::int64_t mag = 3 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(
                                             std::max<std::int64_t>(1, extent / 20))));
            return rng.below(2) ? mag : -mag;
        };
        spec.cam_dx = shift(width);
        spec.cam_dy = shift(height);
    }
    return spec;
}

// Radiance of the (static-per-stop) world at one stop pose. Camera motion is
// realized by sampling the world at integer-shifted coordinates; sprite
// motion by re-posing the sprites.
inline Tensor<float> render_radiance(const SyntheticSceneSpec& spec, int stop) {
    const std::int64_t h = spec.height, w = spec.width;
    const bool cam_moves = spec.motion == MotionClass::Ego || spec.motion == MotionClass::Full;
    const bool sprites_move = spec.motion == MotionClass::Local || spec.motion == MotionClass::Full;
    const double offx = cam_moves ? static_cast<double>(spec.cam_dx * stop) : 0.0;
    const double offy = cam_moves ? static_cast<double>(spec.cam_dy * stop) : 0.0;
    const double ca = std::cos(spec.grad_angle), sa = std::sin(spec.grad_angle);
    const double diag = std::sqrt(static_cast<double>(h * h + w * w));

    Tensor<float> out({3, h, w});
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            const double wx = static_cast<double>(x) + offx;
            const double wy = static_cast<double>(y) + offy;
            double u = (wx * ca + wy * sa) / diag + 0.5;
            u = std::min(std::max(u, 0.0), 1.0);
            double lg = spec.grad_lo + (spec.grad_hi - spec.grad_lo) * u +
                        spec.tex_amp * std::sin(spec.tex_fx * wx + spec.tex_phase) * std::sin(spec.tex_fy * wy);
            const std::array<double, 3>* tint = &spec.bg_tint;
            for (const auto& sp : spec.sprites) {
                const double sx = sp.cx + (sprites_move ? stop * sp.vx : 0.0);
                const double sy = sp.cy + (sprites_move ? stop * sp.vy : 0.0);
                const double dx = wx - sx, dy = wy - sy;
                const bool inside = sp.kind == 0 ? (dx * dx / (sp.rx * sp.rx) + dy * dy / (sp.ry * sp.ry) <= 1.0)
                                                 : (std::fabs(dx) <= sp.rx && std::fabs(dy) <= sp.ry);
                if (inside) {
                    lg = sp.log2_radiance;
                    tint = &sp.tint;
                }
            }
            const double e = std::exp2(lg);
            for (std::int64_t c = 0; c < 3; ++c)
                out.at(c, y, x) = static_cast<float>(e * (*tint)[static_cast<std::size_t>(c)]);
        }
    }
    return out;
}

// L = clamp((E*t)^(1/gamma), 0, 1), quantized to 16 bits.
inline LdrImage expose(const Tensor<float>& radiance, float t, float ev, float gamma = kGamma) {
    Tensor<float> px(radiance.shape());
    const float inv_gamma = 1.0f / gamma;
    for (std::int64_t i = 0; i < px.numel(); ++i) {
        const float l = std::min(std::max(std::pow(radiance[i] * t, inv_gamma), 0.0f), 1.0f);
        px[i] = static_cast<float>(std::lround(l * 65535.0f)) / 65535.0f;
    }
    return LdrImage(std::move(px), t, ev);
}

struct StopRender {
    Tensor<float> radiance;
    std::vector<LdrImage> exposures; // EV -4..+4, ascending
};

struct SceneRender {
    SyntheticSceneSpec spec;
    std::array<StopRender, 3> stops;
};

inline SceneRender synthesize_scene(const SyntheticSceneSpec& spec) {
    if (spec.height < 4 || spec.width < 4) throw std::invalid_argument("scene extents too small");
    for (const auto& sp : spec.sprites)
        if (sp.log2_radiance < spec.grad_lo - light_span_log2(spec.light) ||
            sp.rx <= 0.0 || sp.ry <= 0.0)
            throw std::invalid_argument("sprite radiance/extent out of range");
    SceneRender render;
    render.spec = spec;
    for (int stop = 0; stop < 3; ++stop) {
        StopRender sr;
        sr.radiance = render_radiance(spec, stop);
        for (int ev = -4; ev <= 4; ++ev) {
            const float t = static_cast<float>(spec.t_ref * std::exp2(static_cast<double>(ev)));
            sr.exposures.push_back(expose(sr.radiance, t, static_cast<float>(ev)));
        }
        render.stops[static_cast<std::size_t>(stop)] = std::move(sr);
    }
    return render;
}

// ---- ground-truth generation ---------------------------------------------------

struct GroundTruth {
    HdrImage gt;    // normalized to [0,1] by its own stack's maximum
    int selected_i; // EV spread of the chosen 3-exposure subset
};

// From a static 9-exposure bracket: merge all nine into a reference
// radiance, blend (-i, 0, +i) subsets with triangle weights for
// i in 1..4, and keep the subset closest to the reference under mu-law
// MSE (ties break toward the smallest i).
inline GroundTruth make_ground_truth(const std::vector<LdrImage>& bracket, int reference_index = 4) {
    if (bracket.size() < 9) throw std::domain_error("ground-truth generation needs a 9-exposure bracket");
    if (reference_index < 4 || reference_index + 4 >= static_cast<int>(bracket.size()))
        throw std::domain_error("reference index must leave 4 exposures on each side");

    float t_min_all = bracket[0].exposure_time;
    for (const auto& img : bracket) t_min_all = std::min(t_min_all, img.exposure_time);
    const HdrImage merged = debevec_merge(bracket);
    const Tensor<double> mu_ref = mu_law(normalize_by_stack_max(merged, t_min_all).pixels.cast<double>());

    double best_mse = 0.0;
    int best_i = 0;
    HdrImage best_blend;
    for (int i = 1; i <= 4; ++i) {
        const LdrImage& lo = bracket[static_cast<std::size_t>(reference_index - i)];
        const LdrImage& mid = bracket[static_cast<std::size_t>(reference_index)];
        const LdrImage& hi = bracket[static_cast<std::size_t>(reference_index + i)];
        const std::array<HdrImage, 3> proj{gamma_project(lo), gamma_project(mid), gamma_project(hi)};
        HdrImage blended = blend(proj, triangle_weights(mid));
        const Tensor<double> mu_cand =
            mu_law(normalize_by_stack_max(blended, t_min_all).pixels.cast<double>());
        double mse = 0.0;
        for (std::int64_t p = 0; p < mu_cand.numel(); ++p) {
            const double d = mu_cand[p] - mu_ref[p];
            mse += d * d;
        }
        mse /= static_cast<double>(mu_cand.numel());
        if (best_i == 0 || mse < best_mse) {
            best_mse = mse;
            best_i = i;
            best_blend = std::move(blended);
        }
    }
    const float t_min_sel =
        bracket[static_cast<std::size_t>(reference_index - best_i)].exposure_time;
    return GroundTruth{normalize_by_stack_max(best_blend, t_min_sel), best_i};
}

// ---- dataset builder ------------------------------------------------------------

struct DatasetParams {
    std::int64_t scenes = 6;
    std::uint64_t seed = 7;
    std::int64_t height = 128, width = 192;
    std::vector<std::pair<MotionClass, double>> mix = {
        {MotionClass::Local, 1.0 / 3}, {MotionClass::Ego, 1.0 / 3}, {MotionClass::Full, 1.0 / 3}};
};

inline std::vector<MotionClass> apportion_classes(const std::vector<std::pair<MotionClass, double>>& mix,
                                                  std::int64_t n) {
    double sum = 0.0;
    for (const auto& [cls, frac] : mix) {
        (void)cls;
        if (frac < 0.0) throw std::invalid_argument("mix fractions must be non-negative");
        sum += frac;
    }
    if (std::fabs(sum - 1.0) > 1e-6) throw std::invalid_argument("mix fractions must sum to 1");
    std::vector<std::int64_t> counts(mix.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::int64_t assigned = 0;
    for (std::size_t i = 0; i < mix.size(); ++i) {
        const double exact = mix[i].second * static_cast<double>(n);
        counts[i] = static_cast<std::int64_t>(exact);
        assigned += counts[i];
        remainders.emplace_back(exact - static_cast<double>(counts[i]), i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::int64_t k = 0; k < n - assigned; ++k) counts[remainders[static_cast<std::size_t>(k) % mix.size()].second]++;
    std::vector<MotionClass> out;
    for (std::size_t i = 0; i < mix.size(); ++i)
        for (std::int64_t k = 0; k < counts[i]; ++k) out.push_back(mix[i].first);
    return out;
}

// Renders `scenes` synthetic scenes and writes them in the on-disk layout.
// The three inputs come from three different stops (so motion classes show
// up as inter-frame misalignment); the ground truth comes from the middle
// stop alone.
inline std::vector<SceneManifest> build_dataset(const DatasetParams& params, const std::string& out_dir) {
    namespace fs = std::filesystem;
    const std::vector<MotionClass> classes = apportion_classes(params.mix, params.scenes);
    const std::array<LightClass, 3> lights{LightClass::Day, LightClass::Sunset, LightClass::Night};
    fs::create_directories(out_dir);

    std::vector<SceneManifest> manifests;
    for (std::int64_t s = 0; s < params.scenes; ++s) {
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "scene_%03lld", static_cast<long long>(s));
        const std::string id = idbuf;
        const MotionClass motion = classes[static_cast<std::size_t>(s)];
        const LightClass light = lights[static_cast<std::size_t>(s) % lights.size()];
        const std::uint64_t scene_seed = Rng::stream(params.seed, 0xB00 + static_cast<std::uint64_t>(s)).next_u64();
        const SyntheticSceneSpec spec =
            make_scene_spec(scene_seed, motion, light, params.height, params.width);
        const SceneRender render = synthesize_scene(spec);

        const GroundTruth gt = make_ground_truth(render.stops[1].exposures, 4);
        const int i = gt.selected_i;

        const fs::path dir = fs::path(out_dir) / id;
        fs::create_directories(dir);
        // stop 1 at EV -i, stop 2 (reference) at EV 0, stop 3 at EV +i
        write_png16(render.stops[0].exposures[static_cast<std::size_t>(4 - i)].pixels,
                    (dir / "input_1.png").string());
        write_png16(render.stops[1].exposures[4].pixels, (dir / "input_2.png").string());
        write_png16(render.stops[2].exposures[static_cast<std::size_t>(4 + i)].pixels,
                    (dir / "input_3.png").string());
        write_pfm(gt.gt.pixels, (dir / "gt.pfm").string());

        std::ofstream ef((dir / "exposure.txt").string(), std::ios::trunc);
        ef << -i << "\n" << 0 << "\n" << i << "\n";
        std::ofstream mf((dir / "manifest.txt").string(), std::ios::trunc);
        mf << "id = " << id << "\n";
        mf << "motion = " << to_string(motion) << "\n";
        mf << "light = " << to_string(light) << "\n";
        mf << "t_ref = " << spec.t_ref << "\n";
        mf << "selected_i = " << i << "\n";
        if (!ef || !mf) throw std::runtime_error("failed writing scene '" + id + "'");

        SceneManifest man;
        man.id = id;
        man.motion = motion;
        man.light = light;
        man.t_ref = spec.t_ref;
        man.selected_i = i;
        man.ev = {static_cast<double>(-i), 0.0, static_cast<double>(i)};
        man.files = {"input_1.png", "input_2.png", "input_3.png"};
        manifests.push_back(std::move(man));
    }
    return manifests;
}

// All scene directories under a dataset root, sorted by id.
inline std::vector<std::string> list_scene_dirs(const std::string& root) {
    namespace fs = std::filesystem;
    std::vector<std::string> dirs;
    if (!fs::is_directory(root)) throw std::runtime_error("dataset directory '" + root + "' does not exist");
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / "manifest.txt")) dirs.push_back(e.path().string());
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

} // namespace hdrfuse
