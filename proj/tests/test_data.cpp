#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hdrfuse/data.hpp"
#include "testutil.hpp"

using namespace hdrfuse;
using testutil::random_tensor;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("hdrfuse_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("pfm writes the documented header and round-trips bitwise") {
    TempDir tmp("pfm");
    const fs::path p = tmp.path / "one.pfm";
    write_pfm(Tensor<float>({3, 1, 1}, {0.5f, 0.25f, 1.0f}), p.string());

    const std::string bytes = slurp(p);
    REQUIRE(bytes.size() == 15 + 12); // header + three little-endian floats
    CHECK(bytes.substr(0, 15) == "PF\n1 1\n-1.0000\n");

    const Tensor<float> back = read_pfm(p.string());
    CHECK(back[0] == 0.5f);
    CHECK(back[1] == 0.25f);
    CHECK(back[2] == 1.0f);

    Rng rng(201);
    const Tensor<float> img = random_tensor<float>({3, 8, 8}, rng, -10.0, 10.0);
    const fs::path q = tmp.path / "rand.pfm";
    write_pfm(img, q.string());
    const Tensor<float> img2 = read_pfm(q.string());
    for (std::int64_t i = 0; i < img.numel(); ++i) REQUIRE(img[i] == img2[i]);

    // writing the decoded image again reproduces the file byte for byte
    const fs::path q2 = tmp.path / "rand2.pfm";
    write_pfm(img2, q2.string());
    CHECK(slurp(q) == slurp(q2));
}

TEST_CASE("pfm reader accepts big-endian positive-scale files") {
    TempDir tmp("pfm_be");
    const fs::path p = tmp.path / "be.pfm";
    {
        std::ofstream f(p, std::ios::binary);
        f << "PF\n1 1\n1.0\n";
        const float vals[3] = {0.5f, -2.0f, 7.25f};
        for (float v : vals) {
            unsigned char le[4];
            std::memcpy(le, &v, 4);
            const unsigned char be[4] = {le[3], le[2], le[1], le[0]};
            f.write(reinterpret_cast<const char*>(be), 4);
        }
    }
    const Tensor<float> img = read_pfm(p.string());
    CHECK(img[0] == 0.5f);
    CHECK(img[1] == -2.0f);
    CHECK(img[2] == 7.25f);
}

TEST_CASE("pfm reader rejects bad magic and truncation") {
    TempDir tmp("pfm_bad");
    const fs::path bad = tmp.path / "bad.pfm";
    std::ofstream(bad) << "P6\n1 1\n255\n";
    CHECK_THROWS_WITH(read_pfm(bad.string()), Catch::Matchers::ContainsSubstring("magic"));

    const fs::path trunc = tmp.path / "trunc.pfm";
    std::ofstream(trunc, std::ios::binary) << "PF\n2 2\n-1.0\n\x01\x02";
    CHECK_THROWS_WITH(read_pfm(trunc.string()), Catch::Matchers::ContainsSubstring("truncated"));
}

TEST_CASE("16-bit png round-trips quantized values exactly and deterministically") {
    TempDir tmp("png");
    Rng rng(203);
    Tensor<float> img = random_tensor<float>({3, 12, 9}, rng, 0.0, 1.0);
    for (std::int64_t i = 0; i < img.numel(); ++i)
        img[i] = static_cast<float>(std::lround(img[i] * 65535.0f)) / 65535.0f;

    const fs::path a = tmp.path / "a.png", b = tmp.path / "b.png";
    write_png16(img, a.string());
    write_png16(img, b.string());
    CHECK(slurp(a) == slurp(b));

    const Tensor<float> back = read_png(a.string());
    REQUIRE(back.shape() == img.shape());
    for (std::int64_t i = 0; i < img.numel(); ++i) REQUIRE(back[i] == img[i]);
}

TEST_CASE("scene folders load with EV-sorted exposures and reconstructed times") {
    TempDir tmp("scene");
    const fs::path dir = tmp.path / "s";
    fs::create_directories(dir);
    Rng rng(205);
    // deliberately shuffled: input_1 holds the LONGEST exposure
    const Tensor<float> long_px = random_tensor<float>({3, 6, 6}, rng, 0.0, 1.0);
    const Tensor<float> ref_px = random_tensor<float>({3, 6, 6}, rng, 0.0, 1.0);
    const Tensor<float> short_px = random_tensor<float>({3, 6, 6}, rng, 0.0, 1.0);
    auto quant = [](Tensor<float> t) {
        for (std::int64_t i = 0; i < t.numel(); ++i)
            t[i] = static_cast<float>(std::lround(t[i] * 65535.0f)) / 65535.0f;
        return t;
    };
    write_png16(quant(long_px), (dir / "input_1.png").string());
    write_png16(quant(ref_px), (dir / "input_2.png").string());
    write_png16(quant(short_px), (dir / "input_3.png").string());
    std::ofstream(dir / "exposure.txt") << "2\n0\n-2\n";
    write_pfm(Tensor<float>({3, 6, 6}, 0.25f), (dir / "gt.pfm").string());
    std::ofstream(dir / "manifest.txt") << "id = s\nmotion = ego\nlight = sunset\nt_ref = 0.25\nselected_i = 2\n";

    const LoadedScene scene = load_bracket(dir.string());
    CHECK(scene.manifest.motion == MotionClass::Ego);
    CHECK(scene.manifest.light == LightClass::Sunset);
    CHECK(scene.bracket.short_exp.exposure_time == Catch::Approx(0.0625));
    CHECK(scene.bracket.reference.exposure_time == Catch::Approx(0.25));
    CHECK(scene.bracket.long_exp.exposure_time == Catch::Approx(1.0));
    // EV-sorted in memory regardless of file order
    const Tensor<float> qs = quant(short_px);
    for (std::int64_t i = 0; i < qs.numel(); ++i) REQUIRE(scene.bracket.short_exp.pixels[i] == qs[i]);

    // duplicate EVs are rejected
    std::ofstream(dir / "exposure.txt", std::ios::trunc) << "0\n0\n2\n";
    CHECK_THROWS_WITH(load_bracket(dir.string()), Catch::Matchers::ContainsSubstring("strictly increasing"));
    std::ofstream(dir / "exposure.txt", std::ios::trunc) << "-2\n0\n2\n";

    // corrupt ground truth (negative radiance) is rejected
    write_pfm(Tensor<float>({3, 6, 6}, -0.5f), (dir / "gt.pfm").string());
    CHECK_THROWS_WITH(load_bracket(dir.string()), Catch::Matchers::ContainsSubstring("negative or non-finite"));
    write_pfm(Tensor<float>({3, 6, 6}, 0.25f), (dir / "gt.pfm").string());

    fs::remove(dir / "input_2.png");
    CHECK_THROWS_WITH(load_bracket(dir.string()), Catch::Matchers::ContainsSubstring("input_2.png"));
}

TEST_CASE("static scenes are identical across stops; ego scenes translate") {
    const SyntheticSceneSpec st = make_scene_spec(11, MotionClass::Static, LightClass::Day, 32, 48);
    const SceneRender r = synthesize_scene(st);
    for (int stop = 1; stop < 3; ++stop)
        for (std::int64_t i = 0; i < r.stops[0].radiance.numel(); ++i)
            REQUIRE(r.stops[static_cast<std::size_t>(stop)].radiance[i] == r.stops[0].radiance[i]);

    const SyntheticSceneSpec ego = make_scene_spec(13, MotionClass::Ego, LightClass::Day, 32, 48);
    REQUIRE((ego.cam_dx != 0 || ego.cam_dy != 0));
    const SceneRender re = synthesize_scene(ego);
    // overlap region: stop1(y, x) == stop0(y + dy, x + dx)
    const auto& s0 = re.stops[0].radiance;
    const auto& s1 = re.stops[1].radiance;
    for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t y = 0; y < 32; ++y) {
            const std::int64_t sy = y + ego.cam_dy;
            if (sy < 0 || sy >= 32) continue;
            for (std::int64_t x = 0; x < 48; ++x) {
                const std::int64_t sx = x + ego.cam_dx;
                if (sx < 0 || sx >= 48) continue;
                REQUIRE(s1.at(c, y, x) == s0.at(c, sy, sx));
            }
        }
}

TEST_CASE("ego motion leaves a cross-correlation peak at the camera offset") {
    const SyntheticSceneSpec ego = make_scene_spec(17, MotionClass::Ego, LightClass::Day, 48, 48);
    const SceneRender re = synthesize_scene(ego);
    auto lum = [](const Tensor<float>& img, std::int64_t y, std::int64_t x) {
        return (img.at(0, y, x) + img.at(1, y, x) + img.at(2, y, x)) / 3.0;
    };
    double best = -1e18;
    std::int64_t best_dy = 99, best_dx = 99;
    for (std::int64_t dy = -8; dy <= 8; ++dy)
        for (std::int64_t dx = -8; dx <= 8; ++dx) {
            // zero-mean normalized cross-correlation over the overlap window
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            std::int64_t n = 0;
            for (std::int64_t y = 8; y < 40; ++y)
                for (std::int64_t x = 8; x < 40; ++x) {
                    const double a = lum(re.stops[1].radiance, y, x);
                    const double b = lum(re.stops[0].radiance, y + dy, x + dx);
                    sa += a;
                    sb += b;
                    saa += a * a;
                    sbb += b * b;
                    sab += a * b;
                    ++n;
                }
            const double nn = static_cast<double>(n);
            const double cov = sab / nn - (sa / nn) * (sb / nn);
            const double var_a = saa / nn - (sa / nn) * (sa / nn);
            const double var_b = sbb / nn - (sb / nn) * (sb / nn);
            const double zncc = cov / std::sqrt(std::max(var_a * var_b, 1e-30));
            if (zncc > best) {
                best = zncc;
                best_dy = dy;
                best_dx = dx;
            }
        }
    CHECK(best == Catch::Approx(1.0).margin(1e-9));
    CHECK(best_dy == ego.cam_dy);
    CHECK(best_dx == ego.cam_dx);
}

TEST_CASE("re-exposing the rendered radiance reproduces the saved LDRs exactly") {
    const SyntheticSceneSpec spec = make_scene_spec(19, MotionClass::Local, LightClass::Sunset, 24, 24);
    const SceneRender r = synthesize_scene(spec);
    for (int stop = 0; stop < 3; ++stop) {
        const auto& sr = r.stops[static_cast<std::size_t>(stop)];
        REQUIRE(sr.exposures.size() == 9);
        for (int e = 0; e < 9; ++e) {
            const LdrImage redo = expose(sr.radiance, sr.exposures[static_cast<std::size_t>(e)].exposure_time,
                                         sr.exposures[static_cast<std::size_t>(e)].ev);
            for (std::int64_t i = 0; i < redo.pixels.numel(); ++i)
                REQUIRE(redo.pixels[i] == sr.exposures[static_cast<std::size_t>(e)].pixels[i]);
        }
    }
}

TEST_CASE("ground-truth selection: ties break to the smallest spread") {
    // an all-black static stack makes every candidate identical
    std::vector<LdrImage> black;
    for (int ev = -4; ev <= 4; ++ev)
        black.emplace_back(Tensor<float>({3, 8, 8}, 0.0f), std::exp2(static_cast<float>(ev)),
                           static_cast<float>(ev));
    const GroundTruth gt = make_ground_truth(black, 4);
    CHECK(gt.selected_i == 1);
    for (std::int64_t i = 0; i < gt.gt.pixels.numel(); ++i) CHECK(gt.gt.pixels[i] == 0.0f);

    CHECK_THROWS_AS(make_ground_truth(std::vector<LdrImage>(black.begin(), black.begin() + 5), 2),
                    std::domain_error);
}

TEST_CASE("high dynamic range scenes select a larger exposure spread") {
    const SyntheticSceneSpec wide = make_scene_spec(23, MotionClass::Static, LightClass::Night, 32, 32);
    const SceneRender r = synthesize_scene(wide);
    const GroundTruth gt = make_ground_truth(r.stops[1].exposures, 4);
    CHECK(gt.selected_i >= 3);

    const SyntheticSceneSpec narrow = make_scene_spec(23, MotionClass::Static, LightClass::Day, 32, 32);
    const GroundTruth gt_narrow = make_ground_truth(synthesize_scene(narrow).stops[1].exposures, 4);
    CHECK(gt.selected_i >= gt_narrow.selected_i);
}

TEST_CASE("ground truth stays within the hull of its normalized inputs") {
    const SyntheticSceneSpec spec = make_scene_spec(29, MotionClass::Static, LightClass::Sunset, 24, 24);
    const SceneRender r = synthesize_scene(spec);
    const GroundTruth gt = make_ground_truth(r.stops[1].exposures, 4);
    const int i = gt.selected_i;
    const float t_min = r.stops[1].exposures[static_cast<std::size_t>(4 - i)].exposure_time;
    const std::array<HdrImage, 3> proj{
        normalize_by_stack_max(gamma_project(r.stops[1].exposures[static_cast<std::size_t>(4 - i)]), t_min),
        normalize_by_stack_max(gamma_project(r.stops[1].exposures[4]), t_min),
        normalize_by_stack_max(gamma_project(r.stops[1].exposures[static_cast<std::size_t>(4 + i)]), t_min)};
    for (std::int64_t p = 0; p < gt.gt.pixels.numel(); ++p) {
        const float lo = std::min({proj[0].pixels[p], proj[1].pixels[p], proj[2].pixels[p]});
        const float hi = std::max({proj[0].pixels[p], proj[1].pixels[p], proj[2].pixels[p]});
        REQUIRE(gt.gt.pixels[p] >= lo - 1e-5f);
        REQUIRE(gt.gt.pixels[p] <= hi + 1e-5f);
    }
}

TEST_CASE("debevec ground truth matches the source radiance on an unclipped static scene") {
    // low-radiance static scene: no exposure clips, quantization is the only error
    SyntheticSceneSpec spec = make_scene_spec(31, MotionClass::Static, LightClass::Day, 16, 16);
    spec.grad_lo = -10.0;
    spec.grad_hi = -5.0;
    spec.sprites.clear();
    const SceneRender r = synthesize_scene(spec);
    const auto& stack = r.stops[1].exposures;
    float t_min = stack[0].exposure_time;
    for (const auto& img : stack) t_min = std::min(t_min, img.exposure_time);
    const HdrImage merged = normalize_by_stack_max(debevec_merge(stack), t_min);
    const float step = 1.0f / 65535.0f;
    for (std::int64_t i = 0; i < merged.pixels.numel(); ++i)
        REQUIRE(std::fabs(merged.pixels[i] - r.stops[1].radiance[i] * t_min) <= step);
}

TEST_CASE("class apportionment honors the requested mix") {
    const auto classes = apportion_classes(
        {{MotionClass::Local, 1.0 / 3}, {MotionClass::Ego, 1.0 / 3}, {MotionClass::Full, 1.0 / 3}}, 6);
    REQUIRE(classes.size() == 6);
    std::map<MotionClass, int> counts;
    for (auto c : classes) counts[c]++;
    CHECK(counts[MotionClass::Local] == 2);
    CHECK(counts[MotionClass::Ego] == 2);
    CHECK(counts[MotionClass::Full] == 2);

    CHECK_THROWS_AS(apportion_classes({{MotionClass::Local, 0.7}, {MotionClass::Ego, 0.7}}, 4),
                    std::invalid_argument);
}

TEST_CASE("dataset generation is byte-reproducible and loadable") {
    TempDir tmp_a("ds_a");
    TempDir tmp_b("ds_b");
    DatasetParams params;
    params.scenes = 3;
    params.seed = 77;
    params.height = 24;
    params.width = 32;
    const auto mans_a = build_dataset(params, tmp_a.path.string());
    const auto mans_b = build_dataset(params, tmp_b.path.string());
    REQUIRE(mans_a.size() == 3);

    for (const auto& man : mans_a) {
        for (const char* file : {"input_1.png", "input_2.png", "input_3.png", "exposure.txt", "gt.pfm",
                                 "manifest.txt"}) {
            const fs::path fa = tmp_a.path / man.id / file;
            const fs::path fb = tmp_b.path / man.id / file;
            REQUIRE(fs::exists(fa));
            REQUIRE(slurp(fa) == slurp(fb));
        }
        const LoadedScene scene = load_bracket((tmp_a.path / man.id).string());
        CHECK(scene.manifest.id == man.id);
        CHECK(scene.manifest.selected_i == man.selected_i);
        CHECK(scene.bracket.reference.height() == 24);
        // loaded floats reproduce the written quantized payload bitwise
        const Tensor<float> reread = read_png((tmp_a.path / man.id / "input_1.png").string());
        for (std::int64_t i = 0; i < reread.numel(); ++i)
            REQUIRE(reread[i] == scene.bracket.short_exp.pixels[i]);
    }

    const auto dirs = list_scene_dirs(tmp_a.path.string());
    CHECK(dirs.size() == 3);
}
