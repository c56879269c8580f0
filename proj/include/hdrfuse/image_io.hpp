#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "hdrfuse/tensor.hpp"

namespace hdrfuse {

// ---- PFM (portable float map) -------------------------------------------------
// Written form: "PF\n<w> <h>\n-1.0000\n" then rows bottom-up, pixels RGB
// interleaved, 32-bit floats. Negative scale marks little-endian; positive
// (big-endian) files are byte-swapped on read.

inline void write_pfm(const Tensor<float>& img, const std::string& path) {
    if (img.rank() != 3 || img.dim(0) != 3)
        throw std::invalid_argument("write_pfm expects a 3xHxW image, got " + shape_str(img.shape()));
    const std::int64_t h = img.dim(1), w = img.dim(2);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    char header[64];
    std::snprintf(header, sizeof(header), "PF\n%lld %lld\n-1.0000\n", static_cast<long long>(w),
                  static_cast<long long>(h));
    f.write(header, static_cast<std::streamsize>(std::strlen(header)));
    std::vector<float> row(static_cast<std::size_t>(w * 3));
    for (std::int64_t y = h - 1; y >= 0; --y) {
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t c = 0; c < 3; ++c) row[static_cast<std::size_t>(x * 3 + c)] = img.at(c, y, x);
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
    }
    if (!f) throw std::runtime_error("failed writing '" + path + "'");
}

inline Tensor<float> read_pfm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    auto token = [&]() {
        std::string t;
        f >> t;
        return t;
    };
    if (token() != "PF") throw std::runtime_error("'" + path + "' is not a 3-channel PFM (bad magic)");
    const std::int64_t w = std::stoll(token());
    const std::int64_t h = std::stoll(token());
    const double scale = std::stod(token());
    if (w <= 0 || h <= 0) throw std::runtime_error("'" + path + "': invalid dimensions");
    f.get(); // single whitespace byte terminating the header
    const bool little_endian = scale < 0.0;
    Tensor<float> img({3, h, w});
    std::vector<unsigned char> row(static_cast<std::size_t>(w * 3 * 4));
    for (std::int64_t y = h - 1; y >= 0; --y) {
        f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!f) throw std::runtime_error("'" + path + "': truncated payload");
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t c = 0; c < 3; ++c) {
                const unsigned char* p = row.data() + (x * 3 + c) * 4;
                std::uint32_t v = little_endian
                                      ? (std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
                                         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24))
                                      : (std::uint32_t(p[3]) | (std::uint32_t(p[2]) << 8) |
                                         (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[0]) << 24));
                float fv;
                std::memcpy(&fv, &v, 4);
                img.at(c, y, x) = fv;
            }
    }
    return img;
}

// ---- PNG ----------------------------------------------------------------------
// 16-bit RGB for dataset inputs (quantization step 1/65535), 8-bit RGB for
// previews. Compression settings are pinned so outputs are reproducible.

namespace detail_png {

struct WriteCtx {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;

    ~WriteCtx() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

struct ReadCtx {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;

    ~ReadCtx() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

inline void write_rgb(const Tensor<float>& img, const std::string& path, int bit_depth) {
    if (img.rank() != 3 || img.dim(0) != 3)
        throw std::invalid_argument("png writer expects a 3xHxW image, got " + shape_str(img.shape()));
    const std::int64_t h = img.dim(1), w = img.dim(2);
    const std::int64_t maxv = (std::int64_t(1) << bit_depth) - 1;
    WriteCtx ctx;
    ctx.fp = std::fopen(path.c_str(), "wb");
    if (!ctx.fp) throw std::runtime_error("cannot open '" + path + "' for writing");
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.png || !ctx.info) throw std::runtime_error("libpng initialization failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error("libpng failed writing '" + path + "'");
    png_init_io(ctx.png, ctx.fp);
    png_set_compression_level(ctx.png, 6);
    png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);

    if (bit_depth == 16) {
        std::vector<std::uint8_t> row(static_cast<std::size_t>(w * 3 * 2));
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x)
                for (std::int64_t c = 0; c < 3; ++c) {
                    const float v = std::min(std::max(img.at(c, y, x), 0.0f), 1.0f);
                    const auto q = static_cast<std::uint16_t>(std::lround(v * static_cast<float>(maxv)));
                    row[static_cast<std::size_t>((x * 3 + c) * 2)] = static_cast<std::uint8_t>(q >> 8);
                    row[static_cast<std::size_t>((x * 3 + c) * 2 + 1)] = static_cast<std::uint8_t>(q & 0xFF);
                }
            png_write_row(ctx.png, row.data());
        }
    } else {
        std::vector<std::uint8_t> row(static_cast<std::size_t>(w * 3));
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x)
                for (std::int64_t c = 0; c < 3; ++c) {
                    const float v = std::min(std::max(img.at(c, y, x), 0.0f), 1.0f);
                    row[static_cast<std::size_t>(x * 3 + c)] =
                        static_cast<std::uint8_t>(std::lround(v * static_cast<float>(maxv)));
                }
            png_write_row(ctx.png, row.data());
        }
    }
    png_write_end(ctx.png, ctx.info);
}

} // namespace detail_png

inline void write_png16(const Tensor<float>& img, const std::string& path) { detail_png::write_rgb(img, path, 16); }
inline void write_png8(const Tensor<float>& img, const std::string& path) { detail_png::write_rgb(img, path, 8); }

// Decodes an 8- or 16-bit RGB(A) PNG to floats in [0,1].
inline Tensor<float> read_png(const std::string& path) {
    detail_png::ReadCtx ctx;
    ctx.fp = std::fopen(path.c_str(), "rb");
    if (!ctx.fp) throw std::runtime_error("cannot open '" + path + "'");
    png_byte sig[8];
    if (std::fread(sig, 1, 8, ctx.fp) != 8 || png_sig_cmp(sig, 0, 8))
        throw std::runtime_error("'" + path + "' is not a PNG file");
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.png || !ctx.info) throw std::runtime_error("libpng initialization failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error("libpng failed reading '" + path + "'");
    png_init_io(ctx.png, ctx.fp);
    png_set_sig_bytes(ctx.png, 8);
    png_read_info(ctx.png, ctx.info);

    png_set_palette_to_rgb(ctx.png);
    png_set_expand_gray_1_2_4_to_8(ctx.png);
    if (png_get_color_type(ctx.png, ctx.info) & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(ctx.png);
    if ((png_get_color_type(ctx.png, ctx.info) & PNG_COLOR_MASK_COLOR) == 0) png_set_gray_to_rgb(ctx.png);
    png_read_update_info(ctx.png, ctx.info);

    const std::int64_t w = png_get_image_width(ctx.png, ctx.info);
    const std::int64_t h = png_get_image_height(ctx.png, ctx.info);
    const int depth = png_get_bit_depth(ctx.png, ctx.info);
    const float maxv = depth == 16 ? 65535.0f : 255.0f;
    Tensor<float> img({3, h, w});
    std::vector<std::uint8_t> row(static_cast<std::size_t>(png_get_rowbytes(ctx.png, ctx.info)));
    for (std::int64_t y = 0; y < h; ++y) {
        png_read_row(ctx.png, row.data(), nullptr);
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t c = 0; c < 3; ++c) {
                std::uint32_t v;
                if (depth == 16)
                    v = (std::uint32_t(row[static_cast<std::size_t>((x * 3 + c) * 2)]) << 8) |
                        row[static_cast<std::size_t>((x * 3 + c) * 2 + 1)];
                else
                    v = row[static_cast<std::size_t>(x * 3 + c)];
                img.at(c, y, x) = static_cast<float>(v) / maxv;
            }
    }
    png_read_end(ctx.png, nullptr);
    return img;
}

} // namespace hdrfuse
