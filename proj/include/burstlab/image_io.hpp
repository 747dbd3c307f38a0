#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "burstlab/common.hpp"
#include "burstlab/tensor.hpp"

namespace burstlab {

inline uint8_t quantize8(float x) {
    float v = std::clamp(x, 0.0f, 1.0f) * 255.0f;
    return static_cast<uint8_t>(std::lround(v));
}

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace detail

/// Writes a [0,1] float RGB tensor (3 x H x W) as an 8-bit RGB PNG.
inline void write_png_rgb8(const std::string& path, const Tensor& img) {
    if (img.c != 3) throw param_error("write_png_rgb8: expected 3 channels");
    detail::FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw io_error(io_error::code::open_failed, "cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw io_error(io_error::code::write_failed, "libpng init failed");
    }
    std::vector<uint8_t> rowbuf(static_cast<size_t>(img.w) * 3);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw io_error(io_error::code::write_failed, "libpng write failed: " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, img.w, img.h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            rowbuf[x * 3 + 0] = quantize8(img.at(0, y, x));
            rowbuf[x * 3 + 1] = quantize8(img.at(1, y, x));
            rowbuf[x * 3 + 2] = quantize8(img.at(2, y, x));
        }
        png_write_row(png, rowbuf.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

/// Reads a PNG of any layout into a [0,1] float RGB tensor.
inline Tensor read_png_rgb(const std::string& path) {
    detail::FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw io_error(io_error::code::open_failed, "cannot open: " + path);
    uint8_t sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8))
        throw io_error(io_error::code::bad_magic, "not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw io_error(io_error::code::open_failed, "libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw io_error(io_error::code::truncated, "libpng read failed: " + path);
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    std::vector<uint8_t> rowbuf(png_get_rowbytes(png, info));
    Tensor out(3, h, w);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, rowbuf.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int ci = 0; ci < 3; ++ci)
                out.at(ci, y, x) = rowbuf[x * 3 + ci] / 255.0f;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

inline void write_ppm_rgb8(const std::string& path, const Tensor& img) {
    if (img.c != 3) throw param_error("write_ppm_rgb8: expected 3 channels");
    detail::FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw io_error(io_error::code::open_failed, "cannot open for writing: " + path);
    std::fprintf(f.get(), "P6\n%d %d\n255\n", img.w, img.h);
    std::vector<uint8_t> buf(static_cast<size_t>(img.w) * img.h * 3);
    size_t i = 0;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ci = 0; ci < 3; ++ci)
                buf[i++] = quantize8(img.at(ci, y, x));
    if (std::fwrite(buf.data(), 1, buf.size(), f.get()) != buf.size())
        throw io_error(io_error::code::write_failed, "short write: " + path);
}

inline Tensor read_ppm_rgb(const std::string& path) {
    detail::FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw io_error(io_error::code::open_failed, "cannot open: " + path);
    char magic[3] = {0};
    int w = 0, h = 0, maxv = 0;
    if (std::fscanf(f.get(), "%2s %d %d %d", magic, &w, &h, &maxv) != 4 || std::strcmp(magic, "P6") != 0)
        throw io_error(io_error::code::bad_magic, "not a P6 PPM: " + path);
    if (maxv != 255) throw io_error(io_error::code::bad_version, "only maxval 255 PPM supported: " + path);
    std::fgetc(f.get()); // single whitespace after the header
    std::vector<uint8_t> buf(static_cast<size_t>(w) * h * 3);
    if (std::fread(buf.data(), 1, buf.size(), f.get()) != buf.size())
        throw io_error(io_error::code::truncated, "truncated PPM payload: " + path);
    Tensor out(3, h, w);
    size_t i = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ci = 0; ci < 3; ++ci)
                out.at(ci, y, x) = buf[i++] / 255.0f;
    return out;
}

/// Dispatches on file magic: PNG or binary PPM.
inline Tensor read_image(const std::string& path) {
    detail::FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw io_error(io_error::code::open_failed, "cannot open: " + path);
    uint8_t sig[8] = {0};
    size_t n = std::fread(sig, 1, 8, f.get());
    f.reset();
    if (n >= 8 && !png_sig_cmp(sig, 0, 8)) return read_png_rgb(path);
    if (n >= 2 && sig[0] == 'P' && sig[1] == '6') return read_ppm_rgb(path);
    throw io_error(io_error::code::bad_magic, "unsupported image format: " + path);
}

inline bool has_image_extension(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return ext == ".png" || ext == ".ppm";
}

} // namespace burstlab
