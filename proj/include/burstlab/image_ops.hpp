#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "burstlab/common.hpp"
#include "burstlab/tensor.hpp"

namespace burstlab {

// ---------------------------------------------------------------------------
// Bicubic resampling (Catmull-Rom, a = -0.5), separable, clamped borders.
// Same-size resampling is the exact identity: the kernel is 1 at offset 0 and
// 0 at the other integer offsets.
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
T catmull_rom(T d) {
    d = std::abs(d);
    if (d <= T(1)) return (T(1.5) * d - T(2.5)) * d * d + T(1);
    if (d < T(2)) return ((T(-0.5) * d + T(2.5)) * d - T(4)) * d + T(2);
    return T(0);
}

template <class T>
struct ResizeTaps {
    std::vector<int> idx; // 4 per output position
    std::vector<T> w;
};

template <class T>
ResizeTaps<T> make_taps(int in_n, int out_n) {
    ResizeTaps<T> taps;
    taps.idx.resize(static_cast<size_t>(out_n) * 4);
    taps.w.resize(static_cast<size_t>(out_n) * 4);
    const double scale = static_cast<double>(in_n) / static_cast<double>(out_n);
    for (int o = 0; o < out_n; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        int base = static_cast<int>(std::floor(src));
        T frac = static_cast<T>(src - base);
        // kernel offsets are (i - src) = k - 1 - frac
        for (int k = 0; k < 4; ++k) {
            taps.idx[o * 4 + k] = std::clamp(base - 1 + k, 0, in_n - 1);
            taps.w[o * 4 + k] = catmull_rom(static_cast<T>(k - 1) - frac);
        }
    }
    return taps;
}

} // namespace detail

template <class T>
TensorT<T> resize_bicubic(const TensorT<T>& src, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw param_error("resize_bicubic: target size must be positive");
    if (src.h == out_h && src.w == out_w) return src;
    auto tx = detail::make_taps<T>(src.w, out_w);
    auto ty = detail::make_taps<T>(src.h, out_h);

    TensorT<T> tmp(src.c, src.h, out_w);
    for (int ci = 0; ci < src.c; ++ci)
        for (int y = 0; y < src.h; ++y) {
            const T* row = &src.at(ci, y, 0);
            T* orow = &tmp.at(ci, y, 0);
            for (int x = 0; x < out_w; ++x) {
                const int* id = &tx.idx[x * 4];
                const T* w = &tx.w[x * 4];
                orow[x] = w[0] * row[id[0]] + w[1] * row[id[1]] + w[2] * row[id[2]] + w[3] * row[id[3]];
            }
        }

    TensorT<T> out(src.c, out_h, out_w);
    for (int ci = 0; ci < src.c; ++ci)
        for (int y = 0; y < out_h; ++y) {
            const int* id = &ty.idx[y * 4];
            const T* w = &ty.w[y * 4];
            for (int x = 0; x < out_w; ++x)
                out.at(ci, y, x) = w[0] * tmp.at(ci, id[0], x) + w[1] * tmp.at(ci, id[1], x) +
                                   w[2] * tmp.at(ci, id[2], x) + w[3] * tmp.at(ci, id[3], x);
        }
    return out;
}

/// Adjoint of resize_bicubic: scatters output-space gradients back onto the
/// input grid. Needed because conditioning features are trained through the
/// rescale.
template <class T>
TensorT<T> resize_bicubic_backward(const TensorT<T>& grad_out, int in_h, int in_w) {
    if (grad_out.h == in_h && grad_out.w == in_w) return grad_out;
    auto tx = detail::make_taps<T>(in_w, grad_out.w);
    auto ty = detail::make_taps<T>(in_h, grad_out.h);

    // transpose of the vertical pass
    TensorT<T> tmp(grad_out.c, in_h, grad_out.w);
    for (int ci = 0; ci < grad_out.c; ++ci)
        for (int y = 0; y < grad_out.h; ++y) {
            const int* id = &ty.idx[y * 4];
            const T* w = &ty.w[y * 4];
            for (int x = 0; x < grad_out.w; ++x) {
                T g = grad_out.at(ci, y, x);
                for (int k = 0; k < 4; ++k) tmp.at(ci, id[k], x) += w[k] * g;
            }
        }
    // transpose of the horizontal pass
    TensorT<T> out(grad_out.c, in_h, in_w);
    for (int ci = 0; ci < grad_out.c; ++ci)
        for (int y = 0; y < in_h; ++y)
            for (int x = 0; x < grad_out.w; ++x) {
                const int* id = &tx.idx[x * 4];
                const T* w = &tx.w[x * 4];
                T g = tmp.at(ci, y, x);
                for (int k = 0; k < 4; ++k) out.at(ci, y, id[k]) += w[k] * g;
            }
    return out;
}

// ---------------------------------------------------------------------------
// Rigid warp (translation + rotation about the image center), bilinear
// sampling with whole-sample reflection at the borders.
// ---------------------------------------------------------------------------

namespace detail {

inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return i;
}

} // namespace detail

template <class T>
T sample_bilinear_reflect(const TensorT<T>& img, int ci, double y, double x) {
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    double fx = x - x0;
    double fy = y - y0;
    int x0r = detail::reflect_index(x0, img.w);
    int x1r = detail::reflect_index(x0 + 1, img.w);
    int y0r = detail::reflect_index(y0, img.h);
    int y1r = detail::reflect_index(y0 + 1, img.h);
    double v00 = img.at(ci, y0r, x0r);
    double v01 = img.at(ci, y0r, x1r);
    double v10 = img.at(ci, y1r, x0r);
    double v11 = img.at(ci, y1r, x1r);
    double top = v00 + fx * (v01 - v00);
    double bot = v10 + fx * (v11 - v10);
    return static_cast<T>(top + fy * (bot - top));
}

/// The image is rotated by rot_deg about its center, then shifted by
/// (shift_x, shift_y) pixels. Implemented by inverse mapping.
template <class T>
TensorT<T> warp_rigid(const TensorT<T>& img, double shift_x, double shift_y, double rot_deg) {
    if (shift_x == 0.0 && shift_y == 0.0 && rot_deg == 0.0) return img;
    const double th = rot_deg * M_PI / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    const double cx = (img.w - 1) * 0.5, cy = (img.h - 1) * 0.5;
    TensorT<T> out(img.c, img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            double dx = x - shift_x - cx;
            double dy = y - shift_y - cy;
            double sx = c * dx + s * dy + cx;
            double sy = -s * dx + c * dy + cy;
            for (int ci = 0; ci < img.c; ++ci)
                out.at(ci, y, x) = sample_bilinear_reflect(img, ci, sy, sx);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Resolution / color pipeline pieces
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> box_downsample(const TensorT<T>& img, int factor) {
    if (factor < 1) throw param_error("box_downsample: factor must be positive");
    if (img.h % factor != 0 || img.w % factor != 0)
        throw param_error("box_downsample: size not divisible by factor");
    TensorT<T> out(img.c, img.h / factor, img.w / factor);
    const T inv = T(1) / static_cast<T>(factor * factor);
    for (int ci = 0; ci < img.c; ++ci)
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x) {
                T acc = 0;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx)
                        acc += img.at(ci, y * factor + dy, x * factor + dx);
                out.at(ci, y, x) = acc * inv;
            }
    return out;
}

/// Display -> linear light, x^gamma.
template <class T>
TensorT<T> linearize_gamma(TensorT<T> img, double gamma = 2.2) {
    for (T& x : img.v) x = static_cast<T>(std::pow(std::max(x, T(0)), static_cast<T>(gamma)));
    return img;
}

/// Linear light -> display, x^(1/gamma).
template <class T>
TensorT<T> apply_gamma(TensorT<T> img, double gamma = 2.2) {
    for (T& x : img.v) x = static_cast<T>(std::pow(std::max(x, T(0)), static_cast<T>(1.0 / gamma)));
    return img;
}

/// RGB (3 x 2H x 2W) -> RGGB planes (4 x H x W).
/// Sites: R at (even,even), G at (even,odd), G at (odd,even), B at (odd,odd).
template <class T>
TensorT<T> mosaic(const TensorT<T>& rgb) {
    if (rgb.c != 3) throw param_error("mosaic: expected 3 channels");
    if (rgb.h % 2 != 0 || rgb.w % 2 != 0) throw param_error("mosaic: spatial dimensions must be even");
    const int H = rgb.h / 2, W = rgb.w / 2;
    TensorT<T> out(4, H, W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            out.at(0, y, x) = rgb.at(0, 2 * y, 2 * x);
            out.at(1, y, x) = rgb.at(1, 2 * y, 2 * x + 1);
            out.at(2, y, x) = rgb.at(1, 2 * y + 1, 2 * x);
            out.at(3, y, x) = rgb.at(2, 2 * y + 1, 2 * x + 1);
        }
    return out;
}

/// Bilinear demosaic of RGGB planes (4 x H x W) -> RGB (3 x 2H x 2W).
template <class T>
TensorT<T> demosaic_bilinear(const TensorT<T>& planes) {
    if (planes.c != 4) throw param_error("demosaic_bilinear: expected 4 planes");
    const int H = 2 * planes.h, W = 2 * planes.w;

    // scatter back onto the Bayer grid, remembering which color sits where
    TensorT<T> bayer(1, H, W);
    for (int y = 0; y < planes.h; ++y)
        for (int x = 0; x < planes.w; ++x) {
            bayer.at(0, 2 * y, 2 * x) = planes.at(0, y, x);
            bayer.at(0, 2 * y, 2 * x + 1) = planes.at(1, y, x);
            bayer.at(0, 2 * y + 1, 2 * x) = planes.at(2, y, x);
            bayer.at(0, 2 * y + 1, 2 * x + 1) = planes.at(3, y, x);
        }

    auto px = [&](int y, int x) -> T {
        return bayer.at(0, std::clamp(y, 0, H - 1), std::clamp(x, 0, W - 1));
    };
    auto is_red = [](int y, int x) { return y % 2 == 0 && x % 2 == 0; };
    auto is_blue = [](int y, int x) { return y % 2 == 1 && x % 2 == 1; };

    TensorT<T> out(3, H, W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            T r, g, b;
            if (is_red(y, x)) {
                r = px(y, x);
                g = (px(y - 1, x) + px(y + 1, x) + px(y, x - 1) + px(y, x + 1)) / T(4);
                b = (px(y - 1, x - 1) + px(y - 1, x + 1) + px(y + 1, x - 1) + px(y + 1, x + 1)) / T(4);
            } else if (is_blue(y, x)) {
                b = px(y, x);
                g = (px(y - 1, x) + px(y + 1, x) + px(y, x - 1) + px(y, x + 1)) / T(4);
                r = (px(y - 1, x - 1) + px(y - 1, x + 1) + px(y + 1, x - 1) + px(y + 1, x + 1)) / T(4);
            } else {
                g = px(y, x);
                if (y % 2 == 0) { // green on a red row
                    r = (px(y, x - 1) + px(y, x + 1)) / T(2);
                    b = (px(y - 1, x) + px(y + 1, x)) / T(2);
                } else { // green on a blue row
                    r = (px(y - 1, x) + px(y + 1, x)) / T(2);
                    b = (px(y, x - 1) + px(y, x + 1)) / T(2);
                }
            }
            out.at(0, y, x) = r;
            out.at(1, y, x) = g;
            out.at(2, y, x) = b;
        }
    return out;
}

/// Horizontal concatenation with a 1-channel-wide separator column, for
/// side-by-side comparison grids. All images must share height and channels.
template <class T>
TensorT<T> hcat_images(const std::vector<TensorT<T>>& imgs, T separator_value = T(1)) {
    if (imgs.empty()) throw param_error("hcat_images: no images");
    int total_w = 0;
    for (const auto& im : imgs) {
        if (im.c != imgs[0].c || im.h != imgs[0].h)
            throw param_error("hcat_images: mismatched image shapes");
        total_w += im.w;
    }
    total_w += static_cast<int>(imgs.size()) - 1;
    TensorT<T> out(imgs[0].c, imgs[0].h, total_w);
    out.fill(separator_value);
    int xoff = 0;
    for (const auto& im : imgs) {
        for (int ci = 0; ci < im.c; ++ci)
            for (int y = 0; y < im.h; ++y)
                for (int x = 0; x < im.w; ++x)
                    out.at(ci, y, xoff + x) = im.at(ci, y, x);
        xoff += im.w + 1;
    }
    return out;
}

} // namespace burstlab
