#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "burstlab/common.hpp"
#include "burstlab/random.hpp"
#include "burstlab/tensor.hpp"

namespace burstlab {

// ---------------------------------------------------------------------------
// Parameters and their registry. Layers own Param blocks (weight + grad as flat
// arrays with logical dims); a registry built by walking a model maps names to
// blocks for the optimizer and checkpoint serialization. Models are plain value
// types: copying a model deep-copies every parameter.
// ---------------------------------------------------------------------------

template <class T>
struct Param {
    std::vector<int> dims;
    std::vector<T> w;
    std::vector<T> g;

    void init(std::vector<int> d) {
        dims = std::move(d);
        size_t n = 1;
        for (int x : dims) n *= static_cast<size_t>(x);
        w.assign(n, T(0));
        g.assign(n, T(0));
    }
    size_t size() const { return w.size(); }
};

template <class T>
struct ParamRegistry {
    struct Entry {
        std::string name;
        Param<T>* p;
    };
    std::vector<Entry> entries;

    void add(const std::string& name, Param<T>& p) { entries.push_back({name, &p}); }

    size_t total_size() const {
        size_t n = 0;
        for (const auto& e : entries) n += e.p->size();
        return n;
    }

    void zero_grads() {
        for (auto& e : entries) std::fill(e.p->g.begin(), e.p->g.end(), T(0));
    }

    Param<T>* find(const std::string& name) {
        for (auto& e : entries)
            if (e.name == name) return e.p;
        return nullptr;
    }

    /// Accumulates another registry's grads (same model structure) into this one.
    void add_grads_from(const ParamRegistry& other) {
        if (other.entries.size() != entries.size())
            throw param_error("add_grads_from: registry structure mismatch");
        for (size_t i = 0; i < entries.size(); ++i) {
            auto& dst = entries[i].p->g;
            const auto& src = other.entries[i].p->g;
            if (dst.size() != src.size()) throw param_error("add_grads_from: size mismatch");
            for (size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
    }

    void copy_params_from(const ParamRegistry& other) {
        if (other.entries.size() != entries.size())
            throw param_error("copy_params_from: registry structure mismatch");
        for (size_t i = 0; i < entries.size(); ++i) entries[i].p->w = other.entries[i].p->w;
    }

    void scale_grads(T s) {
        for (auto& e : entries)
            for (T& g : e.p->g) g *= s;
    }

    bool grads_finite() const {
        for (const auto& e : entries)
            for (T g : e.p->g)
                if (!std::isfinite(static_cast<double>(g))) return false;
        return true;
    }
};

// ---------------------------------------------------------------------------
// Layers. forward() is const; backward() takes the layer input (or a cache),
// accumulates parameter grads, and returns the input grad.
// ---------------------------------------------------------------------------

namespace nn_detail {

template <class T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using ConstMatMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <class T>
void im2col(const TensorT<T>& x, int k, int stride, int pad, int out_h, int out_w, std::vector<T>& cols) {
    const int K = x.c * k * k;
    cols.assign(static_cast<size_t>(K) * out_h * out_w, T(0));
    const int N = out_h * out_w;
    for (int ci = 0; ci < x.c; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                T* dst = &cols[(static_cast<size_t>(ci) * k * k + ky * k + kx) * N];
                for (int oy = 0; oy < out_h; ++oy) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= x.h) {
                        dst += out_w;
                        continue;
                    }
                    const T* row = &x.at(ci, iy, 0);
                    for (int ox = 0; ox < out_w; ++ox, ++dst) {
                        int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < x.w) *dst = row[ix];
                    }
                }
            }
}

template <class T>
void col2im(const std::vector<T>& cols, int c, int h, int w, int k, int stride, int pad, int out_h,
            int out_w, TensorT<T>& dx) {
    dx = TensorT<T>(c, h, w);
    const int N = out_h * out_w;
    for (int ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const T* src = &cols[(static_cast<size_t>(ci) * k * k + ky * k + kx) * N];
                for (int oy = 0; oy < out_h; ++oy) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) {
                        src += out_w;
                        continue;
                    }
                    T* row = &dx.at(ci, iy, 0);
                    for (int ox = 0; ox < out_w; ++ox, ++src) {
                        int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < w) row[ix] += *src;
                    }
                }
            }
}

} // namespace nn_detail

template <class T>
struct Conv2d {
    int in_c = 0, out_c = 0, k = 1, stride = 1, pad = 0;
    Param<T> weight; // [out_c, in_c*k*k]
    Param<T> bias;   // [out_c]

    void init(int in_c_, int out_c_, int k_, int stride_ = 1, int pad_ = -1) {
        in_c = in_c_;
        out_c = out_c_;
        k = k_;
        stride = stride_;
        pad = pad_ < 0 ? k_ / 2 : pad_;
        weight.init({out_c, in_c * k * k});
        bias.init({out_c});
    }

    /// He-style init: N(0, sqrt(2/fan_in)) * scale. scale = 0 gives a zero layer.
    void init_weights(RandomSource& rng, double scale = 1.0) {
        double std = scale * std::sqrt(2.0 / static_cast<double>(in_c * k * k));
        for (T& v : weight.w) v = static_cast<T>(rng.normal() * std);
        std::fill(bias.w.begin(), bias.w.end(), T(0));
    }

    int out_size(int n) const { return (n + 2 * pad - k) / stride + 1; }

    TensorT<T> forward(const TensorT<T>& x) const {
        if (x.c != in_c) throw param_error("Conv2d: channel mismatch");
        const int oh = out_size(x.h), ow = out_size(x.w);
        const int K = in_c * k * k, N = oh * ow;
        std::vector<T> cols;
        nn_detail::im2col(x, k, stride, pad, oh, ow, cols);
        TensorT<T> y(out_c, oh, ow);
        nn_detail::ConstMatMap<T> W(weight.w.data(), out_c, K);
        nn_detail::ConstMatMap<T> C(cols.data(), K, N);
        nn_detail::MatMap<T> Y(y.data(), out_c, N);
        Y.noalias() = W * C;
        for (int oc = 0; oc < out_c; ++oc) {
            T b = bias.w[oc];
            T* row = &y.v[static_cast<size_t>(oc) * N];
            for (int i = 0; i < N; ++i) row[i] += b;
        }
        return y;
    }

    TensorT<T> backward(const TensorT<T>& x, const TensorT<T>& dy) {
        const int oh = out_size(x.h), ow = out_size(x.w);
        if (dy.c != out_c || dy.h != oh || dy.w != ow) throw param_error("Conv2d: bad grad shape");
        const int K = in_c * k * k, N = oh * ow;
        std::vector<T> cols;
        nn_detail::im2col(x, k, stride, pad, oh, ow, cols);
        nn_detail::ConstMatMap<T> C(cols.data(), K, N);
        nn_detail::ConstMatMap<T> dY(dy.data(), out_c, N);
        nn_detail::MatMap<T> dW(weight.g.data(), out_c, K);
        dW.noalias() += dY * C.transpose();
        for (int oc = 0; oc < out_c; ++oc) {
            const T* row = &dy.v[static_cast<size_t>(oc) * N];
            T acc = 0;
            for (int i = 0; i < N; ++i) acc += row[i];
            bias.g[oc] += acc;
        }
        std::vector<T> dcols(static_cast<size_t>(K) * N);
        nn_detail::ConstMatMap<T> W(weight.w.data(), out_c, K);
        nn_detail::MatMap<T> dC(dcols.data(), K, N);
        dC.noalias() = W.transpose() * dY;
        TensorT<T> dx;
        nn_detail::col2im(dcols, in_c, x.h, x.w, k, stride, pad, oh, ow, dx);
        return dx;
    }

    void register_params(ParamRegistry<T>& r, const std::string& prefix) {
        r.add(prefix + ".weight", weight);
        r.add(prefix + ".bias", bias);
    }
};

template <class T>
struct Linear {
    int in_f = 0, out_f = 0;
    Param<T> weight; // [out_f, in_f]
    Param<T> bias;   // [out_f]

    void init(int in_f_, int out_f_) {
        in_f = in_f_;
        out_f = out_f_;
        weight.init({out_f, in_f});
        bias.init({out_f});
    }

    void init_weights(RandomSource& rng, double scale = 1.0) {
        double std = scale * std::sqrt(2.0 / static_cast<double>(in_f));
        for (T& v : weight.w) v = static_cast<T>(rng.normal() * std);
        std::fill(bias.w.begin(), bias.w.end(), T(0));
    }

    std::vector<T> forward(const std::vector<T>& x) const {
        if (static_cast<int>(x.size()) != in_f) throw param_error("Linear: input size mismatch");
        std::vector<T> y(out_f);
        for (int o = 0; o < out_f; ++o) {
            const T* wr = &weight.w[static_cast<size_t>(o) * in_f];
            T acc = bias.w[o];
            for (int i = 0; i < in_f; ++i) acc += wr[i] * x[i];
            y[o] = acc;
        }
        return y;
    }

    std::vector<T> backward(const std::vector<T>& x, const std::vector<T>& dy) {
        std::vector<T> dx(in_f, T(0));
        for (int o = 0; o < out_f; ++o) {
            T g = dy[o];
            bias.g[o] += g;
            T* wg = &weight.g[static_cast<size_t>(o) * in_f];
            const T* wr = &weight.w[static_cast<size_t>(o) * in_f];
            for (int i = 0; i < in_f; ++i) {
                wg[i] += g * x[i];
                dx[i] += g * wr[i];
            }
        }
        return dx;
    }

    void register_params(ParamRegistry<T>& r, const std::string& prefix) {
        r.add(prefix + ".weight", weight);
        r.add(prefix + ".bias", bias);
    }
};

template <class T>
struct GroupNorm {
    int channels = 0, groups = 1;
    T eps = static_cast<T>(1e-5);
    Param<T> gamma, beta;

    struct Cache {
        std::vector<T> inv_std; // per group
        TensorT<T> xhat;
    };

    void init(int channels_, int groups_) {
        if (channels_ % groups_ != 0) throw param_error("GroupNorm: channels not divisible by groups");
        channels = channels_;
        groups = groups_;
        gamma.init({channels});
        beta.init({channels});
        std::fill(gamma.w.begin(), gamma.w.end(), T(1));
    }

    /// cache == nullptr skips storing the normalized activations (inference).
    TensorT<T> forward(const TensorT<T>& x, Cache* cache = nullptr) const {
        if (x.c != channels) throw param_error("GroupNorm: channel mismatch");
        const int cg = channels / groups;
        const size_t plane = static_cast<size_t>(x.h) * x.w;
        const size_t m = plane * cg;
        if (cache) {
            cache->inv_std.assign(groups, T(0));
            cache->xhat = TensorT<T>(x.c, x.h, x.w);
        }
        TensorT<T> y(x.c, x.h, x.w);
        for (int gi = 0; gi < groups; ++gi) {
            const T* xs = &x.v[static_cast<size_t>(gi) * cg * plane];
            double mean = 0;
            for (size_t i = 0; i < m; ++i) mean += xs[i];
            mean /= static_cast<double>(m);
            double var = 0;
            for (size_t i = 0; i < m; ++i) {
                double d = xs[i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(m);
            T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            if (cache) cache->inv_std[gi] = inv;
            T* xh = cache ? &cache->xhat.v[static_cast<size_t>(gi) * cg * plane] : nullptr;
            T* ys = &y.v[static_cast<size_t>(gi) * cg * plane];
            for (int cc = 0; cc < cg; ++cc) {
                const int ch = gi * cg + cc;
                const T gm = gamma.w[ch], bt = beta.w[ch];
                for (size_t i = 0; i < plane; ++i) {
                    T v = static_cast<T>((xs[cc * plane + i] - mean)) * inv;
                    if (xh) xh[cc * plane + i] = v;
                    ys[cc * plane + i] = gm * v + bt;
                }
            }
        }
        return y;
    }

    TensorT<T> backward(const TensorT<T>& dy, const Cache& cache) {
        const int cg = channels / groups;
        const size_t plane = static_cast<size_t>(dy.h) * dy.w;
        const size_t m = plane * cg;
        TensorT<T> dx(dy.c, dy.h, dy.w);
        for (int gi = 0; gi < groups; ++gi) {
            const T* xh = &cache.xhat.v[static_cast<size_t>(gi) * cg * plane];
            const T* dys = &dy.v[static_cast<size_t>(gi) * cg * plane];
            T* dxs = &dx.v[static_cast<size_t>(gi) * cg * plane];
            // per-channel param grads and the two group-level reductions
            double sum_dxh = 0, sum_dxh_xh = 0;
            for (int cc = 0; cc < cg; ++cc) {
                const int ch = gi * cg + cc;
                const T gm = gamma.w[ch];
                double dg = 0, db = 0;
                for (size_t i = 0; i < plane; ++i) {
                    T d = dys[cc * plane + i];
                    db += d;
                    dg += d * xh[cc * plane + i];
                    double dxh = d * gm;
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * xh[cc * plane + i];
                }
                gamma.g[ch] += static_cast<T>(dg);
                beta.g[ch] += static_cast<T>(db);
            }
            const double inv = cache.inv_std[gi];
            const double inv_m = 1.0 / static_cast<double>(m);
            for (int cc = 0; cc < cg; ++cc) {
                const int ch = gi * cg + cc;
                const double gm = gamma.w[ch];
                for (size_t i = 0; i < plane; ++i) {
                    double dxh = dys[cc * plane + i] * gm;
                    double v = dxh - inv_m * sum_dxh - inv_m * sum_dxh_xh * xh[cc * plane + i];
                    dxs[cc * plane + i] = static_cast<T>(v * inv);
                }
            }
        }
        return dx;
    }

    void register_params(ParamRegistry<T>& r, const std::string& prefix) {
        r.add(prefix + ".gamma", gamma);
        r.add(prefix + ".beta", beta);
    }
};

// ---------------------------------------------------------------------------
// Parameter-free pieces
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> silu(const TensorT<T>& x) {
    TensorT<T> y(x.c, x.h, x.w);
    for (size_t i = 0; i < x.size(); ++i) {
        T s = T(1) / (T(1) + std::exp(-x.v[i]));
        y.v[i] = x.v[i] * s;
    }
    return y;
}

template <class T>
TensorT<T> silu_backward(const TensorT<T>& x, const TensorT<T>& dy) {
    TensorT<T> dx(x.c, x.h, x.w);
    for (size_t i = 0; i < x.size(); ++i) {
        T s = T(1) / (T(1) + std::exp(-x.v[i]));
        dx.v[i] = dy.v[i] * s * (T(1) + x.v[i] * (T(1) - s));
    }
    return dx;
}

template <class T>
std::vector<T> silu_vec(const std::vector<T>& x) {
    std::vector<T> y(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        T s = T(1) / (T(1) + std::exp(-x[i]));
        y[i] = x[i] * s;
    }
    return y;
}

template <class T>
std::vector<T> silu_vec_backward(const std::vector<T>& x, const std::vector<T>& dy) {
    std::vector<T> dx(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        T s = T(1) / (T(1) + std::exp(-x[i]));
        dx[i] = dy[i] * s * (T(1) + x[i] * (T(1) - s));
    }
    return dx;
}

template <class T>
TensorT<T> upsample_nearest2x(const TensorT<T>& x) {
    TensorT<T> y(x.c, x.h * 2, x.w * 2);
    for (int ci = 0; ci < x.c; ++ci)
        for (int yy = 0; yy < y.h; ++yy)
            for (int xx = 0; xx < y.w; ++xx)
                y.at(ci, yy, xx) = x.at(ci, yy / 2, xx / 2);
    return y;
}

template <class T>
TensorT<T> upsample_nearest2x_backward(const TensorT<T>& dy) {
    TensorT<T> dx(dy.c, dy.h / 2, dy.w / 2);
    for (int ci = 0; ci < dy.c; ++ci)
        for (int yy = 0; yy < dy.h; ++yy)
            for (int xx = 0; xx < dy.w; ++xx)
                dx.at(ci, yy / 2, xx / 2) += dy.at(ci, yy, xx);
    return dx;
}

/// [c*r*r, h, w] -> [c, h*r, w*r]
template <class T>
TensorT<T> pixel_shuffle(const TensorT<T>& x, int r) {
    if (x.c % (r * r) != 0) throw param_error("pixel_shuffle: channels not divisible by r^2");
    const int oc = x.c / (r * r);
    TensorT<T> y(oc, x.h * r, x.w * r);
    for (int co = 0; co < oc; ++co)
        for (int dy = 0; dy < r; ++dy)
            for (int dx = 0; dx < r; ++dx) {
                const int ci = co * r * r + dy * r + dx;
                for (int yy = 0; yy < x.h; ++yy)
                    for (int xx = 0; xx < x.w; ++xx)
                        y.at(co, yy * r + dy, xx * r + dx) = x.at(ci, yy, xx);
            }
    return y;
}

template <class T>
TensorT<T> pixel_shuffle_backward(const TensorT<T>& dy, int r) {
    const int ic = dy.c * r * r;
    TensorT<T> dx(ic, dy.h / r, dy.w / r);
    for (int co = 0; co < dy.c; ++co)
        for (int ry = 0; ry < r; ++ry)
            for (int rx = 0; rx < r; ++rx) {
                const int ci = co * r * r + ry * r + rx;
                for (int yy = 0; yy < dx.h; ++yy)
                    for (int xx = 0; xx < dx.w; ++xx)
                        dx.at(ci, yy, xx) = dy.at(co, yy * r + ry, xx * r + rx);
            }
    return dx;
}

template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.h != b.h || a.w != b.w) throw param_error("concat_channels: spatial mismatch");
    TensorT<T> y(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), y.v.begin());
    std::copy(b.v.begin(), b.v.end(), y.v.begin() + a.v.size());
    return y;
}

template <class T>
void split_channels(const TensorT<T>& y, TensorT<T>& a, TensorT<T>& b, int c_a) {
    a = TensorT<T>(c_a, y.h, y.w);
    b = TensorT<T>(y.c - c_a, y.h, y.w);
    std::copy(y.v.begin(), y.v.begin() + a.v.size(), a.v.begin());
    std::copy(y.v.begin() + a.v.size(), y.v.end(), b.v.begin());
}

/// Standard sinusoidal embedding of an integer timestep.
template <class T>
std::vector<T> sinusoidal_embedding(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw param_error("sinusoidal_embedding: dim must be even and >= 2");
    const int half = dim / 2;
    std::vector<T> e(dim);
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * (half > 1 ? static_cast<double>(i) / (half - 1) : 0.0));
        e[i] = static_cast<T>(std::sin(t * freq));
        e[half + i] = static_cast<T>(std::cos(t * freq));
    }
    return e;
}

// ---------------------------------------------------------------------------
// AdamW (decoupled weight decay), state parallel to a registry's entries.
// ---------------------------------------------------------------------------

template <class T>
struct AdamW {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    int64_t step_count = 0;
    std::vector<std::vector<T>> m, v;

    void init(const ParamRegistry<T>& reg) {
        m.clear();
        v.clear();
        for (const auto& e : reg.entries) {
            m.emplace_back(e.p->size(), T(0));
            v.emplace_back(e.p->size(), T(0));
        }
        step_count = 0;
    }

    void step(ParamRegistry<T>& reg) {
        if (m.size() != reg.entries.size()) throw param_error("AdamW: not initialized for this registry");
        ++step_count;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        for (size_t i = 0; i < reg.entries.size(); ++i) {
            Param<T>& p = *reg.entries[i].p;
            auto& mi = m[i];
            auto& vi = v[i];
            for (size_t j = 0; j < p.size(); ++j) {
                double g = p.g[j];
                double mm = beta1 * mi[j] + (1.0 - beta1) * g;
                double vv = beta2 * vi[j] + (1.0 - beta2) * g * g;
                mi[j] = static_cast<T>(mm);
                vi[j] = static_cast<T>(vv);
                double update = (mm / bc1) / (std::sqrt(vv / bc2) + eps) + weight_decay * p.w[j];
                p.w[j] = static_cast<T>(p.w[j] - lr * update);
            }
        }
    }
};

} // namespace burstlab
