#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "burstlab/common.hpp"

namespace burstlab {

/// Dense channels-first (C,H,W) tensor. Value semantics throughout; copies are deep.
template <class T>
struct TensorT {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<T> v;

    TensorT() = default;
    TensorT(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, T(0)) {
        if (c_ < 0 || h_ < 0 || w_ < 0)
            throw param_error("tensor dimensions must be nonnegative");
    }

    static TensorT zeros(int c_, int h_, int w_) { return TensorT(c_, h_, w_); }

    size_t size() const { return v.size(); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    T& at(int ci, int y, int x) { return v[(static_cast<size_t>(ci) * h + y) * w + x]; }
    const T& at(int ci, int y, int x) const { return v[(static_cast<size_t>(ci) * h + y) * w + x]; }

    T& operator[](size_t i) { return v[i]; }
    const T& operator[](size_t i) const { return v[i]; }

    bool same_shape(const TensorT& o) const { return c == o.c && h == o.h && w == o.w; }

    std::string shape_str() const {
        return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
    }

    bool all_finite() const {
        for (const T& x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    void fill(T value) { std::fill(v.begin(), v.end(), value); }

    void zero() { fill(T(0)); }

    template <class U>
    TensorT<U> cast() const {
        TensorT<U> out(c, h, w);
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <class T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* where) {
    if (!a.same_shape(b))
        throw param_error(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

template <class T>
double mse(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a, b, "mse");
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = static_cast<double>(a.v[i]) - static_cast<double>(b.v[i]);
        acc += d * d;
    }
    return a.size() ? acc / static_cast<double>(a.size()) : 0.0;
}

template <class T>
double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.v[i]) - static_cast<double>(b.v[i])));
    return m;
}

template <class T>
TensorT<T> clamp01(TensorT<T> x) {
    for (T& e : x.v) e = std::clamp(e, T(0), T(1));
    return x;
}

} // namespace burstlab
