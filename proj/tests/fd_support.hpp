#pragma once

// Central finite-difference gradient checking against hand-written backward
// passes. Loss closures must re-run the forward pass from scratch each call.

#include <catch2/catch_amalgamated.hpp>
#include <functional>

#include "burstlab/nn.hpp"
#include "burstlab/random.hpp"

namespace burstlab::testsupport {

inline void fd_check_param(Param<double>& p, const std::function<double()>& loss, int n_coords,
                           RandomSource& rng, double rel_tol, double abs_tol = 1e-8,
                           double h = 1e-5) {
    REQUIRE(p.size() > 0);
    for (int i = 0; i < n_coords; ++i) {
        size_t idx = rng.integer(p.size());
        double saved = p.w[idx];
        p.w[idx] = saved + h;
        double lp = loss();
        p.w[idx] = saved - h;
        double lm = loss();
        p.w[idx] = saved;
        double fd = (lp - lm) / (2.0 * h);
        double an = p.g[idx];
        double tol = std::max(rel_tol * std::max(std::abs(fd), std::abs(an)), abs_tol);
        INFO("param coord " << idx << ": analytic " << an << " vs fd " << fd);
        CHECK(std::abs(an - fd) <= tol);
    }
}

inline void fd_check_input(TensorT<double>& x, const TensorT<double>& dx,
                           const std::function<double()>& loss, int n_coords, RandomSource& rng,
                           double rel_tol, double abs_tol = 1e-8, double h = 1e-5) {
    for (int i = 0; i < n_coords; ++i) {
        size_t idx = rng.integer(x.size());
        double saved = x.v[idx];
        x.v[idx] = saved + h;
        double lp = loss();
        x.v[idx] = saved - h;
        double lm = loss();
        x.v[idx] = saved;
        double fd = (lp - lm) / (2.0 * h);
        double an = dx.v[idx];
        double tol = std::max(rel_tol * std::max(std::abs(fd), std::abs(an)), abs_tol);
        INFO("input coord " << idx << ": analytic " << an << " vs fd " << fd);
        CHECK(std::abs(an - fd) <= tol);
    }
}

inline TensorT<double> random_tensor_d(int c, int h, int w, RandomSource& rng, double scale = 1.0) {
    TensorT<double> t(c, h, w);
    for (auto& v : t.v) v = rng.normal() * scale;
    return t;
}

} // namespace burstlab::testsupport
