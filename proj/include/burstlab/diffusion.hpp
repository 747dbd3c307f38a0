#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "burstlab/common.hpp"
#include "burstlab/random.hpp"
#include "burstlab/schedule.hpp"
#include "burstlab/tensor.hpp"

namespace burstlab {

enum class InitKind { random_noise, bicubic, baseline_sr };

inline const char* to_string(InitKind k) {
    switch (k) {
        case InitKind::random_noise: return "random-noise";
        case InitKind::bicubic: return "bicubic";
        default: return "baseline-sr";
    }
}

inline InitKind init_kind_from_string(const std::string& s) {
    if (s == "random-noise" || s == "random_noise") return InitKind::random_noise;
    if (s == "bicubic") return InitKind::bicubic;
    if (s == "baseline-sr" || s == "baseline_sr") return InitKind::baseline_sr;
    throw param_error("unknown initializer: " + s);
}

/// Where the reverse process starts and how far the model was trained.
struct ReverseStartConfig {
    int tau = 0;      // reverse start step, 0 <= tau <= T
    int tau_L = 0;    // largest step seen in training
    InitKind initializer = InitKind::baseline_sr;
};

using WarnFn = std::function<void(const std::string&)>;

// ---------------------------------------------------------------------------
// Diffusion-space mapping. Images live in [0,1]; noising happens in [-1,1].
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> to_diffusion_space(const TensorT<T>& img01) {
    TensorT<T> out = img01;
    for (T& x : out.v) x = T(2) * x - T(1);
    return out;
}

template <class T>
TensorT<T> from_diffusion_space(const TensorT<T>& xd) {
    TensorT<T> out = xd;
    for (T& x : out.v) x = std::clamp((x + T(1)) / T(2), T(0), T(1));
    return out;
}

// ---------------------------------------------------------------------------
// Forward (noising) process
// ---------------------------------------------------------------------------

/// One forward step: sqrt(alpha_t) x_{t-1} + sqrt(beta_t) eps.
template <class T, class Rng>
TensorT<T> q_sample_step(const TensorT<T>& x_prev, int t, const NoiseSchedule& s, Rng& rng) {
    if (t < 1 || t > s.steps) throw param_error("q_sample_step: t out of [1,T]");
    const T a = static_cast<T>(std::sqrt(s.alpha[t]));
    const T b = static_cast<T>(std::sqrt(s.beta[t]));
    TensorT<T> out(x_prev.c, x_prev.h, x_prev.w);
    for (size_t i = 0; i < out.size(); ++i)
        out.v[i] = a * x_prev.v[i] + b * static_cast<T>(rng.normal());
    return out;
}

/// Closed-form jump to step t: sqrt(alpha_bar_t) x0 + sqrt(beta_bar_t) eps.
template <class T>
TensorT<T> q_sample_closed(const TensorT<T>& x0, int t, const NoiseSchedule& s, const TensorT<T>& eps) {
    if (t < 0 || t > s.steps) throw param_error("q_sample_closed: t out of [0,T]");
    require_same_shape(x0, eps, "q_sample_closed");
    const T a = static_cast<T>(std::sqrt(s.alpha_bar[t]));
    const T b = static_cast<T>(std::sqrt(s.beta_bar[t]));
    TensorT<T> out(x0.c, x0.h, x0.w);
    for (size_t i = 0; i < out.size(); ++i)
        out.v[i] = a * x0.v[i] + b * eps.v[i];
    return out;
}

// ---------------------------------------------------------------------------
// Reverse (denoising) process
// ---------------------------------------------------------------------------

/// Ancestral reverse step with the eps parameterization:
///   mu = (x_t - beta_t / sqrt(beta_bar_t) * eps_hat) / sqrt(alpha_t)
///   x_{t-1} = mu + sqrt(beta_t * beta_bar_{t-1} / beta_bar_t) * z,   z = 0 at t = 1.
template <class T, class Rng>
TensorT<T> reverse_step(const TensorT<T>& x_t, int t, const TensorT<T>& eps_hat, const NoiseSchedule& s,
                        Rng& rng) {
    if (t < 1 || t > s.steps) throw param_error("reverse_step: t out of [1,T]");
    require_same_shape(x_t, eps_hat, "reverse_step");
    const T inv_sqrt_alpha = static_cast<T>(1.0 / std::sqrt(s.alpha[t]));
    const T eps_coef = static_cast<T>(s.beta[t] / std::sqrt(s.beta_bar[t]));
    TensorT<T> out(x_t.c, x_t.h, x_t.w);
    if (t == 1) {
        for (size_t i = 0; i < out.size(); ++i)
            out.v[i] = inv_sqrt_alpha * (x_t.v[i] - eps_coef * eps_hat.v[i]);
        return out;
    }
    const T sigma = static_cast<T>(std::sqrt(s.beta[t] * s.beta_bar[t - 1] / s.beta_bar[t]));
    for (size_t i = 0; i < out.size(); ++i)
        out.v[i] = inv_sqrt_alpha * (x_t.v[i] - eps_coef * eps_hat.v[i]) + sigma * static_cast<T>(rng.normal());
    return out;
}

/// Runs the reverse chain from step tau down to 1, starting from x0_init noised to
/// step tau (or from pure noise when the initializer is random_noise, which requires
/// tau == T). tau = 0 returns x0_init untouched with no model calls. `model` is any
/// callable (x_t, t) -> eps_hat; conditioning is bound into it by the caller.
template <class T, class Model, class Rng>
TensorT<T> sample_from_intermediate(const TensorT<T>& x0_init, const ReverseStartConfig& cfg,
                                    const NoiseSchedule& s, Model&& model, Rng& rng,
                                    const WarnFn& warn = {}) {
    if (cfg.tau < 0 || cfg.tau > s.steps) throw param_error("sample_from_intermediate: tau out of [0,T]");
    if (cfg.initializer == InitKind::random_noise && cfg.tau != s.steps)
        throw param_error("sample_from_intermediate: random-noise start requires tau == T");
    if (cfg.tau > cfg.tau_L && warn)
        warn("reverse start step tau=" + std::to_string(cfg.tau) + " exceeds trained range tau_L=" +
             std::to_string(cfg.tau_L) + "; sampling outside the trained steps");

    if (cfg.tau == 0) return x0_init;

    TensorT<T> x(x0_init.c, x0_init.h, x0_init.w);
    if (cfg.initializer == InitKind::random_noise) {
        rng.fill_normal(x);
    } else {
        TensorT<T> eps(x0_init.c, x0_init.h, x0_init.w);
        rng.fill_normal(eps);
        x = q_sample_closed(x0_init, cfg.tau, s, eps);
    }
    for (int t = cfg.tau; t >= 1; --t) {
        TensorT<T> eps_hat = model(x, t);
        x = reverse_step(x, t, eps_hat, s, rng);
    }
    return x;
}

// ---------------------------------------------------------------------------
// Training objective
// ---------------------------------------------------------------------------

/// Epsilon-prediction loss restricted to steps 1..tau_L. For each item draws t and eps,
/// forms x_t in closed form and accumulates mean squared error between the model's
/// prediction and eps. `model` is a callable (x_t, t, item_index) -> eps_hat so the
/// caller can bind per-item conditioning.
template <class T, class Model, class Rng>
double training_loss(Model&& model, const std::vector<TensorT<T>>& x0_batch, const NoiseSchedule& s,
                     int tau_L, Rng& rng) {
    if (x0_batch.empty()) throw param_error("training_loss: empty batch");
    if (tau_L < 1 || tau_L > s.steps) throw param_error("training_loss: tau_L out of [1,T]");
    double total = 0.0;
    for (size_t i = 0; i < x0_batch.size(); ++i) {
        const TensorT<T>& x0 = x0_batch[i];
        int t = static_cast<int>(rng.integer(static_cast<uint64_t>(tau_L))) + 1;
        TensorT<T> eps(x0.c, x0.h, x0.w);
        rng.fill_normal(eps);
        TensorT<T> x_t = q_sample_closed(x0, t, s, eps);
        TensorT<T> eps_hat = model(x_t, t, i);
        total += mse(eps_hat, eps);
    }
    return total / static_cast<double>(x0_batch.size());
}

} // namespace burstlab
