#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "burstlab/common.hpp"

namespace burstlab {

enum class ScheduleKind { linear, sigmoid };

inline const char* to_string(ScheduleKind k) { return k == ScheduleKind::linear ? "linear" : "sigmoid"; }

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "linear") return ScheduleKind::linear;
    if (s == "sigmoid") return ScheduleKind::sigmoid;
    throw param_error("unknown schedule kind: " + s);
}

/// Per-step diffusion variances and their cumulative products. Arrays are indexed by the
/// step number t itself (slot 0 holds the empty-product conventions alpha_bar[0] = 1,
/// beta_bar[0] = 0), so beta[t] is valid for t in [1, T]. Immutable after construction.
struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::linear;
    int steps = 0; // T
    std::vector<double> beta;      // beta[t], t in [1, T]
    std::vector<double> alpha;     // 1 - beta[t]
    std::vector<double> alpha_bar; // prod_{s<=t} alpha[s], alpha_bar[0] = 1
    std::vector<double> beta_bar;  // 1 - alpha_bar[t]
};

namespace detail {

inline void check_schedule_params(int T, double beta_1, double beta_T) {
    if (T < 1) throw param_error("schedule: T must be >= 1");
    if (!(beta_1 > 0.0) || !(beta_1 < beta_T) || !(beta_T < 1.0))
        throw param_error("schedule: endpoints must satisfy 0 < beta_1 < beta_T < 1");
}

inline void finish_schedule(NoiseSchedule& s) {
    const int T = s.steps;
    s.alpha.assign(T + 1, 0.0);
    s.alpha_bar.assign(T + 1, 1.0);
    s.beta_bar.assign(T + 1, 0.0);
    for (int t = 1; t <= T; ++t) {
        if (!(s.beta[t] > 0.0) || !(s.beta[t] < 1.0))
            throw param_error("schedule: beta out of (0,1) at t=" + std::to_string(t));
        if (t > 1 && !(s.beta[t] > s.beta[t - 1]) && T > 1)
            throw param_error("schedule: beta not strictly increasing at t=" + std::to_string(t));
        s.alpha[t] = 1.0 - s.beta[t];
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
        s.beta_bar[t] = 1.0 - s.alpha_bar[t];
    }
}

} // namespace detail

/// beta[t] = lerp(beta_1, beta_T) in (t-1)/(T-1); endpoints land on the requested
/// values bit-for-bit.
inline NoiseSchedule make_linear_schedule(int T, double beta_1, double beta_T) {
    detail::check_schedule_params(T, beta_1, beta_T);
    NoiseSchedule s;
    s.kind = ScheduleKind::linear;
    s.steps = T;
    s.beta.assign(T + 1, 0.0);
    for (int t = 1; t <= T; ++t) {
        double u = T > 1 ? static_cast<double>(t - 1) / static_cast<double>(T - 1) : 1.0;
        s.beta[t] = beta_1 * (1.0 - u) + beta_T * u;
    }
    s.beta[1] = T > 1 ? beta_1 : beta_T;
    s.beta[T] = beta_T;
    detail::finish_schedule(s);
    return s;
}

/// Logistic ramp over u in [-6, 6], affinely rescaled so beta[1] and beta[T] equal the
/// requested endpoints exactly. Grows slower than the linear ramp in the early steps.
inline NoiseSchedule make_sigmoid_schedule(int T, double beta_1, double beta_T) {
    detail::check_schedule_params(T, beta_1, beta_T);
    const double span = 6.0;
    auto logistic = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    const double lo = logistic(-span);
    const double hi = logistic(span);
    NoiseSchedule s;
    s.kind = ScheduleKind::sigmoid;
    s.steps = T;
    s.beta.assign(T + 1, 0.0);
    for (int t = 1; t <= T; ++t) {
        double u = T > 1 ? static_cast<double>(t - 1) / static_cast<double>(T - 1) : 1.0;
        double g = (logistic(-span + 2.0 * span * u) - lo) / (hi - lo);
        s.beta[t] = beta_1 * (1.0 - g) + beta_T * g;
    }
    s.beta[1] = T > 1 ? beta_1 : beta_T;
    s.beta[T] = beta_T;
    detail::finish_schedule(s);
    return s;
}

inline NoiseSchedule make_schedule(ScheduleKind kind, int T, double beta_1, double beta_T) {
    return kind == ScheduleKind::linear ? make_linear_schedule(T, beta_1, beta_T)
                                        : make_sigmoid_schedule(T, beta_1, beta_T);
}

/// Cumulative product alpha_bar at step t; t = 0 is the empty product, 1.
inline double alpha_bar_at(const NoiseSchedule& s, int t) {
    if (t < 0 || t > s.steps)
        throw param_error("alpha_bar_at: t=" + std::to_string(t) + " outside [0," + std::to_string(s.steps) + "]");
    return s.alpha_bar[t];
}

inline double beta_bar_at(const NoiseSchedule& s, int t) {
    if (t < 0 || t > s.steps)
        throw param_error("beta_bar_at: t out of range");
    return s.beta_bar[t];
}

} // namespace burstlab
