#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "burstlab/burst.hpp"
#include "burstlab/common.hpp"
#include "burstlab/denoiser.hpp"
#include "burstlab/diffusion.hpp"
#include "burstlab/schedule.hpp"

namespace burstlab {

/// One experiment's knobs. Schedules are reconstructed from (kind, T, beta_1,
/// beta_T); they are never serialized as raw arrays.
struct RunConfig {
    // diffusion schedule
    std::string schedule = "linear";
    int T = 1000;
    double beta_1 = 1e-4;
    double beta_T = 0.02;

    // reverse process
    int tau_train = 100; // largest training step (tau_L)
    int tau = 5;         // reverse start step
    std::string init = "baseline-sr";

    // burst synthesis
    int burst_size = 8;
    int hr_size = 256;
    int downscale = 4;
    double max_shift = 24.0;
    double max_rot = 1.0;
    double noise_shot = 1e-3;
    double noise_read = 1e-4;
    bool no_noise = false;

    // models
    int feat_dim = 48;
    int cond_channels = 256;
    std::vector<int> widths = {32, 64, 128};
    int temb_dim = 0; // 0 -> 4 * widths[0]
    int groups = 8;
    int baseline_hidden = 64;
    int align_radius = 8;

    // optimization
    double lr = 1e-4;
    double weight_decay = 0.01;
    double grad_clip = 0.0; // 0 disables
    int batch = 8;
    int iters = 1000;

    // run control
    uint64_t seed = 0;
    int threads = 1;
    int log_every = 25;
    int ckpt_every = 0; // 0 = final checkpoint only

    DegradationParams degradation() const {
        DegradationParams p;
        p.burst_size = burst_size;
        p.hr_size = hr_size;
        p.downscale = downscale;
        p.max_shift_px = max_shift;
        p.max_rot_deg = max_rot;
        p.noise_shot = noise_shot;
        p.noise_read = noise_read;
        p.add_noise = !no_noise;
        return p;
    }

    DenoiserConfig denoiser() const {
        DenoiserConfig c;
        c.in_channels = 3;
        c.widths = widths;
        c.temb_dim = temb_dim;
        c.cond_channels = cond_channels;
        c.groups = groups;
        return c;
    }

    NoiseSchedule make_noise_schedule() const {
        return make_schedule(schedule_kind_from_string(schedule), T, beta_1, beta_T);
    }

    ReverseStartConfig reverse_start() const {
        return {tau, tau_train, init_kind_from_string(init)};
    }

    void validate() const {
        if (T < 1) throw param_error("config: T must be >= 1");
        if (!(beta_1 > 0) || !(beta_1 < beta_T) || !(beta_T < 1))
            throw param_error("config: need 0 < beta_1 < beta_T < 1");
        schedule_kind_from_string(schedule);
        InitKind ik = init_kind_from_string(init);
        if (tau < 0 || tau > T) throw param_error("config: tau must lie in [0, T]");
        if (tau_train < 1 || tau_train > T) throw param_error("config: tau-train must lie in [1, T]");
        if (ik == InitKind::random_noise && tau != T)
            throw param_error("config: random-noise initialization requires tau == T");
        degradation().validate();
        denoiser().validate();
        const int div = 1 << (static_cast<int>(widths.size()) - 1);
        if (hr_size % div != 0)
            throw param_error("config: hr-size must be divisible by 2^(levels-1)");
        if (feat_dim < 1) throw param_error("config: feat-dim must be positive");
        if (batch < 1) throw param_error("config: batch must be >= 1");
        if (iters < 0) throw param_error("config: iters must be nonnegative");
        if (lr <= 0) throw param_error("config: lr must be positive");
        if (threads < 1) throw param_error("config: threads must be >= 1");
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["schedule"] = schedule;
        j["T"] = T;
        j["beta_1"] = beta_1;
        j["beta_T"] = beta_T;
        j["tau_train"] = tau_train;
        j["tau"] = tau;
        j["init"] = init;
        j["burst_size"] = burst_size;
        j["hr_size"] = hr_size;
        j["downscale"] = downscale;
        j["max_shift"] = max_shift;
        j["max_rot"] = max_rot;
        j["noise_shot"] = noise_shot;
        j["noise_read"] = noise_read;
        j["no_noise"] = no_noise;
        j["feat_dim"] = feat_dim;
        j["cond_channels"] = cond_channels;
        j["widths"] = widths;
        j["temb_dim"] = temb_dim;
        j["groups"] = groups;
        j["baseline_hidden"] = baseline_hidden;
        j["align_radius"] = align_radius;
        j["lr"] = lr;
        j["weight_decay"] = weight_decay;
        j["grad_clip"] = grad_clip;
        j["batch"] = batch;
        j["iters"] = iters;
        j["seed"] = seed;
        j["threads"] = threads;
        j["log_every"] = log_every;
        j["ckpt_every"] = ckpt_every;
        return j;
    }

    static RunConfig from_json(const nlohmann::json& j) {
        RunConfig c;
        c.schedule = j.value("schedule", c.schedule);
        c.T = j.value("T", c.T);
        c.beta_1 = j.value("beta_1", c.beta_1);
        c.beta_T = j.value("beta_T", c.beta_T);
        c.tau_train = j.value("tau_train", c.tau_train);
        c.tau = j.value("tau", c.tau);
        c.init = j.value("init", c.init);
        c.burst_size = j.value("burst_size", c.burst_size);
        c.hr_size = j.value("hr_size", c.hr_size);
        c.downscale = j.value("downscale", c.downscale);
        c.max_shift = j.value("max_shift", c.max_shift);
        c.max_rot = j.value("max_rot", c.max_rot);
        c.noise_shot = j.value("noise_shot", c.noise_shot);
        c.noise_read = j.value("noise_read", c.noise_read);
        c.no_noise = j.value("no_noise", c.no_noise);
        c.feat_dim = j.value("feat_dim", c.feat_dim);
        c.cond_channels = j.value("cond_channels", c.cond_channels);
        c.widths = j.value("widths", c.widths);
        c.temb_dim = j.value("temb_dim", c.temb_dim);
        c.groups = j.value("groups", c.groups);
        c.baseline_hidden = j.value("baseline_hidden", c.baseline_hidden);
        c.align_radius = j.value("align_radius", c.align_radius);
        c.lr = j.value("lr", c.lr);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.grad_clip = j.value("grad_clip", c.grad_clip);
        c.batch = j.value("batch", c.batch);
        c.iters = j.value("iters", c.iters);
        c.seed = j.value("seed", c.seed);
        c.threads = j.value("threads", c.threads);
        c.log_every = j.value("log_every", c.log_every);
        c.ckpt_every = j.value("ckpt_every", c.ckpt_every);
        return c;
    }

    /// Fields that must agree between a checkpoint and the run resuming it.
    nlohmann::json structural_json() const {
        nlohmann::json j;
        j["schedule"] = schedule;
        j["T"] = T;
        j["beta_1"] = beta_1;
        j["beta_T"] = beta_T;
        j["tau_train"] = tau_train;
        j["burst_size"] = burst_size;
        j["hr_size"] = hr_size;
        j["downscale"] = downscale;
        j["feat_dim"] = feat_dim;
        j["cond_channels"] = cond_channels;
        j["widths"] = widths;
        j["temb_dim"] = temb_dim;
        j["groups"] = groups;
        j["baseline_hidden"] = baseline_hidden;
        return j;
    }
};

} // namespace burstlab
