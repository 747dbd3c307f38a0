#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <omp.h>

#include "burstlab/checkpoint.hpp"
#include "burstlab/common.hpp"
#include "burstlab/diffusion.hpp"
#include "burstlab/runconfig.hpp"
#include "burstlab/sampler.hpp"

namespace burstlab {

namespace detail {

constexpr uint64_t kItemStreamSalt = 0xb5e57a1eULL;

template <class Reg>
void clip_global_norm(Reg& reg, double max_norm) {
    if (max_norm <= 0) return;
    double sq = 0;
    for (const auto& e : reg.entries)
        for (auto g : e.p->g) sq += static_cast<double>(g) * g;
    double norm = std::sqrt(sq);
    if (norm > max_norm) reg.scale_grads(static_cast<float>(max_norm / norm));
}

inline void check_resume_config(const CheckpointHeader& header, const RunConfig& cfg,
                                const std::string& expected_kind) {
    if (header.kind != expected_kind)
        throw param_error("checkpoint kind is '" + header.kind + "', expected '" + expected_kind + "'");
    RunConfig stored = RunConfig::from_json(header.config);
    if (stored.structural_json() != cfg.structural_json())
        throw param_error("checkpoint configuration does not match this run (structural fields differ)");
}

} // namespace detail

// ---------------------------------------------------------------------------
// Diffusion trainer. Epsilon-prediction MSE on steps 1..tau_train, jointly
// through the U-Net and the burst conditioner. Batch items use rng streams
// derived from (seed, iteration, slot), so a run is reproducible for a fixed
// thread count; batch composition comes from the main (checkpointed) stream.
// ---------------------------------------------------------------------------

class DiffusionTrainer {
public:
    DiffusionTrainer(RunConfig cfg, std::vector<BurstSample> data)
        : cfg_(std::move(cfg)), data_(std::move(data)), rng_(cfg_.seed) {
        cfg_.validate();
        if (data_.empty()) throw param_error("train-diffusion: dataset is empty");
        sched_ = cfg_.make_noise_schedule();
        model_.init(cfg_);
        RandomSource wrng(RandomSource::mix(cfg_.seed, 0x5eedULL));
        model_.init_weights(wrng);
        model_.register_params(reg_);
        adam_.lr = cfg_.lr;
        adam_.weight_decay = cfg_.weight_decay;
        adam_.init(reg_);
        if (cfg_.threads > 1) {
            workers_.assign(cfg_.threads, model_);
            worker_regs_.assign(cfg_.threads, ParamRegistry<float>());
            for (int i = 0; i < cfg_.threads; ++i) workers_[i].register_params(worker_regs_[i]);
        }
    }

    const DiffusionModel& model() const { return model_; }
    DiffusionModel& model() { return model_; }
    const NoiseSchedule& schedule() const { return sched_; }
    int64_t iteration() const { return iteration_; }

    /// One optimizer step over a freshly drawn batch; returns the batch loss.
    double step() {
        const int B = cfg_.batch;
        std::vector<int> items(B);
        for (int i = 0; i < B; ++i)
            items[i] = static_cast<int>(rng_.integer(data_.size()));

        std::vector<double> losses(B, 0.0);
        if (cfg_.threads > 1) {
            for (int w = 0; w < cfg_.threads; ++w) {
                worker_regs_[w].copy_params_from(reg_);
                worker_regs_[w].zero_grads();
            }
            reg_.zero_grads();
            // fixed slot -> worker mapping keeps the reduction order reproducible
#pragma omp parallel num_threads(cfg_.threads)
            {
                int w = omp_get_thread_num();
                for (int slot = w; slot < B; slot += cfg_.threads)
                    losses[slot] = item_pass(workers_[w], data_[items[slot]], slot);
            }
            for (int w = 0; w < cfg_.threads; ++w) reg_.add_grads_from(worker_regs_[w]);
        } else {
            reg_.zero_grads();
            for (int slot = 0; slot < B; ++slot)
                losses[slot] = item_pass(model_, data_[items[slot]], slot);
        }

        double loss = 0;
        for (double l : losses) loss += l;
        loss /= B;
        if (!std::isfinite(loss) || !reg_.grads_finite())
            throw numeric_error("train-diffusion: non-finite loss/gradients at iteration " +
                                std::to_string(iteration_));
        reg_.scale_grads(1.0f / static_cast<float>(B));
        detail::clip_global_norm(reg_, cfg_.grad_clip);
        adam_.step(reg_);
        ++iteration_;
        return loss;
    }

    void save(const std::string& path) {
        CheckpointHeader h;
        h.kind = "diffusion";
        h.config = cfg_.to_json();
        h.iteration = iteration_;
        h.rng_state = rng_.save_state();
        save_checkpoint(path, h, reg_, &adam_);
    }

    void resume(const std::string& path) {
        CheckpointHeader h = load_checkpoint(path, reg_, &adam_);
        detail::check_resume_config(h, cfg_, "diffusion");
        iteration_ = h.iteration;
        if (!h.rng_state.empty()) rng_.load_state(h.rng_state);
    }

private:
    double item_pass(DiffusionModel& m, const BurstSample& sample, int slot) {
        RandomSource item_rng(
            RandomSource::mix(RandomSource::mix(cfg_.seed, detail::kItemStreamSalt),
                              static_cast<uint64_t>(iteration_) * cfg_.batch + slot));
        Tensor x0 = to_diffusion_space(sample.hr);

        typename DiffusionModel::CondCache cond_cache;
        CondPyramid cond =
            m.condition(sample.raw.frames, sample.raw.ref_index, x0.h, x0.w, &cond_cache);

        int t = static_cast<int>(item_rng.integer(static_cast<uint64_t>(cfg_.tau_train))) + 1;
        Tensor eps(x0.c, x0.h, x0.w);
        item_rng.fill_normal(eps);
        Tensor x_t = q_sample_closed(x0, t, sched_, eps);

        UNet::Workspace ws;
        Tensor eps_hat = m.unet.forward(x_t, t, cond, &ws);

        double loss = 0;
        Tensor dout(eps_hat.c, eps_hat.h, eps_hat.w);
        const float scale = 2.0f / static_cast<float>(eps_hat.size());
        for (size_t i = 0; i < eps_hat.size(); ++i) {
            float d = eps_hat.v[i] - eps.v[i];
            loss += static_cast<double>(d) * d;
            dout.v[i] = scale * d;
        }
        loss /= static_cast<double>(eps_hat.size());

        CondPyramid dcond = m.unet.backward(dout, ws);
        m.condition_backward(dcond, cond_cache);
        return loss;
    }

    RunConfig cfg_;
    std::vector<BurstSample> data_;
    NoiseSchedule sched_;
    DiffusionModel model_;
    ParamRegistry<float> reg_;
    AdamW<float> adam_;
    RandomSource rng_;
    int64_t iteration_ = 0;
    std::vector<DiffusionModel> workers_;
    std::vector<ParamRegistry<float>> worker_regs_;
};

// ---------------------------------------------------------------------------
// Baseline trainer: per-pixel MSE between the unclamped network output and
// the HR ground truth.
// ---------------------------------------------------------------------------

class BaselineTrainer {
public:
    BaselineTrainer(RunConfig cfg, std::vector<BurstSample> data)
        : cfg_(std::move(cfg)), data_(std::move(data)), rng_(cfg_.seed) {
        cfg_.validate();
        if (data_.empty()) throw param_error("train-baseline: dataset is empty");
        const int upscale = 2 * cfg_.downscale;
        net_.init(4, cfg_.feat_dim, cfg_.baseline_hidden, upscale, cfg_.align_radius);
        RandomSource wrng(RandomSource::mix(cfg_.seed, 0xba5eULL));
        net_.init_weights(wrng);
        net_.register_params(reg_, "baseline");
        adam_.lr = cfg_.lr;
        adam_.weight_decay = cfg_.weight_decay;
        adam_.init(reg_);
        if (cfg_.threads > 1) {
            workers_.assign(cfg_.threads, net_);
            worker_regs_.assign(cfg_.threads, ParamRegistry<float>());
            for (int i = 0; i < cfg_.threads; ++i) workers_[i].register_params(worker_regs_[i], "baseline");
        }
    }

    const BaselineNet& net() const { return net_; }
    int64_t iteration() const { return iteration_; }

    double step() {
        const int B = cfg_.batch;
        std::vector<int> items(B);
        for (int i = 0; i < B; ++i)
            items[i] = static_cast<int>(rng_.integer(data_.size()));

        std::vector<double> losses(B, 0.0);
        if (cfg_.threads > 1) {
            for (int w = 0; w < cfg_.threads; ++w) {
                worker_regs_[w].copy_params_from(reg_);
                worker_regs_[w].zero_grads();
            }
            reg_.zero_grads();
#pragma omp parallel num_threads(cfg_.threads)
            {
                int w = omp_get_thread_num();
                for (int slot = w; slot < B; slot += cfg_.threads)
                    losses[slot] = item_pass(workers_[w], data_[items[slot]]);
            }
            for (int w = 0; w < cfg_.threads; ++w) reg_.add_grads_from(worker_regs_[w]);
        } else {
            reg_.zero_grads();
            for (int slot = 0; slot < B; ++slot)
                losses[slot] = item_pass(net_, data_[items[slot]]);
        }

        double loss = 0;
        for (double l : losses) loss += l;
        loss /= B;
        if (!std::isfinite(loss) || !reg_.grads_finite())
            throw numeric_error("train-baseline: non-finite loss/gradients at iteration " +
                                std::to_string(iteration_));
        reg_.scale_grads(1.0f / static_cast<float>(B));
        detail::clip_global_norm(reg_, cfg_.grad_clip);
        adam_.step(reg_);
        ++iteration_;
        return loss;
    }

    /// Mean MSE over the whole dataset with the current weights (no update).
    double evaluate_mse() const {
        double total = 0;
        for (const auto& s : data_) {
            Tensor y = net_.forward_raw(s.raw.frames, s.raw.ref_index, nullptr);
            total += mse(y, s.hr);
        }
        return total / static_cast<double>(data_.size());
    }

    void save(const std::string& path) {
        CheckpointHeader h;
        h.kind = "baseline";
        h.config = cfg_.to_json();
        h.iteration = iteration_;
        h.rng_state = rng_.save_state();
        save_checkpoint(path, h, reg_, &adam_);
    }

    void resume(const std::string& path) {
        CheckpointHeader h = load_checkpoint(path, reg_, &adam_);
        detail::check_resume_config(h, cfg_, "baseline");
        iteration_ = h.iteration;
        if (!h.rng_state.empty()) rng_.load_state(h.rng_state);
    }

private:
    double item_pass(BaselineNet& net, const BurstSample& sample) {
        typename BaselineNet::Cache cache;
        Tensor y = net.forward_raw(sample.raw.frames, sample.raw.ref_index, &cache);
        require_same_shape(y, sample.hr, "train-baseline");
        double loss = 0;
        Tensor dy(y.c, y.h, y.w);
        const float scale = 2.0f / static_cast<float>(y.size());
        for (size_t i = 0; i < y.size(); ++i) {
            float d = y.v[i] - sample.hr.v[i];
            loss += static_cast<double>(d) * d;
            dy.v[i] = scale * d;
        }
        loss /= static_cast<double>(y.size());
        net.backward(dy, cache);
        return loss;
    }

    RunConfig cfg_;
    std::vector<BurstSample> data_;
    BaselineNet net_;
    ParamRegistry<float> reg_;
    AdamW<float> adam_;
    RandomSource rng_;
    int64_t iteration_ = 0;
    std::vector<BaselineNet> workers_;
    std::vector<ParamRegistry<float>> worker_regs_;
};

// ---------------------------------------------------------------------------
// Checkpoint loading for inference (no optimizer state needed)
// ---------------------------------------------------------------------------

inline RunConfig load_diffusion_model(const std::string& path, DiffusionModel& model) {
    std::ifstream probe(path);
    if (!probe) throw io_error(io_error::code::open_failed, "missing checkpoint: " + path);
    probe.close();
    // peek the stored config to size the model before loading blocks
    ParamRegistry<float> tmp;
    CheckpointHeader header;
    {
        std::ifstream is(path, std::ios::binary);
        char magic[4];
        is.read(magic, 4);
        is.get();
        uint32_t len = detail::get_u32(is);
        std::string js(len, '\0');
        is.read(js.data(), len);
        if (!is) throw io_error(io_error::code::truncated, "checkpoint: truncated header");
        header.config = nlohmann::json::parse(js).value("config", nlohmann::json::object());
        header.kind = nlohmann::json::parse(js).value("kind", "");
    }
    if (header.kind != "diffusion")
        throw param_error("checkpoint '" + path + "' is not a diffusion checkpoint");
    RunConfig cfg = RunConfig::from_json(header.config);
    model.init(cfg);
    ParamRegistry<float> reg;
    model.register_params(reg);
    load_checkpoint(path, reg, static_cast<AdamW<float>*>(nullptr));
    return cfg;
}

inline RunConfig load_baseline_model(const std::string& path, BaselineNet& net) {
    std::ifstream probe(path);
    if (!probe) throw io_error(io_error::code::open_failed, "missing checkpoint: " + path);
    probe.close();
    CheckpointHeader header;
    {
        std::ifstream is(path, std::ios::binary);
        char magic[4];
        is.read(magic, 4);
        is.get();
        uint32_t len = detail::get_u32(is);
        std::string js(len, '\0');
        is.read(js.data(), len);
        if (!is) throw io_error(io_error::code::truncated, "checkpoint: truncated header");
        auto j = nlohmann::json::parse(js);
        header.config = j.value("config", nlohmann::json::object());
        header.kind = j.value("kind", "");
    }
    if (header.kind != "baseline")
        throw param_error("checkpoint '" + path + "' is not a baseline checkpoint");
    RunConfig cfg = RunConfig::from_json(header.config);
    net.init(4, cfg.feat_dim, cfg.baseline_hidden, 2 * cfg.downscale, cfg.align_radius);
    ParamRegistry<float> reg;
    net.register_params(reg, "baseline");
    load_checkpoint(path, reg, static_cast<AdamW<float>*>(nullptr));
    return cfg;
}

} // namespace burstlab
