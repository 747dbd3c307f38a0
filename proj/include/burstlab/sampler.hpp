#pragma once

#include <string>
#include <vector>

#include "burstlab/baseline.hpp"
#include "burstlab/burst.hpp"
#include "burstlab/common.hpp"
#include "burstlab/denoiser.hpp"
#include "burstlab/diffusion.hpp"
#include "burstlab/encoder.hpp"
#include "burstlab/runconfig.hpp"
#include "burstlab/tensor.hpp"

namespace burstlab {

// ---------------------------------------------------------------------------
// The conditional diffusion model: burst feature extractor + alignment +
// condition merger + U-Net, trained jointly. The conditioning pyramid is
// computed once per sample and reused across all reverse steps.
// ---------------------------------------------------------------------------

template <class T>
struct DiffusionModelT {
    BurstEncoder<T> enc;
    CondMerger<T> merger;
    UNetT<T> unet;
    int align_radius = 8;

    void init(const RunConfig& cfg) {
        enc.init(4, cfg.feat_dim);
        merger.init(cfg.burst_size, cfg.feat_dim, static_cast<int>(cfg.widths.size()), cfg.cond_channels);
        unet.init(cfg.denoiser());
        align_radius = cfg.align_radius;
    }

    void init_weights(RandomSource& rng) {
        enc.init_weights(rng);
        merger.init_weights(rng);
        unet.init_weights(rng);
    }

    struct CondCache {
        typename BurstEncoder<T>::Cache encc;
        std::vector<ShiftEstimate> shifts;
        typename CondMerger<T>::Cache mergec;
    };

    CondPyramidT<T> condition(const std::vector<TensorT<T>>& frames, int ref_index, int img_h, int img_w,
                              CondCache* cache = nullptr) const {
        BurstFeaturesT<T> feats = enc.forward(frames, cache ? &cache->encc : nullptr);
        AlignResult<T> aligned = align_features(feats, ref_index, align_radius);
        if (cache) cache->shifts = aligned.shifts;
        return merger.forward(aligned.features, unet.level_sizes(img_h, img_w),
                              cache ? &cache->mergec : nullptr);
    }

    /// Backward of condition(): pyramid grads -> encoder/merger parameter grads.
    void condition_backward(const CondPyramidT<T>& dcond, const CondCache& cache) {
        BurstFeaturesT<T> daligned = merger.backward(dcond, cache.mergec);
        BurstFeaturesT<T> dfeat = align_backward(daligned, cache.shifts);
        enc.backward(dfeat, cache.encc);
    }

    void register_params(ParamRegistry<T>& r) {
        enc.register_params(r, "cond.enc");
        merger.register_params(r, "cond");
        unet.register_params(r, "unet");
    }
};

using DiffusionModel = DiffusionModelT<float>;

// ---------------------------------------------------------------------------
// End-to-end sampling for one burst
// ---------------------------------------------------------------------------

struct SampleOutput {
    Tensor sr;   // [0,1] RGB result of the reverse process
    Tensor init; // [0,1] RGB initializer image, rendered through the same
                 // diffusion-space round trip as sr so tau = 0 matches bitwise
};

/// Produces the initializer image x0' for the configured start mode. The
/// random-noise mode has no meaningful initializer; a black image stands in.
inline InitialSR make_initializer(const RawBurst& burst, InitKind kind, const BaselineNet* baseline,
                                  int downscale, double gamma = 2.2) {
    switch (kind) {
        case InitKind::bicubic:
            return bicubic_init(burst, downscale, gamma);
        case InitKind::baseline_sr:
            if (!baseline) throw param_error("sampling: baseline initializer requires baseline weights");
            return baseline_forward(burst, *baseline);
        default: {
            const int hr = burst.frames[burst.ref_index].h * 2 * downscale;
            InitialSR out;
            out.image = Tensor(3, hr, hr);
            out.source = InitKind::random_noise;
            return out;
        }
    }
}

inline SampleOutput run_sampler(const BurstSample& sample, const DiffusionModel& model,
                                const BaselineNet* baseline, const NoiseSchedule& sched,
                                const ReverseStartConfig& rsc, int downscale, RandomSource& rng,
                                const WarnFn& warn = {}) {
    InitialSR init = make_initializer(sample.raw, rsc.initializer, baseline, downscale);
    Tensor x0d = to_diffusion_space(init.image);

    CondPyramid cond;
    if (rsc.tau > 0)
        cond = model.condition(sample.raw.frames, sample.raw.ref_index, x0d.h, x0d.w, nullptr);

    Tensor out = sample_from_intermediate(
        x0d, rsc, sched,
        [&](const Tensor& x, int t) { return model.unet.forward(x, t, cond, nullptr); }, rng, warn);

    SampleOutput result;
    result.sr = from_diffusion_space(out);
    result.init = from_diffusion_space(x0d);
    return result;
}

} // namespace burstlab
