#pragma once

#include <string>
#include <vector>

#include "burstlab/burst.hpp"
#include "burstlab/common.hpp"
#include "burstlab/diffusion.hpp"
#include "burstlab/encoder.hpp"
#include "burstlab/image_ops.hpp"
#include "burstlab/nn.hpp"
#include "burstlab/tensor.hpp"

namespace burstlab {

/// The deterministic starting image x0' for the reverse process, tagged with
/// the path that produced it.
struct InitialSR {
    Tensor image; // 3 x hr x hr in [0,1]
    InitKind source = InitKind::bicubic;
};

/// Demosaic the reference frame, go back to display space, bicubic-upscale to
/// the HR grid. The ablation's "from bicubic upscaled image" initializer.
inline InitialSR bicubic_init(const RawBurst& burst, int downscale = 4, double gamma = 2.2) {
    if (burst.frames.empty()) throw param_error("bicubic_init: empty burst");
    const Tensor& ref = burst.frames[burst.ref_index];
    Tensor lr = demosaic_bilinear(ref);
    lr = apply_gamma(lr, gamma);
    Tensor hr = resize_bicubic(lr, lr.h * downscale, lr.w * downscale);
    return {clamp01(std::move(hr)), InitKind::bicubic};
}

// ---------------------------------------------------------------------------
// Deterministic burst SR baseline: shared-weight frame encoder (its own copy,
// independent of the diffusion conditioner), integer-shift alignment, average
// pooling over frames, a small conv stack, and a sub-pixel (pixel shuffle)
// upsampler to the HR grid. Trained with per-pixel MSE.
// ---------------------------------------------------------------------------

template <class T>
struct BaselineNetT {
    int f = 48, hidden = 64;
    int upscale = 8; // raw grid -> HR grid
    int align_radius = 8;

    BurstEncoder<T> enc;
    Conv2d<T> c1, c2, c3, up;

    void init(int in_c, int f_, int hidden_, int upscale_, int align_radius_ = 8) {
        f = f_;
        hidden = hidden_;
        upscale = upscale_;
        align_radius = align_radius_;
        enc.init(in_c, f);
        c1.init(f, hidden, 3);
        c2.init(hidden, hidden, 3);
        c3.init(hidden, hidden, 3);
        up.init(hidden, 3 * upscale * upscale, 3);
    }

    void init_weights(RandomSource& rng) {
        enc.init_weights(rng);
        c1.init_weights(rng);
        c2.init_weights(rng);
        c3.init_weights(rng);
        up.init_weights(rng, 0.0); // start from a black image
    }

    struct Cache {
        typename BurstEncoder<T>::Cache encc;
        std::vector<ShiftEstimate> shifts;
        TensorT<T> m;              // frame-averaged features
        TensorT<T> h1, h2, h3;     // conv outputs (pre-activation)
        int burst = 0;
    };

    /// Raw network output on the HR grid, no clamping (training path).
    TensorT<T> forward_raw(const std::vector<TensorT<T>>& frames, int ref_index,
                           Cache* cache = nullptr) const {
        if (frames.empty()) throw param_error("baseline: empty burst");
        BurstFeaturesT<T> feats = enc.forward(frames, cache ? &cache->encc : nullptr);
        AlignResult<T> aligned = align_features(feats, ref_index, align_radius);
        TensorT<T> m(f, frames[0].h, frames[0].w);
        for (const auto& fr : aligned.features)
            for (size_t i = 0; i < m.size(); ++i) m.v[i] += fr.v[i];
        const T inv = T(1) / static_cast<T>(frames.size());
        for (T& v : m.v) v *= inv;

        TensorT<T> h1 = c1.forward(m);
        TensorT<T> h2 = c2.forward(silu(h1));
        TensorT<T> h3 = c3.forward(silu(h2));
        TensorT<T> y = pixel_shuffle(up.forward(silu(h3)), upscale);
        if (cache) {
            cache->shifts = aligned.shifts;
            cache->m = std::move(m);
            cache->h1 = std::move(h1);
            cache->h2 = std::move(h2);
            cache->h3 = std::move(h3);
            cache->burst = static_cast<int>(frames.size());
        }
        return y;
    }

    void backward(const TensorT<T>& dy, const Cache& cache) {
        TensorT<T> dps = pixel_shuffle_backward(dy, upscale);
        TensorT<T> ds3 = up.backward(silu(cache.h3), dps);
        TensorT<T> dh3 = silu_backward(cache.h3, ds3);
        TensorT<T> ds2 = c3.backward(silu(cache.h2), dh3);
        TensorT<T> dh2 = silu_backward(cache.h2, ds2);
        TensorT<T> ds1 = c2.backward(silu(cache.h1), dh2);
        TensorT<T> dh1 = silu_backward(cache.h1, ds1);
        TensorT<T> dm = c1.backward(cache.m, dh1);

        const T inv = T(1) / static_cast<T>(cache.burst);
        BurstFeaturesT<T> dfeat(cache.burst);
        for (int b = 0; b < cache.burst; ++b) {
            dfeat[b] = dm;
            for (T& v : dfeat[b].v) v *= inv;
        }
        dfeat = align_backward(dfeat, cache.shifts);
        enc.backward(dfeat, cache.encc);
    }

    void register_params(ParamRegistry<T>& r, const std::string& prefix) {
        enc.register_params(r, prefix + ".enc");
        c1.register_params(r, prefix + ".c1");
        c2.register_params(r, prefix + ".c2");
        c3.register_params(r, prefix + ".c3");
        up.register_params(r, prefix + ".up");
    }
};

using BaselineNet = BaselineNetT<float>;

/// Inference entry point: clamped [0,1] image tagged as the baseline source.
inline InitialSR baseline_forward(const RawBurst& burst, const BaselineNet& net) {
    Tensor y = net.forward_raw(burst.frames, burst.ref_index, nullptr);
    return {clamp01(std::move(y)), InitKind::baseline_sr};
}

} // namespace burstlab
