#pragma once

#include <string>
#include <utility>
#include <vector>

#include "burstlab/burst.hpp"
#include "burstlab/common.hpp"
#include "burstlab/image_ops.hpp"
#include "burstlab/nn.hpp"
#include "burstlab/tensor.hpp"

namespace burstlab {

/// Per-frame feature maps on the RAW grid (B tensors of f x h x w).
template <class T>
using BurstFeaturesT = std::vector<TensorT<T>>;
using BurstFeatures = BurstFeaturesT<float>;

/// Multi-scale conditioning maps, one per denoiser level, 256 channels each.
template <class T>
using CondPyramidT = std::vector<TensorT<T>>;
using CondPyramid = CondPyramidT<float>;

struct LevelSize {
    int h = 0;
    int w = 0;
};

// ---------------------------------------------------------------------------
// Shallow per-frame feature extraction: conv3x3 -> SiLU -> conv3x3, shared
// weights across frames. Zero input with zero bias maps to zero features.
// ---------------------------------------------------------------------------

template <class T>
struct BurstEncoder {
    int in_c = 4, f = 48;
    Conv2d<T> c1, c2;

    void init(int in_c_, int f_) {
        in_c = in_c_;
        f = f_;
        c1.init(in_c, f, 3);
        c2.init(f, f, 3);
    }

    void init_weights(RandomSource& rng) {
        c1.init_weights(rng);
        c2.init_weights(rng);
    }

    struct Cache {
        std::vector<TensorT<T>> x;  // frame inputs
        std::vector<TensorT<T>> a1; // conv1 outputs (pre-activation)
    };

    BurstFeaturesT<T> forward(const std::vector<TensorT<T>>& frames, Cache* cache = nullptr) const {
        BurstFeaturesT<T> out;
        out.reserve(frames.size());
        if (cache) {
            cache->x.clear();
            cache->a1.clear();
        }
        for (const auto& fr : frames) {
            if (fr.c != in_c) throw param_error("BurstEncoder: frame channel mismatch");
            TensorT<T> a1 = c1.forward(fr);
            out.push_back(c2.forward(silu(a1)));
            if (cache) {
                cache->x.push_back(fr);
                cache->a1.push_back(std::move(a1));
            }
        }
        return out;
    }

    /// Accumulates parameter grads; returns per-frame input grads.
    std::vector<TensorT<T>> backward(const BurstFeaturesT<T>& dfeat, const Cache& cache) {
        std::vector<TensorT<T>> dframes(dfeat.size());
        for (size_t i = 0; i < dfeat.size(); ++i) {
            TensorT<T> da = c2.backward(silu(cache.a1[i]), dfeat[i]);
            da = silu_backward(cache.a1[i], da);
            dframes[i] = c1.backward(cache.x[i], da);
        }
        return dframes;
    }

    void register_params(ParamRegistry<T>& r, const std::string& prefix) {
        c1.register_params(r, prefix + ".c1");
        c2.register_params(r, prefix + ".c2");
    }
};

// ---------------------------------------------------------------------------
// Integer-shift alignment in feature space. The estimated shift maximizes the
// circular cross-correlation with the reference frame; ties keep the smaller
// shift, with (0,0) scanned first so identical frames stay untouched.
// ---------------------------------------------------------------------------

struct ShiftEstimate {
    int dx = 0;
    int dy = 0;
};

/// out(c, y, x) = in(c, (y + dy) mod h, (x + dx) mod w)
template <class T>
TensorT<T> circular_shift(const TensorT<T>& x, int dx, int dy) {
    if (dx == 0 && dy == 0) return x;
    TensorT<T> out(x.c, x.h, x.w);
    auto wrap = [](int i, int n) {
        i %= n;
        return i < 0 ? i + n : i;
    };
    for (int ci = 0; ci < x.c; ++ci)
        for (int y = 0; y < x.h; ++y) {
            int sy = wrap(y + dy, x.h);
            for (int xx = 0; xx < x.w; ++xx)
                out.at(ci, y, xx) = x.at(ci, sy, wrap(xx + dx, x.w));
        }
    return out;
}

template <class T>
ShiftEstimate estimate_shift(const TensorT<T>& ref, const TensorT<T>& moving, int radius) {
    require_same_shape(ref, moving, "estimate_shift");
    if (radius < 0) throw param_error("estimate_shift: radius must be nonnegative");
    auto score = [&](int dx, int dy) {
        double s = 0.0;
        auto wrap = [](int i, int n) {
            i %= n;
            return i < 0 ? i + n : i;
        };
        for (int ci = 0; ci < ref.c; ++ci)
            for (int y = 0; y < ref.h; ++y) {
                int sy = wrap(y + dy, ref.h);
                for (int x = 0; x < ref.w; ++x)
                    s += static_cast<double>(ref.at(ci, y, x)) *
                         static_cast<double>(moving.at(ci, sy, wrap(x + dx, ref.w)));
            }
        return s;
    };
    ShiftEstimate best{0, 0};
    double best_score = score(0, 0);
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            if (dx == 0 && dy == 0) continue;
            double s = score(dx, dy);
            if (s > best_score) {
                best_score = s;
                best = {dx, dy};
            }
        }
    return best;
}

template <class T>
struct AlignResult {
    BurstFeaturesT<T> features;
    std::vector<ShiftEstimate> shifts; // identity for the reference frame
};

/// Translates every non-reference frame's features by the shift that best
/// correlates with the reference frame. The reference frame passes through
/// bit-identical.
template <class T>
AlignResult<T> align_features(const BurstFeaturesT<T>& feat, int ref_index, int radius = 8) {
    if (ref_index < 0 || ref_index >= static_cast<int>(feat.size()))
        throw param_error("align_features: ref_index out of range");
    AlignResult<T> out;
    out.features.resize(feat.size());
    out.shifts.resize(feat.size());
    for (size_t i = 0; i < feat.size(); ++i) {
        if (static_cast<int>(i) == ref_index) {
            out.features[i] = feat[i];
            out.shifts[i] = {0, 0};
            continue;
        }
        ShiftEstimate s = estimate_shift(feat[ref_index], feat[i], radius);
        out.features[i] = circular_shift(feat[i], s.dx, s.dy);
        out.shifts[i] = s;
    }
    return out;
}

/// Backward of the alignment: the shift estimates are discrete and treated as
/// constants, so gradients just shift back.
template <class T>
BurstFeaturesT<T> align_backward(const BurstFeaturesT<T>& dfeat, const std::vector<ShiftEstimate>& shifts) {
    BurstFeaturesT<T> out(dfeat.size());
    for (size_t i = 0; i < dfeat.size(); ++i)
        out[i] = circular_shift(dfeat[i], -shifts[i].dx, -shifts[i].dy);
    return out;
}

// ---------------------------------------------------------------------------
// Conditioning pyramid. Aligned per-frame features are concatenated (B*f
// channels), merged to 256 channels by a per-level 1x1 convolution, and
// rescaled to each denoiser level by bicubic interpolation. Merge and rescale
// are both linear and the merge is pointwise, so the merge runs at the native
// feature resolution and the rescale follows.
// ---------------------------------------------------------------------------

template <class T>
struct CondMerger {
    int burst = 8, f = 48, out_c = 256;
    std::vector<Conv2d<T>> merge; // one per level

    void init(int burst_, int f_, int levels, int out_c_ = 256) {
        burst = burst_;
        f = f_;
        out_c = out_c_;
        merge.assign(levels, Conv2d<T>());
        for (auto& m : merge) m.init(burst * f, out_c, 1, 1, 0);
    }

    void init_weights(RandomSource& rng) {
        for (auto& m : merge) m.init_weights(rng);
    }

    struct Cache {
        TensorT<T> concat;
        std::vector<LevelSize> levels;
    };

    CondPyramidT<T> forward(const BurstFeaturesT<T>& aligned, const std::vector<LevelSize>& levels,
                            Cache* cache = nullptr) const {
        if (levels.empty()) throw param_error("CondMerger: level list is empty");
        if (static_cast<int>(levels.size()) != static_cast<int>(merge.size()))
            throw param_error("CondMerger: level count does not match configured levels");
        if (static_cast<int>(aligned.size()) != burst)
            throw param_error("CondMerger: burst size mismatch");
        TensorT<T> cat(burst * f, aligned[0].h, aligned[0].w);
        size_t off = 0;
        for (const auto& fr : aligned) {
            if (fr.c != f || fr.h != cat.h || fr.w != cat.w)
                throw param_error("CondMerger: inconsistent frame features");
            std::copy(fr.v.begin(), fr.v.end(), cat.v.begin() + off);
            off += fr.v.size();
        }
        CondPyramidT<T> out;
        for (size_t l = 0; l < levels.size(); ++l) {
            if (levels[l].h < 1 || levels[l].w < 1) throw param_error("CondMerger: degenerate level size");
            TensorT<T> merged = merge[l].forward(cat);
            out.push_back(resize_bicubic(merged, levels[l].h, levels[l].w));
        }
        if (cache) {
            cache->concat = std::move(cat);
            cache->levels = levels;
        }
        return out;
    }

    /// Accumulates merge-conv grads; returns per-frame grads wrt the aligned features.
    BurstFeaturesT<T> backward(const CondPyramidT<T>& dpyramid, const Cache& cache) {
        TensorT<T> dcat(cache.concat.c, cache.concat.h, cache.concat.w);
        for (size_t l = 0; l < dpyramid.size(); ++l) {
            TensorT<T> dmerged = resize_bicubic_backward(dpyramid[l], cache.concat.h, cache.concat.w);
            TensorT<T> d = merge[l].backward(cache.concat, dmerged);
            for (size_t i = 0; i < dcat.size(); ++i) dcat.v[i] += d.v[i];
        }
        BurstFeaturesT<T> out(burst);
        size_t off = 0;
        for (int b = 0; b < burst; ++b) {
            out[b] = TensorT<T>(f, dcat.h, dcat.w);
            std::copy(dcat.v.begin() + off, dcat.v.begin() + off + out[b].size(), out[b].v.begin());
            off += out[b].size();
        }
        return out;
    }

    void register_params(ParamRegistry<T>& r, const std::string& prefix) {
        for (size_t l = 0; l < merge.size(); ++l)
            merge[l].register_params(r, prefix + ".merge" + std::to_string(l));
    }
};

/// Convenience for float pipelines: RawBurst frames as a tensor list.
inline std::vector<Tensor> burst_frame_tensors(const RawBurst& burst) { return burst.frames; }

} // namespace burstlab
