#pragma once

#include <string>
#include <vector>

#include "burstlab/common.hpp"
#include "burstlab/encoder.hpp"
#include "burstlab/nn.hpp"
#include "burstlab/tensor.hpp"

namespace burstlab {

struct DenoiserConfig {
    int in_channels = 3;
    std::vector<int> widths = {32, 64, 128}; // one per resolution level
    int temb_dim = 0;                        // 0 -> 4 * widths[0]
    int cond_channels = 256;
    int groups = 8;

    int levels() const { return static_cast<int>(widths.size()); }
    int effective_temb_dim() const { return temb_dim > 0 ? temb_dim : 4 * widths.front(); }

    void validate() const {
        if (widths.size() < 2) throw param_error("denoiser: at least 2 levels required");
        for (int w : widths) {
            if (w <= 0) throw param_error("denoiser: widths must be positive");
            if (w % groups != 0) throw param_error("denoiser: widths must be divisible by the norm groups");
        }
        if (in_channels <= 0 || cond_channels <= 0) throw param_error("denoiser: bad channel counts");
        if (effective_temb_dim() % 2 != 0 || widths.front() % 2 != 0)
            throw param_error("denoiser: embedding dims must be even");
    }
};

// ---------------------------------------------------------------------------
// Spatial feature transform: F' = (1 + alpha) * F + beta, with alpha and beta
// produced from the conditioning map by two independent 1x1 convolutions.
// Zero-initialized parameters make the block an exact identity.
// ---------------------------------------------------------------------------

template <class T>
struct SftBlock {
    Conv2d<T> conv_a, conv_b;

    void init(int cond_c, int c) {
        conv_a.init(cond_c, c, 1, 1, 0);
        conv_b.init(cond_c, c, 1, 1, 0);
    }

    struct Cache {
        TensorT<T> f;     // pre-transform features
        TensorT<T> alpha; // conv_a(M)
    };

    TensorT<T> forward(const TensorT<T>& f, const TensorT<T>& m, Cache* cache = nullptr) const {
        if (f.h != m.h || f.w != m.w)
            throw param_error("sft: spatial size mismatch between features and condition map");
        TensorT<T> alpha = conv_a.forward(m);
        TensorT<T> beta = conv_b.forward(m);
        TensorT<T> out(f.c, f.h, f.w);
        for (size_t i = 0; i < f.size(); ++i)
            out.v[i] = (T(1) + alpha.v[i]) * f.v[i] + beta.v[i];
        if (cache) {
            cache->f = f;
            cache->alpha = std::move(alpha);
        }
        return out;
    }

    /// Returns dF; accumulates conv grads and the condition-map grad.
    TensorT<T> backward(const TensorT<T>& dy, const Cache& cache, const TensorT<T>& m, TensorT<T>& dm) {
        TensorT<T> df(dy.c, dy.h, dy.w);
        TensorT<T> dalpha(dy.c, dy.h, dy.w);
        for (size_t i = 0; i < dy.size(); ++i) {
            df.v[i] = dy.v[i] * (T(1) + cache.alpha.v[i]);
            dalpha.v[i] = dy.v[i] * cache.f.v[i];
        }
        TensorT<T> dm_a = conv_a.backward(m, dalpha);
        TensorT<T> dm_b = conv_b.backward(m, dy);
        if (dm.size() == 0) dm = TensorT<T>(m.c, m.h, m.w);
        for (size_t i = 0; i < dm.size(); ++i) dm.v[i] += dm_a.v[i] + dm_b.v[i];
        return df;
    }

    void register_params(ParamRegistry<T>& r, const std::string& prefix) {
        conv_a.register_params(r, prefix + ".alpha");
        conv_b.register_params(r, prefix + ".beta");
    }
};

// ---------------------------------------------------------------------------
// Residual block with timestep injection:
//   h = conv1(silu(gn1(x))) + proj(temb); y = conv2(silu(gn2(h))) + skip(x)
// conv2 is zero-initialized so a fresh block is the identity plus skip.
// ---------------------------------------------------------------------------

template <class T>
struct ResBlock {
    int in_c = 0, out_c = 0;
    GroupNorm<T> gn1, gn2;
    Conv2d<T> conv1, conv2;
    Linear<T> temb_proj;
    Conv2d<T> skip; // 1x1, only used when in_c != out_c

    void init(int in_c_, int out_c_, int temb_dim, int groups) {
        in_c = in_c_;
        out_c = out_c_;
        gn1.init(in_c, groups);
        gn2.init(out_c, groups);
        conv1.init(in_c, out_c, 3);
        conv2.init(out_c, out_c, 3);
        temb_proj.init(temb_dim, out_c);
        if (in_c != out_c) skip.init(in_c, out_c, 1, 1, 0);
    }

    void init_weights(RandomSource& rng) {
        conv1.init_weights(rng);
        conv2.init_weights(rng, 0.0); // residual branch starts silent
        temb_proj.init_weights(rng);
        if (in_c != out_c) skip.init_weights(rng);
    }

    struct Cache {
        TensorT<T> x;
        TensorT<T> a1; // gn1 output
        TensorT<T> h;  // conv1 out + temb, input of gn2
        TensorT<T> a2; // gn2 output
        typename GroupNorm<T>::Cache gn1c, gn2c;
    };

    TensorT<T> forward(const TensorT<T>& x, const std::vector<T>& temb_s, Cache* cache = nullptr) const {
        TensorT<T> a1 = gn1.forward(x, cache ? &cache->gn1c : nullptr);
        TensorT<T> h = conv1.forward(silu(a1));
        std::vector<T> proj = temb_proj.forward(temb_s);
        const size_t plane = static_cast<size_t>(h.h) * h.w;
        for (int ci = 0; ci < h.c; ++ci) {
            T p = proj[ci];
            T* row = &h.v[ci * plane];
            for (size_t i = 0; i < plane; ++i) row[i] += p;
        }
        TensorT<T> a2 = gn2.forward(h, cache ? &cache->gn2c : nullptr);
        TensorT<T> y = conv2.forward(silu(a2));
        if (in_c != out_c) {
            TensorT<T> sk = skip.forward(x);
            for (size_t i = 0; i < y.size(); ++i) y.v[i] += sk.v[i];
        } else {
            for (size_t i = 0; i < y.size(); ++i) y.v[i] += x.v[i];
        }
        if (cache) {
            cache->x = x;
            cache->a1 = std::move(a1);
            cache->h = std::move(h);
            cache->a2 = std::move(a2);
        }
        return y;
    }

    TensorT<T> backward(const TensorT<T>& dy, const Cache& cache, const std::vector<T>& temb_s,
                        std::vector<T>& d_temb_s) {
        TensorT<T> ds2 = conv2.backward(silu(cache.a2), dy);
        TensorT<T> da2 = silu_backward(cache.a2, ds2);
        TensorT<T> dh = gn2.backward(da2, cache.gn2c);

        std::vector<T> dproj(out_c, T(0));
        const size_t plane = static_cast<size_t>(dh.h) * dh.w;
        for (int ci = 0; ci < out_c; ++ci) {
            const T* row = &dh.v[ci * plane];
            T acc = 0;
            for (size_t i = 0; i < plane; ++i) acc += row[i];
            dproj[ci] = acc;
        }
        std::vector<T> dt = temb_proj.backward(temb_s, dproj);
        for (size_t i = 0; i < dt.size(); ++i) d_temb_s[i] += dt[i];

        TensorT<T> ds1 = conv1.backward(silu(cache.a1), dh);
        TensorT<T> da1 = silu_backward(cache.a1, ds1);
        TensorT<T> dx = gn1.backward(da1, cache.gn1c);

        if (in_c != out_c) {
            TensorT<T> dsk = skip.backward(cache.x, dy);
            for (size_t i = 0; i < dx.size(); ++i) dx.v[i] += dsk.v[i];
        } else {
            for (size_t i = 0; i < dx.size(); ++i) dx.v[i] += dy.v[i];
        }
        return dx;
    }

    void register_params(ParamRegistry<T>& r, const std::string& prefix) {
        gn1.register_params(r, prefix + ".gn1");
        gn2.register_params(r, prefix + ".gn2");
        conv1.register_params(r, prefix + ".conv1");
        conv2.register_params(r, prefix + ".conv2");
        temb_proj.register_params(r, prefix + ".temb");
        if (in_c != out_c) skip.register_params(r, prefix + ".skip");
    }
};

// ---------------------------------------------------------------------------
// The U-Net epsilon predictor. Levels run at (H/2^l, W/2^l); each level applies
// two residual blocks with an SFT injection after the first one, on both the
// encoder and decoder paths; the bottleneck gets one more injection with the
// deepest condition map. Downsampling is a stride-2 conv, upsampling is
// nearest-neighbor followed by a 3x3 conv, skips are concatenated.
// ---------------------------------------------------------------------------

template <class T>
struct UNetT {
    DenoiserConfig cfg;

    Conv2d<T> stem;
    Linear<T> temb_fc1, temb_fc2;
    std::vector<ResBlock<T>> enc_rb1, enc_rb2, dec_rb1, dec_rb2;
    std::vector<SftBlock<T>> sft_enc, sft_dec;
    std::vector<Conv2d<T>> down; // levels-1 entries
    std::vector<Conv2d<T>> up;   // up[l] valid for l >= 1
    ResBlock<T> mid_rb1, mid_rb2;
    SftBlock<T> sft_mid;
    GroupNorm<T> gn_out;
    Conv2d<T> head;

    void init(const DenoiserConfig& c) {
        cfg = c;
        cfg.validate();
        const int L = cfg.levels();
        const int td = cfg.effective_temb_dim();
        stem.init(cfg.in_channels, cfg.widths[0], 3);
        temb_fc1.init(cfg.widths[0], td);
        temb_fc2.init(td, td);
        enc_rb1.resize(L);
        enc_rb2.resize(L);
        dec_rb1.resize(L);
        dec_rb2.resize(L);
        sft_enc.resize(L);
        sft_dec.resize(L);
        down.resize(L - 1);
        up.resize(L);
        for (int l = 0; l < L; ++l) {
            const int w = cfg.widths[l];
            enc_rb1[l].init(w, w, td, cfg.groups);
            enc_rb2[l].init(w, w, td, cfg.groups);
            sft_enc[l].init(cfg.cond_channels, w);
            dec_rb1[l].init(2 * w, w, td, cfg.groups);
            dec_rb2[l].init(w, w, td, cfg.groups);
            sft_dec[l].init(cfg.cond_channels, w);
            if (l < L - 1) down[l].init(w, cfg.widths[l + 1], 3, 2, 1);
            if (l >= 1) up[l].init(w, cfg.widths[l - 1], 3);
        }
        mid_rb1.init(cfg.widths[L - 1], cfg.widths[L - 1], td, cfg.groups);
        mid_rb2.init(cfg.widths[L - 1], cfg.widths[L - 1], td, cfg.groups);
        sft_mid.init(cfg.cond_channels, cfg.widths[L - 1]);
        gn_out.init(cfg.widths[0], cfg.groups);
        head.init(cfg.widths[0], cfg.in_channels, 3);
    }

    /// SFT blocks and the output head start at zero: a fresh model predicts zero noise.
    void init_weights(RandomSource& rng) {
        const int L = cfg.levels();
        stem.init_weights(rng);
        temb_fc1.init_weights(rng);
        temb_fc2.init_weights(rng);
        for (int l = 0; l < L; ++l) {
            enc_rb1[l].init_weights(rng);
            enc_rb2[l].init_weights(rng);
            dec_rb1[l].init_weights(rng);
            dec_rb2[l].init_weights(rng);
            if (l < L - 1) down[l].init_weights(rng);
            if (l >= 1) up[l].init_weights(rng);
        }
        mid_rb1.init_weights(rng);
        mid_rb2.init_weights(rng);
        head.init_weights(rng, 0.0);
    }

    std::vector<LevelSize> level_sizes(int h, int w) const {
        std::vector<LevelSize> out;
        for (int l = 0; l < cfg.levels(); ++l) out.push_back({h >> l, w >> l});
        return out;
    }

    void validate_input(const TensorT<T>& x, const CondPyramidT<T>& cond) const {
        if (x.c != cfg.in_channels) throw param_error("denoiser: input channel mismatch");
        const int L = cfg.levels();
        const int div = 1 << (L - 1);
        if (x.h % div != 0 || x.w % div != 0)
            throw param_error("denoiser: spatial size must be divisible by 2^(levels-1)");
        if (static_cast<int>(cond.size()) != L)
            throw param_error("denoiser: conditioning pyramid has " + std::to_string(cond.size()) +
                              " levels, expected " + std::to_string(L));
        for (int l = 0; l < L; ++l) {
            if (cond[l].c != cfg.cond_channels || cond[l].h != (x.h >> l) || cond[l].w != (x.w >> l))
                throw param_error("denoiser: condition map " + std::to_string(l) + " has shape " +
                                  cond[l].shape_str() + ", expected " +
                                  std::to_string(cfg.cond_channels) + "x" + std::to_string(x.h >> l) +
                                  "x" + std::to_string(x.w >> l));
        }
    }

    struct Workspace {
        const CondPyramidT<T>* cond = nullptr; // must stay alive until backward
        TensorT<T> x_in;
        std::vector<T> e0, e1, e2, e3, temb_s;
        std::vector<typename ResBlock<T>::Cache> enc_rb1c, enc_rb2c, dec_rb1c, dec_rb2c;
        std::vector<typename SftBlock<T>::Cache> sft_encc, sft_decc;
        std::vector<TensorT<T>> enc_out; // per level, pre-downsample (the skip tensors)
        std::vector<TensorT<T>> up_in;   // upsampled tensors entering up[l]
        typename ResBlock<T>::Cache mid_rb1c, mid_rb2c;
        typename SftBlock<T>::Cache sft_midc;
        typename GroupNorm<T>::Cache gn_outc;
        TensorT<T> a_out; // gn_out output
    };

    TensorT<T> forward(const TensorT<T>& x, int t, const CondPyramidT<T>& cond,
                       Workspace* ws = nullptr) const {
        validate_input(x, cond);
        const int L = cfg.levels();
        if (ws) {
            ws->cond = &cond;
            ws->x_in = x;
            ws->enc_rb1c.resize(L);
            ws->enc_rb2c.resize(L);
            ws->dec_rb1c.resize(L);
            ws->dec_rb2c.resize(L);
            ws->sft_encc.resize(L);
            ws->sft_decc.resize(L);
            ws->enc_out.resize(L);
            ws->up_in.resize(L);
        }

        std::vector<T> e0 = sinusoidal_embedding<T>(t, cfg.widths[0]);
        std::vector<T> e1 = temb_fc1.forward(e0);
        std::vector<T> e2 = silu_vec(e1);
        std::vector<T> e3 = temb_fc2.forward(e2);
        std::vector<T> temb_s = silu_vec(e3);
        if (ws) {
            ws->e0 = e0;
            ws->e1 = e1;
            ws->e2 = e2;
            ws->e3 = e3;
            ws->temb_s = temb_s;
        }

        TensorT<T> h = stem.forward(x);
        std::vector<TensorT<T>> skips(L);
        for (int l = 0; l < L; ++l) {
            h = enc_rb1[l].forward(h, temb_s, ws ? &ws->enc_rb1c[l] : nullptr);
            h = sft_enc[l].forward(h, cond[l], ws ? &ws->sft_encc[l] : nullptr);
            h = enc_rb2[l].forward(h, temb_s, ws ? &ws->enc_rb2c[l] : nullptr);
            skips[l] = h;
            if (ws) ws->enc_out[l] = h;
            if (l < L - 1) h = down[l].forward(h);
        }

        h = mid_rb1.forward(h, temb_s, ws ? &ws->mid_rb1c : nullptr);
        h = sft_mid.forward(h, cond[L - 1], ws ? &ws->sft_midc : nullptr);
        h = mid_rb2.forward(h, temb_s, ws ? &ws->mid_rb2c : nullptr);

        for (int l = L - 1; l >= 0; --l) {
            h = concat_channels(h, skips[l]);
            h = dec_rb1[l].forward(h, temb_s, ws ? &ws->dec_rb1c[l] : nullptr);
            h = sft_dec[l].forward(h, cond[l], ws ? &ws->sft_decc[l] : nullptr);
            h = dec_rb2[l].forward(h, temb_s, ws ? &ws->dec_rb2c[l] : nullptr);
            if (l > 0) {
                TensorT<T> upsampled = upsample_nearest2x(h);
                if (ws) ws->up_in[l] = upsampled;
                h = up[l].forward(upsampled);
            }
        }

        TensorT<T> a = gn_out.forward(h, ws ? &ws->gn_outc : nullptr);
        if (ws) ws->a_out = a;
        return head.forward(silu(a));
    }

    /// Accumulates parameter grads from a cached forward pass; returns the grads
    /// of the conditioning pyramid (for joint training of the burst encoder).
    CondPyramidT<T> backward(const TensorT<T>& dy, Workspace& ws) {
        const int L = cfg.levels();
        const CondPyramidT<T>& cond = *ws.cond;
        CondPyramidT<T> dcond(L);

        std::vector<T> d_temb_s(ws.temb_s.size(), T(0));

        TensorT<T> dhead_in = head.backward(silu(ws.a_out), dy);
        TensorT<T> da = silu_backward(ws.a_out, dhead_in);
        TensorT<T> d = gn_out.backward(da, ws.gn_outc);

        std::vector<TensorT<T>> d_skip(L);
        for (int l = 0; l < L; ++l) {
            if (l > 0) {
                TensorT<T> dup = up[l].backward(ws.up_in[l], d);
                d = upsample_nearest2x_backward(dup);
            }
            d = dec_rb2[l].backward(d, ws.dec_rb2c[l], ws.temb_s, d_temb_s);
            d = sft_dec[l].backward(d, ws.sft_decc[l], cond[l], dcond[l]);
            d = dec_rb1[l].backward(d, ws.dec_rb1c[l], ws.temb_s, d_temb_s);
            TensorT<T> d_below;
            split_channels(d, d_below, d_skip[l], cfg.widths[l]);
            d = std::move(d_below);
        }

        d = mid_rb2.backward(d, ws.mid_rb2c, ws.temb_s, d_temb_s);
        d = sft_mid.backward(d, ws.sft_midc, cond[L - 1], dcond[L - 1]);
        d = mid_rb1.backward(d, ws.mid_rb1c, ws.temb_s, d_temb_s);

        for (int l = L - 1; l >= 0; --l) {
            if (l < L - 1) d = down[l].backward(ws.enc_out[l], d);
            for (size_t i = 0; i < d.size(); ++i) d.v[i] += d_skip[l].v[i];
            d = enc_rb2[l].backward(d, ws.enc_rb2c[l], ws.temb_s, d_temb_s);
            d = sft_enc[l].backward(d, ws.sft_encc[l], cond[l], dcond[l]);
            d = enc_rb1[l].backward(d, ws.enc_rb1c[l], ws.temb_s, d_temb_s);
        }
        stem.backward(ws.x_in, d);

        std::vector<T> d_e3 = silu_vec_backward(ws.e3, d_temb_s);
        std::vector<T> d_e2 = temb_fc2.backward(ws.e2, d_e3);
        std::vector<T> d_e1 = silu_vec_backward(ws.e1, d_e2);
        temb_fc1.backward(ws.e0, d_e1);

        return dcond;
    }

    void register_params(ParamRegistry<T>& r, const std::string& prefix = "unet") {
        const int L = cfg.levels();
        stem.register_params(r, prefix + ".stem");
        temb_fc1.register_params(r, prefix + ".temb_fc1");
        temb_fc2.register_params(r, prefix + ".temb_fc2");
        for (int l = 0; l < L; ++l) {
            const std::string ls = std::to_string(l);
            enc_rb1[l].register_params(r, prefix + ".enc" + ls + ".rb1");
            enc_rb2[l].register_params(r, prefix + ".enc" + ls + ".rb2");
            sft_enc[l].register_params(r, prefix + ".enc" + ls + ".sft");
            dec_rb1[l].register_params(r, prefix + ".dec" + ls + ".rb1");
            dec_rb2[l].register_params(r, prefix + ".dec" + ls + ".rb2");
            sft_dec[l].register_params(r, prefix + ".dec" + ls + ".sft");
            if (l < L - 1) down[l].register_params(r, prefix + ".down" + ls);
            if (l >= 1) up[l].register_params(r, prefix + ".up" + ls);
        }
        mid_rb1.register_params(r, prefix + ".mid.rb1");
        mid_rb2.register_params(r, prefix + ".mid.rb2");
        sft_mid.register_params(r, prefix + ".mid.sft");
        gn_out.register_params(r, prefix + ".out_norm");
        head.register_params(r, prefix + ".head");
    }
};

using UNet = UNetT<float>;

/// eps_hat = model(x_t, t | cond); pure inference, no caching.
template <class T>
TensorT<T> predict_noise(const UNetT<T>& model, const TensorT<T>& x_t, int t, const CondPyramidT<T>& cond) {
    return model.forward(x_t, t, cond, nullptr);
}

} // namespace burstlab
