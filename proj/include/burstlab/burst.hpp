#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <omp.h>

#include "burstlab/common.hpp"
#include "burstlab/image_ops.hpp"
#include "burstlab/random.hpp"
#include "burstlab/tensor.hpp"

namespace burstlab {

// ---------------------------------------------------------------------------
// Degradation model: display RGB -> linear light -> per-frame rigid motion ->
// box downsample -> RGGB mosaic -> signal-dependent Gaussian noise.
// ---------------------------------------------------------------------------

struct DegradationParams {
    int burst_size = 8;
    int hr_size = 256;        // HR ground truth is hr_size x hr_size RGB
    int downscale = 4;        // demosaiced LR grid = hr_size / downscale
    double max_shift_px = 24.0;
    double max_rot_deg = 1.0;
    double noise_shot = 1e-3; // noise variance = shot * signal + read
    double noise_read = 1e-4;
    bool add_noise = true;
    double gamma = 2.2;
    int ref_index = 0;

    int lr_size() const { return hr_size / downscale; }
    int raw_size() const { return lr_size() / 2; }

    void validate() const {
        if (burst_size < 1) throw param_error("degradation: burst_size must be >= 1");
        if (downscale < 1) throw param_error("degradation: downscale must be a positive integer");
        if (hr_size < 2 * downscale || hr_size % (2 * downscale) != 0)
            throw param_error("degradation: hr_size must be a positive multiple of 2*downscale");
        if (max_shift_px < 0 || max_rot_deg < 0) throw param_error("degradation: bounds must be nonnegative");
        if (noise_shot < 0 || noise_read < 0) throw param_error("degradation: noise gains must be nonnegative");
        if (ref_index < 0 || ref_index >= burst_size) throw param_error("degradation: ref_index out of range");
    }
};

struct FrameMeta {
    double shift_x = 0.0;
    double shift_y = 0.0;
    double rot_deg = 0.0;
};

struct BurstMeta {
    std::vector<FrameMeta> frames;
    double noise_shot = 0.0;
    double noise_read = 0.0;
    uint64_t seed = 0;
};

struct RawBurst {
    std::vector<Tensor> frames; // each 4 x raw x raw, RGGB planes in [0,1]
    int ref_index = 0;

    int size() const { return static_cast<int>(frames.size()); }
};

struct BurstSample {
    RawBurst raw;
    Tensor hr; // 3 x hr x hr in [0,1]
    BurstMeta meta;
};

/// Generates one burst from an HR image. Pure function of (hr, params, rng seed);
/// the reference frame is never warped and its meta records the identity transform.
inline BurstSample synthesize_burst(const Tensor& hr, const DegradationParams& p, RandomSource& rng) {
    p.validate();
    if (hr.c != 3 || hr.h != p.hr_size || hr.w != p.hr_size)
        throw param_error("synthesize_burst: HR image must be 3x" + std::to_string(p.hr_size) + "x" +
                          std::to_string(p.hr_size) + ", got " + hr.shape_str());

    BurstSample out;
    out.hr = hr;
    out.meta.noise_shot = p.add_noise ? p.noise_shot : 0.0;
    out.meta.noise_read = p.add_noise ? p.noise_read : 0.0;
    out.meta.seed = rng.base_seed();
    out.raw.ref_index = p.ref_index;

    Tensor linear = linearize_gamma(hr, p.gamma);
    for (int i = 0; i < p.burst_size; ++i) {
        FrameMeta fm;
        if (i != p.ref_index) {
            fm.shift_x = rng.uniform(-p.max_shift_px, p.max_shift_px);
            fm.shift_y = rng.uniform(-p.max_shift_px, p.max_shift_px);
            fm.rot_deg = rng.uniform(-p.max_rot_deg, p.max_rot_deg);
        }
        Tensor warped = (i == p.ref_index) ? linear : warp_rigid(linear, fm.shift_x, fm.shift_y, fm.rot_deg);
        Tensor lr_rgb = box_downsample(warped, p.downscale);
        Tensor raw = mosaic(lr_rgb);
        if (p.add_noise) {
            for (float& v : raw.v) {
                double sigma = std::sqrt(p.noise_shot * std::max(0.0, static_cast<double>(v)) + p.noise_read);
                v = static_cast<float>(std::clamp(v + sigma * rng.normal(), 0.0, 1.0));
            }
        }
        out.raw.frames.push_back(std::move(raw));
        out.meta.frames.push_back(fm);
    }
    return out;
}

/// Burst generation over a pool of HR images with per-sample derived seeds
/// (seed_i = mix(base_seed, i)), so the result is independent of thread count.
inline std::vector<BurstSample> synthesize_dataset(const std::vector<Tensor>& hr_pool,
                                                   const DegradationParams& p, uint64_t base_seed,
                                                   int count, int threads = 1) {
    p.validate();
    if (count < 0) throw param_error("synthesize_dataset: count must be nonnegative");
    if (count > 0 && hr_pool.empty()) throw param_error("synthesize_dataset: empty HR image pool");
    std::vector<BurstSample> samples(count);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, threads))
    for (int i = 0; i < count; ++i) {
        RandomSource rng(RandomSource::mix(base_seed, static_cast<uint64_t>(i)));
        samples[i] = synthesize_burst(hr_pool[i % hr_pool.size()], p, rng);
    }
    return samples;
}

// ---------------------------------------------------------------------------
// "BSRD" dataset container: little-endian, pinned layout, byte-exact round trip.
//   magic "BSRD" | version u8 | count u32 | samples...
// Each sample: burst B, raw h/w, hr h/w, ref index (u32 each), seed u64,
// noise shot/read f64, B frame metas (3 f64), hr f32 block, B raw f32 blocks.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_bytes(std::ostream& os, uint64_t v, int nbytes) {
    char b[8];
    for (int i = 0; i < nbytes; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, nbytes);
}

inline uint64_t get_bytes(std::istream& is, int nbytes) {
    unsigned char b[8] = {0};
    is.read(reinterpret_cast<char*>(b), nbytes);
    if (is.gcount() != nbytes) throw io_error(io_error::code::truncated, "dataset: truncated payload");
    uint64_t v = 0;
    for (int i = 0; i < nbytes; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void put_u32(std::ostream& os, uint32_t v) { put_bytes(os, v, 4); }
inline void put_u64(std::ostream& os, uint64_t v) { put_bytes(os, v, 8); }
inline void put_f32(std::ostream& os, float v) { put_bytes(os, std::bit_cast<uint32_t>(v), 4); }
inline void put_f64(std::ostream& os, double v) { put_bytes(os, std::bit_cast<uint64_t>(v), 8); }

inline uint32_t get_u32(std::istream& is) { return static_cast<uint32_t>(get_bytes(is, 4)); }
inline uint64_t get_u64(std::istream& is) { return get_bytes(is, 8); }
inline float get_f32(std::istream& is) { return std::bit_cast<float>(static_cast<uint32_t>(get_bytes(is, 4))); }
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_bytes(is, 8)); }

inline void put_tensor_f32(std::ostream& os, const Tensor& t) {
    for (float v : t.v) put_f32(os, v);
}

inline void get_tensor_f32(std::istream& is, Tensor& t) {
    for (float& v : t.v) v = get_f32(is);
}

constexpr char kDatasetMagic[4] = {'B', 'S', 'R', 'D'};
constexpr uint8_t kDatasetVersion = 1;
constexpr uint32_t kMaxDim = 1u << 20;

} // namespace detail

inline void write_dataset(const std::vector<BurstSample>& samples, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error(io_error::code::open_failed, "cannot open for writing: " + path);
    os.write(detail::kDatasetMagic, 4);
    os.put(static_cast<char>(detail::kDatasetVersion));
    detail::put_u32(os, static_cast<uint32_t>(samples.size()));
    for (const auto& s : samples) {
        const uint32_t B = static_cast<uint32_t>(s.raw.frames.size());
        if (B == 0 || s.meta.frames.size() != B)
            throw param_error("write_dataset: malformed sample (frame/meta count)");
        detail::put_u32(os, B);
        detail::put_u32(os, static_cast<uint32_t>(s.raw.frames[0].h));
        detail::put_u32(os, static_cast<uint32_t>(s.raw.frames[0].w));
        detail::put_u32(os, static_cast<uint32_t>(s.hr.h));
        detail::put_u32(os, static_cast<uint32_t>(s.hr.w));
        detail::put_u32(os, static_cast<uint32_t>(s.raw.ref_index));
        detail::put_u64(os, s.meta.seed);
        detail::put_f64(os, s.meta.noise_shot);
        detail::put_f64(os, s.meta.noise_read);
        for (const auto& fm : s.meta.frames) {
            detail::put_f64(os, fm.shift_x);
            detail::put_f64(os, fm.shift_y);
            detail::put_f64(os, fm.rot_deg);
        }
        detail::put_tensor_f32(os, s.hr);
        for (const auto& fr : s.raw.frames) detail::put_tensor_f32(os, fr);
    }
    if (!os) throw io_error(io_error::code::write_failed, "write failed: " + path);
}

inline std::vector<BurstSample> read_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error(io_error::code::open_failed, "cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, detail::kDatasetMagic, 4) != 0)
        throw io_error(io_error::code::bad_magic, "dataset: bad magic in " + path);
    int version = is.get();
    if (version == EOF) throw io_error(io_error::code::truncated, "dataset: truncated header");
    if (version != detail::kDatasetVersion)
        throw io_error(io_error::code::bad_version,
                       "dataset: unsupported version " + std::to_string(version));
    uint32_t count = detail::get_u32(is);
    std::vector<BurstSample> samples;
    samples.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        BurstSample s;
        uint32_t B = detail::get_u32(is);
        uint32_t raw_h = detail::get_u32(is);
        uint32_t raw_w = detail::get_u32(is);
        uint32_t hr_h = detail::get_u32(is);
        uint32_t hr_w = detail::get_u32(is);
        uint32_t ref = detail::get_u32(is);
        if (B == 0 || B > detail::kMaxDim || raw_h > detail::kMaxDim || raw_w > detail::kMaxDim ||
            hr_h > detail::kMaxDim || hr_w > detail::kMaxDim || ref >= B)
            throw io_error(io_error::code::truncated, "dataset: implausible sample header");
        s.raw.ref_index = static_cast<int>(ref);
        s.meta.seed = detail::get_u64(is);
        s.meta.noise_shot = detail::get_f64(is);
        s.meta.noise_read = detail::get_f64(is);
        s.meta.frames.resize(B);
        for (auto& fm : s.meta.frames) {
            fm.shift_x = detail::get_f64(is);
            fm.shift_y = detail::get_f64(is);
            fm.rot_deg = detail::get_f64(is);
        }
        s.hr = Tensor(3, static_cast<int>(hr_h), static_cast<int>(hr_w));
        detail::get_tensor_f32(is, s.hr);
        s.raw.frames.assign(B, Tensor());
        for (auto& fr : s.raw.frames) {
            fr = Tensor(4, static_cast<int>(raw_h), static_cast<int>(raw_w));
            detail::get_tensor_f32(is, fr);
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

} // namespace burstlab
