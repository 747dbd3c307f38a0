#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "burstlab/burst.hpp"
#include "burstlab/common.hpp"
#include "burstlab/nn.hpp"

namespace burstlab {

// ---------------------------------------------------------------------------
// "BSRC" checkpoint container.
//   magic "BSRC" | version u8 | u32 json_len | json header | u32 n_blocks |
//   blocks: u16 name_len, name, u32 ndim, u32 dims..., f32 payload (LE)
// The json header carries the config snapshot, iteration counter, RNG state
// and checkpoint kind. Parameter blocks are exact f32 dumps, so reloading
// restores bit-identical forward results. Optimizer moments are stored as
// extra blocks named <param>#m / <param>#v.
// ---------------------------------------------------------------------------

namespace detail {
constexpr char kCheckpointMagic[4] = {'B', 'S', 'R', 'C'};
constexpr uint8_t kCheckpointVersion = 1;
} // namespace detail

struct CheckpointHeader {
    std::string kind;       // "diffusion" or "baseline"
    nlohmann::json config;  // RunConfig snapshot
    int64_t iteration = 0;
    std::string rng_state;  // empty when not resuming mid-run
    int64_t adam_step = 0;
};

namespace detail {

inline void put_block(std::ostream& os, const std::string& name, const std::vector<int>& dims,
                      const std::vector<float>& data) {
    if (name.size() > 0xffff) throw param_error("checkpoint: block name too long");
    put_bytes(os, name.size(), 2);
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<uint32_t>(dims.size()));
    size_t n = 1;
    for (int d : dims) {
        put_u32(os, static_cast<uint32_t>(d));
        n *= static_cast<size_t>(d);
    }
    if (n != data.size()) throw param_error("checkpoint: block dims do not match payload");
    for (float v : data) put_f32(os, v);
}

struct RawBlock {
    std::string name;
    std::vector<int> dims;
    std::vector<float> data;
};

inline RawBlock get_block(std::istream& is) {
    RawBlock b;
    size_t name_len = get_bytes(is, 2);
    b.name.resize(name_len);
    is.read(b.name.data(), static_cast<std::streamsize>(name_len));
    if (is.gcount() != static_cast<std::streamsize>(name_len))
        throw io_error(io_error::code::truncated, "checkpoint: truncated block name");
    uint32_t ndim = get_u32(is);
    if (ndim > 8) throw io_error(io_error::code::truncated, "checkpoint: implausible block rank");
    size_t n = 1;
    for (uint32_t i = 0; i < ndim; ++i) {
        uint32_t d = get_u32(is);
        if (d > (1u << 28)) throw io_error(io_error::code::truncated, "checkpoint: implausible dim");
        b.dims.push_back(static_cast<int>(d));
        n *= d;
    }
    b.data.resize(n);
    for (float& v : b.data) v = get_f32(is);
    return b;
}

} // namespace detail

template <class T>
void save_checkpoint(const std::string& path, const CheckpointHeader& header, ParamRegistry<T>& reg,
                     const AdamW<T>* adam = nullptr) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error(io_error::code::open_failed, "cannot open for writing: " + path);
    os.write(detail::kCheckpointMagic, 4);
    os.put(static_cast<char>(detail::kCheckpointVersion));

    nlohmann::json j;
    j["kind"] = header.kind;
    j["config"] = header.config;
    j["iteration"] = header.iteration;
    j["rng_state"] = header.rng_state;
    j["adam_step"] = adam ? adam->step_count : header.adam_step;
    std::string js = j.dump();
    detail::put_u32(os, static_cast<uint32_t>(js.size()));
    os.write(js.data(), static_cast<std::streamsize>(js.size()));

    uint32_t n_blocks = static_cast<uint32_t>(reg.entries.size() * (adam ? 3 : 1));
    detail::put_u32(os, n_blocks);
    auto to_f32 = [](const std::vector<T>& src) {
        std::vector<float> out(src.size());
        for (size_t i = 0; i < src.size(); ++i) out[i] = static_cast<float>(src[i]);
        return out;
    };
    for (size_t i = 0; i < reg.entries.size(); ++i) {
        const auto& e = reg.entries[i];
        detail::put_block(os, e.name, e.p->dims, to_f32(e.p->w));
        if (adam) {
            std::vector<int> dims = {static_cast<int>(e.p->size())};
            detail::put_block(os, e.name + "#m", dims, to_f32(adam->m[i]));
            detail::put_block(os, e.name + "#v", dims, to_f32(adam->v[i]));
        }
    }
    if (!os) throw io_error(io_error::code::write_failed, "checkpoint write failed: " + path);
}

/// Loads parameters (and optimizer moments when present and requested) into an
/// already-built registry. Names and shapes must match the model exactly.
template <class T>
CheckpointHeader load_checkpoint(const std::string& path, ParamRegistry<T>& reg, AdamW<T>* adam = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error(io_error::code::open_failed, "cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, detail::kCheckpointMagic, 4) != 0)
        throw io_error(io_error::code::bad_magic, "checkpoint: bad magic in " + path);
    int version = is.get();
    if (version != detail::kCheckpointVersion)
        throw io_error(io_error::code::bad_version, "checkpoint: unsupported version");
    uint32_t json_len = detail::get_u32(is);
    if (json_len > (1u << 24)) throw io_error(io_error::code::truncated, "checkpoint: implausible header");
    std::string js(json_len, '\0');
    is.read(js.data(), json_len);
    if (is.gcount() != static_cast<std::streamsize>(json_len))
        throw io_error(io_error::code::truncated, "checkpoint: truncated header");

    CheckpointHeader header;
    nlohmann::json j = nlohmann::json::parse(js);
    header.kind = j.value("kind", "");
    header.config = j.value("config", nlohmann::json::object());
    header.iteration = j.value("iteration", int64_t(0));
    header.rng_state = j.value("rng_state", "");
    header.adam_step = j.value("adam_step", int64_t(0));

    uint32_t n_blocks = detail::get_u32(is);
    size_t loaded = 0, loaded_adam = 0;
    for (uint32_t bi = 0; bi < n_blocks; ++bi) {
        detail::RawBlock b = detail::get_block(is);
        bool is_m = b.name.size() > 2 && b.name.substr(b.name.size() - 2) == "#m";
        bool is_v = b.name.size() > 2 && b.name.substr(b.name.size() - 2) == "#v";
        if (is_m || is_v) {
            if (!adam) continue;
            std::string base = b.name.substr(0, b.name.size() - 2);
            for (size_t i = 0; i < reg.entries.size(); ++i) {
                if (reg.entries[i].name != base) continue;
                auto& dst = is_m ? adam->m[i] : adam->v[i];
                if (dst.size() != b.data.size())
                    throw param_error("checkpoint: optimizer block size mismatch for " + b.name);
                for (size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<T>(b.data[k]);
                ++loaded_adam;
                break;
            }
            continue;
        }
        Param<T>* p = reg.find(b.name);
        if (!p) throw param_error("checkpoint: unknown parameter block '" + b.name + "'");
        if (p->dims != b.dims)
            throw param_error("checkpoint: shape mismatch for '" + b.name + "'");
        for (size_t k = 0; k < b.data.size(); ++k) p->w[k] = static_cast<T>(b.data[k]);
        ++loaded;
    }
    if (loaded != reg.entries.size())
        throw param_error("checkpoint: " + std::to_string(reg.entries.size() - loaded) +
                          " parameter blocks missing from " + path);
    if (adam) {
        if (loaded_adam != 2 * reg.entries.size())
            throw param_error("checkpoint: optimizer state incomplete in " + path);
        adam->step_count = header.adam_step;
    }
    return header;
}

} // namespace burstlab
