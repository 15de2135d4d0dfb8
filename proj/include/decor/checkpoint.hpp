// checkpoint.hpp
// Binary checkpoint: magic "DECORCKPT", format version, config snapshot,
// auxiliary trainer state, RNG state, then named parameter blobs stored as
// little-endian 32-bit reals in row-major order with a frozen flag.
// Optimizer moments and best-on-validation snapshots ride along as blobs
// under "optim." and "best." name prefixes so resume is trajectory-exact.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "decor/common.hpp"
#include "decor/params.hpp"

namespace decor {

struct CheckpointBlob {
    std::vector<int64_t> dims;
    std::vector<float> data;
    bool frozen = false;
};

struct Checkpoint {
    static constexpr const char* kMagic = "DECORCKPT";
    static constexpr uint32_t kVersion = 1;

    std::string config_json;
    std::string aux_json;
    std::string rng_state;
    std::map<std::string, CheckpointBlob> blobs;

    void put(const std::string& name, std::vector<int64_t> dims, std::vector<float> data,
             bool frozen = false) {
        blobs[name] = CheckpointBlob{std::move(dims), std::move(data), frozen};
    }

    const CheckpointBlob& get(const std::string& name) const {
        auto it = blobs.find(name);
        DECOR_REQUIRE(it != blobs.end(), ConfigError, "checkpoint is missing blob " << name);
        return it->second;
    }
    bool has(const std::string& name) const { return blobs.count(name) > 0; }
};

namespace detail {

inline void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& out, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

inline uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void write_f32_array(std::ostream& out, const std::vector<float>& v) {
    for (float f : v) {
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        write_u32(out, bits);
    }
}

inline void read_f32_array(std::istream& in, std::vector<float>& v) {
    for (float& f : v) {
        uint32_t bits = read_u32(in);
        std::memcpy(&f, &bits, 4);
    }
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
    uint64_t len = read_u64(in);
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    return s;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    DECOR_REQUIRE(out.good(), IoError, "cannot write checkpoint: " << path);
    out.write(Checkpoint::kMagic, 9);
    detail::write_u32(out, Checkpoint::kVersion);
    detail::write_string(out, ckpt.config_json);
    detail::write_string(out, ckpt.aux_json);
    detail::write_string(out, ckpt.rng_state);
    detail::write_u32(out, static_cast<uint32_t>(ckpt.blobs.size()));
    for (const auto& [name, blob] : ckpt.blobs) {
        detail::write_string(out, name);
        out.put(blob.frozen ? '\1' : '\0');
        detail::write_u32(out, static_cast<uint32_t>(blob.dims.size()));
        for (int64_t dim : blob.dims) detail::write_u64(out, static_cast<uint64_t>(dim));
        detail::write_f32_array(out, blob.data);
    }
    DECOR_REQUIRE(out.good(), IoError, "checkpoint write failed: " << path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    DECOR_REQUIRE(in.good(), IoError, "cannot open checkpoint: " << path);
    char magic[9];
    in.read(magic, 9);
    DECOR_REQUIRE(in.good() && std::memcmp(magic, Checkpoint::kMagic, 9) == 0, ConfigError,
                  "not a DECOR checkpoint: " << path);
    uint32_t version = detail::read_u32(in);
    DECOR_REQUIRE(version == Checkpoint::kVersion, ConfigError,
                  "unsupported checkpoint version " << version);
    Checkpoint ckpt;
    ckpt.config_json = detail::read_string(in);
    ckpt.aux_json = detail::read_string(in);
    ckpt.rng_state = detail::read_string(in);
    uint32_t n = detail::read_u32(in);
    for (uint32_t i = 0; i < n; ++i) {
        std::string name = detail::read_string(in);
        CheckpointBlob blob;
        blob.frozen = in.get() != 0;
        uint32_t ndim = detail::read_u32(in);
        int64_t numel = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            blob.dims.push_back(static_cast<int64_t>(detail::read_u64(in)));
            numel *= blob.dims.back();
        }
        blob.data.resize(static_cast<size_t>(numel));
        detail::read_f32_array(in, blob.data);
        DECOR_REQUIRE(in.good(), IoError, "truncated checkpoint: " << path);
        ckpt.blobs.emplace(std::move(name), std::move(blob));
    }
    return ckpt;
}

// ---------------------------------------------------------------------------
// ParamSet adapters.
// ---------------------------------------------------------------------------

template <typename T>
void store_params(Checkpoint& ckpt, ParamSet<T>& params, const std::string& prefix = "") {
    for (auto* p : params) {
        std::vector<float> data(p->values().begin(), p->values().end());
        std::vector<int64_t> dims(p->tensor.shape().begin(), p->tensor.shape().end());
        ckpt.put(prefix + p->name, std::move(dims), std::move(data), p->frozen);
    }
}

template <typename T>
void load_params(const Checkpoint& ckpt, ParamSet<T>& params, const std::string& prefix = "") {
    for (auto* p : params) {
        const CheckpointBlob& blob = ckpt.get(prefix + p->name);
        DECOR_REQUIRE(static_cast<int64_t>(blob.data.size()) == p->numel(), ConfigError,
                      "checkpoint blob " << prefix + p->name << " has " << blob.data.size()
                                         << " values, expected " << p->numel());
        std::vector<T>& dst = p->values();
        for (size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(blob.data[i]);
    }
}

}  // namespace decor
