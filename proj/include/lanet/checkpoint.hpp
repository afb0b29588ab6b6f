#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "lanet/optim.hpp"

namespace lanet {

inline constexpr char kCheckpointMagic[8] = {'L', 'A', 'N', 'E', 'T', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class V>
void write_le(std::ostream& out, V v) {
    // little-endian scalar payloads; byte-swapping for big-endian hosts is
    // not implemented (x86/arm64 targets only)
    static_assert(std::endian::native == std::endian::little);
    out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V read_le(std::istream& in) {
    V v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

}  // namespace detail

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::string config_text;  // fully-resolved run config, verbatim
    ParamStore<float> params;
};

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::write_le(out, kCheckpointVersion);
    detail::write_le(out, static_cast<std::uint64_t>(ckpt.config_text.size()));
    out.write(ckpt.config_text.data(), static_cast<std::streamsize>(ckpt.config_text.size()));
    detail::write_le(out, static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& [name, t] : ckpt.params) {
        detail::write_le(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_le(out, static_cast<std::uint8_t>(0));  // dtype tag: 0 = f32
        detail::write_le(out, static_cast<std::uint32_t>(t.shape.n));
        detail::write_le(out, static_cast<std::uint32_t>(t.shape.c));
        detail::write_le(out, static_cast<std::uint32_t>(t.shape.h));
        detail::write_le(out, static_cast<std::uint32_t>(t.shape.w));
        out.write(reinterpret_cast<const char*>(t.data->data()),
                  static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw std::runtime_error("not a checkpoint file: " + path.string());
    Checkpoint ckpt;
    ckpt.version = detail::read_le<std::uint32_t>(in);
    if (ckpt.version != kCheckpointVersion)
        throw std::runtime_error("checkpoint version " + std::to_string(ckpt.version) +
                                 " unsupported (expected " + std::to_string(kCheckpointVersion) +
                                 "): " + path.string());
    const auto cfg_len = detail::read_le<std::uint64_t>(in);
    ckpt.config_text.resize(cfg_len);
    in.read(ckpt.config_text.data(), static_cast<std::streamsize>(cfg_len));
    const auto n_records = detail::read_le<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n_records; ++i) {
        const auto name_len = detail::read_le<std::uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto dtype = detail::read_le<std::uint8_t>(in);
        if (dtype != 0)
            throw std::runtime_error("checkpoint: unsupported dtype tag " + std::to_string(dtype));
        Shape s{static_cast<int>(detail::read_le<std::uint32_t>(in)),
                static_cast<int>(detail::read_le<std::uint32_t>(in)),
                static_cast<int>(detail::read_le<std::uint32_t>(in)),
                static_cast<int>(detail::read_le<std::uint32_t>(in))};
        Tensor<float> t(s);
        in.read(reinterpret_cast<char*>(t.data->data()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
        if (!in) throw std::runtime_error("checkpoint: truncated tensor payload in " + name);
        ckpt.params.emplace(std::move(name), std::move(t));
    }
    return ckpt;
}

}  // namespace lanet
