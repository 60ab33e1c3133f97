// Flat binary checkpoint of named parameter tensors, little-endian with a
// versioned header, plus a JSON manifest describing names and shapes.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "phasebeat/common.hpp"
#include "phasebeat/tensor.hpp"

namespace phasebeat {

namespace detail {

constexpr char checkpoint_magic[4] = {'P', 'B', 'C', 'K'};
constexpr std::uint32_t checkpoint_version = 1;

inline void write_bytes(std::ofstream& f, const void* p, std::size_t n) {
    f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_le(std::ofstream& f, T v) {
    static_assert(std::endian::native == std::endian::little, "little-endian host required");
    write_bytes(f, &v, sizeof(v));
}

template <typename T>
T read_le(std::ifstream& f) {
    static_assert(std::endian::native == std::endian::little, "little-endian host required");
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    require(f.good(), "checkpoint: truncated file");
    return v;
}

}  // namespace detail

// Manifest lives next to the binary at path + ".json"; `extra` carries
// model-specific metadata (bounds, temperature, channel order).
template <typename S>
void save_checkpoint(const std::string& path, const param_list<S>& params,
                     const nlohmann::json& extra = nlohmann::json::object()) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "checkpoint: cannot open " + path);
    detail::write_bytes(f, detail::checkpoint_magic, 4);
    detail::write_le<std::uint32_t>(f, detail::checkpoint_version);
    detail::write_le<std::uint64_t>(f, params.size());
    nlohmann::json names = nlohmann::json::array();
    for (const auto& [name, t] : params) {
        detail::write_le<std::uint64_t>(f, name.size());
        detail::write_bytes(f, name.data(), name.size());
        const auto& shape = t.shape();
        detail::write_le<std::uint64_t>(f, shape.size());
        for (auto d : shape) detail::write_le<std::uint64_t>(f, static_cast<std::uint64_t>(d));
        for (S v : t.value()) detail::write_le<float>(f, static_cast<float>(v));
        names.push_back({{"name", name}, {"shape", shape}});
    }
    require(f.good(), "checkpoint: write failed for " + path);
    f.close();

    nlohmann::json manifest{{"format", "PBCK"},
                            {"version", detail::checkpoint_version},
                            {"parameters", std::move(names)},
                            {"extra", extra}};
    std::ofstream m(path + ".json");
    require(m.good(), "checkpoint: cannot open " + path + ".json");
    m << manifest.dump(2) << "\n";
}

// Loads values into an existing parameter list; names, order, and shapes must
// match exactly, so the architecture is defined by code and the file carries
// only values.
template <typename S>
void load_checkpoint(const std::string& path, param_list<S>& params) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), "checkpoint: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    require(f.good() && std::memcmp(magic, detail::checkpoint_magic, 4) == 0,
            "checkpoint: bad magic in " + path);
    const auto version = detail::read_le<std::uint32_t>(f);
    require(version == detail::checkpoint_version, "checkpoint: unsupported version");
    const auto count = detail::read_le<std::uint64_t>(f);
    require(count == params.size(), "checkpoint: parameter count mismatch");
    for (auto& [name, t] : params) {
        const auto name_len = detail::read_le<std::uint64_t>(f);
        std::string got(name_len, '\0');
        f.read(got.data(), static_cast<std::streamsize>(name_len));
        require(f.good() && got == name, "checkpoint: expected parameter " + name + ", found " + got);
        const auto ndim = detail::read_le<std::uint64_t>(f);
        require(ndim == t.shape().size(), "checkpoint: rank mismatch for " + name);
        for (auto d : t.shape())
            require(detail::read_le<std::uint64_t>(f) == static_cast<std::uint64_t>(d),
                    "checkpoint: shape mismatch for " + name);
        auto& dst = t.value_mut();
        for (auto& v : dst) v = static_cast<S>(detail::read_le<float>(f));
    }
}

inline nlohmann::json load_manifest(const std::string& checkpoint_path) {
    std::ifstream m(checkpoint_path + ".json");
    require(m.good(), "checkpoint: cannot open manifest " + checkpoint_path + ".json");
    return nlohmann::json::parse(m);
}

}  // namespace phasebeat
