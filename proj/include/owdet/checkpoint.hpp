#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>

#include "owdet/net.hpp"

namespace owdet::nn {

/// Versioned binary checkpoint: architecture description, a caller-supplied
/// JSON metadata blob (registry + training configuration), and the raw
/// parameter tensors in the net's fixed order. Loading restores bit-identical
/// inference for the matching scalar type.
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename V>
void put(std::ostream& os, const V& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& is) {
    V v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

} // namespace detail

template <typename T>
void save_checkpoint(const std::filesystem::path& path, DetectorNet<T>& net,
                     const std::string& metadata_json) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string());
    os.write("OWCK", 4);
    detail::put(os, kCheckpointVersion);
    detail::put<std::uint32_t>(os, sizeof(T)); // 4 = f32, 8 = f64
    const NetShape& s = net.shape;
    detail::put(os, s.image_size);
    detail::put(os, s.in_channels);
    detail::put(os, s.c1);
    detail::put(os, s.c2);
    detail::put(os, s.c3);
    detail::put(os, s.c4);
    detail::put(os, s.fpn);
    detail::put(os, s.roi_pool);
    detail::put(os, s.fc_dim);
    detail::put(os, s.level_split);
    detail::put(os, net.num_known);
    detail::put(os, net.init_seed);
    detail::put<std::uint64_t>(os, metadata_json.size());
    os.write(metadata_json.data(), static_cast<std::streamsize>(metadata_json.size()));
    auto refs = net.param_refs();
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(refs.size()));
    for (auto& [w, g] : refs) {
        detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(w->count()));
        os.write(reinterpret_cast<const char*>(w->data.data()),
                 static_cast<std::streamsize>(w->data.size() * sizeof(T)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

template <typename T>
DetectorNet<T> load_checkpoint(const std::filesystem::path& path, std::string* metadata_json) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "OWCK", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path.string());
    if (detail::get<std::uint32_t>(is) != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version");
    if (detail::get<std::uint32_t>(is) != sizeof(T))
        throw std::runtime_error("checkpoint: scalar width does not match this build");
    NetShape s;
    s.image_size = detail::get<int>(is);
    s.in_channels = detail::get<int>(is);
    s.c1 = detail::get<int>(is);
    s.c2 = detail::get<int>(is);
    s.c3 = detail::get<int>(is);
    s.c4 = detail::get<int>(is);
    s.fpn = detail::get<int>(is);
    s.roi_pool = detail::get<int>(is);
    s.fc_dim = detail::get<int>(is);
    s.level_split = detail::get<double>(is);
    const int known = detail::get<int>(is);
    const std::uint64_t seed = detail::get<std::uint64_t>(is);
    const std::uint64_t meta_len = detail::get<std::uint64_t>(is);
    std::string meta(meta_len, '\0');
    is.read(meta.data(), static_cast<std::streamsize>(meta_len));
    if (metadata_json) *metadata_json = meta;

    DetectorNet<T> net(s, known, seed);
    auto refs = net.param_refs();
    const std::uint32_t tensor_count = detail::get<std::uint32_t>(is);
    if (tensor_count != refs.size()) throw std::runtime_error("checkpoint: tensor count mismatch");
    for (auto& [w, g] : refs) {
        const std::uint64_t n = detail::get<std::uint64_t>(is);
        if (n != static_cast<std::uint64_t>(w->count()))
            throw std::runtime_error("checkpoint: tensor size mismatch");
        is.read(reinterpret_cast<char*>(w->data.data()),
                static_cast<std::streamsize>(w->data.size() * sizeof(T)));
    }
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return net;
}

} // namespace owdet::nn
