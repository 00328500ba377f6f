#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "axnn/tensor.hpp"

namespace axnn {

// Model checkpoint container: named tensors in a deterministic (sorted)
// order so identical models serialize to identical bytes.
//
// File layout, all integers little-endian:
//   magic "AXTN" | version u32 | records...
//   record: name_len u32 | name bytes | rank u32 | dims u32[rank] | data f32[numel]
inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32(std::istream& is, const char* who) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error(std::string(who) + ": truncated file");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) | (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(os, v);
}

inline float get_f32(std::istream& is, const char* who) {
    uint32_t v = get_u32(is, who);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    os.write("AXTN", 4);
    detail::put_u32(os, kCheckpointVersion);
    for (const auto& [name, t] : tensors) {
        detail::put_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put_u32(os, static_cast<uint32_t>(t.shape.size()));
        for (int64_t d : t.shape) detail::put_u32(os, static_cast<uint32_t>(d));
        for (float v : t.data) detail::put_f32(os, v);
    }
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

inline std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "AXTN", 4) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    const uint32_t version = detail::get_u32(is, "load_checkpoint");
    if (version != kCheckpointVersion)
        throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version));
    std::map<std::string, Tensor> out;
    while (true) {
        is.peek();
        if (is.eof()) break;
        const uint32_t name_len = detail::get_u32(is, "load_checkpoint");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw std::runtime_error("load_checkpoint: truncated name");
        const uint32_t rank = detail::get_u32(is, "load_checkpoint");
        Shape shape(rank);
        for (uint32_t i = 0; i < rank; ++i) shape[i] = detail::get_u32(is, "load_checkpoint");
        Tensor t = Tensor::zeros(shape);
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = detail::get_f32(is, "load_checkpoint");
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

}  // namespace axnn
