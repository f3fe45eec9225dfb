#pragma once

// Channel-major feature maps and the raw float tensor file.
//
// Tensor file layout (little-endian):
//   "FGTN"  u16 version(=1)  u32 rank  u32 dims[rank]  f32 data[prod(dims)]

#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "flameguide/common.hpp"

namespace flameguide {

enum class FeatureTag { depth, normal, render, latent, guidance, other };

inline const char* to_string(FeatureTag t) {
    switch (t) {
        case FeatureTag::depth: return "depth";
        case FeatureTag::normal: return "normal";
        case FeatureTag::render: return "render";
        case FeatureTag::latent: return "latent";
        case FeatureTag::guidance: return "guidance";
        case FeatureTag::other: return "other";
    }
    return "other";
}

struct MapShape {
    std::size_t channels = 0, height = 0, width = 0;

    std::size_t size() const { return channels * height * width; }
    friend bool operator==(const MapShape&, const MapShape&) = default;

    std::string str() const {
        return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
    }
};

/// C x H x W grid stored channel-major.
template <std::floating_point T>
struct FeatureMap {
    MapShape shape;
    std::vector<T> data;
    FeatureTag tag = FeatureTag::other;

    FeatureMap() = default;
    FeatureMap(MapShape s, FeatureTag t = FeatureTag::other, T fill = T(0)) : shape(s), data(s.size(), fill), tag(t) {
        if (s.channels == 0 || s.height == 0 || s.width == 0)
            throw ValidationError("feature map dimensions must be positive, got " + s.str());
    }

    std::size_t channels() const { return shape.channels; }
    std::size_t height() const { return shape.height; }
    std::size_t width() const { return shape.width; }

    T& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * shape.height + y) * shape.width + x]; }
    T at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * shape.height + y) * shape.width + x]; }

    bool all_finite() const {
        return std::all_of(data.begin(), data.end(), [](T v) { return std::isfinite(v); });
    }

    friend bool operator==(const FeatureMap& a, const FeatureMap& b) { return a.shape == b.shape && a.data == b.data; }
};

template <std::floating_point T>
void require_same_shape(const FeatureMap<T>& a, const FeatureMap<T>& b, const char* op) {
    if (a.shape != b.shape)
        throw ValidationError(std::string(op) + ": shape mismatch " + a.shape.str() + " vs " + b.shape.str());
}

/// Element-wise a + b.
template <std::floating_point T>
FeatureMap<T> add(const FeatureMap<T>& a, const FeatureMap<T>& b, const char* op = "add") {
    require_same_shape(a, b, op);
    FeatureMap<T> out = a;
    std::transform(a.data.begin(), a.data.end(), b.data.begin(), out.data.begin(), std::plus<T>());
    return out;
}

// ---------------------------------------------------------------------------
// Tensor files

inline constexpr char kTensorMagic[] = "FGTN";
inline constexpr std::uint16_t kTensorVersion = 1;

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;

    static std::size_t count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline void write_tensor(std::ostream& os, const Tensor& t) {
    if (Tensor::count(t.shape) != t.data.size()) throw ValidationError("tensor data does not match its shape");
    detail::BinaryWriter w(os);
    w.magic(std::string_view(kTensorMagic, 4));
    w.put(kTensorVersion);
    w.put(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.put(static_cast<std::uint32_t>(d));
    for (float v : t.data) w.put(v);
    w.check("tensor");
}

inline Tensor read_tensor(std::istream& is, const std::string& source = "<stream>") {
    detail::BinaryReader r(is, source);
    r.expect_magic(std::string_view(kTensorMagic, 4));
    if (r.get<std::uint16_t>() != kTensorVersion) throw IoError(source + ": unsupported tensor version");
    const auto rank = r.get<std::uint32_t>();
    if (rank > 16) throw IoError(source + ": implausible tensor rank " + std::to_string(rank));
    Tensor t;
    for (std::uint32_t i = 0; i < rank; ++i) t.shape.push_back(r.get<std::uint32_t>());
    const std::size_t n = Tensor::count(t.shape);
    if (n > (std::size_t{1} << 32)) throw IoError(source + ": implausible tensor size");
    t.data.resize(n);
    for (auto& v : t.data) v = r.get<float>();
    r.expect_eof();
    return t;
}

inline void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    write_tensor(os, t);
}

inline Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open tensor file: " + path.string());
    return read_tensor(is, path.string());
}

}  // namespace flameguide
