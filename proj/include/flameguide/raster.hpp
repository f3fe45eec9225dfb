#pragma once

// Software rasterization of posed meshes into the three guidance maps:
// depth, normals, and a Lambert-shaded render.
//
// Conventions: model space is y-up with +z pointing toward the camera, so a
// larger z is nearer. Screen space is y-down with pixel (x, y) centered at
// (x + 0.5, y + 0.5). The weak-perspective camera has no rotation, so
// camera-space normals are model-space normals.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "flameguide/alignment.hpp"
#include "flameguide/kinematics.hpp"

namespace flameguide {

struct Camera {
    double scale = 1.0;
    double tx = 0.0;
    double ty = 0.0;
    std::size_t width = 512;
    std::size_t height = 512;

    void validate() const {
        if (!(scale > 0.0) || !std::isfinite(scale)) throw ValidationError("camera scale must be positive");
        if (!std::isfinite(tx) || !std::isfinite(ty)) throw ValidationError("camera translation must be finite");
        if (width < 1 || height < 1) throw ValidationError("camera image size must be at least 1x1");
    }
};

struct ScreenVertex {
    double x, y, z;
};

/// Row-major image with interleaved channels, values in [0, 1].
struct Image {
    std::size_t width = 0, height = 0, channels = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(std::size_t w, std::size_t h, std::size_t c, double fill = 0.0)
        : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

    double& at(std::size_t x, std::size_t y, std::size_t c = 0) { return pixels[(y * width + x) * channels + c]; }
    double at(std::size_t x, std::size_t y, std::size_t c = 0) const { return pixels[(y * width + x) * channels + c]; }

    friend bool operator==(const Image&, const Image&) = default;
};

inline constexpr std::int32_t kBackground = -1;

struct FragmentBuffer {
    std::size_t width = 0, height = 0;
    std::vector<std::int32_t> face;              // kBackground where uncovered
    std::vector<std::array<double, 3>> barycentric;
    std::vector<double> depth;                   // camera-space z of the winning fragment

    FragmentBuffer(std::size_t w, std::size_t h)
        : width(w), height(h), face(w * h, kBackground), barycentric(w * h, {0.0, 0.0, 0.0}),
          depth(w * h, -std::numeric_limits<double>::infinity()) {}

    bool covered(std::size_t i) const { return face[i] != kBackground; }
};

struct GuidanceMaps {
    Image depth;   // 1 channel
    Image normal;  // 3 channels, (n + 1) / 2
    Image render;  // 3 channels

    friend bool operator==(const GuidanceMaps&, const GuidanceMaps&) = default;
};

/// Light and material for the shaded render.
struct Shading {
    static constexpr double albedo = 0.7;
    static constexpr double ambient = 0.3;
    static Vec3 light() { return Vec3(0.2, 0.2, 1.0).normalized(); }
};

inline constexpr double kDepthFloor = 1.0 / 255.0;

struct RenderSettings {
    Camera camera;
    /// Depth-map range as view distances d = -z.
    double near = -1.5;
    double far = 1.5;
};

inline ScreenVertex project_point(const Camera& cam, const Vec3& p) {
    const double w = static_cast<double>(cam.width), h = static_cast<double>(cam.height);
    return {(cam.scale * p.x() + cam.tx + 1.0) * w / 2.0, (1.0 - (cam.scale * p.y() + cam.ty)) * h / 2.0, p.z()};
}

inline std::vector<ScreenVertex> project(const Camera& cam, const Vertices& vertices) {
    cam.validate();
    std::vector<ScreenVertex> out(static_cast<std::size_t>(vertices.rows()));
    for (Eigen::Index v = 0; v < vertices.rows(); ++v)
        out[static_cast<std::size_t>(v)] = project_point(cam, vertices.row(v).transpose());
    return out;
}

inline std::vector<ScreenVertex> project(const Camera& cam, const PosedMesh& mesh) { return project(cam, mesh.vertices); }

namespace detail {

inline double edge(const ScreenVertex& a, const ScreenVertex& b, double px, double py) {
    return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

/// For triangles with positive edge(a, b, c): top edges run horizontally to
/// the right, left edges run upward on screen (y decreasing).
inline bool top_left(const ScreenVertex& a, const ScreenVertex& b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    return (dy == 0.0 && dx > 0.0) || dy < 0.0;
}

inline bool edge_covers(double w, bool is_top_left) { return w > 0.0 || (w == 0.0 && is_top_left); }

}  // namespace detail

/// Rasterizes projected triangles into `frags`, visiting faces in index order.
/// Per pixel the greatest z wins; ties keep the lower face index.
inline void rasterize_into(FragmentBuffer& frags, std::span<const ScreenVertex> screen, std::span<const Face> faces) {
    const auto W = static_cast<double>(frags.width), H = static_cast<double>(frags.height);
    for (std::size_t fi = 0; fi < faces.size(); ++fi) {
        std::array<std::uint32_t, 3> order{0, 1, 2};
        std::array<ScreenVertex, 3> p{screen[faces[fi][0]], screen[faces[fi][1]], screen[faces[fi][2]]};
        double area = detail::edge(p[0], p[1], p[2].x, p[2].y);
        if (!std::isfinite(area) || area == 0.0) continue;
        if (area < 0.0) {
            std::swap(p[1], p[2]);
            std::swap(order[1], order[2]);
            area = -area;
        }
        const double min_x = std::min({p[0].x, p[1].x, p[2].x}), max_x = std::max({p[0].x, p[1].x, p[2].x});
        const double min_y = std::min({p[0].y, p[1].y, p[2].y}), max_y = std::max({p[0].y, p[1].y, p[2].y});
        if (max_x < 0.0 || max_y < 0.0 || min_x > W || min_y > H) continue;
        const auto x0 = static_cast<std::size_t>(std::max(0.0, std::ceil(min_x - 0.5)));
        const auto y0 = static_cast<std::size_t>(std::max(0.0, std::ceil(min_y - 0.5)));
        const double x1 = std::min(W - 1.0, std::floor(max_x - 0.5));
        const double y1 = std::min(H - 1.0, std::floor(max_y - 0.5));
        if (x1 < 0.0 || y1 < 0.0) continue;

        const bool tl0 = detail::top_left(p[1], p[2]);
        const bool tl1 = detail::top_left(p[2], p[0]);
        const bool tl2 = detail::top_left(p[0], p[1]);
        for (std::size_t y = y0; static_cast<double>(y) <= y1; ++y) {
            const double cy = static_cast<double>(y) + 0.5;
            for (std::size_t x = x0; static_cast<double>(x) <= x1; ++x) {
                const double cx = static_cast<double>(x) + 0.5;
                const double w0 = detail::edge(p[1], p[2], cx, cy);
                const double w1 = detail::edge(p[2], p[0], cx, cy);
                const double w2 = detail::edge(p[0], p[1], cx, cy);
                if (!detail::edge_covers(w0, tl0) || !detail::edge_covers(w1, tl1) || !detail::edge_covers(w2, tl2))
                    continue;
                const double b0 = w0 / area, b1 = w1 / area, b2 = w2 / area;
                // Relative to p[0] so that a constant-depth triangle interpolates exactly.
                const double z = p[0].z + b1 * (p[1].z - p[0].z) + b2 * (p[2].z - p[0].z);
                const std::size_t i = y * frags.width + x;
                if (!(z > frags.depth[i])) continue;
                frags.depth[i] = z;
                frags.face[i] = static_cast<std::int32_t>(fi);
                std::array<double, 3> bary{};
                bary[order[0]] = b0;
                bary[order[1]] = b1;
                bary[order[2]] = b2;
                frags.barycentric[i] = bary;
            }
        }
    }
}

inline FragmentBuffer rasterize(const PosedMesh& mesh, const Camera& cam) {
    const auto screen = project(cam, mesh);
    FragmentBuffer frags(cam.width, cam.height);
    rasterize_into(frags, screen, mesh.face_list());
    return frags;
}

/// Covered pixels map view distance d = -z to clamp((far - d) / (far - near),
/// 1/255, 1), so nearer is brighter and never collides with the background 0.
inline Image depth_map(const FragmentBuffer& frags, double near, double far) {
    if (!(near < far)) throw ValidationError("depth_map: near must be less than far");
    Image out(frags.width, frags.height, 1, 0.0);
    for (std::size_t i = 0; i < frags.face.size(); ++i) {
        if (!frags.covered(i)) continue;
        const double distance = -frags.depth[i];
        out.pixels[i] = std::clamp((far - distance) / (far - near), kDepthFloor, 1.0);
    }
    return out;
}

inline Vec3 face_normal(const Vertices& v, const Face& f) {
    const Vec3 a = v.row(f[0]), b = v.row(f[1]), c = v.row(f[2]);
    return (b - a).cross(c - a);
}

/// Area-weighted vertex normals, unit length; zero where every adjacent face
/// is degenerate.
inline std::vector<Vec3> vertex_normals(const Vertices& v, std::span<const Face> faces) {
    std::vector<Vec3> normals(static_cast<std::size_t>(v.rows()), Vec3::Zero());
    for (const auto& f : faces) {
        const Vec3 n = face_normal(v, f);  // |n| = 2 * area
        for (auto idx : f) normals[idx] += n;
    }
    for (auto& n : normals) {
        const double len = n.norm();
        n = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
    }
    return normals;
}

/// Unit normal per covered pixel; zero vector on background.
inline std::vector<Vec3> pixel_normals(const PosedMesh& mesh, const FragmentBuffer& frags) {
    const auto faces = mesh.face_list();
    const auto vn = vertex_normals(mesh.vertices, faces);
    std::vector<Vec3> out(frags.face.size(), Vec3::Zero());
    for (std::size_t i = 0; i < frags.face.size(); ++i) {
        if (!frags.covered(i)) continue;
        const auto& f = faces[static_cast<std::size_t>(frags.face[i])];
        const auto& b = frags.barycentric[i];
        Vec3 n = b[0] * vn[f[0]] + b[1] * vn[f[1]] + b[2] * vn[f[2]];
        double len = n.norm();
        if (!(len > 1e-12)) {
            n = face_normal(mesh.vertices, f);
            len = n.norm();
        }
        out[i] = n / len;
    }
    return out;
}

inline Image encode_normals(const std::vector<Vec3>& normals, std::size_t width, std::size_t height) {
    Image out(width, height, 3, 0.5);
    for (std::size_t i = 0; i < normals.size(); ++i)
        for (int c = 0; c < 3; ++c)
            out.pixels[3 * i + static_cast<std::size_t>(c)] = std::clamp((normals[i][c] + 1.0) / 2.0, 0.0, 1.0);
    return out;
}

inline Image normal_map(const PosedMesh& mesh, const FragmentBuffer& frags) {
    return encode_normals(pixel_normals(mesh, frags), frags.width, frags.height);
}

inline double lambert(const Vec3& unit_normal) {
    return Shading::albedo * (Shading::ambient + (1.0 - Shading::ambient) * std::max(0.0, unit_normal.dot(Shading::light())));
}

inline Image shade_normals(const std::vector<Vec3>& normals, const FragmentBuffer& frags) {
    Image out(frags.width, frags.height, 3, 0.0);
    for (std::size_t i = 0; i < normals.size(); ++i) {
        if (!frags.covered(i)) continue;
        const double v = lambert(normals[i]);
        for (std::size_t c = 0; c < 3; ++c) out.pixels[3 * i + c] = v;
    }
    return out;
}

inline Image shaded_render(const PosedMesh& mesh, const FragmentBuffer& frags) {
    return shade_normals(pixel_normals(mesh, frags), frags);
}

inline GuidanceMaps guidance_maps(const PosedMesh& mesh, const FragmentBuffer& frags, const RenderSettings& s) {
    const auto normals = pixel_normals(mesh, frags);
    return {depth_map(frags, s.near, s.far), encode_normals(normals, frags.width, frags.height),
            shade_normals(normals, frags)};
}

inline GuidanceMaps render_frame(const FlameModel& model, const FlameParams& params, const RenderSettings& s) {
    const PosedMesh mesh = forward(model, params);
    const FragmentBuffer frags = rasterize(mesh, s.camera);
    return guidance_maps(mesh, frags, s);
}

inline std::vector<GuidanceMaps> render_sequence(const FlameModel& model, const AlignedSequence& seq,
                                                 const RenderSettings& s, std::size_t jobs = 1) {
    s.camera.validate();
    std::vector<GuidanceMaps> out(seq.frames.frames.size());
    parallel_for(out.size(), jobs, [&](std::size_t i) { out[i] = render_frame(model, seq.frames.frames[i], s); });
    return out;
}

}  // namespace flameguide
