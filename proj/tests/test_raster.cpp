#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "flameguide/alignment.hpp"
#include "flameguide/raster.hpp"
#include "oracles.hpp"

using namespace flameguide;

namespace {

PosedMesh mesh_of(const Vertices& v, const std::vector<Face>& faces) {
    PosedMesh m;
    m.vertices = v;
    m.faces = &faces;
    return m;
}

Vec3 decode(const Image& normal, std::size_t x, std::size_t y) {
    return Vec3(2 * normal.at(x, y, 0) - 1, 2 * normal.at(x, y, 1) - 1, 2 * normal.at(x, y, 2) - 1);
}

const FlameModel& seed7() {
    static const FlameModel m = generate_test_model(7, 100, 4, {10, 10});
    return m;
}

}  // namespace

TEST(Project, OpticalAxisHitsCenter) {
    const Camera cam{1.0, 0.0, 0.0, 512, 512};
    const auto s = project_point(cam, Vec3(0, 0, 5));
    EXPECT_EQ(s.x, 256.0);
    EXPECT_EQ(s.y, 256.0);
    EXPECT_EQ(s.z, 5.0);
}

TEST(Project, ScaleTwo) {
    const Camera cam{2.0, 0.0, 0.0, 512, 512};
    EXPECT_EQ(project_point(cam, Vec3(0.25, 0, 1)).x, 3.0 * 512 / 4);
}

TEST(Project, MatchesFormula) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int i = 0; i < 200; ++i) {
        const Camera cam{u(rng) + 3, u(rng), u(rng), 64 + static_cast<std::size_t>(i), 32 + static_cast<std::size_t>(i)};
        const Vec3 p(u(rng), u(rng), u(rng));
        const auto s = project_point(cam, p);
        const double W = static_cast<double>(cam.width), H = static_cast<double>(cam.height);
        EXPECT_EQ(s.x, (cam.scale * p.x() + cam.tx + 1.0) * W / 2.0);
        EXPECT_EQ(s.y, (1.0 - (cam.scale * p.y() + cam.ty)) * H / 2.0);
        EXPECT_EQ(s.z, p.z());
    }
}

TEST(Project, InvalidCameraRejected) {
    Vertices v = Vertices::Zero(1, 3);
    EXPECT_THROW(project(Camera{0.0, 0, 0, 8, 8}, v), ValidationError);
    EXPECT_THROW(project(Camera{1.0, 0, 0, 0, 8}, v), ValidationError);
}

TEST(Rasterize, FullScreenTriangle) {
    Vertices v(3, 3);
    v << -3, -3, 0, 3, -3, 0, 0, 3, 0;
    const std::vector<Face> faces{{0, 1, 2}};
    const auto frags = rasterize(mesh_of(v, faces), Camera{1.0, 0, 0, 16, 16});
    const std::size_t c = 8 * 16 + 8;
    EXPECT_EQ(frags.face[c], 0);
    const auto& b = frags.barycentric[c];
    EXPECT_NEAR(b[0] + b[1] + b[2], 1.0, 1e-12);
    for (std::size_t i = 0; i < frags.face.size(); ++i) EXPECT_TRUE(frags.covered(i));
}

TEST(Rasterize, NearerTriangleWinsRegardlessOfOrder) {
    Vertices v(6, 3);
    v << -0.8, -0.8, 1, 0.8, -0.8, 1, 0, 0.8, 1,  // back
        -0.8, -0.8, 2, 0.8, -0.8, 2, 0, 0.8, 2;   // front
    const std::vector<Face> back_first{{0, 1, 2}, {3, 4, 5}};
    const std::vector<Face> front_first{{3, 4, 5}, {0, 1, 2}};
    const Camera cam{1.0, 0, 0, 32, 32};
    const auto a = rasterize(mesh_of(v, back_first), cam);
    const auto b = rasterize(mesh_of(v, front_first), cam);
    std::size_t covered = 0;
    for (std::size_t i = 0; i < a.face.size(); ++i) {
        if (!a.covered(i)) continue;
        ++covered;
        EXPECT_EQ(a.face[i], 1);
        EXPECT_EQ(b.face[i], 0);
        EXPECT_EQ(a.depth[i], 2.0);
    }
    EXPECT_GT(covered, 100u);
}

TEST(Rasterize, EqualDepthKeepsLowestFaceIndex) {
    Vertices v(3, 3);
    v << -0.8, -0.8, 1, 0.8, -0.8, 1, 0, 0.8, 1;
    const std::vector<Face> faces{{0, 1, 2}, {0, 2, 1}, {1, 2, 0}};
    const auto frags = rasterize(mesh_of(v, faces), Camera{1.0, 0, 0, 32, 32});
    for (std::size_t i = 0; i < frags.face.size(); ++i)
        if (frags.covered(i)) EXPECT_EQ(frags.face[i], 0);
}

TEST(Rasterize, SharedEdgeThroughPixelCentersCoveredOnce) {
    // Square with corners on pixel centers, split along the diagonal; many
    // pixel centers lie exactly on the shared edge and on the outer edges.
    std::vector<ScreenVertex> s{{2.5, 2.5, 0}, {12.5, 2.5, 0}, {12.5, 12.5, 0}, {2.5, 12.5, 0}};
    const std::vector<Face> faces{{0, 1, 2}, {0, 2, 3}};
    std::vector<int> count(16 * 16, 0);
    for (const auto& f : faces) {
        FragmentBuffer frags(16, 16);
        const std::vector<Face> one{f};
        rasterize_into(frags, s, one);
        for (std::size_t i = 0; i < count.size(); ++i) count[i] += frags.covered(i);
    }
    for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) {
            const bool inside = x >= 2 && x <= 12 && y >= 2 && y <= 12;
            EXPECT_LE(count[y * 16 + x], 1) << x << "," << y;
            if (inside && x > 2 && x < 12 && y > 2 && y < 12) EXPECT_EQ(count[y * 16 + x], 1) << x << "," << y;
            if (!inside) EXPECT_EQ(count[y * 16 + x], 0);
        }
}

TEST(Rasterize, MatchesBruteForceOracleOnRandomTriangles) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> coord(-4.0, 36.0), depth(-2.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::array<ScreenVertex, 3> t;
        for (auto& p : t) p = {coord(rng), coord(rng), depth(rng)};
        const std::vector<ScreenVertex> screen(t.begin(), t.end());
        const std::vector<Face> faces{{0, 1, 2}};
        FragmentBuffer frags(32, 32);
        rasterize_into(frags, screen, faces);
        for (std::size_t y = 0; y < 32; ++y)
            for (std::size_t x = 0; x < 32; ++x) {
                const auto o = oracle::sample_triangle(t, x + 0.5, y + 0.5);
                const std::size_t i = y * 32 + x;
                ASSERT_EQ(frags.covered(i), o.covered) << "trial " << trial << " pixel " << x << "," << y;
                if (o.covered) EXPECT_NEAR(frags.depth[i], o.depth, 1e-5);
            }
    }
}

TEST(Rasterize, DegenerateTriangleCoversNothing) {
    const std::vector<ScreenVertex> s{{1, 1, 0}, {5, 5, 0}, {9, 9, 0}};
    const std::vector<Face> faces{{0, 1, 2}};
    FragmentBuffer frags(16, 16);
    rasterize_into(frags, s, faces);
    for (std::size_t i = 0; i < frags.face.size(); ++i) EXPECT_FALSE(frags.covered(i));
}

TEST(DepthMap, MidpointIsHalf) {
    FragmentBuffer frags(2, 1);
    frags.face[0] = 0;
    frags.depth[0] = -2.0;  // view distance 2, midway between 1 and 3
    const Image d = depth_map(frags, 1.0, 3.0);
    EXPECT_DOUBLE_EQ(d.pixels[0], 0.5);
    EXPECT_EQ(d.pixels[1], 0.0);

    frags.depth[0] = 0.0;
    EXPECT_DOUBLE_EQ(depth_map(frags, -1.5, 1.5).pixels[0], 0.5);
}

TEST(DepthMap, MatchesFormulaAndClampsToFloor) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> z(-4, 4);
    FragmentBuffer frags(64, 1);
    for (std::size_t i = 0; i < 64; ++i) {
        frags.face[i] = i % 5 == 0 ? kBackground : 0;
        frags.depth[i] = z(rng);
    }
    const Image d = depth_map(frags, -1.5, 1.5);
    for (std::size_t i = 0; i < 64; ++i) {
        if (i % 5 == 0) {
            EXPECT_EQ(d.pixels[i], 0.0);
            continue;
        }
        const double raw = (1.5 + frags.depth[i]) / 3.0;
        EXPECT_NEAR(d.pixels[i], std::min(1.0, std::max(1.0 / 255.0, raw)), 1e-12);
        EXPECT_GE(d.pixels[i], 1.0 / 255.0);
    }
}

TEST(DepthMap, NearerIsBrighter) {
    FragmentBuffer frags(2, 1);
    frags.face = {0, 0};
    frags.depth = {0.5, -0.5};  // larger z is nearer the camera
    const Image d = depth_map(frags, -1.5, 1.5);
    EXPECT_GT(d.pixels[0], d.pixels[1]);
}

TEST(DepthMap, InvalidRangeRejected) {
    FragmentBuffer frags(1, 1);
    EXPECT_THROW(depth_map(frags, 1.0, 1.0), ValidationError);
}

TEST(NormalMap, CameraFacingTriangle) {
    Vertices v(3, 3);
    v << -0.8, -0.8, 0, 0.8, -0.8, 0, 0, 0.8, 0;
    const std::vector<Face> faces{{0, 1, 2}};
    const auto mesh = mesh_of(v, faces);
    const auto frags = rasterize(mesh, Camera{1.0, 0, 0, 32, 32});
    const Image n = normal_map(mesh, frags);
    std::size_t covered = 0;
    for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) {
            const bool cov = frags.covered(y * 32 + x);
            covered += cov;
            EXPECT_DOUBLE_EQ(n.at(x, y, 0), 0.5);
            EXPECT_DOUBLE_EQ(n.at(x, y, 1), 0.5);
            EXPECT_DOUBLE_EQ(n.at(x, y, 2), cov ? 1.0 : 0.5);
        }
    EXPECT_GT(covered, 100u);
}

TEST(NormalMap, IcosphereWithinThreeDegrees) {
    const auto [verts, faces] = oracle::icosphere(3);
    const auto mesh = mesh_of(verts, faces);
    const Camera cam{0.8, 0.05, -0.03, 96, 96};
    const auto frags = rasterize(mesh, cam);
    const Image n = normal_map(mesh, frags);
    std::size_t covered = 0;
    double worst = 0.0;
    for (std::size_t y = 0; y < cam.height; ++y)
        for (std::size_t x = 0; x < cam.width; ++x) {
            const std::size_t i = y * cam.width + x;
            if (!frags.covered(i)) continue;
            ++covered;
            const double px = ((x + 0.5) * 2.0 / cam.width - 1.0 - cam.tx) / cam.scale;
            const double py = (1.0 - (y + 0.5) * 2.0 / cam.height - cam.ty) / cam.scale;
            const Vec3 analytic = Vec3(px, py, frags.depth[i]).normalized();
            const Vec3 got = decode(n, x, y);
            EXPECT_NEAR(got.norm(), 1.0, 1e-9);
            const double angle = std::acos(std::clamp(got.normalized().dot(analytic), -1.0, 1.0)) * 180.0 / std::numbers::pi;
            worst = std::max(worst, angle);
        }
    EXPECT_GT(covered, 2000u);
    EXPECT_LT(worst, 3.0);
}

TEST(NormalMap, CoveredIffDepthNonzero) {
    const auto& m = seed7();
    const auto seq = align(generate_identity(m, 1), generate_driving_sequence(m, 2, 4));
    RenderSettings s;
    s.camera = Camera{0.9, 0, 0, 64, 64};
    for (const auto& maps : render_sequence(m, seq, s)) {
        for (std::size_t y = 0; y < 64; ++y)
            for (std::size_t x = 0; x < 64; ++x) {
                const bool has_depth = maps.depth.at(x, y) != 0.0;
                const Vec3 nrm = decode(maps.normal, x, y);
                const bool sentinel = nrm == Vec3::Zero();
                EXPECT_EQ(has_depth, !sentinel);
                if (has_depth) EXPECT_NEAR(nrm.norm(), 1.0, 1e-3);
            }
    }
}

TEST(Shading, FullLightAndAmbientFloor) {
    EXPECT_NEAR(lambert(Shading::light()), 0.7, 1e-15);
    EXPECT_NEAR(lambert(-Shading::light()), 0.21, 1e-15);
    EXPECT_NEAR(lambert(Vec3(Shading::light().cross(Vec3::UnitX()).normalized())), 0.21, 1e-15);
}

TEST(Shading, MatchesFormulaOnRandomNormals) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g(0, 1);
    const double norm = std::sqrt(0.2 * 0.2 + 0.2 * 0.2 + 1.0);
    for (int i = 0; i < 500; ++i) {
        const Vec3 n = Vec3(g(rng), g(rng), g(rng)).normalized();
        const double ndotl = (0.2 * n.x() + 0.2 * n.y() + n.z()) / norm;
        EXPECT_NEAR(lambert(n), 0.7 * (0.3 + 0.7 * std::max(0.0, ndotl)), 1e-12);
    }
}

TEST(Shading, RenderIsGrayAndBlackOnBackground) {
    Vertices v(3, 3);
    v << -0.5, -0.5, 0, 0.5, -0.5, 0, 0, 0.5, 0;
    const std::vector<Face> faces{{0, 1, 2}};
    const auto mesh = mesh_of(v, faces);
    const auto frags = rasterize(mesh, Camera{1.0, 0, 0, 16, 16});
    const Image r = shaded_render(mesh, frags);
    const double want = lambert(Vec3::UnitZ());
    for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                EXPECT_DOUBLE_EQ(r.at(x, y, c), frags.covered(y * 16 + x) ? want : 0.0);
}

TEST(RenderSequence, EmptySequence) {
    EXPECT_TRUE(render_sequence(seed7(), AlignedSequence{}, RenderSettings{}).empty());
}

TEST(RenderSequence, IdenticalFramesGiveIdenticalMaps) {
    const auto& m = seed7();
    AlignedSequence seq;
    const auto p = generate_driving_sequence(m, 3, 1).frames[0];
    seq.frames.frames = {p, p, p};
    RenderSettings s;
    s.camera = Camera{1.0, 0, 0, 48, 48};
    const auto maps = render_sequence(m, seq, s, 3);
    ASSERT_EQ(maps.size(), 3u);
    for (const auto& g : maps) {
        EXPECT_EQ(g.depth.pixels, maps[0].depth.pixels);
        EXPECT_EQ(g.normal.pixels, maps[0].normal.pixels);
        EXPECT_EQ(g.render.pixels, maps[0].render.pixels);
    }
}

TEST(RenderSequence, MatchesManualSingleFramePipeline) {
    const auto& m = seed7();
    const auto seq = align(generate_identity(m, 5), generate_driving_sequence(m, 6, 2));
    RenderSettings s;
    s.camera = Camera{0.9, 0.1, 0.0, 64, 64};
    const auto maps = render_sequence(m, seq, s);
    ASSERT_EQ(maps.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        const PosedMesh mesh = forward(m, seq.frames.frames[i]);
        const FragmentBuffer frags = rasterize(mesh, s.camera);
        EXPECT_EQ(maps[i].depth.pixels, depth_map(frags, s.near, s.far).pixels);
        EXPECT_EQ(maps[i].normal.pixels, normal_map(mesh, frags).pixels);
        EXPECT_EQ(maps[i].render.pixels, shaded_render(mesh, frags).pixels);
    }
}

TEST(RenderSequence, IndependentOfJobCount) {
    const auto& m = seed7();
    const auto seq = align(generate_identity(m, 5), generate_driving_sequence(m, 6, 6));
    RenderSettings s;
    s.camera = Camera{0.9, 0, 0, 40, 40};
    const auto a = render_sequence(m, seq, s, 1);
    const auto b = render_sequence(m, seq, s, 4);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].depth.pixels, b[i].depth.pixels);
        EXPECT_EQ(a[i].normal.pixels, b[i].normal.pixels);
        EXPECT_EQ(a[i].render.pixels, b[i].render.pixels);
    }
}
