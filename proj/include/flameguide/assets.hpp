#pragma once

// Head-model asset schema: the FLMF container, the parameter-sequence text
// format, validation, and a seeded generator for small synthetic models.
//
// Container layout (all little-endian):
//   "FLMF"  u16 version(=1)
//   u32 n, u32 f, u32 k, u32 shape_width, u32 expression_width
//   f32 template[n][3]
//   u32 faces[f][3]
//   f32 shape_basis[n][3][shape_width]
//   f32 expression_basis[n][3][expression_width]
//   f32 pose_corrective_basis[n][3][9k]
//   f32 joint_regressor[k+1][n]
//   f32 skinning_weights[n][k+1]
//   i32 parent[k+1]            (root = -1)
//
// Parameter sequences are JSON Lines. The first line is the header
//   {"format":"flameguide-params","version":1,"fps":25.0}
// and every further non-empty line is one frame
//   {"shape":[...],"expression":[...],"pose":[...]}
// with pose holding 3k+3 axis-angle values (global rotation first).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "flameguide/common.hpp"

namespace flameguide {

using Vertices = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Face = std::array<std::uint32_t, 3>;

inline constexpr char kModelMagic[] = "FLMF";
inline constexpr std::uint16_t kModelVersion = 1;
inline constexpr int kRootParent = -1;

/// Linear head model. Bases are stored as (3n x width) matrices whose row
/// 3*v + c holds vertex v, coordinate c, so a blendshape is `basis * coeffs`.
struct FlameModel {
    Vertices template_vertices;
    std::vector<Face> faces;
    Eigen::MatrixXd shape_basis;
    Eigen::MatrixXd expression_basis;
    Eigen::MatrixXd pose_corrective_basis;
    Eigen::MatrixXd joint_regressor;   // (k+1) x n
    Eigen::MatrixXd skinning_weights;  // n x (k+1)
    std::vector<int> parent;           // k+1 entries, parent[0] == kRootParent

    std::size_t vertex_count() const { return static_cast<std::size_t>(template_vertices.rows()); }
    /// Articulated joints, excluding the root.
    std::size_t articulated_joints() const { return parent.empty() ? 0 : parent.size() - 1; }
    std::size_t joint_count() const { return parent.size(); }
    std::size_t shape_width() const { return static_cast<std::size_t>(shape_basis.cols()); }
    std::size_t expression_width() const { return static_cast<std::size_t>(expression_basis.cols()); }
    std::size_t pose_width() const { return 3 * articulated_joints() + 3; }
};

struct FlameParams {
    std::vector<double> shape;
    std::vector<double> expression;
    std::vector<double> pose;

    friend bool operator==(const FlameParams&, const FlameParams&) = default;
};

struct ParamSequence {
    std::vector<FlameParams> frames;
    double fps = 25.0;

    friend bool operator==(const ParamSequence&, const ParamSequence&) = default;
};

struct BasisWidths {
    std::size_t shape = 10;
    std::size_t expression = 10;
};

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline void require(bool ok, const std::string& message) {
    if (!ok) throw ValidationError(message);
}

}  // namespace detail

/// Throws ValidationError naming the first violated invariant.
inline void validate(const FlameModel& m) {
    using detail::require;
    const auto n = static_cast<Eigen::Index>(m.vertex_count());
    const auto kp = static_cast<Eigen::Index>(m.joint_count());
    const auto k = static_cast<Eigen::Index>(m.articulated_joints());

    require(n >= 1, "model has no vertices");
    require(kp >= 1, "model has no joints");
    require(m.shape_basis.rows() == 3 * n, "dimension mismatch: shape basis rows != 3n");
    require(m.expression_basis.rows() == 3 * n, "dimension mismatch: expression basis rows != 3n");
    require(m.pose_corrective_basis.rows() == 3 * n && m.pose_corrective_basis.cols() == 9 * k,
            "dimension mismatch: pose corrective basis must be 3n x 9k");
    require(m.joint_regressor.rows() == kp && m.joint_regressor.cols() == n,
            "dimension mismatch: joint regressor must be (k+1) x n");
    require(m.skinning_weights.rows() == n && m.skinning_weights.cols() == kp,
            "dimension mismatch: skinning weights must be n x (k+1)");

    require(m.template_vertices.allFinite() && m.shape_basis.allFinite() && m.expression_basis.allFinite() &&
                m.pose_corrective_basis.allFinite() && m.joint_regressor.allFinite() &&
                m.skinning_weights.allFinite(),
            "model arrays contain non-finite values");

    for (const auto& f : m.faces)
        for (auto idx : f) require(idx < static_cast<std::uint32_t>(n), "face index out of range");

    for (Eigen::Index v = 0; v < n; ++v) {
        require((m.skinning_weights.row(v).array() >= 0.0).all(), "skinning weights negative");
        require(std::abs(m.skinning_weights.row(v).sum() - 1.0) <= 1e-6, "skinning weights not normalized");
    }
    for (Eigen::Index j = 0; j < kp; ++j)
        require(std::abs(m.joint_regressor.row(j).sum() - 1.0) <= 1e-6, "joint regressor row not stochastic");

    require(m.parent[0] == kRootParent, "parent array: joint 0 must be the root");
    for (std::size_t j = 1; j < m.parent.size(); ++j) {
        const int p = m.parent[j];
        require(p >= 0 && p < static_cast<int>(kp), "parent array: index out of range");
    }
    // Every chain must reach the root within k+1 hops.
    for (std::size_t j = 1; j < m.parent.size(); ++j) {
        int cur = static_cast<int>(j);
        std::size_t hops = 0;
        while (cur != 0) {
            cur = m.parent[static_cast<std::size_t>(cur)];
            require(++hops <= m.parent.size(), "cyclic parent array");
        }
    }
}

/// Joint indices ordered so that every parent precedes its children.
inline std::vector<std::size_t> topological_joint_order(const std::vector<int>& parent) {
    std::vector<std::size_t> depth(parent.size(), 0);
    for (std::size_t j = 1; j < parent.size(); ++j) {
        std::size_t d = 0;
        for (int cur = static_cast<int>(j); cur != 0; cur = parent[static_cast<std::size_t>(cur)]) ++d;
        depth[j] = d;
    }
    std::vector<std::size_t> order(parent.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return depth[a] < depth[b]; });
    return order;
}

inline void validate_params(const FlameModel& m, const FlameParams& p) {
    if (p.shape.size() != m.shape_width() || p.expression.size() != m.expression_width() ||
        p.pose.size() != m.pose_width()) {
        std::ostringstream os;
        os << "parameter widths (shape " << p.shape.size() << ", expression " << p.expression.size() << ", pose "
           << p.pose.size() << ") do not match model (shape " << m.shape_width() << ", expression "
           << m.expression_width() << ", pose " << m.pose_width() << ")";
        throw ValidationError(os.str());
    }
}

// ---------------------------------------------------------------------------
// Container I/O

namespace detail {

inline void write_basis(BinaryWriter& w, const Eigen::MatrixXd& basis) {
    for (Eigen::Index r = 0; r < basis.rows(); ++r)
        for (Eigen::Index c = 0; c < basis.cols(); ++c) w.put(static_cast<float>(basis(r, c)));
}

inline Eigen::MatrixXd read_matrix(BinaryReader& r, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<double>(r.get<float>());
    return m;
}

inline constexpr std::uint32_t kMaxDimension = 1u << 24;

}  // namespace detail

inline void write_model(std::ostream& os, const FlameModel& m) {
    detail::BinaryWriter w(os);
    w.magic(std::string_view(kModelMagic, 4));
    w.put(kModelVersion);
    w.put(static_cast<std::uint32_t>(m.vertex_count()));
    w.put(static_cast<std::uint32_t>(m.faces.size()));
    w.put(static_cast<std::uint32_t>(m.articulated_joints()));
    w.put(static_cast<std::uint32_t>(m.shape_width()));
    w.put(static_cast<std::uint32_t>(m.expression_width()));
    for (Eigen::Index v = 0; v < m.template_vertices.rows(); ++v)
        for (int c = 0; c < 3; ++c) w.put(static_cast<float>(m.template_vertices(v, c)));
    for (const auto& f : m.faces)
        for (auto idx : f) w.put(idx);
    detail::write_basis(w, m.shape_basis);
    detail::write_basis(w, m.expression_basis);
    detail::write_basis(w, m.pose_corrective_basis);
    detail::write_basis(w, m.joint_regressor);
    detail::write_basis(w, m.skinning_weights);
    for (int p : m.parent) w.put(static_cast<std::int32_t>(p));
    w.check("model container");
}

/// Reads and validates a container. Throws IoError on framing problems and
/// ValidationError when the decoded model breaks an invariant.
inline FlameModel read_model(std::istream& is, const std::string& source = "<stream>") {
    detail::BinaryReader r(is, source);
    r.expect_magic(std::string_view(kModelMagic, 4));
    const auto version = r.get<std::uint16_t>();
    if (version != kModelVersion) throw IoError(source + ": unsupported container version " + std::to_string(version));
    const auto n = r.get<std::uint32_t>();
    const auto f = r.get<std::uint32_t>();
    const auto k = r.get<std::uint32_t>();
    const auto nb = r.get<std::uint32_t>();
    const auto ne = r.get<std::uint32_t>();
    for (auto d : {n, f, k, nb, ne})
        if (d > detail::kMaxDimension) throw IoError(source + ": implausible dimension " + std::to_string(d));

    const Eigen::Index N = n, K1 = k + 1;
    FlameModel m;
    m.template_vertices = Vertices(N, 3);
    for (Eigen::Index v = 0; v < N; ++v)
        for (int c = 0; c < 3; ++c) m.template_vertices(v, c) = static_cast<double>(r.get<float>());
    m.faces.resize(f);
    for (auto& face : m.faces)
        for (auto& idx : face) idx = r.get<std::uint32_t>();
    m.shape_basis = detail::read_matrix(r, 3 * N, nb);
    m.expression_basis = detail::read_matrix(r, 3 * N, ne);
    m.pose_corrective_basis = detail::read_matrix(r, 3 * N, 9 * static_cast<Eigen::Index>(k));
    m.joint_regressor = detail::read_matrix(r, K1, N);
    m.skinning_weights = detail::read_matrix(r, N, K1);
    m.parent.resize(static_cast<std::size_t>(K1));
    for (auto& p : m.parent) p = r.get<std::int32_t>();
    r.expect_eof();
    validate(m);
    return m;
}

inline void save_model(const std::filesystem::path& path, const FlameModel& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    write_model(os, m);
}

inline FlameModel load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open model file: " + path.string());
    return read_model(is, path.string());
}

// ---------------------------------------------------------------------------
// Parameter sequences

inline constexpr char kParamsFormat[] = "flameguide-params";

inline void validate_sequence(const ParamSequence& seq) {
    if (seq.frames.empty()) return;
    const auto& f0 = seq.frames.front();
    for (std::size_t i = 1; i < seq.frames.size(); ++i) {
        const auto& f = seq.frames[i];
        if (f.shape.size() != f0.shape.size() || f.expression.size() != f0.expression.size() ||
            f.pose.size() != f0.pose.size())
            throw ValidationError("frame " + std::to_string(i) + " has different parameter widths than frame 0");
    }
}

inline void write_params(std::ostream& os, const ParamSequence& seq) {
    validate_sequence(seq);
    nlohmann::ordered_json header;
    header["format"] = kParamsFormat;
    header["version"] = 1;
    header["fps"] = seq.fps;
    os << header.dump() << '\n';
    for (const auto& f : seq.frames) {
        nlohmann::ordered_json j;
        j["shape"] = f.shape;
        j["expression"] = f.expression;
        j["pose"] = f.pose;
        os << j.dump() << '\n';
    }
    if (!os) throw IoError("failed writing parameter sequence");
}

inline ParamSequence read_params(std::istream& is, const std::string& source = "<stream>") {
    ParamSequence seq;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    auto numbers = [&](const nlohmann::json& j, const char* key) {
        if (!j.contains(key) || !j[key].is_array())
            throw ValidationError(source + ":" + std::to_string(line_no) + ": missing array field \"" + key + "\"");
        std::vector<double> out;
        out.reserve(j[key].size());
        for (const auto& v : j[key]) {
            if (!v.is_number())
                throw ValidationError(source + ":" + std::to_string(line_no) + ": non-numeric entry in \"" + key + "\"");
            out.push_back(v.get<double>());
        }
        return out;
    };
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ValidationError(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!have_header) {
            if (!j.is_object() || j.value("format", "") != kParamsFormat)
                throw ValidationError(source + ": first line must be a \"" + std::string(kParamsFormat) + "\" header");
            if (j.value("version", 0) != 1) throw ValidationError(source + ": unsupported parameter format version");
            if (!j.contains("fps") || !j["fps"].is_number()) throw ValidationError(source + ": header lacks fps");
            seq.fps = j["fps"].get<double>();
            have_header = true;
            continue;
        }
        FlameParams p;
        p.shape = numbers(j, "shape");
        p.expression = numbers(j, "expression");
        p.pose = numbers(j, "pose");
        seq.frames.push_back(std::move(p));
    }
    if (!have_header) throw ValidationError(source + ": empty parameter file");
    validate_sequence(seq);
    return seq;
}

inline void save_params(const std::filesystem::path& path, const ParamSequence& seq) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    write_params(os, seq);
}

inline ParamSequence load_params(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open parameter file: " + path.string());
    return read_params(is, path.string());
}

// ---------------------------------------------------------------------------
// Synthetic assets

namespace detail {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Eigen::Vector3d ring_point(double polar, double azimuth) {
    return {std::sin(polar) * std::cos(azimuth), std::cos(polar), std::sin(polar) * std::sin(azimuth)};
}

/// Closed genus-0 triangulation with exactly n >= 4 vertices on the unit
/// sphere: a tetrahedron for n == 4, otherwise two poles joined by
/// latitude rings zipped together.
inline std::pair<Vertices, std::vector<Face>> sphere_topology(std::size_t n) {
    Vertices pts(static_cast<Eigen::Index>(n), 3);
    std::vector<Face> faces;
    if (n == 4) {
        const double s = 1.0 / std::sqrt(3.0);
        pts << s, s, s, s, -s, -s, -s, s, -s, -s, -s, s;
        faces = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
    } else {
        const std::size_t ring_total = n - 2;
        std::size_t rings = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(ring_total) / 2.0)));
        rings = std::clamp<std::size_t>(rings, 1, ring_total / 3);

        std::vector<double> polar(rings), ideal(rings);
        double weight_sum = 0.0;
        for (std::size_t i = 0; i < rings; ++i) {
            polar[i] = std::numbers::pi * static_cast<double>(i + 1) / static_cast<double>(rings + 1);
            weight_sum += std::sin(polar[i]);
        }
        std::vector<std::size_t> count(rings);
        std::size_t assigned = 0;
        for (std::size_t i = 0; i < rings; ++i) {
            ideal[i] = static_cast<double>(ring_total) * std::sin(polar[i]) / weight_sum;
            count[i] = std::max<std::size_t>(3, static_cast<std::size_t>(ideal[i]));
            assigned += count[i];
        }
        while (assigned < ring_total) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < rings; ++i)
                if (ideal[i] - static_cast<double>(count[i]) > ideal[best] - static_cast<double>(count[best])) best = i;
            ++count[best];
            ++assigned;
        }
        while (assigned > ring_total) {
            std::size_t best = rings;
            for (std::size_t i = 0; i < rings; ++i)
                if (count[i] > 3 && (best == rings || static_cast<double>(count[i]) - ideal[i] >
                                                          static_cast<double>(count[best]) - ideal[best]))
                    best = i;
            --count[best];
            --assigned;
        }

        const auto top = 0u;
        const auto bottom = static_cast<std::uint32_t>(n - 1);
        pts.row(top) = Eigen::Vector3d(0, 1, 0).transpose();
        pts.row(bottom) = Eigen::Vector3d(0, -1, 0).transpose();
        std::vector<std::uint32_t> first(rings);
        std::vector<double> offset(rings);
        std::uint32_t next = 1;
        for (std::size_t i = 0; i < rings; ++i) {
            first[i] = next;
            offset[i] = (i % 2 == 0) ? 0.0 : 0.5;
            for (std::size_t j = 0; j < count[i]; ++j) {
                const double az = 2.0 * std::numbers::pi * (static_cast<double>(j) + offset[i]) /
                                  static_cast<double>(count[i]);
                pts.row(next++) = ring_point(polar[i], az).transpose();
            }
        }
        auto idx = [&](std::size_t ring, std::size_t j) {
            return first[ring] + static_cast<std::uint32_t>(j % count[ring]);
        };
        for (std::size_t j = 0; j < count.front(); ++j) faces.push_back({top, idx(0, j), idx(0, j + 1)});
        for (std::size_t j = 0; j < count.back(); ++j)
            faces.push_back({bottom, idx(rings - 1, j + 1), idx(rings - 1, j)});
        for (std::size_t r = 0; r + 1 < rings; ++r) {
            const std::size_t a = count[r], b = count[r + 1];
            auto angle = [&](std::size_t ring, std::size_t j) {
                return (static_cast<double>(j) + offset[ring]) / static_cast<double>(count[ring]);
            };
            std::size_t i = 0, j = 0;
            while (i < a || j < b) {
                const bool advance_upper = (j == b) || (i < a && angle(r, i + 1) <= angle(r + 1, j + 1));
                if (advance_upper) {
                    faces.push_back({idx(r, i), idx(r, i + 1), idx(r + 1, j)});
                    ++i;
                } else {
                    faces.push_back({idx(r, i), idx(r + 1, j + 1), idx(r + 1, j)});
                    ++j;
                }
            }
        }
    }
    // Orient every face outward; the point set is star-shaped about the origin.
    for (auto& f : faces) {
        const Eigen::Vector3d a = pts.row(f[0]), b = pts.row(f[1]), c = pts.row(f[2]);
        if ((b - a).cross(c - a).dot(a + b + c) < 0.0) std::swap(f[1], f[2]);
    }
    return {std::move(pts), std::move(faces)};
}

/// Smooth scalar field on the sphere bounded by 1 in magnitude.
struct SmoothField {
    Eigen::Vector3d frequency;
    double phase;
    double amplitude;
    double operator()(const Eigen::Vector3d& u) const { return amplitude * std::sin(frequency.dot(u) + phase); }

    static SmoothField random(std::mt19937_64& rng) {
        return {Eigen::Vector3d(uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, -3, 3)),
                uniform(rng, 0, 2 * std::numbers::pi), uniform(rng, 0.2, 1.0)};
    }
};

inline void fill_basis(Eigen::MatrixXd& basis, const Vertices& dirs, double scale, std::mt19937_64& rng) {
    for (Eigen::Index col = 0; col < basis.cols(); ++col) {
        const std::array<SmoothField, 3> field{SmoothField::random(rng), SmoothField::random(rng),
                                               SmoothField::random(rng)};
        for (Eigen::Index v = 0; v < dirs.rows(); ++v) {
            const Eigen::Vector3d u = dirs.row(v);
            for (int c = 0; c < 3; ++c) basis(3 * v + c, col) = scale * field[static_cast<std::size_t>(c)](u);
        }
    }
}

template <class M>
void round_to_float(M& m) {
    m = m.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); }).eval();
}

}  // namespace detail

/// Deterministic synthetic head-like model. Every array is rounded to float32
/// precision so the model survives a container round trip bit-for-bit.
inline FlameModel generate_test_model(std::uint64_t seed, std::size_t n, std::size_t k, BasisWidths widths = {}) {
    if (n < 4) throw UsageError("generate_test_model: need at least 4 vertices, got " + std::to_string(n));
    if (k < 1) throw UsageError("generate_test_model: need at least 1 articulated joint, got " + std::to_string(k));

    std::mt19937_64 rng(seed);
    auto [dirs, faces] = detail::sphere_topology(n);
    const auto N = static_cast<Eigen::Index>(n);
    const auto K1 = static_cast<Eigen::Index>(k + 1);

    FlameModel m;
    m.faces = std::move(faces);

    const Eigen::Vector3d radii(0.75, 0.9, 0.8);
    const std::array<detail::SmoothField, 2> bumps{detail::SmoothField::random(rng), detail::SmoothField::random(rng)};
    m.template_vertices = Vertices(N, 3);
    for (Eigen::Index v = 0; v < N; ++v) {
        const Eigen::Vector3d u = dirs.row(v);
        const double r = 1.0 + 0.05 * (bumps[0](u) + bumps[1](u));
        m.template_vertices.row(v) = (r * radii.cwiseProduct(u)).transpose();
    }

    m.shape_basis = Eigen::MatrixXd(3 * N, static_cast<Eigen::Index>(widths.shape));
    m.expression_basis = Eigen::MatrixXd(3 * N, static_cast<Eigen::Index>(widths.expression));
    m.pose_corrective_basis = Eigen::MatrixXd(3 * N, 9 * static_cast<Eigen::Index>(k));
    detail::fill_basis(m.shape_basis, dirs, 0.05, rng);
    detail::fill_basis(m.expression_basis, dirs, 0.05, rng);
    detail::fill_basis(m.pose_corrective_basis, dirs, 0.01, rng);

    // Root regresses from every vertex (centroid); articulated joints from a
    // handful of vertices nearest a random interior anchor.
    m.joint_regressor = Eigen::MatrixXd::Zero(K1, N);
    m.joint_regressor.row(0).setConstant(1.0 / static_cast<double>(n));
    const std::size_t support = std::min<std::size_t>(8, n);
    for (Eigen::Index j = 1; j < K1; ++j) {
        const Eigen::Vector3d anchor(detail::uniform(rng, -0.5, 0.5), detail::uniform(rng, -0.6, 0.3),
                                     detail::uniform(rng, -0.5, 0.5));
        std::vector<std::pair<double, Eigen::Index>> dist;
        dist.reserve(n);
        for (Eigen::Index v = 0; v < N; ++v)
            dist.emplace_back((m.template_vertices.row(v).transpose() - anchor).squaredNorm(), v);
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(support), dist.end());
        double total = 0.0;
        std::vector<double> w(support);
        for (auto& x : w) total += (x = detail::uniform(rng, 0.5, 1.0));
        for (std::size_t s = 0; s < support; ++s) m.joint_regressor(j, dist[s].second) = w[s] / total;
    }
    detail::round_to_float(m.joint_regressor);

    const Eigen::MatrixXd joints = m.joint_regressor * m.template_vertices;
    m.skinning_weights = Eigen::MatrixXd(N, K1);
    for (Eigen::Index v = 0; v < N; ++v) {
        double total = 0.0;
        for (Eigen::Index j = 0; j < K1; ++j) {
            const double d2 = (m.template_vertices.row(v) - joints.row(j)).squaredNorm();
            total += (m.skinning_weights(v, j) = std::exp(-d2 / (2.0 * 0.35 * 0.35)) + (j == 0 ? 0.05 : 0.0));
        }
        m.skinning_weights.row(v) /= total;
    }

    m.parent.assign(static_cast<std::size_t>(K1), 0);
    m.parent[0] = kRootParent;
    for (std::size_t j = 2; j < m.parent.size(); ++j)
        m.parent[j] = static_cast<int>(std::uniform_int_distribution<std::size_t>(0, j - 1)(rng));

    detail::round_to_float(m.template_vertices);
    detail::round_to_float(m.shape_basis);
    detail::round_to_float(m.expression_basis);
    detail::round_to_float(m.pose_corrective_basis);
    detail::round_to_float(m.skinning_weights);
    validate(m);
    return m;
}

/// Neutral identity: random shape, zero expression and pose.
inline FlameParams generate_identity(const FlameModel& m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    FlameParams p;
    p.shape.resize(m.shape_width());
    for (auto& s : p.shape) s = normal(rng);
    p.expression.assign(m.expression_width(), 0.0);
    p.pose.assign(m.pose_width(), 0.0);
    return p;
}

/// Smoothly varying driving sequence: fixed random shape, sinusoidal
/// expressions, small head and joint rotations.
inline ParamSequence generate_driving_sequence(const FlameModel& m, std::uint64_t seed, std::size_t frames,
                                               double fps = 25.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> shape(m.shape_width());
    for (auto& s : shape) s = normal(rng);

    struct Wave {
        double amplitude, frequency, phase;
    };
    auto waves = [&](std::size_t count, double max_amp) {
        std::vector<Wave> out(count);
        for (auto& w : out)
            w = {detail::uniform(rng, 0.2, 1.0) * max_amp, detail::uniform(rng, 0.2, 1.5),
                 detail::uniform(rng, 0, 2 * std::numbers::pi)};
        return out;
    };
    const auto expr_waves = waves(m.expression_width(), 1.5);
    auto pose_waves = waves(m.pose_width(), 0.2);
    for (std::size_t c = 0; c < 3; ++c) pose_waves[c].amplitude *= 1.5;

    ParamSequence seq;
    seq.fps = fps;
    seq.frames.reserve(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        const double t = static_cast<double>(f) / fps;
        FlameParams p;
        p.shape = shape;
        for (const auto& w : expr_waves)
            p.expression.push_back(w.amplitude * std::sin(2 * std::numbers::pi * w.frequency * t + w.phase));
        for (const auto& w : pose_waves)
            p.pose.push_back(w.amplitude * std::sin(2 * std::numbers::pi * w.frequency * t + w.phase));
        seq.frames.push_back(std::move(p));
    }
    return seq;
}

}  // namespace flameguide
