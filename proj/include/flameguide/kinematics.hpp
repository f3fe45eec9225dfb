#pragma once

// Forward evaluation of the head model: blendshapes, joint regression,
// axis-angle rotations, pose correctives and linear blend skinning.
//
// Evaluation order is fixed: template -> shape -> expression -> pose
// correctives. Joints regress from the shape+expression mesh (before
// correctives), so they depend on the identity and expression only.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "flameguide/assets.hpp"

namespace flameguide {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// World-frame transform of every joint. For joint j,
/// x_world = rotation_j * (x_rest - rest_j) + rest_j + displacement_j.
/// Stored as displacements so the identity pose maps points to themselves
/// exactly rather than up to rounding.
struct JointTransforms {
    std::vector<Mat3> rotation;
    std::vector<Vec3> rest_position;
    std::vector<Vec3> displacement;

    /// x_world - x_rest for a rest point rigidly attached to `joint`.
    Vec3 offset(std::size_t joint, const Vec3& rest_point) const {
        return (rotation[joint] - Mat3::Identity()) * (rest_point - rest_position[joint]) + displacement[joint];
    }
    Vec3 apply(std::size_t joint, const Vec3& rest_point) const { return rest_point + offset(joint, rest_point); }
    Vec3 posed_position(std::size_t joint) const { return rest_position[joint] + displacement[joint]; }
};

struct PosedMesh {
    Vertices vertices;
    const std::vector<Face>* faces = nullptr;
    Vertices joints_posed;

    std::span<const Face> face_list() const { return faces ? std::span<const Face>(*faces) : std::span<const Face>(); }
};

/// Rodrigues' formula. A zero vector maps to the identity exactly.
inline Mat3 axis_angle_to_rotation(const Vec3& aa) {
    const double angle = aa.norm();
    if (angle == 0.0) return Mat3::Identity();
    const Vec3 axis = aa / angle;
    Mat3 K;
    K << 0, -axis.z(), axis.y(),  //
        axis.z(), 0, -axis.x(),   //
        -axis.y(), axis.x(), 0;
    return Mat3::Identity() + std::sin(angle) * K + (1.0 - std::cos(angle)) * (K * K);
}

/// Inverse of axis_angle_to_rotation for angles in [0, pi].
inline Vec3 rotation_to_axis_angle(const Mat3& R) {
    const double cos_angle = std::clamp((R.trace() - 1.0) / 2.0, -1.0, 1.0);
    const double angle = std::acos(cos_angle);
    if (angle < 1e-12) return Vec3::Zero();
    Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
    if (std::numbers::pi - angle > 1e-6) return w * (angle / (2.0 * std::sin(angle)));
    // Near pi the antisymmetric part vanishes; recover the axis from R + I.
    const Mat3 B = (R + Mat3::Identity()) / 2.0;
    Eigen::Index col = 0;
    B.diagonal().maxCoeff(&col);
    Vec3 axis = B.col(col) / std::sqrt(B(col, col));
    axis.normalize();
    return axis * angle;
}

inline Vertices apply_blendshapes(const FlameModel& m, std::span<const double> shape,
                                  std::span<const double> expression) {
    if (shape.size() != m.shape_width() || expression.size() != m.expression_width())
        throw ValidationError("apply_blendshapes: coefficient widths (" + std::to_string(shape.size()) + ", " +
                              std::to_string(expression.size()) + ") do not match bases (" +
                              std::to_string(m.shape_width()) + ", " + std::to_string(m.expression_width()) + ")");
    const Eigen::Map<const Eigen::VectorXd> beta(shape.data(), static_cast<Eigen::Index>(shape.size()));
    const Eigen::Map<const Eigen::VectorXd> psi(expression.data(), static_cast<Eigen::Index>(expression.size()));
    Eigen::VectorXd offsets = Eigen::VectorXd::Zero(3 * static_cast<Eigen::Index>(m.vertex_count()));
    if (beta.size() > 0) offsets.noalias() += m.shape_basis * beta;
    if (psi.size() > 0) offsets.noalias() += m.expression_basis * psi;
    Vertices out = m.template_vertices;
    out += Eigen::Map<const Vertices>(offsets.data(), out.rows(), 3);
    return out;
}

inline Vertices regress_joints(const FlameModel& m, const Vertices& shaped) {
    if (shaped.rows() != static_cast<Eigen::Index>(m.vertex_count()))
        throw ValidationError("regress_joints: expected " + std::to_string(m.vertex_count()) + " vertices, got " +
                              std::to_string(shaped.rows()));
    return m.joint_regressor * shaped;
}

/// Offsets from pose_corrective_basis applied to vec(R_j - I), row-major,
/// for each articulated joint j = 1..k (the global rotation is excluded).
inline Vertices pose_correctives(const FlameModel& m, std::span<const double> pose) {
    if (pose.size() != m.pose_width())
        throw ValidationError("pose_correctives: pose has " + std::to_string(pose.size()) + " values, model expects " +
                              std::to_string(m.pose_width()));
    const std::size_t k = m.articulated_joints();
    Eigen::VectorXd feature(9 * static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j) {
        const Vec3 aa(pose[3 * (j + 1)], pose[3 * (j + 1) + 1], pose[3 * (j + 1) + 2]);
        const Mat3 d = axis_angle_to_rotation(aa) - Mat3::Identity();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) feature(static_cast<Eigen::Index>(9 * j) + 3 * r + c) = d(r, c);
    }
    const Eigen::VectorXd offsets = m.pose_corrective_basis * feature;
    return Eigen::Map<const Vertices>(offsets.data(), static_cast<Eigen::Index>(m.vertex_count()), 3);
}

/// Composes per-joint rotations along the parent chain. The root rotates
/// about its own rest position.
inline JointTransforms compose_joint_transforms(const FlameModel& m, const Vertices& rest_joints,
                                                std::span<const double> pose) {
    const std::size_t count = m.joint_count();
    JointTransforms t;
    t.rotation.resize(count);
    t.rest_position.resize(count);
    t.displacement.resize(count);
    for (std::size_t j : topological_joint_order(m.parent)) {
        const Mat3 local = axis_angle_to_rotation(Vec3(pose[3 * j], pose[3 * j + 1], pose[3 * j + 2]));
        t.rest_position[j] = rest_joints.row(static_cast<Eigen::Index>(j)).transpose();
        const int p = m.parent[j];
        if (p == kRootParent) {
            t.rotation[j] = local;
            t.displacement[j] = Vec3::Zero();
        } else {
            const auto pi = static_cast<std::size_t>(p);
            t.rotation[j] = t.rotation[pi] * local;
            t.displacement[j] = t.offset(pi, t.rest_position[j]);
        }
    }
    return t;
}

/// Linear blend skinning of rest-pose vertices, v' = v + sum_j w_vj * offset_j(v),
/// which equals sum_j w_vj * (R_j (v - J_j) + J'_j) when the weights sum to one.
inline Vertices skin(const FlameModel& m, const Vertices& rest, const JointTransforms& t) {
    Vertices out(rest.rows(), 3);
    for (Eigen::Index v = 0; v < rest.rows(); ++v) {
        const Vec3 x = rest.row(v).transpose();
        Vec3 acc = Vec3::Zero();
        for (Eigen::Index j = 0; j < m.skinning_weights.cols(); ++j) {
            const double w = m.skinning_weights(v, j);
            if (w != 0.0) acc += w * t.offset(static_cast<std::size_t>(j), x);
        }
        out.row(v) = (x + acc).transpose();
    }
    return out;
}

/// Full model evaluation M(shape, pose, expression).
inline PosedMesh forward(const FlameModel& m, const FlameParams& params) {
    validate_params(m, params);
    const Vertices shaped = apply_blendshapes(m, params.shape, params.expression);
    const Vertices rest_joints = regress_joints(m, shaped);
    const Vertices rest = shaped + pose_correctives(m, params.pose);
    const JointTransforms t = compose_joint_transforms(m, rest_joints, params.pose);

    PosedMesh mesh;
    mesh.vertices = skin(m, rest, t);
    mesh.faces = &m.faces;
    mesh.joints_posed = Vertices(static_cast<Eigen::Index>(m.joint_count()), 3);
    for (std::size_t j = 0; j < m.joint_count(); ++j)
        mesh.joints_posed.row(static_cast<Eigen::Index>(j)) = t.posed_position(j).transpose();
    return mesh;
}

}  // namespace flameguide
