#pragma once

#include "voxavatar/core.hpp"

#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace vxa {

inline constexpr int kShapeDims = 10;
inline constexpr int kDefaultJoints = 24;
inline constexpr int kPartCount = 24;

// SMPL joint order.
enum Joint : int {
    kPelvis = 0, kLeftHip, kRightHip, kSpine1, kLeftKnee, kRightKnee, kSpine2, kLeftAnkle, kRightAnkle,
    kSpine3, kLeftFoot, kRightFoot, kNeck, kLeftCollar, kRightCollar, kHead, kLeftShoulder,
    kRightShoulder, kLeftElbow, kRightElbow, kLeftWrist, kRightWrist, kLeftHand, kRightHand
};

// DensePose coarse part labels (1-based; 0 is background).
enum Part : int {
    kTorsoBack = 1, kTorsoFront, kRightHandPart, kLeftHandPart, kLeftFootPart, kRightFootPart,
    kUpperLegRightBack, kUpperLegLeftBack, kUpperLegRightFront, kUpperLegLeftFront,
    kLowerLegRightBack, kLowerLegLeftBack, kLowerLegRightFront, kLowerLegLeftFront,
    kUpperArmLeftBack, kUpperArmRightBack, kUpperArmLeftFront, kUpperArmRightFront,
    kLowerArmLeftBack, kLowerArmRightBack, kLowerArmLeftFront, kLowerArmRightFront,
    kHeadRight, kHeadLeft
};

/// Canonical articulated body: mean shape, blend bases, skinning weights and
/// a joint tree. Coordinates are meters, y up, body facing +z, left = +x.
struct BodyTemplate {
    Points vertices;                    // N x 3 canonical T-pose
    Faces faces;                        // F x 3
    std::vector<int> face_labels;       // F entries in 1..24
    std::vector<Points> shape_basis;    // kShapeDims displacement fields, each N x 3
    // Optional pose-corrective basis: 3N x 9(K-1) acting on the flattened
    // (R_k - I) of the non-root joints. Empty means B_P = 0.
    Eigen::MatrixXd pose_basis;
    Weights skin_weights;               // N x K, rows sum to 1
    Points canonical_joints;            // K x 3
    std::vector<int> parents;           // K entries, -1 for the root
    // K x N joint regressor; J(beta) = canonical_joints + regressor * B_S(beta).
    Eigen::MatrixXd joint_regressor;

    int vertex_count() const { return int(vertices.rows()); }
    int face_count() const { return int(faces.rows()); }
    int joint_count() const { return int(canonical_joints.rows()); }

    /// Throws InvalidInput describing the first violated invariant.
    void validate() const;
};

struct ShapeParams {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(kShapeDims);
};

struct PoseParams {
    Points xi;  // K x 3 axis-angle, radians

    static PoseParams zero(int joints = kDefaultJoints) { return {Points::Zero(joints, 3)}; }
};

struct PosedBody {
    Points vertices;
    Points joints;
    // Skinning transforms: v_posed = sum_k w_k * transforms[k] * v_canonical.
    std::vector<Affine3> transforms;
};

/// Axis-angle to rotation matrix (Rodrigues). Returns the exact identity for a
/// zero vector.
template <typename T>
Eigen::Matrix<T, 3, 3> rodrigues(const Eigen::Matrix<T, 3, 1>& axis_angle) {
    using std::cos;
    using std::sin;
    const T angle = axis_angle.norm();
    if (angle == T(0)) return Eigen::Matrix<T, 3, 3>::Identity();
    const Eigen::Matrix<T, 3, 1> k = axis_angle / angle;
    Eigen::Matrix<T, 3, 3> K;
    K << T(0), -k.z(), k.y(), k.z(), T(0), -k.x(), -k.y(), k.x(), T(0);
    return Eigen::Matrix<T, 3, 3>::Identity() + sin(angle) * K + (T(1) - cos(angle)) * K * K;
}

/// T(beta, xi) = T_bar + B_S(beta) + B_P(xi).
Points shape_deform(const BodyTemplate& tpl, const ShapeParams& beta, const PoseParams& xi);

/// J(beta): canonical joint positions of the shaped body.
Points pose_joints(const BodyTemplate& tpl, const ShapeParams& beta);

/// Linear blend skinning of canonical vertices about `joints`.
PosedBody lbs(const Points& canonical_vertices, const Points& joints, const PoseParams& xi,
              const Weights& skin_weights, const std::vector<int>& parents);

/// shape_deform -> pose_joints -> lbs.
PosedBody pose_body(const BodyTemplate& tpl, const ShapeParams& beta, const PoseParams& xi);

/// Procedurally generated humanoid (~2k vertices) built from ellipsoidal
/// segments, with 24 part labels and distance-based skinning weights.
BodyTemplate make_default_template();

/// A-pose: arms lowered by `arm_angle` radians from the T-pose.
PoseParams a_pose(Scalar arm_angle = 0.75, int joints = kDefaultJoints);

// JSON template format: see docs/template_format.md.
BodyTemplate load_template_json(const std::string& path);
void save_template_json(const BodyTemplate& tpl, const std::string& path);

// Pose file: {"beta": [10 numbers], "pose": [[x,y,z] * K]} ; either key optional.
struct PoseFile {
    ShapeParams beta;
    PoseParams pose;
};
PoseFile load_pose_json(const std::string& path, int joints = kDefaultJoints);

void write_obj(const Points& vertices, const Faces& faces, const std::string& path);

/// Axis-aligned extent of a point set.
std::pair<Vec3, Vec3> point_bounds(const Points& p);

}  // namespace vxa
