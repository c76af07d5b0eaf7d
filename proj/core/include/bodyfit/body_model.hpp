#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bodyfit/rotations.hpp"

namespace bodyfit {

// Articulated body model: a template mesh deformed by linear shape
// blendshapes, posed by forward kinematics over a joint tree and linear
// blend skinning. Joints of interest are regressed linearly from the
// posed vertices.
//
// Conventions:
//  - vertices and joints are in meters, rows are points;
//  - shape_dirs is (3N) x B with row index 3*vertex + coordinate;
//  - joints are stored in topological order, parents[i] < i, parents[0] = -1;
//  - regressor and skinning rows are non-negative and sum to 1.
struct BodyModel {
    Eigen::MatrixX3d template_vertices;    // N x 3
    Eigen::MatrixX3i faces;                // F x 3, vertex indices
    Eigen::MatrixXd shape_dirs;            // 3N x B
    Eigen::MatrixXd joint_regressor;       // k x N (regressed joints)
    Eigen::MatrixXd rest_joint_regressor;  // J x N (kinematic-tree joints)
    Eigen::VectorXi parents;               // J
    Eigen::MatrixXd skin_weights;          // N x J
    std::vector<std::string> joint_names;  // k labels

    int num_vertices() const { return static_cast<int>(template_vertices.rows()); }
    int num_kinematic_joints() const { return static_cast<int>(parents.size()); }
    int num_regressed_joints() const { return static_cast<int>(joint_regressor.rows()); }
    int num_shape_dims() const { return static_cast<int>(shape_dirs.cols()); }

    // Index of a named regressed joint, -1 if absent.
    int joint_index(const std::string& name) const;

    // Throws std::invalid_argument on any violated invariant.
    void validate() const;
};

// Pose and shape state. theta is flat, 3 entries per kinematic joint in
// axis-angle; joint 0 is the global orientation. beta is dimensionless in
// a unit-variance convention with a hard sanity bound |beta_i| <= 5.
struct ModelParams {
    Eigen::VectorXd theta;  // 3 * J
    Eigen::VectorXd beta;   // B

    static ModelParams zeros(int kinematic_joints, int shape_dims);

    int num_joints() const { return static_cast<int>(theta.size()) / 3; }
    Eigen::Vector3d joint_aa(int j) const { return theta.segment<3>(3 * j); }

    // Throws std::invalid_argument on non-finite values or |beta_i| > 5.
    void validate() const;
};

inline constexpr double kBetaHardBound = 5.0;

struct PosedBody {
    Eigen::MatrixX3d vertices;  // N x 3
    Eigen::MatrixX3d joints;    // k x 3, regressed from the posed vertices
};

// Full model forward pass: shape blendshapes, forward kinematics, skinning,
// joint regression.
PosedBody forward(const BodyModel& model, const ModelParams& params);

// W * mesh. Throws on a vertex-count mismatch.
Eigen::MatrixX3d regress_joints(const BodyModel& model, const Eigen::MatrixX3d& mesh);

// Forward pass with the pose given directly as per-joint rotation matrices
// (the regressor's 6D outputs decode to these; forward() is this plus the
// Rodrigues conversion).
PosedBody posed_from_rotations(const BodyModel& model,
                               const std::vector<rot::Mat3>& rotations,
                               const Eigen::VectorXd& beta);
Eigen::MatrixX3d joints_from_rotations(const BodyModel& model,
                                       const std::vector<rot::Mat3>& rotations,
                                       const Eigen::VectorXd& beta);

// Derivatives of the regressed joints. Rows are 3*joint + coordinate.
// d_rot columns are 9 per kinematic joint, column-major vec(R) ordering;
// d_theta columns are 3 per kinematic joint (axis-angle).
struct JointsJacobian {
    Eigen::MatrixXd d_theta;  // 3k x 3J
    Eigen::MatrixXd d_beta;   // 3k x B
};
JointsJacobian forward_jacobian(const BodyModel& model, const ModelParams& params);

struct RotationJointsJacobian {
    Eigen::MatrixXd d_rot;   // 3k x 9J
    Eigen::MatrixXd d_beta;  // 3k x B
};
RotationJointsJacobian joints_jacobian_rotations(const BodyModel& model,
                                                 const std::vector<rot::Mat3>& rotations,
                                                 const Eigen::VectorXd& beta);

// Derivatives of every posed vertex, rows are 3*vertex + coordinate.
struct MeshJacobian {
    Eigen::MatrixXd d_rot;   // 3N x 9J
    Eigen::MatrixXd d_beta;  // 3N x B
};
MeshJacobian mesh_jacobian_rotations(const BodyModel& model,
                                     const std::vector<rot::Mat3>& rotations,
                                     const Eigen::VectorXd& beta);

std::vector<rot::Mat3> theta_to_rotations(const Eigen::VectorXd& theta);

// Synthetic stand-in for a full-scale body model asset: a humanoid joint
// tree (24 segments) or a generic kinematic chain, with capsule-like
// vertex shells per segment. Deterministic in the seed.
struct ToySpec {
    int n_segments = 24;
    int verts_per_segment = 8;
    int shape_dims = 10;
    std::uint64_t seed = 0;
    int regressed_joints = -1;  // default: one per segment
};

BodyModel make_toy_model(const ToySpec& spec);

}  // namespace bodyfit
