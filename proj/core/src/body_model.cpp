#include "bodyfit/body_model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bodyfit/rng.hpp"

namespace bodyfit {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

void check_row_stochastic(const Eigen::MatrixXd& m, const char* what) {
    if ((m.array() < -1e-12).any()) {
        throw std::invalid_argument(std::string(what) + ": negative entries");
    }
    const Eigen::VectorXd sums = m.rowwise().sum();
    if (((sums.array() - 1.0).abs() > 1e-9).any()) {
        throw std::invalid_argument(std::string(what) + ": rows must sum to 1");
    }
}

struct Transform {
    rot::Mat3 r;
    rot::Vec3 t;
};

struct Kinematics {
    Eigen::MatrixX3d shaped;       // N x 3
    Eigen::MatrixX3d rest_joints;  // J x 3
    std::vector<Transform> global; // per kinematic joint
};

Eigen::MatrixX3d shape_mesh(const BodyModel& model, const Eigen::VectorXd& beta) {
    Eigen::MatrixX3d shaped = model.template_vertices;
    if (beta.size() > 0) {
        const Eigen::VectorXd offs = model.shape_dirs * beta;
        shaped += Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>>(
            offs.data(), shaped.rows(), 3);
    }
    return shaped;
}

Kinematics eval_kinematics(const BodyModel& model,
                           const std::vector<rot::Mat3>& rotations,
                           const Eigen::VectorXd& beta) {
    const int joints = model.num_kinematic_joints();
    Kinematics kin;
    kin.shaped = shape_mesh(model, beta);
    kin.rest_joints = model.rest_joint_regressor * kin.shaped;
    kin.global.resize(joints);
    kin.global[0].r = rotations[0];
    kin.global[0].t = kin.rest_joints.row(0).transpose();
    for (int j = 1; j < joints; ++j) {
        const int p = model.parents[j];
        const rot::Vec3 offset = (kin.rest_joints.row(j) - kin.rest_joints.row(p)).transpose();
        kin.global[j].r = kin.global[p].r * rotations[j];
        kin.global[j].t = kin.global[p].r * offset + kin.global[p].t;
    }
    return kin;
}

Eigen::MatrixX3d skin_vertices(const BodyModel& model, const Kinematics& kin) {
    const int n = model.num_vertices();
    const int joints = model.num_kinematic_joints();
    Eigen::MatrixX3d posed = Eigen::MatrixX3d::Zero(n, 3);
    for (int j = 0; j < joints; ++j) {
        const auto w = model.skin_weights.col(j);
        if ((w.array() == 0.0).all()) continue;
        const rot::Vec3 shift = kin.global[j].t - kin.global[j].r * kin.rest_joints.row(j).transpose();
        Eigen::MatrixX3d part = kin.shaped * kin.global[j].r.transpose();
        part.rowwise() += shift.transpose();
        posed += w.asDiagonal() * part;
    }
    return posed;
}

void check_pose_dims(const BodyModel& model, std::size_t rot_count, const Eigen::VectorXd& beta) {
    require(static_cast<int>(rot_count) == model.num_kinematic_joints(),
            "pose has wrong number of joint rotations");
    require(static_cast<int>(beta.size()) == model.num_shape_dims(),
            "beta has wrong number of shape coefficients");
}

}  // namespace

int BodyModel::joint_index(const std::string& name) const {
    for (std::size_t i = 0; i < joint_names.size(); ++i) {
        if (joint_names[i] == name) return static_cast<int>(i);
    }
    return -1;
}

void BodyModel::validate() const {
    const int n = num_vertices();
    const int j = num_kinematic_joints();
    const int k = num_regressed_joints();
    const int b = num_shape_dims();
    require(n >= 4, "model needs at least 4 vertices");
    require(j >= 2, "model needs at least 2 kinematic joints");
    require(b >= 1, "model needs at least 1 shape dimension");
    require(k >= 2, "model needs at least 2 regressed joints");
    require(shape_dirs.rows() == 3 * n, "shape_dirs rows must be 3N");
    require(joint_regressor.cols() == n, "joint_regressor columns must match vertices");
    require(rest_joint_regressor.rows() == j && rest_joint_regressor.cols() == n,
            "rest_joint_regressor must be J x N");
    require(skin_weights.rows() == n && skin_weights.cols() == j, "skin_weights must be N x J");
    require(static_cast<int>(joint_names.size()) == k, "joint_names must match regressed joints");
    require(parents[0] == -1, "parents[0] must be the root sentinel -1");
    for (int i = 1; i < j; ++i) {
        require(parents[i] >= 0 && parents[i] < i, "parents must be topologically ordered");
    }
    require(template_vertices.allFinite() && shape_dirs.allFinite() &&
                joint_regressor.allFinite() && rest_joint_regressor.allFinite() &&
                skin_weights.allFinite(),
            "model arrays must be finite");
    if (faces.size() > 0) {
        require(faces.minCoeff() >= 0 && faces.maxCoeff() < n, "face indices out of range");
    }
    check_row_stochastic(joint_regressor, "joint_regressor");
    check_row_stochastic(rest_joint_regressor, "rest_joint_regressor");
    check_row_stochastic(skin_weights, "skin_weights");
}

ModelParams ModelParams::zeros(int kinematic_joints, int shape_dims) {
    ModelParams p;
    p.theta = Eigen::VectorXd::Zero(3 * kinematic_joints);
    p.beta = Eigen::VectorXd::Zero(shape_dims);
    return p;
}

void ModelParams::validate() const {
    require(theta.size() % 3 == 0, "theta size must be a multiple of 3");
    require(theta.allFinite() && beta.allFinite(), "params must be finite");
    require(beta.size() == 0 || beta.cwiseAbs().maxCoeff() <= kBetaHardBound,
            "beta exceeds the hard sanity bound");
}

std::vector<rot::Mat3> theta_to_rotations(const Eigen::VectorXd& theta) {
    std::vector<rot::Mat3> rotations(theta.size() / 3);
    for (std::size_t j = 0; j < rotations.size(); ++j) {
        rotations[j] = rot::aa_to_matrix(theta.segment<3>(3 * static_cast<int>(j)));
    }
    return rotations;
}

PosedBody posed_from_rotations(const BodyModel& model,
                               const std::vector<rot::Mat3>& rotations,
                               const Eigen::VectorXd& beta) {
    check_pose_dims(model, rotations.size(), beta);
    const Kinematics kin = eval_kinematics(model, rotations, beta);
    PosedBody body;
    body.vertices = skin_vertices(model, kin);
    body.joints = model.joint_regressor * body.vertices;
    return body;
}

Eigen::MatrixX3d joints_from_rotations(const BodyModel& model,
                                       const std::vector<rot::Mat3>& rotations,
                                       const Eigen::VectorXd& beta) {
    return posed_from_rotations(model, rotations, beta).joints;
}

PosedBody forward(const BodyModel& model, const ModelParams& params) {
    params.validate();
    return posed_from_rotations(model, theta_to_rotations(params.theta), params.beta);
}

Eigen::MatrixX3d regress_joints(const BodyModel& model, const Eigen::MatrixX3d& mesh) {
    require(mesh.rows() == model.num_vertices(), "mesh vertex count mismatch");
    return model.joint_regressor * mesh;
}

namespace {

// Shared propagation for d(global transforms)/d(one local rotation entry).
// Walks the descendants of joint m in topological order; calls `accumulate`
// with each affected joint and its global-transform derivative.
template <typename Accumulate>
void propagate_direction(const BodyModel& model, const Kinematics& kin,
                         const std::vector<rot::Mat3>& rotations, int m, int entry,
                         std::vector<char>& affected, std::vector<Transform>& dg,
                         Accumulate&& accumulate) {
    const int joints = model.num_kinematic_joints();
    std::fill(affected.begin(), affected.end(), 0);
    const int row = entry % 3;
    const int col = entry / 3;

    // d(local R_m) = e_row e_col^T; parent transform does not depend on it.
    rot::Mat3 parent_r = rot::Mat3::Identity();
    if (model.parents[m] >= 0) parent_r = kin.global[model.parents[m]].r;
    dg[m].r = rot::Mat3::Zero();
    dg[m].r.col(col) = parent_r.col(row);
    dg[m].t = rot::Vec3::Zero();
    affected[m] = 1;
    accumulate(m, dg[m]);

    for (int j = m + 1; j < joints; ++j) {
        const int p = model.parents[j];
        if (!affected[p]) continue;
        const rot::Vec3 offset = (kin.rest_joints.row(j) - kin.rest_joints.row(p)).transpose();
        dg[j].r = dg[p].r * rotations[j];
        dg[j].t = dg[p].r * offset + dg[p].t;
        affected[j] = 1;
        accumulate(j, dg[j]);
    }
}

}  // namespace

RotationJointsJacobian joints_jacobian_rotations(const BodyModel& model,
                                                 const std::vector<rot::Mat3>& rotations,
                                                 const Eigen::VectorXd& beta) {
    check_pose_dims(model, rotations.size(), beta);
    const int joints = model.num_kinematic_joints();
    const int k = model.num_regressed_joints();
    const int b = model.num_shape_dims();
    const Kinematics kin = eval_kinematics(model, rotations, beta);

    // Per (regressed joint q, kinematic joint j) skinning aggregates:
    // X_q = sum_j [ G_j.r * u_qj + m0_qj * G_j.t ].
    const Eigen::MatrixXd m0 = model.joint_regressor * model.skin_weights;  // k x J
    std::vector<Eigen::MatrixXd> u(3);
    for (int c = 0; c < 3; ++c) {
        u[c] = model.joint_regressor *
               (model.skin_weights.array().colwise() * kin.shaped.col(c).array()).matrix();
        u[c] -= (m0.array().rowwise() * kin.rest_joints.col(c).transpose().array()).matrix();
    }

    RotationJointsJacobian out;
    out.d_rot = Eigen::MatrixXd::Zero(3 * k, 9 * joints);
    std::vector<char> affected(joints);
    std::vector<Transform> dg(joints);
    for (int m = 0; m < joints; ++m) {
        for (int entry = 0; entry < 9; ++entry) {
            auto column = out.d_rot.col(9 * m + entry);
            propagate_direction(model, kin, rotations, m, entry, affected, dg,
                                [&](int j, const Transform& d) {
                                    for (int q = 0; q < k; ++q) {
                                        const rot::Vec3 uq(u[0](q, j), u[1](q, j), u[2](q, j));
                                        column.segment<3>(3 * q) += d.r * uq + m0(q, j) * d.t;
                                    }
                                });
        }
    }

    // Joints are exactly affine in beta at fixed rotations, so columns are
    // plain differences.
    out.d_beta.resize(3 * k, b);
    const Eigen::MatrixX3d base = joints_from_rotations(model, rotations, Eigen::VectorXd::Zero(b));
    for (int i = 0; i < b; ++i) {
        const Eigen::MatrixX3d shifted =
            joints_from_rotations(model, rotations, Eigen::VectorXd::Unit(b, i));
        const Eigen::MatrixX3d diff = shifted - base;
        for (int q = 0; q < k; ++q) {
            out.d_beta.block<3, 1>(3 * q, i) = diff.row(q).transpose();
        }
    }
    return out;
}

MeshJacobian mesh_jacobian_rotations(const BodyModel& model,
                                     const std::vector<rot::Mat3>& rotations,
                                     const Eigen::VectorXd& beta) {
    check_pose_dims(model, rotations.size(), beta);
    const int joints = model.num_kinematic_joints();
    const int n = model.num_vertices();
    const int b = model.num_shape_dims();
    const Kinematics kin = eval_kinematics(model, rotations, beta);

    // Vertex lists per kinematic joint (skin weights are typically sparse).
    std::vector<std::vector<int>> bound(joints);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < joints; ++j) {
            if (model.skin_weights(i, j) != 0.0) bound[j].push_back(i);
        }
    }

    MeshJacobian out;
    out.d_rot = Eigen::MatrixXd::Zero(3 * n, 9 * joints);
    std::vector<char> affected(joints);
    std::vector<Transform> dg(joints);
    for (int m = 0; m < joints; ++m) {
        for (int entry = 0; entry < 9; ++entry) {
            auto column = out.d_rot.col(9 * m + entry);
            propagate_direction(model, kin, rotations, m, entry, affected, dg,
                                [&](int j, const Transform& d) {
                                    const rot::Vec3 rest = kin.rest_joints.row(j).transpose();
                                    for (int i : bound[j]) {
                                        const rot::Vec3 v = kin.shaped.row(i).transpose() - rest;
                                        column.segment<3>(3 * i) +=
                                            model.skin_weights(i, j) * (d.r * v + d.t);
                                    }
                                });
        }
    }

    out.d_beta.resize(3 * n, b);
    const Eigen::MatrixX3d base =
        posed_from_rotations(model, rotations, Eigen::VectorXd::Zero(b)).vertices;
    for (int i = 0; i < b; ++i) {
        const Eigen::MatrixX3d shifted =
            posed_from_rotations(model, rotations, Eigen::VectorXd::Unit(b, i)).vertices;
        for (int v = 0; v < n; ++v) {
            out.d_beta.block<3, 1>(3 * v, i) = (shifted.row(v) - base.row(v)).transpose();
        }
    }
    return out;
}

JointsJacobian forward_jacobian(const BodyModel& model, const ModelParams& params) {
    params.validate();
    const std::vector<rot::Mat3> rotations = theta_to_rotations(params.theta);
    const RotationJointsJacobian rj = joints_jacobian_rotations(model, rotations, params.beta);
    const int joints = model.num_kinematic_joints();
    JointsJacobian out;
    out.d_theta.resize(rj.d_rot.rows(), 3 * joints);
    for (int m = 0; m < joints; ++m) {
        out.d_theta.middleCols<3>(3 * m) =
            rj.d_rot.middleCols<9>(9 * m) * rot::d_matrix_d_aa(params.joint_aa(m));
    }
    out.d_beta = rj.d_beta;
    return out;
}

// ---------------------------------------------------------------------------
// Toy model generation
// ---------------------------------------------------------------------------

namespace {

struct Skeleton {
    std::vector<rot::Vec3> joints;
    std::vector<int> parents;
    std::vector<std::string> names;
};

Skeleton humanoid_skeleton() {
    // 24-joint tree with the pelvis at the origin, up is +y, meters.
    Skeleton s;
    const struct {
        const char* name;
        int parent;
        double x, y, z;
    } table[] = {
        {"pelvis", -1, 0.00, 0.00, 0.00},
        {"left_hip", 0, 0.09, -0.04, 0.00},
        {"right_hip", 0, -0.09, -0.04, 0.00},
        {"spine1", 0, 0.00, 0.10, 0.00},
        {"left_knee", 1, 0.10, -0.45, 0.00},
        {"right_knee", 2, -0.10, -0.45, 0.00},
        {"spine2", 3, 0.00, 0.20, 0.00},
        {"left_ankle", 4, 0.11, -0.85, 0.00},
        {"right_ankle", 5, -0.11, -0.85, 0.00},
        {"spine3", 6, 0.00, 0.30, 0.00},
        {"left_foot", 7, 0.12, -0.93, 0.10},
        {"right_foot", 8, -0.12, -0.93, 0.10},
        {"neck", 9, 0.00, 0.45, 0.00},
        {"left_collar", 9, 0.07, 0.40, 0.00},
        {"right_collar", 9, -0.07, 0.40, 0.00},
        {"head", 12, 0.00, 0.60, 0.00},
        {"left_shoulder", 13, 0.18, 0.40, 0.00},
        {"right_shoulder", 14, -0.18, 0.40, 0.00},
        {"left_elbow", 16, 0.44, 0.40, 0.00},
        {"right_elbow", 17, -0.44, 0.40, 0.00},
        {"left_wrist", 18, 0.68, 0.40, 0.00},
        {"right_wrist", 19, -0.68, 0.40, 0.00},
        {"left_hand", 20, 0.76, 0.40, 0.00},
        {"right_hand", 21, -0.76, 0.40, 0.00},
    };
    for (const auto& row : table) {
        s.names.emplace_back(row.name);
        s.parents.push_back(row.parent);
        s.joints.emplace_back(row.x, row.y, row.z);
    }
    return s;
}

Skeleton chain_skeleton(int n, Rng& rng) {
    Skeleton s;
    rot::Vec3 pos(0.0, 0.0, 0.0);
    rot::Vec3 dir(0.0, 1.0, 0.0);
    for (int i = 0; i < n; ++i) {
        s.names.push_back("joint_" + std::to_string(i));
        s.parents.push_back(i - 1);
        s.joints.push_back(pos);
        // Bend the chain a little each step so the rest pose is not collinear.
        const rot::Vec3 bend(rng.uniform(-0.35, 0.35), 0.0, rng.uniform(-0.35, 0.35));
        dir = (dir + bend).normalized();
        pos += dir * rng.uniform(0.12, 0.20);
    }
    return s;
}

Eigen::MatrixXd gaussian_point_regressor(const Eigen::MatrixX3d& verts,
                                         const std::vector<rot::Vec3>& targets,
                                         const std::vector<double>& sigma) {
    const int rows = static_cast<int>(targets.size());
    Eigen::MatrixXd reg(rows, verts.rows());
    for (int q = 0; q < rows; ++q) {
        for (int i = 0; i < verts.rows(); ++i) {
            const double d2 = (verts.row(i).transpose() - targets[q]).squaredNorm();
            reg(q, i) = std::exp(-d2 / (2.0 * sigma[q] * sigma[q]));
        }
        reg.row(q) /= reg.row(q).sum();
    }
    return reg;
}

}  // namespace

BodyModel make_toy_model(const ToySpec& spec) {
    require(spec.n_segments >= 2, "toy model needs at least 2 segments");
    require(spec.verts_per_segment >= 4, "toy model needs at least 4 vertices per segment");
    require(spec.shape_dims >= 1, "toy model needs at least 1 shape dimension");
    const int k = spec.regressed_joints < 0 ? spec.n_segments : spec.regressed_joints;
    require(k >= 2 && k <= spec.n_segments, "regressed joint count out of range");

    Rng rng(spec.seed);
    Skeleton skel = spec.n_segments == 24 ? humanoid_skeleton() : chain_skeleton(spec.n_segments, rng);
    const int joints = spec.n_segments;
    const int m = spec.verts_per_segment;
    const int n = joints * m;

    // Bone of joint j runs toward the mean of its children (or extrapolates
    // past a leaf).
    std::vector<std::vector<int>> children(joints);
    for (int j = 1; j < joints; ++j) children[skel.parents[j]].push_back(j);
    std::vector<rot::Vec3> bone_end(joints);
    for (int j = 0; j < joints; ++j) {
        if (children[j].empty()) {
            const rot::Vec3 from = skel.parents[j] >= 0 ? skel.joints[skel.parents[j]] : rot::Vec3(0, -1, 0);
            rot::Vec3 dir = skel.joints[j] - from;
            if (dir.norm() < 1e-9) dir = rot::Vec3(0, 1, 0);
            bone_end[j] = skel.joints[j] + 0.4 * dir;
        } else {
            bone_end[j] = rot::Vec3::Zero();
            for (int c : children[j]) bone_end[j] += skel.joints[c];
            bone_end[j] /= static_cast<double>(children[j].size());
        }
    }

    BodyModel model;
    model.template_vertices.resize(n, 3);
    model.skin_weights = Eigen::MatrixXd::Zero(n, joints);
    model.faces.resize(joints * std::max(0, m - 2), 3);

    int face_row = 0;
    constexpr double kGoldenAngle = 2.39996322972865332;
    for (int j = 0; j < joints; ++j) {
        const rot::Vec3 start = skel.joints[j];
        rot::Vec3 axis = bone_end[j] - start;
        double bone_len = axis.norm();
        if (bone_len < 1e-9) {
            axis = rot::Vec3(0, 1, 0);
            bone_len = 0.1;
        } else {
            axis /= bone_len;
        }
        rot::Vec3 ref = std::abs(axis.y()) < 0.9 ? rot::Vec3(0, 1, 0) : rot::Vec3(1, 0, 0);
        const rot::Vec3 n1 = axis.cross(ref).normalized();
        const rot::Vec3 n2 = axis.cross(n1);
        const double radius = rng.uniform(0.035, 0.055);
        const double phase = rng.uniform(0.0, 2.0 * M_PI);

        const int child = children[j].empty() ? -1 : children[j].front();
        for (int v = 0; v < m; ++v) {
            const double frac = (v + 0.5) / m;
            const double angle = phase + kGoldenAngle * v;
            const double r = radius * rng.uniform(0.9, 1.1);
            const rot::Vec3 p = start + frac * bone_len * axis +
                                r * (std::cos(angle) * n1 + std::sin(angle) * n2);
            model.template_vertices.row(j * m + v) = p.transpose();

            // Blend between the segment joint and the bone-end child.
            const double wc = child >= 0 ? 0.5 * frac : 0.0;
            model.skin_weights(j * m + v, j) = 1.0 - wc;
            if (child >= 0) model.skin_weights(j * m + v, child) = wc;
        }
        for (int v = 0; v + 2 < m; ++v) {
            model.faces.row(face_row++) << j * m + v, j * m + v + 1, j * m + v + 2;
        }
    }

    model.parents.resize(joints);
    for (int j = 0; j < joints; ++j) model.parents[j] = skel.parents[j];

    std::vector<double> sigma(joints);
    for (int j = 0; j < joints; ++j) {
        sigma[j] = std::max(0.04, 0.6 * (bone_end[j] - skel.joints[j]).norm());
    }
    model.rest_joint_regressor = gaussian_point_regressor(model.template_vertices, skel.joints, sigma);

    std::vector<rot::Vec3> targets(skel.joints.begin(), skel.joints.begin() + k);
    std::vector<double> tsig(sigma.begin(), sigma.begin() + k);
    model.joint_regressor = gaussian_point_regressor(model.template_vertices, targets, tsig);
    model.joint_names.assign(skel.names.begin(), skel.names.begin() + k);

    // Shape basis: overall scale, height stretch, then smooth seeded bumps
    // whose magnitudes taper like a PCA spectrum (leading components carry
    // most of the metric variation, higher ones are small local adjustments).
    model.shape_dirs = Eigen::MatrixXd::Zero(3 * n, spec.shape_dims);
    const rot::Vec3 centroid = model.template_vertices.colwise().mean().transpose();
    for (int i = 0; i < n; ++i) {
        const rot::Vec3 p = model.template_vertices.row(i).transpose();
        model.shape_dirs.block<3, 1>(3 * i, 0) = 0.03 * (p - centroid);
        if (spec.shape_dims > 1) {
            model.shape_dirs(3 * i + 1, 1) = 0.03 * (p.y() - centroid.y());
        }
    }
    for (int bnum = 2; bnum < spec.shape_dims; ++bnum) {
        const rot::Vec3 center = skel.joints[rng.index(joints)];
        rot::Vec3 dir(rng.normal(), rng.normal(), rng.normal());
        dir.normalize();
        const double amplitude = 0.03 / bnum;
        for (int i = 0; i < n; ++i) {
            const double d2 = (model.template_vertices.row(i).transpose() - center).squaredNorm();
            model.shape_dirs.block<3, 1>(3 * i, bnum) = amplitude * std::exp(-d2 / 0.08) * dir;
        }
    }

    model.validate();
    return model;
}

}  // namespace bodyfit
