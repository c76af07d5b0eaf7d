#include "bodyfit/camera.hpp"

#include <cmath>
#include <stdexcept>

namespace bodyfit {

void Camera::validate() const {
    if (!(focal > 0.0)) throw std::invalid_argument("camera focal must be positive");
    if (!principal_point.allFinite() || !translation.allFinite()) {
        throw std::invalid_argument("camera parameters must be finite");
    }
    if (!(translation.z() > 0.0)) {
        throw std::invalid_argument("camera translation must place the body in front (z > 0)");
    }
}

void Keypoints2D::validate() const {
    if (conf.size() != uv.rows()) throw std::invalid_argument("keypoint confidence size mismatch");
    for (int i = 0; i < conf.size(); ++i) {
        if (!(conf[i] >= 0.0 && conf[i] <= 1.0)) {
            throw std::invalid_argument("keypoint confidences must lie in [0, 1]");
        }
        if (conf[i] > 0.0 && !uv.row(i).allFinite()) {
            throw std::invalid_argument("observed keypoints must be finite");
        }
    }
}

bool try_project_point(const Camera& cam, const Eigen::Vector3d& body_point,
                       Eigen::Vector2d* uv, Eigen::Matrix<double, 2, 3>* d_x) {
    const Eigen::Vector3d q = body_point + cam.translation;
    if (!(q.z() > kMinDepth)) return false;
    const double inv_z = 1.0 / q.z();
    if (uv) {
        *uv = cam.focal * inv_z * q.head<2>() + cam.principal_point;
    }
    if (d_x) {
        const double f_inv_z = cam.focal * inv_z;
        *d_x << f_inv_z, 0.0, -f_inv_z * q.x() * inv_z,
                0.0, f_inv_z, -f_inv_z * q.y() * inv_z;
    }
    return true;
}

Eigen::MatrixX2d project(const Camera& cam, const Eigen::MatrixX3d& points) {
    Eigen::MatrixX2d out(points.rows(), 2);
    for (int i = 0; i < points.rows(); ++i) {
        Eigen::Vector2d uv;
        if (!try_project_point(cam, points.row(i).transpose(), &uv)) {
            throw std::domain_error("project: point at or behind the camera plane");
        }
        out.row(i) = uv.transpose();
    }
    return out;
}

ProjectionJacobian project_jacobian(const Camera& cam, const Eigen::MatrixX3d& points) {
    ProjectionJacobian jac;
    jac.blocks.resize(points.rows());
    for (int i = 0; i < points.rows(); ++i) {
        Eigen::Vector2d uv;
        if (!try_project_point(cam, points.row(i).transpose(), &uv, &jac.blocks[i])) {
            throw std::domain_error("project_jacobian: point at or behind the camera plane");
        }
    }
    return jac;
}

std::vector<std::pair<int, int>> make_torso_pairs(const std::vector<std::string>& joint_names) {
    auto find = [&](const char* name) {
        for (std::size_t i = 0; i < joint_names.size(); ++i) {
            if (joint_names[i] == name) return static_cast<int>(i);
        }
        return -1;
    };
    std::vector<std::pair<int, int>> pairs;
    const int ls = find("left_shoulder"), rs = find("right_shoulder");
    const int lh = find("left_hip"), rh = find("right_hip");
    if (ls >= 0 && rs >= 0) pairs.emplace_back(ls, rs);
    if (lh >= 0 && rh >= 0) pairs.emplace_back(lh, rh);
    return pairs;
}

Eigen::Vector3d init_translation(const Keypoints2D& keypoints,
                                 const Eigen::MatrixX3d& rest_joints, double focal,
                                 const Eigen::Vector2d& principal_point,
                                 const std::vector<std::pair<int, int>>& torso_pairs) {
    keypoints.validate();
    double len3 = 0.0, len2 = 0.0;
    Eigen::Vector3d centroid3 = Eigen::Vector3d::Zero();
    Eigen::Vector2d centroid2 = Eigen::Vector2d::Zero();
    int used = 0;
    for (const auto& [a, b] : torso_pairs) {
        if (a < 0 || b < 0 || a >= keypoints.count() || b >= keypoints.count()) continue;
        if (!(keypoints.conf[a] > 0.0 && keypoints.conf[b] > 0.0)) continue;
        len3 += (rest_joints.row(a) - rest_joints.row(b)).norm();
        len2 += (keypoints.uv.row(a) - keypoints.uv.row(b)).norm();
        centroid3 += (rest_joints.row(a) + rest_joints.row(b)).transpose();
        centroid2 += (keypoints.uv.row(a) + keypoints.uv.row(b)).transpose();
        used += 2;
    }
    if (used == 0) throw std::runtime_error("init_translation: no torso pair fully observed");
    if (!(len2 > 1e-9)) throw std::runtime_error("init_translation: degenerate 2D torso extent");
    centroid3 /= used;
    centroid2 /= used;

    // Similar triangles give the depth of the torso plane; subtract the
    // body-frame depth of the torso to get the root translation.
    const double depth = focal * (len3 / len2);
    Eigen::Vector3d t;
    t.z() = depth - centroid3.z();
    t.x() = (centroid2.x() - principal_point.x()) * depth / focal - centroid3.x();
    t.y() = (centroid2.y() - principal_point.y()) * depth / focal - centroid3.y();
    return t;
}

}  // namespace bodyfit
