#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

namespace bodyfit {

// Perspective camera with fixed intrinsics. The body root's position in the
// camera frame is the only extrinsic unknown; global orientation lives in the
// pose parameters instead of a camera rotation.
struct Camera {
    double focal = 5000.0;
    Eigen::Vector2d principal_point{128.0, 128.0};
    Eigen::Vector3d translation{0.0, 0.0, 5.0};

    void validate() const;
};

// 2D joint detections with per-joint confidences in [0, 1]. A confidence of
// zero marks the joint unobserved; its coordinates are ignored.
struct Keypoints2D {
    Eigen::MatrixX2d uv;
    Eigen::VectorXd conf;

    int count() const { return static_cast<int>(uv.rows()); }
    void validate() const;
};

// Minimum camera-frame depth for a point to be considered in front of the
// camera.
inline constexpr double kMinDepth = 1e-6;

// Projects one camera-frame point. Returns false (outputs untouched) when the
// depth is at or below kMinDepth. d_x, when given, receives d(uv)/d(point);
// the projection depends on point + translation, so the same block is also
// d(uv)/d(translation).
bool try_project_point(const Camera& cam, const Eigen::Vector3d& body_point,
                       Eigen::Vector2d* uv, Eigen::Matrix<double, 2, 3>* d_x = nullptr);

// Projects body-frame points (translation added inside). Throws
// std::domain_error if any point lands at or behind the camera plane.
Eigen::MatrixX2d project(const Camera& cam, const Eigen::MatrixX3d& points);

struct ProjectionJacobian {
    // One 2x3 block per point; equals both d(uv)/d(point) and
    // d(uv)/d(translation).
    std::vector<Eigen::Matrix<double, 2, 3>> blocks;
};

ProjectionJacobian project_jacobian(const Camera& cam, const Eigen::MatrixX3d& points);

// Index pairs used by the similar-triangles translation initializer,
// conventionally the shoulder and hip segments. Built by name lookup; pairs
// whose joints are missing from the model are dropped.
std::vector<std::pair<int, int>> make_torso_pairs(const std::vector<std::string>& joint_names);

// Depth from similar triangles on the torso segments, then x/y chosen so the
// projected torso centroid matches the observed one. Throws std::runtime_error
// when no torso pair has both joints observed (callers fall back to another
// translation source).
Eigen::Vector3d init_translation(const Keypoints2D& keypoints,
                                 const Eigen::MatrixX3d& rest_joints, double focal,
                                 const Eigen::Vector2d& principal_point,
                                 const std::vector<std::pair<int, int>>& torso_pairs);

}  // namespace bodyfit
