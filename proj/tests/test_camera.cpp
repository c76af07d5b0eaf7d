#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "bodyfit/body_model.hpp"
#include "bodyfit/camera.hpp"
#include "bodyfit/rng.hpp"
#include "helpers.hpp"

using namespace bodyfit;
using Eigen::Vector2d;
using Eigen::Vector3d;

namespace {

// Independent oracle: homogeneous 3x4 projection matrix.
Vector2d homogeneous_oracle(const Camera& cam, const Vector3d& x) {
    Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
    k(0, 0) = k(1, 1) = cam.focal;
    k(0, 2) = cam.principal_point.x();
    k(1, 2) = cam.principal_point.y();
    Eigen::Matrix<double, 3, 4> rt;
    rt << Eigen::Matrix3d::Identity(), cam.translation;
    const Eigen::Vector3d h = k * rt * x.homogeneous();
    return h.hnormalized();
}

}  // namespace

TEST_SUITE("camera") {

TEST_CASE("projection basics") {
    Camera cam;
    cam.focal = 500.0;
    cam.principal_point = Vector2d(0.0, 0.0);
    cam.translation = Vector3d(0.0, 0.0, 2.0);

    Eigen::MatrixX3d pts(2, 3);
    pts << 0, 0, 5,   // on the optical axis
           1, 0, 0;   // offset point at depth 2
    const Eigen::MatrixX2d uv = project(cam, pts);
    CHECK(uv.row(0).norm() == 0.0);  // any on-axis depth hits the principal point
    CHECK(testutil::max_abs_diff(uv.row(1), Eigen::RowVector2d(250.0, 0.0)) < 1e-12);

    Eigen::MatrixX3d behind(1, 3);
    behind << 0, 0, -3;
    CHECK_THROWS_AS(project(cam, behind), std::domain_error);
}

TEST_CASE("projection matches homogeneous-matrix oracle") {
    Rng rng(61);
    Camera cam;
    cam.focal = 1200.0;
    cam.principal_point = Vector2d(320.0, 240.0);
    cam.translation = Vector3d(0.2, -0.1, 4.0);
    for (int i = 0; i < 200; ++i) {
        const Vector3d x(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-2, 2));
        Eigen::MatrixX3d pts(1, 3);
        pts.row(0) = x.transpose();
        const Eigen::MatrixX2d uv = project(cam, pts);
        CHECK(testutil::max_abs_diff(uv.row(0).transpose(), homogeneous_oracle(cam, x)) < 1e-10);
    }
}

TEST_CASE("projection is scale covariant") {
    Rng rng(67);
    Camera cam;
    cam.translation = Vector3d(0.1, 0.3, 3.0);
    Eigen::MatrixX3d pts(5, 3);
    for (int i = 0; i < pts.size(); ++i) pts(i / 3, i % 3) = 0.5 * rng.normal();
    const Eigen::MatrixX2d base = project(cam, pts);
    for (double s : {0.5, 2.0, 7.3}) {
        Camera scaled = cam;
        scaled.translation *= s;
        CHECK(testutil::max_abs_diff(project(scaled, (pts * s).eval()), base) < 1e-9);
    }
}

TEST_CASE("projection jacobian matches finite differences") {
    Camera cam;
    cam.focal = 900.0;
    cam.principal_point = Vector2d(100.0, 120.0);
    cam.translation = Vector3d(0.05, -0.3, 2.5);
    Rng rng(71);

    Eigen::MatrixX3d pts(6, 3);
    for (int i = 0; i < pts.size(); ++i) pts(i / 3, i % 3) = 0.4 * rng.normal();
    pts.row(5) = (-cam.translation).transpose() + Vector3d(0, 0, 3).transpose();  // on-axis

    const ProjectionJacobian jac = project_jacobian(cam, pts);
    const double h = 1e-6;
    for (int i = 0; i < pts.rows(); ++i) {
        for (int c = 0; c < 3; ++c) {
            Eigen::MatrixX3d hi = pts, lo = pts;
            hi(i, c) += h;
            lo(i, c) -= h;
            const Vector2d fd =
                (project(cam, hi).row(i) - project(cam, lo).row(i)).transpose() / (2 * h);
            const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
            CHECK(testutil::max_abs_diff(jac.blocks[i].col(c), fd) / scale < 1e-5);
        }
    }
    // Depth-only motion of the on-axis point produces no image motion.
    CHECK(jac.blocks[5].col(2).norm() == 0.0);

    // The translation derivative coincides with the point derivative.
    Eigen::Matrix<double, 2, 3> d_x;
    Eigen::Vector2d uv;
    REQUIRE(try_project_point(cam, pts.row(0).transpose(), &uv, &d_x));
    Camera bumped = cam;
    bumped.translation.x() += h;
    const Vector2d fd_t = (project(bumped, pts).row(0) - project(cam, pts).row(0)).transpose() / h;
    CHECK(testutil::max_abs_diff(d_x.col(0), fd_t) < 1e-4);
}

TEST_CASE("translation init recovers depth from projected torso") {
    const BodyModel model = make_toy_model(ToySpec{});
    const Eigen::MatrixX3d rest = model.joint_regressor * model.template_vertices;
    const auto pairs = make_torso_pairs(model.joint_names);
    REQUIRE(pairs.size() == 2);

    Camera cam;  // focal 5000, principal point (128, 128)
    cam.translation = Vector3d(0.12, -0.25, 18.0);
    Keypoints2D kp;
    kp.uv = project(cam, rest);
    kp.conf = Eigen::VectorXd::Ones(rest.rows());

    const Vector3d t = init_translation(kp, rest, cam.focal, cam.principal_point, pairs);
    CHECK(std::abs(t.z() - cam.translation.z()) / cam.translation.z() < 0.05);
    CHECK(std::abs(t.x() - cam.translation.x()) < 0.1);
    CHECK(std::abs(t.y() - cam.translation.y()) < 0.1);
}

TEST_CASE("translation init is exact for a fronto-parallel torso") {
    // Hand-built torso whose four joints share one body-frame depth.
    Eigen::MatrixX3d joints(4, 3);
    joints << 0.2, 0.5, 0.07,
             -0.2, 0.5, 0.07,
              0.1, 0.0, 0.07,
             -0.1, 0.0, 0.07;
    const std::vector<std::pair<int, int>> pairs{{0, 1}, {2, 3}};

    Camera cam;
    cam.focal = 5000.0;
    cam.principal_point = Vector2d(128.0, 128.0);
    cam.translation = Vector3d(0.3, -0.1, 7.0);
    Keypoints2D kp;
    kp.uv = project(cam, joints);
    kp.conf = Eigen::VectorXd::Ones(4);

    const Vector3d t = init_translation(kp, joints, cam.focal, cam.principal_point, pairs);
    CHECK(testutil::max_abs_diff(t, cam.translation) < 1e-6);

    // Doubling the focal doubles the recovered depth of the torso plane.
    const Vector3d t2 = init_translation(kp, joints, 2.0 * cam.focal, cam.principal_point, pairs);
    CHECK(std::abs((t2.z() + 0.07) - 2.0 * (t.z() + 0.07)) < 1e-9);

    // Doubling all pixel lengths about the principal point halves it.
    Keypoints2D wide = kp;
    wide.uv = ((kp.uv.rowwise() - cam.principal_point.transpose()) * 2.0).rowwise() +
              cam.principal_point.transpose();
    const Vector3d t3 = init_translation(wide, joints, cam.focal, cam.principal_point, pairs);
    CHECK(std::abs((t3.z() + 0.07) - 0.5 * (t.z() + 0.07)) < 1e-9);

    // All torso joints unobserved: explicit failure.
    Keypoints2D blind = kp;
    blind.conf.setZero();
    CHECK_THROWS_AS(init_translation(blind, joints, cam.focal, cam.principal_point, pairs),
                    std::runtime_error);
}

TEST_CASE("keypoint and camera validation") {
    Keypoints2D kp;
    kp.uv = Eigen::MatrixX2d::Zero(3, 2);
    kp.conf = Eigen::VectorXd::Ones(3);
    CHECK_NOTHROW(kp.validate());
    kp.conf[1] = 1.5;
    CHECK_THROWS_AS(kp.validate(), std::invalid_argument);
    kp.conf[1] = 0.0;
    kp.uv(1, 0) = std::nan("");  // unobserved joints may carry garbage
    CHECK_NOTHROW(kp.validate());
    kp.conf[1] = 0.5;
    CHECK_THROWS_AS(kp.validate(), std::invalid_argument);

    Camera cam;
    CHECK_NOTHROW(cam.validate());
    cam.focal = -1.0;
    CHECK_THROWS_AS(cam.validate(), std::invalid_argument);
    cam.focal = 500.0;
    cam.translation.z() = -2.0;
    CHECK_THROWS_AS(cam.validate(), std::invalid_argument);
}

}  // TEST_SUITE
