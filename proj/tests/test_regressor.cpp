// Keypoint-to-parameters regressor: dense network forward/backward, output
// decoding, and the mean-pose baseline.
//
// Oracles: central finite differences for the backward pass; algebraic
// identities (zero-weight forward = bias, affine behavior with the
// activation disabled); orthonormality of every decoded rotation; and the
// torso-geometry translation recomputed directly.

#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "bodyfit/camera.hpp"
#include "bodyfit/regressor.hpp"
#include "bodyfit/rng.hpp"
#include "helpers.hpp"

using namespace bodyfit;

namespace {

Mlp random_mlp(const std::vector<int>& widths, std::uint64_t seed, bool tanh_hidden = true) {
    Mlp mlp;
    mlp.tanh_hidden = tanh_hidden;
    Rng rng(seed);
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        Eigen::MatrixXd w(widths[i + 1], widths[i]);
        Eigen::VectorXd b(widths[i + 1]);
        for (int r = 0; r < w.rows(); ++r) {
            for (int c = 0; c < w.cols(); ++c) w(r, c) = 0.4 * rng.normal();
            b[r] = 0.2 * rng.normal();
        }
        mlp.weights.push_back(w);
        mlp.biases.push_back(b);
    }
    mlp.validate();
    return mlp;
}

Eigen::VectorXd random_vec(Rng& rng, int n, double scale = 1.0) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = scale * rng.normal();
    return v;
}

}  // namespace

TEST_CASE("mlp: zero weights forward to the bias; shape errors throw") {
    Mlp mlp = random_mlp({5, 7, 4}, 1);
    for (auto& w : mlp.weights) w.setZero();
    Rng rng(2);
    const Eigen::VectorXd x = random_vec(rng, 5);
    const Eigen::VectorXd y = mlp_forward(mlp, x);
    // tanh(b0) feeds zero weights, so only the last bias survives.
    CHECK(testutil::max_abs_diff(y, mlp.biases.back()) == 0.0);

    Mlp broken = random_mlp({5, 7, 4}, 3);
    broken.weights[1] = Eigen::MatrixXd::Zero(4, 6);  // does not chain with 7
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
    CHECK_THROWS_AS(mlp_forward(mlp, random_vec(rng, 6)), std::invalid_argument);
}

TEST_CASE("mlp: affine when the activation is disabled") {
    const Mlp mlp = random_mlp({6, 8, 5, 3}, 4, /*tanh_hidden=*/false);
    Rng rng(5);
    const Eigen::VectorXd x = random_vec(rng, 6);
    const Eigen::VectorXd y = random_vec(rng, 6);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(6);

    const Eigen::VectorXd lhs = mlp_forward(mlp, x + y);
    const Eigen::VectorXd rhs =
        mlp_forward(mlp, x) + mlp_forward(mlp, y) - mlp_forward(mlp, zero);
    CHECK(testutil::max_abs_diff(lhs, rhs) < 1e-12);
}

TEST_CASE("mlp: backward pass matches finite differences and accumulates") {
    const Mlp mlp = random_mlp({5, 7, 6, 4}, 6);
    Rng rng(7);
    const Eigen::VectorXd x = random_vec(rng, 5);
    const Eigen::VectorXd target = random_vec(rng, 4);

    auto loss_of = [&](const Mlp& m) {
        const Eigen::VectorXd out = mlp_forward(m, x);
        return 0.5 * (out - target).squaredNorm();
    };

    std::vector<Eigen::VectorXd> hidden;
    const Eigen::VectorXd out = mlp_forward(mlp, x, &hidden);
    MlpGradients grads = make_zero_gradients(mlp);
    mlp_backward(mlp, x, hidden, out - target, &grads);

    const double h = 1e-6;
    double worst = 0.0;
    for (int layer = 0; layer < mlp.layers(); ++layer) {
        for (int r = 0; r < mlp.weights[layer].rows(); ++r) {
            for (int c = 0; c < mlp.weights[layer].cols(); ++c) {
                Mlp mp = mlp, mm = mlp;
                mp.weights[layer](r, c) += h;
                mm.weights[layer](r, c) -= h;
                const double fd = (loss_of(mp) - loss_of(mm)) / (2.0 * h);
                worst = std::max(worst, std::abs(grads.d_weights[layer](r, c) - fd) /
                                            std::max(1.0, std::abs(fd)));
            }
            Mlp bp = mlp, bm = mlp;
            bp.biases[layer][r] += h;
            bm.biases[layer][r] -= h;
            const double fd = (loss_of(bp) - loss_of(bm)) / (2.0 * h);
            worst = std::max(worst,
                             std::abs(grads.d_biases[layer][r] - fd) / std::max(1.0, std::abs(fd)));
        }
    }
    CHECK(worst < 1e-5);

    // Accumulation: a second backward call doubles every entry.
    MlpGradients twice = make_zero_gradients(mlp);
    mlp_backward(mlp, x, hidden, out - target, &twice);
    mlp_backward(mlp, x, hidden, out - target, &twice);
    for (int layer = 0; layer < mlp.layers(); ++layer) {
        CHECK(testutil::max_abs_diff(twice.d_weights[layer], 2.0 * grads.d_weights[layer]) <
              1e-12);
    }

    // Update rule is exactly w -= rate * scale * dw.
    Mlp updated = mlp;
    apply_gradients(&updated, grads, 0.25, 0.5);
    CHECK(testutil::max_abs_diff(updated.weights[1],
                                 mlp.weights[1] - 0.125 * grads.d_weights[1]) < 1e-15);
}

TEST_CASE("normalize_keypoints: crop mapping and occlusion zeroing") {
    Keypoints2D kp;
    kp.uv.resize(3, 2);
    kp.uv << 0.0, 0.0, 128.0, 128.0, 256.0, 64.0;
    kp.conf.resize(3);
    kp.conf << 1.0, 0.7, 0.0;

    const Eigen::VectorXd x = normalize_keypoints(kp, Eigen::Vector2d(128.0, 128.0), 256.0);
    REQUIRE(x.size() == 9);
    CHECK(x[0] == -1.0);
    CHECK(x[1] == -1.0);
    CHECK(x[2] == 1.0);
    CHECK(x[3] == 0.0);
    CHECK(x[4] == 0.0);
    CHECK(x[5] == 0.7);
    // Unobserved joint contributes nothing, not its stale position.
    CHECK(x[6] == 0.0);
    CHECK(x[7] == 0.0);
    CHECK(x[8] == 0.0);

    CHECK_THROWS_AS(normalize_keypoints(kp, Eigen::Vector2d(128.0, 128.0), 0.0),
                    std::invalid_argument);
}

TEST_CASE("decode: identity encoding, orthonormal rotations, shape clamping") {
    const int joints = 4, b = 3;
    const Eigen::Vector3d anchor(0.5, -0.2, 12.0);

    Eigen::VectorXd raw = Eigen::VectorXd::Zero(6 * joints + b + 3);
    for (int j = 0; j < joints; ++j) {
        raw[6 * j + 0] = 1.0;
        raw[6 * j + 4] = 1.0;
    }
    const RegressorPrediction id = decode_regressor_output(raw, joints, b, anchor);
    CHECK(id.params.theta.cwiseAbs().maxCoeff() == 0.0);
    CHECK(id.params.beta.cwiseAbs().maxCoeff() == 0.0);
    CHECK(testutil::max_abs_diff(id.translation, anchor) == 0.0);

    // Random raw outputs always decode to orthonormal rotations; beta is
    // clamped to the hard bound.
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd r = random_vec(rng, 6 * joints + b + 3);
        r[6 * joints] = 7.3;  // out-of-bounds shape coefficient
        const RegressorPrediction pred = decode_regressor_output(r, joints, b, anchor);
        for (const auto& m : pred.rotations) CHECK(rot::is_rotation(m, 1e-9));
        CHECK(pred.params.beta[0] == kBetaHardBound);
        CHECK(pred.params.beta.cwiseAbs().maxCoeff() <= kBetaHardBound);
        CHECK_NOTHROW(pred.params.validate());
    }

    CHECK_THROWS_AS(decode_regressor_output(raw.head(10), joints, b, anchor),
                    std::invalid_argument);
}

TEST_CASE("regress: mean-pose baseline and the torso-geometry anchor") {
    const BodyModel model = make_toy_model(ToySpec{});
    const Regressor reg = make_mean_pose_regressor(model);

    // Synthetic observation of a posed body.
    Rng rng(9);
    ModelParams gt = ModelParams::zeros(model.num_kinematic_joints(), model.num_shape_dims());
    for (int j = 0; j < gt.num_joints(); ++j) {
        gt.theta.segment<3>(3 * j) = testutil::random_axis_angle(rng, 0.0, 0.25);
    }
    Camera cam;
    cam.translation = Eigen::Vector3d(0.1, -0.2, 17.0);
    Keypoints2D kp;
    kp.uv = project(cam, forward(model, gt).joints);
    kp.conf = Eigen::VectorXd::Ones(model.num_regressed_joints());

    const RegressorPrediction pred = regress(reg, model, kp, cam, 256.0);
    CHECK(pred.params.theta.cwiseAbs().maxCoeff() == 0.0);
    CHECK(pred.params.beta.cwiseAbs().maxCoeff() == 0.0);

    const PosedBody rest =
        forward(model, ModelParams::zeros(model.num_kinematic_joints(), model.num_shape_dims()));
    const Eigen::Vector3d oracle = init_translation(
        kp, rest.joints, cam.focal, cam.principal_point, make_torso_pairs(model.joint_names));
    CHECK(testutil::max_abs_diff(pred.translation, oracle) == 0.0);

    // Occluding the whole torso falls back to the default depth.
    Keypoints2D blind = kp;
    for (const char* name :
         {"left_shoulder", "right_shoulder", "left_hip", "right_hip"}) {
        const int idx = model.joint_index(name);
        REQUIRE(idx >= 0);
        blind.conf[idx] = 0.0;
    }
    const RegressorPrediction fb = regress(reg, model, blind, cam, 256.0);
    CHECK(testutil::max_abs_diff(fb.translation, Eigen::Vector3d(0.0, 0.0, reg.fallback_depth)) ==
          0.0);

    Keypoints2D wrong;
    wrong.uv = Eigen::MatrixX2d::Zero(5, 2);
    wrong.conf = Eigen::VectorXd::Ones(5);
    CHECK_THROWS_AS(regress(reg, model, wrong, cam, 256.0), std::invalid_argument);
}

TEST_CASE("regress: a fresh network predicts exactly the mean pose, per seed") {
    const BodyModel model = make_toy_model(ToySpec{});
    const Regressor mlp_reg = make_mlp_regressor(model, {32, 32}, 42);
    const Regressor mean_reg = make_mean_pose_regressor(model);
    CHECK_NOTHROW(mlp_reg.validate());

    Rng rng(10);
    ModelParams gt = ModelParams::zeros(model.num_kinematic_joints(), model.num_shape_dims());
    for (int j = 0; j < gt.num_joints(); ++j) {
        gt.theta.segment<3>(3 * j) = testutil::random_axis_angle(rng, 0.0, 0.25);
    }
    Camera cam;
    cam.translation = Eigen::Vector3d(0.0, 0.1, 16.0);
    Keypoints2D kp;
    kp.uv = project(cam, forward(model, gt).joints);
    kp.conf = Eigen::VectorXd::Ones(model.num_regressed_joints());

    // Zero output layer + identity bias: identical predictions to mean_pose.
    const RegressorPrediction a = regress(mlp_reg, model, kp, cam, 256.0);
    const RegressorPrediction b = regress(mean_reg, model, kp, cam, 256.0);
    CHECK(testutil::max_abs_diff(a.raw, b.raw) == 0.0);
    CHECK(testutil::max_abs_diff(a.translation, b.translation) == 0.0);

    // Seed determinism, and different seeds give different hidden weights.
    const Regressor again = make_mlp_regressor(model, {32, 32}, 42);
    CHECK(testutil::max_abs_diff(again.mlp.weights[0], mlp_reg.mlp.weights[0]) == 0.0);
    const Regressor other = make_mlp_regressor(model, {32, 32}, 43);
    CHECK(testutil::max_abs_diff(other.mlp.weights[0], mlp_reg.mlp.weights[0]) > 0.0);
}
