#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "bodyfit/body_model.hpp"
#include "bodyfit/camera.hpp"
#include "bodyfit/rotations.hpp"

namespace bodyfit {

// Dense multi-layer perceptron: tanh on hidden layers, identity on the
// output layer. Weight matrices are (out x in). The activation can be
// switched off (making the network affine) for linearity tests.
struct Mlp {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    bool tanh_hidden = true;

    int layers() const { return static_cast<int>(weights.size()); }
    int input_dim() const { return layers() ? static_cast<int>(weights.front().cols()) : 0; }
    int output_dim() const { return layers() ? static_cast<int>(weights.back().rows()) : 0; }

    // Throws std::invalid_argument on inconsistent layer shapes or
    // non-finite parameters.
    void validate() const;
};

// Forward pass. If `hidden` is non-null it receives the post-activation
// output of every hidden layer (required input for mlp_backward).
Eigen::VectorXd mlp_forward(const Mlp& mlp, const Eigen::VectorXd& input,
                            std::vector<Eigen::VectorXd>* hidden = nullptr);

struct MlpGradients {
    std::vector<Eigen::MatrixXd> d_weights;
    std::vector<Eigen::VectorXd> d_biases;
};

MlpGradients make_zero_gradients(const Mlp& mlp);

// Accumulates d(loss)/d(weights) into `grads` given d(loss)/d(output).
// `hidden` must come from mlp_forward on the same input.
void mlp_backward(const Mlp& mlp, const Eigen::VectorXd& input,
                  const std::vector<Eigen::VectorXd>& hidden, const Eigen::VectorXd& d_output,
                  MlpGradients* grads);

// Gradient-descent update: w -= rate * scale * dw (scale is typically
// 1 / batch size). `weight_decay` shrinks the weight matrices by
// (1 - rate * weight_decay) per update; biases are exempt, so with an
// output bias initialized to the mean pose, decay pulls predictions
// toward that pose rather than toward zero.
void apply_gradients(Mlp* mlp, const MlpGradients& grads, double rate, double scale = 1.0,
                     double weight_decay = 0.0);

// Parameter regressor: maps normalized 2D keypoints to body parameters.
// Output layout: 6 values per kinematic joint (two-column rotation
// encoding), then shape coefficients, then a translation offset added to a
// torso-geometry anchor.
struct Regressor {
    enum class Variant { mean_pose, mlp };
    Variant variant = Variant::mean_pose;
    int joints = 0;
    int shape_dims = 0;
    int keypoint_count = 0;
    double fallback_depth = 18.0;  // anchor depth when the torso is occluded
    Mlp mlp;                       // used by the mlp variant only

    int input_dim() const { return 3 * keypoint_count; }
    int output_dim() const { return 6 * joints + shape_dims + 3; }
    void validate() const;
};

Regressor make_mean_pose_regressor(const BodyModel& model);

// Seeded MLP: tanh hidden layers of the given widths, 1/sqrt(fan_in) random
// weights, except the output layer which starts at zero with a bias encoding
// the identity rotation for every joint, zero shape, zero translation
// offset — so a fresh network predicts exactly the mean pose.
Regressor make_mlp_regressor(const BodyModel& model, const std::vector<int>& hidden = {64, 64},
                             std::uint64_t seed = 0);

// Keypoints mapped to [-1, 1] crop coordinates with confidences appended:
// (u, v, conf) per joint, flattened. Unobserved joints (conf <= 0) are
// zeroed entirely so occlusion does not leak arbitrary positions.
Eigen::VectorXd normalize_keypoints(const Keypoints2D& keypoints,
                                    const Eigen::Vector2d& principal_point, double crop_size);

struct RegressorPrediction {
    Eigen::VectorXd raw;               // network output, 6J + B + 3
    std::vector<rot::Mat3> rotations;  // decoded per-joint rotations
    ModelParams params;                // axis-angle theta; beta clamped to the hard bound
    Eigen::Vector3d translation;       // anchor + raw offset
    Eigen::Vector3d anchor;
};

// Decodes a raw output vector (rotation columns -> orthonormal matrices,
// beta clamped to +-kBetaHardBound, translation = anchor + offset).
RegressorPrediction decode_regressor_output(const Eigen::VectorXd& raw, int joints,
                                            int shape_dims, const Eigen::Vector3d& anchor);

// Torso-geometry translation estimate on the mean shape, or
// (0, 0, fallback_depth) when no torso pair is observed.
Eigen::Vector3d translation_anchor(const Regressor& regressor, const BodyModel& model,
                                   const Keypoints2D& keypoints, const Camera& intrinsics);

// Full prediction: normalize -> network (or constant) -> decode, with the
// translation anchored at translation_anchor().
RegressorPrediction regress(const Regressor& regressor, const BodyModel& model,
                            const Keypoints2D& keypoints, const Camera& intrinsics,
                            double crop_size);

}  // namespace bodyfit
