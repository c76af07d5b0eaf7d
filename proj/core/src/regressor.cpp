#include "bodyfit/regressor.hpp"

#include <cmath>
#include <stdexcept>

#include "bodyfit/rng.hpp"

namespace bodyfit {

void Mlp::validate() const {
    if (weights.size() != biases.size()) {
        throw std::invalid_argument("mlp weight/bias layer counts differ");
    }
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (biases[i].size() != weights[i].rows()) {
            throw std::invalid_argument("mlp bias size does not match its layer");
        }
        if (i > 0 && weights[i].cols() != weights[i - 1].rows()) {
            throw std::invalid_argument("mlp consecutive layer shapes do not chain");
        }
        if (!weights[i].allFinite() || !biases[i].allFinite()) {
            throw std::invalid_argument("mlp parameters must be finite");
        }
    }
}

Eigen::VectorXd mlp_forward(const Mlp& mlp, const Eigen::VectorXd& input,
                            std::vector<Eigen::VectorXd>* hidden) {
    if (mlp.layers() == 0) throw std::invalid_argument("mlp has no layers");
    if (input.size() != mlp.input_dim()) {
        throw std::invalid_argument("mlp input dimension mismatch");
    }
    if (hidden) hidden->clear();
    Eigen::VectorXd a = input;
    for (int i = 0; i < mlp.layers(); ++i) {
        Eigen::VectorXd z = mlp.weights[i] * a + mlp.biases[i];
        const bool is_hidden = i + 1 < mlp.layers();
        if (is_hidden && mlp.tanh_hidden) z = z.array().tanh();
        if (is_hidden && hidden) hidden->push_back(z);
        a = std::move(z);
    }
    return a;
}

MlpGradients make_zero_gradients(const Mlp& mlp) {
    MlpGradients g;
    for (int i = 0; i < mlp.layers(); ++i) {
        g.d_weights.push_back(Eigen::MatrixXd::Zero(mlp.weights[i].rows(), mlp.weights[i].cols()));
        g.d_biases.push_back(Eigen::VectorXd::Zero(mlp.biases[i].size()));
    }
    return g;
}

void mlp_backward(const Mlp& mlp, const Eigen::VectorXd& input,
                  const std::vector<Eigen::VectorXd>& hidden, const Eigen::VectorXd& d_output,
                  MlpGradients* grads) {
    const int layers = mlp.layers();
    if (static_cast<int>(hidden.size()) != layers - 1) {
        throw std::invalid_argument("mlp_backward needs the hidden activations from mlp_forward");
    }
    if (d_output.size() != mlp.output_dim()) {
        throw std::invalid_argument("mlp upstream gradient dimension mismatch");
    }
    Eigen::VectorXd g = d_output;
    for (int i = layers - 1; i >= 0; --i) {
        const Eigen::VectorXd& in = i == 0 ? input : hidden[i - 1];
        grads->d_weights[i].noalias() += g * in.transpose();
        grads->d_biases[i] += g;
        if (i == 0) break;
        g = mlp.weights[i].transpose() * g;
        if (mlp.tanh_hidden) {
            // tanh'(z) recovered from the stored post-activation a = tanh(z).
            g.array() *= 1.0 - hidden[i - 1].array().square();
        }
    }
}

void apply_gradients(Mlp* mlp, const MlpGradients& grads, double rate, double scale,
                     double weight_decay) {
    const double shrink = 1.0 - rate * weight_decay;
    for (int i = 0; i < mlp->layers(); ++i) {
        if (weight_decay > 0.0) mlp->weights[i] *= shrink;
        mlp->weights[i] -= rate * scale * grads.d_weights[i];
        mlp->biases[i] -= rate * scale * grads.d_biases[i];
    }
}

void Regressor::validate() const {
    if (joints < 1 || shape_dims < 0 || keypoint_count < 1) {
        throw std::invalid_argument("regressor dimensions must be positive");
    }
    if (!(fallback_depth > 0)) {
        throw std::invalid_argument("regressor fallback depth must be positive");
    }
    if (variant == Variant::mlp) {
        mlp.validate();
        if (mlp.input_dim() != input_dim() || mlp.output_dim() != output_dim()) {
            throw std::invalid_argument("regressor network shape does not match the model");
        }
    }
}

namespace {

// Raw output encoding the mean pose: identity rotation columns per joint,
// zero shape, zero translation offset.
Eigen::VectorXd mean_pose_raw(int joints, int shape_dims) {
    Eigen::VectorXd raw = Eigen::VectorXd::Zero(6 * joints + shape_dims + 3);
    for (int j = 0; j < joints; ++j) {
        raw[6 * j + 0] = 1.0;  // first column (1, 0, 0)
        raw[6 * j + 4] = 1.0;  // second column (0, 1, 0)
    }
    return raw;
}

}  // namespace

Regressor make_mean_pose_regressor(const BodyModel& model) {
    Regressor r;
    r.variant = Regressor::Variant::mean_pose;
    r.joints = model.num_kinematic_joints();
    r.shape_dims = model.num_shape_dims();
    r.keypoint_count = model.num_regressed_joints();
    r.validate();
    return r;
}

Regressor make_mlp_regressor(const BodyModel& model, const std::vector<int>& hidden,
                             std::uint64_t seed) {
    Regressor r;
    r.variant = Regressor::Variant::mlp;
    r.joints = model.num_kinematic_joints();
    r.shape_dims = model.num_shape_dims();
    r.keypoint_count = model.num_regressed_joints();

    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<int> widths;
    widths.push_back(r.input_dim());
    for (int h : hidden) {
        if (h < 1) throw std::invalid_argument("mlp hidden width must be positive");
        widths.push_back(h);
    }
    widths.push_back(r.output_dim());

    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const int in = widths[i];
        const int out = widths[i + 1];
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(out, in);
        const bool output_layer = i + 2 == widths.size();
        if (!output_layer) {
            const double scale = 1.0 / std::sqrt(static_cast<double>(in));
            for (int rr = 0; rr < out; ++rr) {
                for (int cc = 0; cc < in; ++cc) w(rr, cc) = scale * rng.normal();
            }
        }
        r.mlp.weights.push_back(std::move(w));
        r.mlp.biases.push_back(Eigen::VectorXd::Zero(out));
    }
    r.mlp.biases.back() = mean_pose_raw(r.joints, r.shape_dims);
    r.validate();
    return r;
}

Eigen::VectorXd normalize_keypoints(const Keypoints2D& keypoints,
                                    const Eigen::Vector2d& principal_point, double crop_size) {
    if (!(crop_size > 0)) throw std::invalid_argument("crop size must be positive");
    keypoints.validate();
    const int k = keypoints.count();
    const double half = 0.5 * crop_size;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(3 * k);
    for (int i = 0; i < k; ++i) {
        if (keypoints.conf[i] <= 0.0) continue;
        x[3 * i + 0] = (keypoints.uv(i, 0) - principal_point.x()) / half;
        x[3 * i + 1] = (keypoints.uv(i, 1) - principal_point.y()) / half;
        x[3 * i + 2] = keypoints.conf[i];
    }
    return x;
}

RegressorPrediction decode_regressor_output(const Eigen::VectorXd& raw, int joints,
                                            int shape_dims, const Eigen::Vector3d& anchor) {
    if (raw.size() != 6 * joints + shape_dims + 3) {
        throw std::invalid_argument("regressor output has the wrong dimension");
    }
    RegressorPrediction pred;
    pred.raw = raw;
    pred.anchor = anchor;
    pred.rotations.reserve(joints);
    pred.params.theta = Eigen::VectorXd::Zero(3 * joints);
    for (int j = 0; j < joints; ++j) {
        const rot::Mat3 r = rot::rot6d_to_matrix(raw.segment<6>(6 * j));
        pred.params.theta.segment<3>(3 * j) = rot::matrix_to_aa(r);
        pred.rotations.push_back(r);
    }
    pred.params.beta = raw.segment(6 * joints, shape_dims)
                           .cwiseMax(-kBetaHardBound)
                           .cwiseMin(kBetaHardBound);
    pred.translation = anchor + raw.tail<3>();
    return pred;
}

Eigen::Vector3d translation_anchor(const Regressor& regressor, const BodyModel& model,
                                   const Keypoints2D& keypoints, const Camera& intrinsics) {
    try {
        const PosedBody rest =
            forward(model, ModelParams::zeros(regressor.joints, regressor.shape_dims));
        return init_translation(keypoints, rest.joints, intrinsics.focal,
                                intrinsics.principal_point, make_torso_pairs(model.joint_names));
    } catch (const std::exception&) {
        // No observed torso pair: fall back to a nominal depth.
        return Eigen::Vector3d(0.0, 0.0, regressor.fallback_depth);
    }
}

RegressorPrediction regress(const Regressor& regressor, const BodyModel& model,
                            const Keypoints2D& keypoints, const Camera& intrinsics,
                            double crop_size) {
    regressor.validate();
    if (keypoints.count() != regressor.keypoint_count) {
        throw std::invalid_argument("keypoint count does not match the regressor");
    }
    const Eigen::Vector3d anchor = translation_anchor(regressor, model, keypoints, intrinsics);

    Eigen::VectorXd raw;
    if (regressor.variant == Regressor::Variant::mean_pose) {
        raw = mean_pose_raw(regressor.joints, regressor.shape_dims);
    } else {
        const Eigen::VectorXd x =
            normalize_keypoints(keypoints, intrinsics.principal_point, crop_size);
        raw = mlp_forward(regressor.mlp, x);
    }
    return decode_regressor_output(raw, regressor.joints, regressor.shape_dims, anchor);
}

}  // namespace bodyfit
