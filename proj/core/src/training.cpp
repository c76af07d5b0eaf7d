#include "bodyfit/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <utility>

#include <Eigen/Cholesky>

#include "bodyfit/metrics.hpp"
#include "bodyfit/rng.hpp"

namespace bodyfit {

namespace {

// Shared layout of the raw regressor output: [6 per joint | shape | translation].
struct RawLayout {
    int joints = 0;
    int shape_dims = 0;
    int rot_size() const { return 6 * joints; }
    int total() const { return 6 * joints + shape_dims + 3; }
};

RawLayout layout_of(const RegressorPrediction& pred) {
    RawLayout l;
    l.joints = static_cast<int>(pred.rotations.size());
    l.shape_dims = static_cast<int>(pred.params.beta.size());
    if (pred.raw.size() != l.total()) {
        throw std::invalid_argument("prediction raw vector does not match its decoded layout");
    }
    return l;
}

// Chains a gradient w.r.t. the stacked rotation matrices (9 per joint,
// column-major vec) back through the 6D decode, and a gradient w.r.t. the
// clamped shape back through the clamp (flat outside the hard bound).
void chain_to_raw(const RegressorPrediction& pred, const RawLayout& l,
                  const Eigen::VectorXd& d_vec_rot, const Eigen::VectorXd& d_beta,
                  Eigen::VectorXd* d_raw) {
    for (int j = 0; j < l.joints; ++j) {
        const rot::Mat9x6 d6 = rot::d_rot6d_to_matrix(pred.raw.segment<6>(6 * j));
        d_raw->segment<6>(6 * j) += d6.transpose() * d_vec_rot.segment<9>(9 * j);
    }
    for (int b = 0; b < l.shape_dims; ++b) {
        if (std::abs(pred.raw[l.rot_size() + b]) < kBetaHardBound) {
            (*d_raw)[l.rot_size() + b] += d_beta[b];
        }
    }
}

}  // namespace

// ---------------------------------------------------------------- losses --

LossEval loss_2d(const BodyModel& model, const RegressorPrediction& pred,
                 const Camera& intrinsics, const Keypoints2D& keypoints, bool with_gradient) {
    const RawLayout l = layout_of(pred);
    keypoints.validate();
    if (keypoints.count() != model.num_regressed_joints()) {
        throw std::invalid_argument("keypoint count does not match the model");
    }
    if (l.joints != model.num_kinematic_joints() || l.shape_dims != model.num_shape_dims()) {
        throw std::invalid_argument("prediction does not match the model");
    }

    Camera cam = intrinsics;
    cam.translation = pred.translation;
    const Eigen::MatrixX3d joints = joints_from_rotations(model, pred.rotations, pred.params.beta);

    LossEval out;
    out.d_raw = Eigen::VectorXd::Zero(l.total());
    Eigen::VectorXd d_vec_rot = Eigen::VectorXd::Zero(9 * l.joints);
    Eigen::VectorXd d_beta = Eigen::VectorXd::Zero(l.shape_dims);
    Eigen::Vector3d d_t = Eigen::Vector3d::Zero();

    RotationJointsJacobian rj;
    if (with_gradient) rj = joints_jacobian_rotations(model, pred.rotations, pred.params.beta);

    double num = 0.0;
    double weight_sum = 0.0;
    for (int i = 0; i < keypoints.count(); ++i) {
        const double conf = keypoints.conf[i];
        if (conf <= 0.0) continue;
        Eigen::Vector2d uv;
        Eigen::Matrix<double, 2, 3> duv;
        if (!try_project_point(cam, joints.row(i).transpose(), &uv,
                               with_gradient ? &duv : nullptr)) {
            continue;  // behind the camera: contributes nothing, like the fitting clamp
        }
        const Eigen::Vector2d delta = uv - keypoints.uv.row(i).transpose();
        num += conf * delta.squaredNorm();
        weight_sum += conf;
        if (with_gradient) {
            const Eigen::Vector3d gx = 2.0 * conf * (duv.transpose() * delta);
            d_vec_rot.noalias() += rj.d_rot.middleRows<3>(3 * i).transpose() * gx;
            if (l.shape_dims > 0) {
                d_beta.noalias() += rj.d_beta.middleRows<3>(3 * i).transpose() * gx;
            }
            d_t += gx;
        }
    }

    if (weight_sum <= 0.0) return out;
    out.value = num / weight_sum;
    if (with_gradient) {
        d_vec_rot /= weight_sum;
        d_beta /= weight_sum;
        chain_to_raw(pred, l, d_vec_rot, d_beta, &out.d_raw);
        out.d_raw.tail<3>() = d_t / weight_sum;
    }
    return out;
}

LossEval loss_3d(const RegressorPrediction& pred, const std::vector<rot::Mat3>& target_rotations,
                 const Eigen::VectorXd& target_beta, bool with_gradient) {
    const RawLayout l = layout_of(pred);
    if (static_cast<int>(target_rotations.size()) != l.joints ||
        target_beta.size() != l.shape_dims) {
        throw std::invalid_argument("supervision target does not match the prediction layout");
    }

    LossEval out;
    out.d_raw = Eigen::VectorXd::Zero(l.total());
    Eigen::VectorXd d_vec_rot = Eigen::VectorXd::Zero(9 * l.joints);
    for (int j = 0; j < l.joints; ++j) {
        const rot::Mat3 diff = pred.rotations[j] - target_rotations[j];
        out.value += diff.squaredNorm();
        if (with_gradient) {
            d_vec_rot.segment<9>(9 * j) = 2.0 * Eigen::Map<const Eigen::VectorXd>(diff.data(), 9);
        }
    }
    const Eigen::VectorXd beta_diff = pred.params.beta - target_beta;
    out.value += beta_diff.squaredNorm();
    if (with_gradient) {
        chain_to_raw(pred, l, d_vec_rot, 2.0 * beta_diff, &out.d_raw);
    }
    return out;
}

double mesh_distance_sq(const Eigen::MatrixX3d& a, const Eigen::MatrixX3d& b) {
    if (a.rows() == 0 || a.rows() != b.rows()) {
        throw std::invalid_argument("meshes must be non-empty and the same size");
    }
    return (a - b).rowwise().squaredNorm().mean();
}

LossEval loss_mesh(const BodyModel& model, const RegressorPrediction& pred,
                   const Eigen::MatrixX3d& target_mesh, bool with_gradient) {
    const RawLayout l = layout_of(pred);
    if (l.joints != model.num_kinematic_joints() || l.shape_dims != model.num_shape_dims()) {
        throw std::invalid_argument("prediction does not match the model");
    }
    if (target_mesh.rows() != model.num_vertices()) {
        throw std::invalid_argument("target mesh does not match the model");
    }

    const int n = model.num_vertices();
    const Eigen::MatrixX3d mesh =
        posed_from_rotations(model, pred.rotations, pred.params.beta).vertices;

    LossEval out;
    out.value = mesh_distance_sq(mesh, target_mesh);
    out.d_raw = Eigen::VectorXd::Zero(l.total());
    if (!with_gradient) return out;

    // Residual stacked with row index 3*vertex + coordinate, matching the
    // mesh Jacobian layout.
    Eigen::VectorXd r(3 * n);
    for (int v = 0; v < n; ++v) {
        r.segment<3>(3 * v) = (mesh.row(v) - target_mesh.row(v)).transpose();
    }
    r *= 2.0 / static_cast<double>(n);

    const MeshJacobian mj = mesh_jacobian_rotations(model, pred.rotations, pred.params.beta);
    const Eigen::VectorXd d_vec_rot = mj.d_rot.transpose() * r;
    const Eigen::VectorXd d_beta =
        l.shape_dims > 0 ? Eigen::VectorXd(mj.d_beta.transpose() * r) : Eigen::VectorXd();
    chain_to_raw(pred, l, d_vec_rot, d_beta, &out.d_raw);
    return out;
}

// ------------------------------------------------------ supervision policy --

bool accept_fit(const FitResult& result, double tau_rej_px) {
    return result.ok() && result.reproj_error <= tau_rej_px;
}

ShapeSupervisionMode shape_supervision_mode(const Eigen::VectorXd& beta_opt, double bound) {
    for (int i = 0; i < beta_opt.size(); ++i) {
        if (std::abs(beta_opt[i]) > bound) return ShapeSupervisionMode::regularize_to_mean;
    }
    return ShapeSupervisionMode::use_beta_opt;
}

// -------------------------------------------------------------- dictionary --

bool Dictionary::update(int example_id, const ModelParams& params,
                        const Eigen::Vector3d& translation, double reproj_error, int epoch) {
    const auto it = entries_.find(example_id);
    if (it != entries_.end() && !(reproj_error < it->second.reproj_error)) return false;
    DictionaryEntry entry;
    entry.example_id = example_id;
    entry.params = params;
    entry.translation = translation;
    entry.reproj_error = reproj_error;
    entry.epoch_found = epoch;
    entries_[example_id] = std::move(entry);
    return true;
}

const DictionaryEntry* Dictionary::find(int example_id) const {
    const auto it = entries_.find(example_id);
    return it == entries_.end() ? nullptr : &it->second;
}

double Dictionary::mean_reproj_error() const {
    if (entries_.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [id, entry] : entries_) sum += entry.reproj_error;
    return sum / static_cast<double>(entries_.size());
}

void Dictionary::insert_loaded(DictionaryEntry entry) {
    entries_[entry.example_id] = std::move(entry);
}

// ------------------------------------------------------------------ dataset --

Camera SyntheticDataset::intrinsics() const {
    Camera cam;
    cam.focal = focal;
    cam.principal_point = Eigen::Vector2d(crop_size / 2.0, crop_size / 2.0);
    return cam;
}

SyntheticDataset SyntheticDataset::without_gt() const {
    SyntheticDataset copy = *this;
    copy.gt.clear();
    return copy;
}

void SyntheticDataset::validate() const {
    if (!(crop_size > 0.0) || !(focal > 0.0)) {
        throw std::invalid_argument("crop size and focal length must be positive");
    }
    if (!gt.empty() && gt.size() != examples.size()) {
        throw std::invalid_argument("ground truth must be absent or aligned with the examples");
    }
    std::set<int> ids;
    for (const TrainExample& ex : examples) {
        ex.keypoints.validate();
        if (!examples.empty() && ex.keypoints.count() != examples.front().keypoints.count()) {
            throw std::invalid_argument("examples must share one keypoint count");
        }
        if (!ids.insert(ex.id).second) {
            throw std::invalid_argument("example ids must be unique");
        }
    }
}

SyntheticDataset generate_synthetic_dataset(const BodyModel& model, const GmmPosePrior& prior,
                                            int n, double noise_px, double occlusion_rate,
                                            std::uint64_t seed, double crop_size, double focal,
                                            double orient_range) {
    model.validate();
    prior.validate();
    if (n < 0) throw std::invalid_argument("example count must be non-negative");
    if (!(noise_px >= 0.0)) throw std::invalid_argument("noise must be non-negative");
    if (!(occlusion_rate >= 0.0 && occlusion_rate <= 1.0)) {
        throw std::invalid_argument("occlusion rate must be in [0, 1]");
    }
    if (!(crop_size > 0.0) || !(focal > 0.0) || !(orient_range >= 0.0)) {
        throw std::invalid_argument("crop size and focal length must be positive");
    }
    const int joints = model.num_kinematic_joints();
    if (prior.dim() != 3 * (joints - 1)) {
        throw std::invalid_argument("prior dimension does not match the model");
    }

    // Cholesky factors of the component precisions, so each sample is
    // mu + U^-1 z with U the upper factor (covariance U^-1 U^-T).
    std::vector<Eigen::LLT<Eigen::MatrixXd>> llts;
    llts.reserve(prior.components());
    for (const Eigen::MatrixXd& p : prior.precisions) {
        llts.emplace_back(p);
        if (llts.back().info() != Eigen::Success) {
            throw std::invalid_argument("prior precision is not positive definite");
        }
    }

    SyntheticDataset data;
    data.crop_size = crop_size;
    data.focal = focal;
    data.examples.reserve(n);
    data.gt.reserve(n);
    const Eigen::Vector2d pp(crop_size / 2.0, crop_size / 2.0);
    const int k = model.num_regressed_joints();
    const int observed_floor = std::min(8, k);

    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        // Mixture component by cumulative weight.
        const double u = rng.uniform();
        int c = prior.components() - 1;
        double acc = 0.0;
        for (int ci = 0; ci < prior.components(); ++ci) {
            acc += prior.weights[ci];
            if (u < acc) {
                c = ci;
                break;
            }
        }
        Eigen::VectorXd z(prior.dim());
        for (int d = 0; d < z.size(); ++d) z[d] = rng.normal();
        Eigen::VectorXd body_pose =
            prior.means.row(c).transpose() + llts[c].matrixU().solve(z);
        // Keep hinge joints on their anatomical side, like the pose bank the
        // prior was fitted to: synthetic people bend knees and elbows the
        // natural way.
        for (const AnglePriorEntry& e : make_default_angle_prior(model).entries) {
            if (e.joint < 1) continue;
            double& component = body_pose[3 * (e.joint - 1) + e.component];
            component = -e.sign * std::abs(component);
        }

        ModelParams params = ModelParams::zeros(joints, model.num_shape_dims());
        params.theta[1] = rng.uniform(-orient_range, orient_range);  // yaw about vertical
        params.theta.tail(prior.dim()) = body_pose;
        for (int b = 0; b < params.beta.size(); ++b) {
            params.beta[b] = std::clamp(rng.normal(), -2.0, 2.0);
        }

        // Depth that frames the body in about three quarters of the crop,
        // with mild jitter; x/y center the joints near the principal axis.
        const PosedBody posed = forward(model, params);
        const Eigen::RowVector3d lo = posed.joints.colwise().minCoeff();
        const Eigen::RowVector3d hi = posed.joints.colwise().maxCoeff();
        const double extent = (hi - lo).norm();
        const double depth = focal * extent / (0.75 * crop_size) * (1.0 + 0.1 * rng.uniform(-1.0, 1.0));
        const Eigen::RowVector3d centroid = posed.joints.colwise().mean();
        Eigen::Vector3d translation(-centroid.x() + 0.02 * rng.normal(),
                                    -centroid.y() + 0.02 * rng.normal(), depth - centroid.z());

        Camera cam;
        cam.focal = focal;
        cam.principal_point = pp;
        cam.translation = translation;

        Keypoints2D kp;
        kp.uv = project(cam, posed.joints);
        kp.conf = Eigen::VectorXd::Ones(k);
        for (int j = 0; j < k; ++j) {
            kp.uv(j, 0) += noise_px * rng.normal();
            kp.uv(j, 1) += noise_px * rng.normal();
        }
        int observed = k;
        for (int j = 0; j < k; ++j) {
            if (rng.uniform() < occlusion_rate) {
                kp.conf[j] = 0.0;
                --observed;
            }
        }
        if (observed < observed_floor) {
            kp.conf.setOnes();  // keep every example fittable (rare)
        }

        TrainExample ex;
        ex.id = i;
        ex.keypoints = std::move(kp);
        data.examples.push_back(std::move(ex));

        GtRecord gt;
        gt.params = std::move(params);
        gt.translation = translation;
        data.gt.push_back(std::move(gt));
    }
    return data;
}

// ----------------------------------------------------------------- training --

void TrainConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
    if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw std::invalid_argument("learning rate must be finite and non-negative");
    }
    if (!(lr_decay > 0.0) || lr_decay > 1.0) {
        throw std::invalid_argument("learning-rate decay must be in (0, 1]");
    }
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
        throw std::invalid_argument("weight decay must be finite and non-negative");
    }
    if (!(w_3d >= 0.0) || !(w_mesh >= 0.0) || !(w_2d >= 0.0)) {
        throw std::invalid_argument("loss weights must be non-negative");
    }
    if (!(tau_rej >= 0.0)) throw std::invalid_argument("rejection threshold must be non-negative");
    if (!(shape_bound > 0.0)) throw std::invalid_argument("shape bound must be positive");
    if (fit_workers < 0) throw std::invalid_argument("worker count must be non-negative");
}

Dictionary dictionary_init(const BodyModel& model, const std::vector<TrainExample>& examples,
                           const Camera& intrinsics, double crop_size,
                           const GmmPosePrior& pose_prior, const AnglePriorConfig& angle_prior,
                           const FitConfig& fit_cfg, const Regressor& init_regressor,
                           int workers) {
    std::vector<FitProblem> problems;
    std::vector<int> ids;
    problems.reserve(examples.size());
    for (const TrainExample& ex : examples) {
        const RegressorPrediction pred =
            regress(init_regressor, model, ex.keypoints, intrinsics, crop_size);
        Camera cam = intrinsics;
        cam.translation = pred.translation;
        try {
            problems.push_back(FitProblem::create(ex.keypoints, cam, pred.params));
            ids.push_back(ex.id);
        } catch (const std::exception&) {
            // Under-constrained example: its slot stays absent.
        }
    }
    const std::vector<FitResult> results =
        fit_batch(model, problems, pose_prior, angle_prior, fit_cfg, workers);

    Dictionary dict;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const FitResult& r = results[i];
        if (!r.ok()) continue;
        dict.update(ids[i], r.params, r.translation, r.reproj_error, 0);
    }
    return dict;
}

EpochStats train_epoch(Regressor* regressor, const BodyModel& model,
                       const std::vector<TrainExample>& examples, const Camera& intrinsics,
                       double crop_size, Dictionary* dict, const GmmPosePrior& pose_prior,
                       const AnglePriorConfig& angle_prior, const FitConfig& fit_cfg,
                       const TrainConfig& cfg, int epoch_index) {
    if (regressor == nullptr || dict == nullptr) {
        throw std::invalid_argument("regressor and dictionary must be provided");
    }
    cfg.validate();
    fit_cfg.validate();
    regressor->validate();

    EpochStats stats;
    stats.epoch = epoch_index;
    const int n = static_cast<int>(examples.size());
    if (n == 0) {
        stats.mean_dict_reproj = dict->mean_reproj_error();
        stats.dictionary_size = static_cast<int>(dict->size());
        return stats;
    }

    Rng rng(cfg.seed ^ (0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(epoch_index) + 1)));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.index(static_cast<std::uint64_t>(i) + 1));
        std::swap(order[i], order[j]);
    }

    const bool learn = regressor->variant == Regressor::Variant::mlp;
    double sum_l3d = 0.0, sum_lmesh = 0.0, sum_l2d = 0.0, sum_fit_reproj = 0.0;
    int n_accepted = 0, n_l2d = 0, n_fit_ok = 0;

    struct Slot {
        const TrainExample* ex = nullptr;
        Eigen::VectorXd input;
        std::vector<Eigen::VectorXd> hidden;
        RegressorPrediction pred;
        bool valid = false;
    };

    for (int start = 0; start < n; start += cfg.batch_size) {
        const int stop = std::min(n, start + cfg.batch_size);
        std::vector<Slot> slots;
        slots.reserve(stop - start);
        std::vector<FitProblem> problems;
        std::vector<std::size_t> problem_slot;

        for (int bi = start; bi < stop; ++bi) {
            const TrainExample& ex = examples[order[bi]];
            if (ex.keypoints.count() != regressor->keypoint_count) {
                throw std::invalid_argument("keypoint count does not match the regressor");
            }
            Slot slot;
            slot.ex = &ex;
            try {
                if (learn) {
                    // Decomposed regress(): the cached input and hidden
                    // activations feed the backward pass after the fit.
                    slot.input =
                        normalize_keypoints(ex.keypoints, intrinsics.principal_point, crop_size);
                    const Eigen::VectorXd raw =
                        mlp_forward(regressor->mlp, slot.input, &slot.hidden);
                    slot.pred = decode_regressor_output(
                        raw, regressor->joints, regressor->shape_dims,
                        translation_anchor(*regressor, model, ex.keypoints, intrinsics));
                } else {
                    slot.pred = regress(*regressor, model, ex.keypoints, intrinsics, crop_size);
                }
                slot.valid = true;
            } catch (const std::exception&) {
                // Degenerate rotation decode: the example sits this batch out.
            }
            if (slot.valid) {
                Camera cam = intrinsics;
                cam.translation = slot.pred.translation;
                try {
                    problems.push_back(FitProblem::create(ex.keypoints, cam, slot.pred.params));
                    problem_slot.push_back(slots.size());
                } catch (const std::exception&) {
                    // Under-constrained: no fresh fit, dictionary state decides.
                }
            }
            slots.push_back(std::move(slot));
        }

        const std::vector<FitResult> results =
            fit_batch(model, problems, pose_prior, angle_prior, fit_cfg, cfg.fit_workers);
        for (std::size_t p = 0; p < results.size(); ++p) {
            const FitResult& r = results[p];
            if (!r.ok()) continue;
            sum_fit_reproj += r.reproj_error;
            ++n_fit_ok;
            dict->update(slots[problem_slot[p]].ex->id, r.params, r.translation, r.reproj_error,
                         epoch_index);
        }

        MlpGradients grads;
        if (learn) grads = make_zero_gradients(regressor->mlp);
        for (const Slot& slot : slots) {
            if (!slot.valid) continue;
            // The supervision target is the dictionary entry after this
            // batch's update: the better of the fresh fit and the stored one.
            const DictionaryEntry* entry = dict->find(slot.ex->id);
            const bool accepted = entry != nullptr && entry->reproj_error <= cfg.tau_rej;
            Eigen::VectorXd d_raw = Eigen::VectorXd::Zero(regressor->output_dim());

            if (accepted) {
                ++n_accepted;
                const std::vector<rot::Mat3> target_rot = theta_to_rotations(entry->params.theta);
                const Eigen::VectorXd target_beta =
                    shape_supervision_mode(entry->params.beta, cfg.shape_bound) ==
                            ShapeSupervisionMode::use_beta_opt
                        ? entry->params.beta
                        : Eigen::VectorXd::Zero(entry->params.beta.size());
                const LossEval l3 = loss_3d(slot.pred, target_rot, target_beta, learn);
                const Eigen::MatrixX3d target_mesh =
                    posed_from_rotations(model, target_rot, target_beta).vertices;
                const LossEval lm = loss_mesh(model, slot.pred, target_mesh, learn);
                sum_l3d += l3.value;
                sum_lmesh += lm.value;
                if (learn) d_raw = cfg.w_3d * l3.d_raw + cfg.w_mesh * lm.d_raw;
                if (cfg.l2d_on_accepted) {
                    const LossEval l2 = loss_2d(model, slot.pred, intrinsics, slot.ex->keypoints,
                                                learn && cfg.w_2d > 0.0);
                    sum_l2d += l2.value;
                    ++n_l2d;
                    if (learn && cfg.w_2d > 0.0) d_raw += cfg.w_2d * l2.d_raw;
                }
            } else {
                const LossEval l2 = loss_2d(model, slot.pred, intrinsics, slot.ex->keypoints,
                                            learn && cfg.w_2d > 0.0);
                sum_l2d += l2.value;
                ++n_l2d;
                if (learn && cfg.w_2d > 0.0) d_raw = cfg.w_2d * l2.d_raw;
            }

            if (learn && !d_raw.isZero(0.0)) {
                mlp_backward(regressor->mlp, slot.input, slot.hidden, d_raw, &grads);
            }
        }
        if (learn) {
            const double rate = cfg.learning_rate * std::pow(cfg.lr_decay, epoch_index);
            apply_gradients(&regressor->mlp, grads, rate,
                            1.0 / static_cast<double>(stop - start), cfg.weight_decay);
        }
    }

    stats.mean_loss_3d = n_accepted ? sum_l3d / n_accepted : 0.0;
    stats.mean_loss_mesh = n_accepted ? sum_lmesh / n_accepted : 0.0;
    stats.mean_loss_2d = n_l2d ? sum_l2d / n_l2d : 0.0;
    stats.mean_fit_reproj = n_fit_ok ? sum_fit_reproj / n_fit_ok : 0.0;
    stats.mean_dict_reproj = dict->mean_reproj_error();
    stats.acceptance_rate = static_cast<double>(n_accepted) / static_cast<double>(n);
    stats.dictionary_size = static_cast<int>(dict->size());
    return stats;
}

double evaluate_regressor_mpjpe(const Regressor& regressor, const BodyModel& model,
                                const SyntheticDataset& dataset, int root) {
    if (!dataset.has_gt()) {
        throw std::invalid_argument("evaluation requires a dataset with ground truth");
    }
    dataset.validate();
    if (dataset.examples.empty()) {
        throw std::invalid_argument("evaluation requires at least one example");
    }
    const Camera cam = dataset.intrinsics();
    double sum = 0.0;
    for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
        const RegressorPrediction pred =
            regress(regressor, model, dataset.examples[i].keypoints, cam, dataset.crop_size);
        const Eigen::MatrixX3d pj = forward(model, pred.params).joints;
        const Eigen::MatrixX3d gj = forward(model, dataset.gt[i].params).joints;
        sum += mpjpe_mm(root_center(pj, root), root_center(gj, root));
    }
    return sum / static_cast<double>(dataset.examples.size());
}

}  // namespace bodyfit
