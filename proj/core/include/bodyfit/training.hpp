#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include <Eigen/Core>

#include "bodyfit/body_model.hpp"
#include "bodyfit/camera.hpp"
#include "bodyfit/fitting.hpp"
#include "bodyfit/priors.hpp"
#include "bodyfit/regressor.hpp"

namespace bodyfit {

// Self-improving training loop: the regressor initializes an in-loop
// optimization; good fits supervise the regressor in parameter/mesh space; a
// per-example dictionary retains the best fit seen so far. Training code
// never touches ground-truth parameters: the example type below simply has
// no field for them.

// ---------------------------------------------------------------- losses --

// Loss value with gradient w.r.t. the regressor's raw output vector
// [6 per joint | shape | translation offset].
struct LossEval {
    double value = 0.0;
    Eigen::VectorXd d_raw;
};

// Confidence-weighted mean squared pixel distance between the predicted
// body's reprojected joints and the observed keypoints. Joints behind the
// camera contribute nothing (mirrors the fitting clamp).
LossEval loss_2d(const BodyModel& model, const RegressorPrediction& pred,
                 const Camera& intrinsics, const Keypoints2D& keypoints,
                 bool with_gradient = true);

// Parameter-space supervision: per-joint squared Frobenius distance between
// predicted and target rotations, plus squared shape distance.
LossEval loss_3d(const RegressorPrediction& pred, const std::vector<rot::Mat3>& target_rotations,
                 const Eigen::VectorXd& target_beta, bool with_gradient = true);

// Mesh-space supervision: mean per-vertex squared distance between the
// predicted body's mesh (body frame) and a target mesh.
LossEval loss_mesh(const BodyModel& model, const RegressorPrediction& pred,
                   const Eigen::MatrixX3d& target_mesh, bool with_gradient = true);

// Mean per-vertex squared distance between two meshes (the value loss_mesh
// scores, usable on its own).
double mesh_distance_sq(const Eigen::MatrixX3d& a, const Eigen::MatrixX3d& b);

// ------------------------------------------------------ supervision policy --

// A fit supervises in parameter space iff it succeeded and its reprojection
// error is within tau_rej_px (inclusive).
bool accept_fit(const FitResult& result, double tau_rej_px);

enum class ShapeSupervisionMode { use_beta_opt, regularize_to_mean };

// regularize_to_mean iff any |beta_i| strictly exceeds the bound (a
// coefficient exactly at the bound is still trusted).
ShapeSupervisionMode shape_supervision_mode(const Eigen::VectorXd& beta_opt, double bound = 3.0);

// -------------------------------------------------------------- dictionary --

struct DictionaryEntry {
    int example_id = 0;
    ModelParams params;
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    double reproj_error = 0.0;  // px
    int epoch_found = 0;
};

// Best fit seen per example. Replacement requires strictly lower
// reprojection error, so each stored error is non-increasing over time.
class Dictionary {
public:
    // Returns true if the entry was inserted or replaced.
    bool update(int example_id, const ModelParams& params, const Eigen::Vector3d& translation,
                double reproj_error, int epoch);
    const DictionaryEntry* find(int example_id) const;

    std::size_t size() const { return entries_.size(); }
    double mean_reproj_error() const;  // over present entries; 0 when empty
    const std::map<int, DictionaryEntry>& entries() const { return entries_; }
    void insert_loaded(DictionaryEntry entry);  // for deserialization

private:
    std::map<int, DictionaryEntry> entries_;
};

// ------------------------------------------------------------------ dataset --

// One training observation. Deliberately contains no ground truth and no
// per-example extrinsics: intrinsics are dataset-level, the translation is
// the regressor's to estimate.
struct TrainExample {
    int id = 0;
    Keypoints2D keypoints;  // pixel coordinates in the crop
};

struct GtRecord {
    ModelParams params;
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

struct SyntheticDataset {
    double crop_size = 256.0;
    double focal = 5000.0;
    std::vector<TrainExample> examples;
    std::vector<GtRecord> gt;  // empty when withheld; else aligned with examples

    bool has_gt() const { return !gt.empty(); }
    Camera intrinsics() const;
    SyntheticDataset without_gt() const;
    void validate() const;
};

// Prior-sampled bodies forward-projected to keypoints. The global
// orientation is uniform in +-orient_range about the vertical axis; shape is
// standard normal clipped to +-2; the camera depth frames the body in the
// crop with mild jitter. Occluded joints keep their stored position but get
// confidence 0. At least 8 joints stay observed so every example remains
// fittable.
SyntheticDataset generate_synthetic_dataset(const BodyModel& model, const GmmPosePrior& prior,
                                            int n, double noise_px, double occlusion_rate,
                                            std::uint64_t seed, double crop_size = 256.0,
                                            double focal = 5000.0, double orient_range = 0.5);

// ----------------------------------------------------------------- training --

struct TrainConfig {
    int epochs = 5;
    int batch_size = 16;
    double learning_rate = 0.05;
    // Effective rate for epoch e is learning_rate * lr_decay^e; 1 keeps the
    // rate constant.
    double lr_decay = 1.0;
    // L2 shrinkage on the network's weight matrices (biases exempt). The
    // output bias is initialized to the mean pose, so decay bounds how far
    // predictions can stray from it: a warm start that is wrong by a lot is
    // worse than one that is conservative, because the downstream fit is
    // nonconvex.
    double weight_decay = 0.0;
    // Accepted fits supervise with w_3d * loss_3d + w_mesh * loss_mesh
    // (+ w_2d * loss_2d when l2d_on_accepted). Rejected fits supervise with
    // w_2d * loss_2d only.
    double w_3d = 1.0;
    double w_mesh = 1.0;
    double w_2d = 0.0;
    bool l2d_on_accepted = false;
    double tau_rej = 10.0;     // px, inclusive
    double shape_bound = 3.0;  // sigma units
    std::uint64_t seed = 0;
    int fit_workers = 0;  // 0 = hardware concurrency

    void validate() const;
};

// Fits every example from the given regressor's predictions (mean pose for
// cold starts, a trained network for warm starts) and stores successes with
// epoch_found = 0. Failures leave their slot absent.
Dictionary dictionary_init(const BodyModel& model, const std::vector<TrainExample>& examples,
                           const Camera& intrinsics, double crop_size,
                           const GmmPosePrior& pose_prior, const AnglePriorConfig& angle_prior,
                           const FitConfig& fit_cfg, const Regressor& init_regressor,
                           int workers = 0);

struct EpochStats {
    int epoch = 0;
    double mean_loss_3d = 0.0;    // over accepted examples
    double mean_loss_mesh = 0.0;  // over accepted examples
    double mean_loss_2d = 0.0;    // over examples where it was applied
    double mean_fit_reproj = 0.0;  // over successful fresh fits, px
    double mean_dict_reproj = 0.0;
    double acceptance_rate = 0.0;
    int dictionary_size = 0;
};

// One pass over the dataset: regress, fit (single-stage warm start), update
// the dictionary, pick the better of fresh fit and stored entry as the
// supervision target, apply the policy above, and take one gradient step per
// mini-batch. Deterministic given (cfg.seed, epoch_index).
EpochStats train_epoch(Regressor* regressor, const BodyModel& model,
                       const std::vector<TrainExample>& examples, const Camera& intrinsics,
                       double crop_size, Dictionary* dict, const GmmPosePrior& pose_prior,
                       const AnglePriorConfig& angle_prior, const FitConfig& fit_cfg,
                       const TrainConfig& cfg, int epoch_index);

// Evaluation-only (reads gt): mean root-centered MPJPE (mm) of the raw
// regressor predictions against the dataset's withheld ground truth.
double evaluate_regressor_mpjpe(const Regressor& regressor, const BodyModel& model,
                                const SyntheticDataset& dataset, int root = 0);

}  // namespace bodyfit
