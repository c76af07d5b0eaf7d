#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "bodyfit/body_model.hpp"
#include "bodyfit/camera.hpp"
#include "bodyfit/priors.hpp"

namespace bodyfit {

// Large finite residual assigned to observed joints that land at or behind
// the camera plane; their Jacobian rows are zeroed so the penalty is constant
// in the parameters (no gradient into depth) and never NaN.
inline constexpr double kBehindCameraResidual = 1e4;

struct Robustifier {
    enum class Type { none, geman_mcclure };
    Type type = Type::geman_mcclure;
    double sigma = 100.0;  // pixels

    // rho(e) applied to the per-joint pixel distance.
    double rho(double e) const;
    // IRLS weight rho'(e) / (2e), the factor multiplying the squared residual
    // in the Gauss-Newton system.
    double weight(double e) const;
};

// One optimizer stage: which variable groups move and the prior weights in
// effect. Negative lambdas inherit the FitConfig base values.
struct FitStage {
    bool translation = true;
    bool global_orient = true;
    bool pose = true;
    bool shape = true;
    double lambda_theta = -1.0;
    double lambda_a = -1.0;
    double lambda_beta = -1.0;
    int max_iters = 30;
};

struct FitConfig {
    // Prior weights calibrated to this problem scale: two dozen keypoints
    // against ~85 unknowns. The pose prior must be strong enough to veto
    // depth-flipped limbs yet weak enough that noiseless observations win;
    // the bend prior's one-sided penalty has a nonzero gradient even at
    // straight joints, so near convergence it is kept small; the shape prior
    // only anchors the directions 2D evidence cannot see.
    double lambda_theta = 0.25;
    double lambda_a = 0.5;
    double lambda_beta = 0.05;
    std::vector<FitStage> stages{FitStage{}};
    Robustifier robustifier;

    bool run_camera_stage = true;
    int camera_iters = 20;

    // Convergence: infinity-norm of the free-variable gradient, norm of an
    // accepted step, and relative energy decrease of an accepted step.
    double gradient_tol = 1e-8;
    double step_tol = 1e-12;
    double energy_tol = 1e-12;

    // Initial Levenberg damping. Larger values make early steps conservative,
    // which keeps weakly-observed directions (shape, depth) near their
    // initialization instead of letting them chase transient residuals of
    // directions that have not converged yet.
    double damping_init = 1e-4;

    void validate() const;

    // Descending-lambda_theta schedule used for cold starts from the mean
    // pose; body stages follow an initial camera alignment stage.
    static FitConfig staged();
    // Single short stage for warm starts (default budget 50 iterations).
    static FitConfig single_stage(int max_iters = 50);
};

struct FitProblem {
    Keypoints2D keypoints;
    Camera camera;     // intrinsics + initial translation
    ModelParams init;  // initial pose/shape

    // Under-constrained problems (fewer than 6 confident keypoints) are
    // rejected here, before any optimization runs.
    static FitProblem create(Keypoints2D keypoints, Camera camera, ModelParams init);
    void validate() const;
};

// Per-term energy contributions, each already scaled by its lambda so the
// fields sum to the total.
struct EnergyBreakdown {
    double joints = 0.0;
    double theta = 0.0;
    double angle = 0.0;
    double beta = 0.0;
    double total() const { return joints + theta + angle + beta; }
};

struct FitResult {
    ModelParams params;
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    // Mean confidence-weighted raw pixel distance (no robustifier).
    double reproj_error = 0.0;
    EnergyBreakdown energy;
    int iterations_used = 0;  // accepted Gauss-Newton steps over all stages
    bool converged = false;
    std::string error;  // nonempty when a batch slot failed

    bool ok() const { return error.empty(); }
};

// One record per damped Gauss-Newton trial, for debugging and for the
// monotone-descent assertion on accepted energies.
struct TraceRecord {
    int stage = 0;  // -1 = camera stage
    int iteration = 0;
    bool accepted = false;
    double energy = 0.0;
    EnergyBreakdown breakdown;
    double step_norm = 0.0;
    double damping = 0.0;
};
using FitTrace = std::vector<TraceRecord>;

// Reprojection data term: value = sum_i conf_i * rho(|project(X_i) - uv_i|),
// with stacked residuals (2 per joint), the Jacobian w.r.t. the state layout
// [translation(3) | theta(3J) | beta(B)], and the per-joint IRLS weights.
struct JointsEnergy {
    double value = 0.0;
    double reproj_error = 0.0;  // unrobustified confidence-weighted mean, px
    Eigen::VectorXd residuals;
    Eigen::MatrixXd jacobian;
    Eigen::VectorXd weights;
};

JointsEnergy e_joints(const BodyModel& model, const ModelParams& params, const Camera& camera,
                      const Keypoints2D& keypoints, const Robustifier& robustifier,
                      bool with_jacobian = true);

// Full objective at a state; breakdown fields sum to the total.
EnergyBreakdown total_energy(const BodyModel& model, const ModelParams& params,
                             const Camera& camera, const Keypoints2D& keypoints,
                             const GmmPosePrior& pose_prior, const AnglePriorConfig& angle_prior,
                             const FitConfig& cfg);

// Exact gradient of total_energy w.r.t. [translation(3) | theta(3J) | beta(B)]
// at the given state. The robustified data term's IRLS gradient is exact (the
// IRLS approximation only affects the Hessian), so this matches finite
// differences of total_energy everywhere off the behind-camera clamp.
Eigen::VectorXd total_energy_gradient(const BodyModel& model, const ModelParams& params,
                                      const Camera& camera, const Keypoints2D& keypoints,
                                      const GmmPosePrior& pose_prior,
                                      const AnglePriorConfig& angle_prior, const FitConfig& cfg);

// Camera alignment: translation and global orientation only, pose and shape
// frozen (returned untouched bit-for-bit).
struct CameraStageResult {
    Eigen::Vector3d translation;
    Eigen::Vector3d global_orient;
    int iterations_used = 0;
};

CameraStageResult fit_camera_stage(const BodyModel& model, const FitProblem& problem,
                                   const GmmPosePrior& pose_prior,
                                   const AnglePriorConfig& angle_prior, const FitConfig& cfg);

// Damped Gauss-Newton descent over the configured stages (camera stage
// first). Accepted steps never increase the total energy; the best-seen
// iterate is returned. Throws std::runtime_error only if the initial state
// cannot be evaluated; non-convergence within budget just clears `converged`.
FitResult fit(const BodyModel& model, const FitProblem& problem, const GmmPosePrior& pose_prior,
              const AnglePriorConfig& angle_prior, const FitConfig& cfg,
              FitTrace* trace = nullptr);

// Fits a batch concurrently; results are bitwise identical to fitting each
// problem sequentially. Per-problem failures land in the slot's `error`.
std::vector<FitResult> fit_batch(const BodyModel& model, const std::vector<FitProblem>& problems,
                                 const GmmPosePrior& pose_prior,
                                 const AnglePriorConfig& angle_prior, const FitConfig& cfg,
                                 int workers = 0);

// Merges detector output into annotated keypoints: positions stay at the
// annotation; confidence comes from the detector when it is confident and
// agrees, and is discounted when the two sources disagree.
struct FuseConfig {
    double tau_det = 0.3;
    double r_agree = 10.0;  // pixels
    double conf_gt_default = 0.8;
    double conf_disagree = 0.3;
};

Keypoints2D fuse_keypoints(const Keypoints2D& gt, const Keypoints2D& det,
                           const FuseConfig& cfg = {});

}  // namespace bodyfit
