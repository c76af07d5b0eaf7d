#pragma once

#include <Eigen/Core>
#include <vector>

#include "bodyfit/body_model.hpp"

namespace bodyfit {

// Gaussian mixture prior over body pose, excluding the global orientation:
// the prior dimension is D = 3*(J_kin - 1) and evaluation takes theta[3:].
// A prior over the global orientation would fight the camera stage.
struct GmmPosePrior {
    Eigen::VectorXd weights;                  // C, on the simplex
    Eigen::MatrixXd means;                    // C x D
    std::vector<Eigen::MatrixXd> precisions;  // C matrices, D x D, SPD
    Eigen::VectorXd log_norm_constants;       // log w_c + 0.5 log|P_c| - D/2 log(2pi)

    int components() const { return static_cast<int>(weights.size()); }
    int dim() const { return static_cast<int>(means.cols()); }

    // Recomputes log_norm_constants from weights and precisions.
    void refresh_norm_constants();
    void validate() const;
};

// Value/gradient/curvature triple shared by the prior energies. The hessian
// is a positive semi-definite Gauss-Newton style approximation, safe to add
// into a normal-equations system.
struct EnergyEval {
    double value = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
};

// Negative log mixture density of the body pose (log-sum-exp over
// components). Gradient is sum_c r_c P_c (x - mu_c); the PSD curvature
// approximation is sum_c r_c P_c with the responsibilities r_c.
EnergyEval e_theta(const GmmPosePrior& prior, const Eigen::VectorXd& body_pose,
                   bool with_hessian = true);

// Unnatural-bend penalty for hinge joints: sum over configured rotation
// components of exp(sign * theta_comp)^2. Bending in the natural direction
// (opposite the sign) decays the term; bending the wrong way explodes it.
struct AnglePriorEntry {
    int joint = 0;      // kinematic joint index
    int component = 0;  // axis-angle component 0..2
    double sign = 1.0;
};

struct AnglePriorConfig {
    std::vector<AnglePriorEntry> entries;
    void validate(int num_kinematic_joints) const;
};

// Hinge entries for the toy humanoid by joint-name lookup (knees and elbows);
// empty when the model lacks those names.
AnglePriorConfig make_default_angle_prior(const BodyModel& model);

// Value/gradient/curvature over the full 3*J_kin pose vector.
EnergyEval e_angle(const Eigen::VectorXd& theta, const AnglePriorConfig& cfg,
                   bool with_hessian = true);

// Quadratic shape penalty |beta|^2.
EnergyEval e_beta(const Eigen::VectorXd& beta, bool with_hessian = true);

// Maximum-likelihood GMM fit by expectation-maximization with a k-means++
// style seeded initialization. Covariances get +1e-6 I regularization each
// M-step. If ll_history is given it receives the per-iteration data
// log-likelihood (non-decreasing). Requires rows >= 10 * components.
GmmPosePrior fit_gmm_em(const Eigen::MatrixXd& samples, int components, unsigned seed,
                        int max_iters = 200, double tol = 1e-7,
                        std::vector<double>* ll_history = nullptr);

// Synthetic body-pose bank used to train the prior: a handful of seeded
// archetype poses with isotropic per-component jitter, keeping the fitted
// mixture covariances well conditioned. Rows are D = 3*(J_kin-1) vectors.
Eigen::MatrixXd sample_pose_bank(const BodyModel& model, int count, unsigned seed,
                                 double jitter = 0.15);

}  // namespace bodyfit
