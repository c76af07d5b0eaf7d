#pragma once

#include <Eigen/Core>

namespace bodyfit {

// 3D pose evaluation. All distances are reported in millimeters; inputs are
// joint sets in meters, one row per joint. Functions are pure: any
// root-centering convention is applied by the caller (evaluate_pose does it
// for the screening metrics).

// Joints translated so the root joint sits at the origin.
Eigen::MatrixX3d root_center(const Eigen::MatrixX3d& joints, int root = 0);

// Mean per-joint Euclidean distance, in mm.
double mpjpe_mm(const Eigen::MatrixX3d& pred, const Eigen::MatrixX3d& gt);

// Least-squares similarity alignment (scale, rotation, translation) of pred
// onto gt, reflection excluded (det = +1). Throws std::invalid_argument on
// fewer than 3 joints or a degenerate (rank-deficient) configuration.
Eigen::MatrixX3d procrustes_align(const Eigen::MatrixX3d& pred, const Eigen::MatrixX3d& gt);

// mpjpe_mm after procrustes_align.
double recon_error_mm(const Eigen::MatrixX3d& pred, const Eigen::MatrixX3d& gt);

// Fraction of joints within threshold_mm (inclusive).
double pck(const Eigen::MatrixX3d& pred, const Eigen::MatrixX3d& gt, double threshold_mm = 150.0);

// Normalized trapezoidal area of pck over thresholds 0..max_mm in `steps`
// equal intervals (steps + 1 samples).
double auc(const Eigen::MatrixX3d& pred, const Eigen::MatrixX3d& gt, double max_mm = 150.0,
           int steps = 30);

struct PoseErrorReport {
    double mpjpe = 0.0;        // mm, root-centered
    double recon_error = 0.0;  // mm, similarity-aligned
    double pck = 0.0;          // fraction at threshold
    double auc = 0.0;          // fraction
    Eigen::VectorXd per_joint;  // mm, root-centered

    // Throws std::logic_error if recon_error > mpjpe + 1e-9 or a fraction
    // leaves [0, 1].
    void validate() const;
};

// Root-centers both sets for mpjpe/pck/auc/per-joint; reconstruction error is
// computed on the raw inputs (its alignment already handles translation).
PoseErrorReport evaluate_pose(const Eigen::MatrixX3d& pred, const Eigen::MatrixX3d& gt,
                              int root = 0, double pck_threshold_mm = 150.0,
                              double auc_max_mm = 150.0, int auc_steps = 30);

}  // namespace bodyfit
