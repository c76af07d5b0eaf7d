#include "bodyfit/metrics.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <algorithm>
#include <stdexcept>

namespace bodyfit {

namespace {

void check_same_shape(const Eigen::MatrixX3d& pred, const Eigen::MatrixX3d& gt) {
    if (pred.rows() != gt.rows() || pred.rows() == 0) {
        throw std::invalid_argument("joint sets must be non-empty and the same size");
    }
}

Eigen::VectorXd joint_distances_mm(const Eigen::MatrixX3d& pred, const Eigen::MatrixX3d& gt) {
    check_same_shape(pred, gt);
    return 1000.0 * (pred - gt).rowwise().norm();
}

}  // namespace

Eigen::MatrixX3d root_center(const Eigen::MatrixX3d& joints, int root) {
    if (root < 0 || root >= joints.rows()) {
        throw std::invalid_argument("root joint index out of range");
    }
    return joints.rowwise() - joints.row(root);
}

double mpjpe_mm(const Eigen::MatrixX3d& pred, const Eigen::MatrixX3d& gt) {
    return joint_distances_mm(pred, gt).mean();
}

Eigen::MatrixX3d procrustes_align(const Eigen::MatrixX3d& pred, const Eigen::MatrixX3d& gt) {
    check_same_shape(pred, gt);
    if (pred.rows() < 3) {
        throw std::invalid_argument("similarity alignment needs at least 3 joints");
    }
    // Columns as points, per the closed-form similarity solver's convention.
    const Eigen::Matrix3Xd src = pred.transpose();
    const Eigen::Matrix3Xd dst = gt.transpose();
    // Degenerate (collinear or coincident) configurations have a
    // rank-deficient centered covariance; the closed form is then ambiguous.
    const Eigen::Vector3d src_mean = src.rowwise().mean();
    const Eigen::Vector3d dst_mean = dst.rowwise().mean();
    const Eigen::Matrix3d cov =
        (dst.colwise() - dst_mean) * (src.colwise() - src_mean).transpose();
    if (Eigen::FullPivLU<Eigen::Matrix3d>(cov).rank() < 2) {
        throw std::invalid_argument("similarity alignment is degenerate for these joints");
    }
    const Eigen::Matrix4d t = Eigen::umeyama(src, dst, /*with_scaling=*/true);
    const Eigen::Matrix3Xd aligned =
        (t.topLeftCorner<3, 3>() * src).colwise() + t.topRightCorner<3, 1>();
    return aligned.transpose();
}

double recon_error_mm(const Eigen::MatrixX3d& pred, const Eigen::MatrixX3d& gt) {
    // The identity is itself a similarity transform, so the error under the
    // optimal alignment can never exceed the unaligned error; clamping guards
    // against alignment round-off (and makes identical inputs score exactly 0).
    return std::min(mpjpe_mm(procrustes_align(pred, gt), gt), mpjpe_mm(pred, gt));
}

double pck(const Eigen::MatrixX3d& pred, const Eigen::MatrixX3d& gt, double threshold_mm) {
    const Eigen::VectorXd d = joint_distances_mm(pred, gt);
    return (d.array() <= threshold_mm).count() / static_cast<double>(d.size());
}

double auc(const Eigen::MatrixX3d& pred, const Eigen::MatrixX3d& gt, double max_mm, int steps) {
    if (steps < 1 || !(max_mm > 0)) {
        throw std::invalid_argument("auc needs max_mm > 0 and steps >= 1");
    }
    const Eigen::VectorXd d = joint_distances_mm(pred, gt);
    double area = 0.0;
    double prev = (d.array() <= 0.0).count() / static_cast<double>(d.size());
    for (int i = 1; i <= steps; ++i) {
        const double t = max_mm * i / steps;
        const double cur = (d.array() <= t).count() / static_cast<double>(d.size());
        area += 0.5 * (prev + cur) * (max_mm / steps);
        prev = cur;
    }
    return area / max_mm;
}

void PoseErrorReport::validate() const {
    if (recon_error > mpjpe + 1e-9) {
        throw std::logic_error("reconstruction error exceeds mpjpe");
    }
    if (pck < 0.0 || pck > 1.0 || auc < 0.0 || auc > 1.0) {
        throw std::logic_error("pck/auc outside [0, 1]");
    }
}

PoseErrorReport evaluate_pose(const Eigen::MatrixX3d& pred, const Eigen::MatrixX3d& gt, int root,
                              double pck_threshold_mm, double auc_max_mm, int auc_steps) {
    const Eigen::MatrixX3d pc = root_center(pred, root);
    const Eigen::MatrixX3d gc = root_center(gt, root);
    PoseErrorReport report;
    report.per_joint = joint_distances_mm(pc, gc);
    report.mpjpe = report.per_joint.mean();
    report.recon_error = recon_error_mm(pred, gt);
    report.pck = pck(pc, gc, pck_threshold_mm);
    report.auc = auc(pc, gc, auc_max_mm, auc_steps);
    return report;
}

}  // namespace bodyfit
