#include "bodyfit/rotations.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace bodyfit::rot {

Mat3 skew(const Vec3& v) {
    Mat3 s;
    s << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
        -v.y(), v.x(), 0.0;
    return s;
}

Mat3 aa_to_matrix(const Vec3& r) {
    const double theta = r.norm();
    const Mat3 s = skew(r);
    if (theta < kSmallAngle) {
        return Mat3::Identity() + s + 0.5 * (s * s);
    }
    const double a = std::sin(theta) / theta;
    const double b = (1.0 - std::cos(theta)) / (theta * theta);
    return Mat3::Identity() + a * s + b * (s * s);
}

bool is_rotation(const Mat3& m, double tol) {
    if (!m.allFinite()) return false;
    const Mat3 err = m.transpose() * m - Mat3::Identity();
    if (err.cwiseAbs().maxCoeff() > tol) return false;
    return std::abs(m.determinant() - 1.0) <= tol;
}

namespace {

Vec3 canonical_pi_axis(Vec3 axis) {
    for (int i = 0; i < 3; ++i) {
        if (axis[i] != 0.0) {
            if (axis[i] < 0.0) axis = -axis;
            break;
        }
    }
    return axis;
}

}  // namespace

Vec3 matrix_to_aa(const Mat3& R) {
    if (!is_rotation(R, 1e-8)) {
        throw std::invalid_argument("matrix_to_aa: input is not a rotation matrix");
    }
    const double cos_theta = std::clamp((R.trace() - 1.0) * 0.5, -1.0, 1.0);
    const Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
    // atan2 of (sin, cos) recovered from the matrix stays well conditioned at
    // both ends of [0, pi]; acos alone loses ~sqrt(eps) digits near pi.
    const double theta = std::atan2(0.5 * w.norm(), cos_theta);

    if (theta < kSmallAngle) {
        // R ~ I + skew(r): the skew part is 2r to first order.
        return 0.5 * w;
    }
    if (theta < M_PI - 1e-4) {
        return (theta / (2.0 * std::sin(theta))) * w;
    }

    // Near pi the vee part vanishes; use sym(R) = cos(t) I + (1 - cos(t)) aa^T,
    // which stays well conditioned there.
    const Mat3 m = (0.5 * (R + R.transpose()) - cos_theta * Mat3::Identity()) / (1.0 - cos_theta);
    int imax = 0;
    m.diagonal().maxCoeff(&imax);
    Vec3 axis;
    axis[imax] = std::sqrt(std::max(m(imax, imax), 0.0));
    for (int i = 0; i < 3; ++i) {
        if (i != imax) axis[i] = m(imax, i) / axis[imax];
    }
    axis.normalize();
    // Fix the sign from the skew part when it is still informative, else
    // fall back to the canonical convention for the exact half-turn.
    if (w.norm() > 1e-8) {
        if (axis.dot(w) < 0.0) axis = -axis;
    } else {
        axis = canonical_pi_axis(axis);
    }
    return theta * axis;
}

Mat9x3 d_matrix_d_aa(const Vec3& r) {
    const double theta2 = r.squaredNorm();
    Mat9x3 jac;
    if (theta2 < kSmallAngle * kSmallAngle) {
        // Second-order Taylor of Rodrigues: R = I + S + S^2/2.
        const Mat3 s = skew(r);
        for (int i = 0; i < 3; ++i) {
            const Mat3 e = skew(Vec3::Unit(i));
            const Mat3 d = e + 0.5 * (e * s + s * e);
            jac.col(i) = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(d.data());
        }
        return jac;
    }
    // Gallego & Yezzi: dR/dr_i = (r_i [r]x + [r x (I - R) e_i]x) R / |r|^2.
    const Mat3 R = aa_to_matrix(r);
    const Mat3 s = skew(r);
    const Mat3 ir = Mat3::Identity() - R;
    for (int i = 0; i < 3; ++i) {
        const Vec3 v = r.cross(ir.col(i));
        const Mat3 d = ((r[i] * s + skew(v)) * R) / theta2;
        jac.col(i) = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(d.data());
    }
    return jac;
}

Mat3 rot6d_to_matrix(const Vec6& a) {
    const Vec3 a1 = a.head<3>();
    const Vec3 a2 = a.tail<3>();
    constexpr double kDegenerate = 1e-8;
    const double n1 = a1.norm();
    if (n1 < kDegenerate) {
        throw std::invalid_argument("rot6d_to_matrix: first vector is (near-)zero");
    }
    const Vec3 b1 = a1 / n1;
    const Vec3 u2 = a2 - b1.dot(a2) * b1;
    const double n2 = u2.norm();
    if (n2 < kDegenerate * std::max(1.0, a2.norm())) {
        throw std::invalid_argument("rot6d_to_matrix: vectors are parallel or second is zero");
    }
    const Vec3 b2 = u2 / n2;
    Mat3 R;
    R.col(0) = b1;
    R.col(1) = b2;
    R.col(2) = b1.cross(b2);
    return R;
}

Vec6 matrix_to_rot6d(const Mat3& R) {
    Vec6 a;
    a.head<3>() = R.col(0);
    a.tail<3>() = R.col(1);
    return a;
}

Mat9x6 d_rot6d_to_matrix(const Vec6& a) {
    const Vec3 a1 = a.head<3>();
    const Vec3 a2 = a.tail<3>();
    const double n1 = a1.norm();
    const Vec3 b1 = a1 / n1;
    const Vec3 u2 = a2 - b1.dot(a2) * b1;
    const double n2 = u2.norm();
    const Vec3 b2 = u2 / n2;

    const Mat3 db1_da1 = (Mat3::Identity() - b1 * b1.transpose()) / n1;
    const Mat3 du2_db1 = -(b1 * a2.transpose() + b1.dot(a2) * Mat3::Identity());
    const Mat3 db2_du2 = (Mat3::Identity() - b2 * b2.transpose()) / n2;

    const Mat3 db1_da2 = Mat3::Zero();
    const Mat3 db2_da1 = db2_du2 * du2_db1 * db1_da1;
    const Mat3 db2_da2 = db2_du2 * (Mat3::Identity() - b1 * b1.transpose());

    // b3 = b1 x b2 => db3 = -[b2]x db1 + [b1]x db2.
    const Mat3 db3_da1 = -skew(b2) * db1_da1 + skew(b1) * db2_da1;
    const Mat3 db3_da2 = skew(b1) * db2_da2;

    Mat9x6 jac;
    jac.block<3, 3>(0, 0) = db1_da1;
    jac.block<3, 3>(0, 3) = db1_da2;
    jac.block<3, 3>(3, 0) = db2_da1;
    jac.block<3, 3>(3, 3) = db2_da2;
    jac.block<3, 3>(6, 0) = db3_da1;
    jac.block<3, 3>(6, 3) = db3_da2;
    return jac;
}

}  // namespace bodyfit::rot
