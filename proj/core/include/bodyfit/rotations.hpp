#pragma once

#include <Eigen/Core>

namespace bodyfit::rot {

// Rotation representations used across the library:
//  - axis-angle: 3-vector, direction = axis, norm = angle in radians.
//    Canonical form keeps the angle in [0, pi]; at exactly pi the axis sign
//    is fixed so that its first nonzero component is positive.
//  - rotation matrix: orthonormal 3x3 with det +1.
//  - 6D: the first two columns of a rotation matrix stacked as
//    (col0, col1); decoded by Gram-Schmidt, third column by cross product.
//
// All 9-dimensional matrix derivatives use column-major vec() ordering,
// i.e. vec(R)[3*col + row] = R(row, col).

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat9x3 = Eigen::Matrix<double, 9, 3>;
using Mat9x6 = Eigen::Matrix<double, 9, 6>;

// Angle below which Rodrigues and its Jacobian switch to the second-order
// Taylor expansion.
inline constexpr double kSmallAngle = 1e-7;

Mat3 skew(const Vec3& v);

// Rodrigues formula; the zero vector maps to the identity.
Mat3 aa_to_matrix(const Vec3& r);

// Checks m^T m = I and det(m) = 1 within tol (max-abs elementwise).
bool is_rotation(const Mat3& m, double tol = 1e-9);

// Logarithm map. Throws std::invalid_argument on non-orthonormal input.
// Returned vector is canonical (angle in [0, pi], fixed sign at pi).
Vec3 matrix_to_aa(const Mat3& R);

// d vec(R) / d r, 9x3, column-major vec ordering.
Mat9x3 d_matrix_d_aa(const Vec3& r);

// Gram-Schmidt decode of the 6D representation. Throws
// std::invalid_argument when the two 3-vectors are (near-)zero or parallel.
Mat3 rot6d_to_matrix(const Vec6& a);

// First two columns of R stacked; rot6d_to_matrix(matrix_to_rot6d(R)) == R.
Vec6 matrix_to_rot6d(const Mat3& R);

// d vec(R) / d a, 9x6, column-major vec ordering.
Mat9x6 d_rot6d_to_matrix(const Vec6& a);

}  // namespace bodyfit::rot
