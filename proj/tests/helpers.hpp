#pragma once

// Shared sampling helpers for the test suites.

#include <Eigen/Dense>

#include "bodyfit/rng.hpp"
#include "bodyfit/rotations.hpp"

namespace testutil {

inline Eigen::Vector3d random_unit_axis(bodyfit::Rng& rng) {
    Eigen::Vector3d v;
    do {
        v << rng.normal(), rng.normal(), rng.normal();
    } while (v.norm() < 1e-6);
    return v.normalized();
}

inline Eigen::Vector3d random_axis_angle(bodyfit::Rng& rng, double min_angle, double max_angle) {
    return random_unit_axis(rng) * rng.uniform(min_angle, max_angle);
}

inline Eigen::Matrix3d random_rotation(bodyfit::Rng& rng) {
    return bodyfit::rot::aa_to_matrix(random_axis_angle(rng, 0.0, M_PI));
}

// Max elementwise |a - b|.
template <typename A, typename B>
double max_abs_diff(const A& a, const B& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace testutil
