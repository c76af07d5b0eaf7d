#include "bodyfit/priors.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bodyfit/rng.hpp"

namespace bodyfit {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

void GmmPosePrior::refresh_norm_constants() {
    const int c = components();
    const int d = dim();
    log_norm_constants.resize(c);
    for (int i = 0; i < c; ++i) {
        const Eigen::LLT<Eigen::MatrixXd> llt(precisions[i]);
        if (llt.info() != Eigen::Success) {
            throw std::invalid_argument("gmm precision matrix is not positive definite");
        }
        const double log_det_p =
            2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        log_norm_constants[i] = std::log(weights[i]) + 0.5 * log_det_p - 0.5 * d * kLog2Pi;
    }
}

void GmmPosePrior::validate() const {
    if (components() < 1 || dim() < 1) throw std::invalid_argument("empty gmm prior");
    if (std::abs(weights.sum() - 1.0) > 1e-12 || (weights.array() <= 0.0).any()) {
        throw std::invalid_argument("gmm weights must be positive and sum to 1");
    }
    if (static_cast<int>(precisions.size()) != components() ||
        log_norm_constants.size() != components() || means.rows() != components()) {
        throw std::invalid_argument("gmm field sizes disagree");
    }
    for (const auto& p : precisions) {
        if (p.rows() != dim() || p.cols() != dim()) {
            throw std::invalid_argument("gmm precision has wrong size");
        }
        if ((p - p.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
            throw std::invalid_argument("gmm precision not symmetric");
        }
        if (Eigen::LLT<Eigen::MatrixXd>(p).info() != Eigen::Success) {
            throw std::invalid_argument("gmm precision not positive definite");
        }
    }
}

EnergyEval e_theta(const GmmPosePrior& prior, const Eigen::VectorXd& body_pose,
                   bool with_hessian) {
    const int c = prior.components();
    const int d = prior.dim();
    if (body_pose.size() != d) throw std::invalid_argument("pose dimension mismatch with prior");

    // Per-component log weights, then responsibilities via log-sum-exp.
    Eigen::VectorXd log_terms(c);
    std::vector<Eigen::VectorXd> deltas(c);
    for (int i = 0; i < c; ++i) {
        deltas[i] = body_pose - prior.means.row(i).transpose();
        log_terms[i] =
            prior.log_norm_constants[i] - 0.5 * deltas[i].dot(prior.precisions[i] * deltas[i]);
    }
    const double m = log_terms.maxCoeff();
    const double lse = m + std::log((log_terms.array() - m).exp().sum());

    EnergyEval out;
    out.value = -lse;
    out.gradient = Eigen::VectorXd::Zero(d);
    if (with_hessian) out.hessian = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < c; ++i) {
        const double resp = std::exp(log_terms[i] - lse);
        out.gradient += resp * (prior.precisions[i] * deltas[i]);
        if (with_hessian) out.hessian += resp * prior.precisions[i];
    }
    return out;
}

void AnglePriorConfig::validate(int num_kinematic_joints) const {
    for (const auto& e : entries) {
        if (e.joint < 0 || e.joint >= num_kinematic_joints || e.component < 0 ||
            e.component > 2) {
            throw std::invalid_argument("angle prior entry out of range");
        }
    }
}

AnglePriorConfig make_default_angle_prior(const BodyModel& model) {
    AnglePriorConfig cfg;
    // Signs chosen so the toy humanoid's natural bending direction (opposite
    // the sign) relaxes the penalty: knees flex by positive x-rotation, the
    // left elbow by negative y-rotation, the right elbow by positive.
    const struct {
        const char* name;
        int component;
        double sign;
    } hinges[] = {
        {"left_knee", 0, -1.0},
        {"right_knee", 0, -1.0},
        {"left_elbow", 1, 1.0},
        {"right_elbow", 1, -1.0},
    };
    for (const auto& h : hinges) {
        const int j = model.joint_index(h.name);
        if (j >= 0 && j < model.num_kinematic_joints()) {
            cfg.entries.push_back({j, h.component, h.sign});
        }
    }
    return cfg;
}

EnergyEval e_angle(const Eigen::VectorXd& theta, const AnglePriorConfig& cfg, bool with_hessian) {
    EnergyEval out;
    out.gradient = Eigen::VectorXd::Zero(theta.size());
    if (with_hessian) out.hessian = Eigen::MatrixXd::Zero(theta.size(), theta.size());
    for (const auto& e : cfg.entries) {
        const int idx = 3 * e.joint + e.component;
        if (idx >= theta.size()) throw std::invalid_argument("angle prior index out of range");
        const double x = std::exp(2.0 * e.sign * theta[idx]);  // = exp(sign*t)^2
        out.value += x;
        out.gradient[idx] += 2.0 * e.sign * x;
        // Gauss-Newton curvature of the residual exp(sign*t).
        if (with_hessian) out.hessian(idx, idx) += 2.0 * e.sign * e.sign * x;
    }
    return out;
}

EnergyEval e_beta(const Eigen::VectorXd& beta, bool with_hessian) {
    EnergyEval out;
    out.value = beta.squaredNorm();
    out.gradient = 2.0 * beta;
    if (with_hessian) {
        out.hessian = 2.0 * Eigen::MatrixXd::Identity(beta.size(), beta.size());
    }
    return out;
}

namespace {

// k-means++ style seeding: each next center drawn with probability
// proportional to the squared distance from the nearest chosen center.
Eigen::MatrixXd seed_centers(const Eigen::MatrixXd& samples, int c, Rng& rng) {
    const int m = static_cast<int>(samples.rows());
    Eigen::MatrixXd centers(c, samples.cols());
    centers.row(0) = samples.row(static_cast<int>(rng.index(m)));
    Eigen::VectorXd d2 = (samples.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int i = 1; i < c; ++i) {
        const double total = d2.sum();
        int pick = 0;
        if (total > 0.0) {
            const double u = rng.uniform() * total;
            double acc = 0.0;
            for (pick = 0; pick < m - 1; ++pick) {
                acc += d2[pick];
                if (acc >= u) break;
            }
        } else {
            pick = static_cast<int>(rng.index(m));
        }
        centers.row(i) = samples.row(pick);
        d2 = d2.cwiseMin((samples.rowwise() - centers.row(i)).rowwise().squaredNorm());
    }
    return centers;
}

}  // namespace

GmmPosePrior fit_gmm_em(const Eigen::MatrixXd& samples, int components, unsigned seed,
                        int max_iters, double tol, std::vector<double>* ll_history) {
    const int m = static_cast<int>(samples.rows());
    const int d = static_cast<int>(samples.cols());
    if (components < 1) throw std::invalid_argument("need at least one mixture component");
    if (m < 10 * components) {
        throw std::invalid_argument("gmm fit needs at least 10 samples per component");
    }
    const Eigen::RowVectorXd data_mean = samples.colwise().mean();
    if ((samples.rowwise() - data_mean).cwiseAbs().maxCoeff() < 1e-12) {
        throw std::runtime_error("gmm fit on degenerate (all-identical) samples");
    }

    Rng rng(seed);
    Eigen::MatrixXd means = seed_centers(samples, components, rng);
    Eigen::VectorXd weights = Eigen::VectorXd::Constant(components, 1.0 / components);
    const Eigen::MatrixXd centered = samples.rowwise() - data_mean;
    Eigen::MatrixXd global_cov = (centered.transpose() * centered) / m;
    global_cov.diagonal().array() += 1e-6;
    std::vector<Eigen::MatrixXd> covs(components, global_cov);

    Eigen::MatrixXd log_resp(m, components);
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < max_iters; ++iter) {
        // E-step in log space.
        for (int c = 0; c < components; ++c) {
            const Eigen::LLT<Eigen::MatrixXd> llt(covs[c]);
            const double log_det =
                2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
            const double log_norm = std::log(weights[c]) - 0.5 * (d * kLog2Pi + log_det);
            for (int i = 0; i < m; ++i) {
                const Eigen::VectorXd delta = (samples.row(i) - means.row(c)).transpose();
                const Eigen::VectorXd white = llt.matrixL().solve(delta);
                log_resp(i, c) = log_norm - 0.5 * white.squaredNorm();
            }
        }
        double ll = 0.0;
        for (int i = 0; i < m; ++i) {
            const double mx = log_resp.row(i).maxCoeff();
            const double lse = mx + std::log((log_resp.row(i).array() - mx).exp().sum());
            ll += lse;
            log_resp.row(i) = (log_resp.row(i).array() - lse).exp();
        }
        if (ll_history) ll_history->push_back(ll);

        // M-step (log_resp now holds plain responsibilities).
        for (int c = 0; c < components; ++c) {
            const double nc = log_resp.col(c).sum();
            weights[c] = nc / m;
            if (nc < 1e-12) continue;  // starved component: keep previous parameters
            means.row(c) = (log_resp.col(c).transpose() * samples) / nc;
            const Eigen::MatrixXd diff = samples.rowwise() - means.row(c);
            covs[c] = (diff.transpose() * (log_resp.col(c).asDiagonal() * diff)) / nc;
            covs[c].diagonal().array() += 1e-6;
        }
        weights = weights.cwiseMax(1e-10);  // keep log(w) finite if a component starves
        weights /= weights.sum();

        if (std::abs(ll - prev_ll) <= tol * (1.0 + std::abs(ll))) break;
        prev_ll = ll;
    }

    GmmPosePrior prior;
    prior.weights = weights;
    prior.means = means;
    prior.precisions.resize(components);
    const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(d, d);
    for (int c = 0; c < components; ++c) {
        prior.precisions[c] = Eigen::LLT<Eigen::MatrixXd>(covs[c]).solve(identity);
        // Symmetrize against round-off so validate() holds bit-for-bit.
        prior.precisions[c] = 0.5 * (prior.precisions[c] + prior.precisions[c].transpose()).eval();
    }
    prior.refresh_norm_constants();
    prior.validate();
    return prior;
}

Eigen::MatrixXd sample_pose_bank(const BodyModel& model, int count, unsigned seed,
                                 double jitter) {
    const int d = 3 * (model.num_kinematic_joints() - 1);
    if (count < 1) throw std::invalid_argument("pose bank needs at least one sample");

    // Hinge components are reflected onto their natural side so the bank (and
    // everything sampled from a prior fitted to it) respects the same anatomy
    // the angle energy encodes.
    std::vector<std::pair<int, double>> hinges;  // (bank column, sign)
    for (const AnglePriorEntry& e : make_default_angle_prior(model).entries) {
        if (e.joint >= 1) hinges.emplace_back(3 * (e.joint - 1) + e.component, e.sign);
    }
    const auto naturalize = [&hinges](Eigen::MatrixXd* rows) {
        for (int i = 0; i < rows->rows(); ++i) {
            for (const auto& [col, sign] : hinges) {
                (*rows)(i, col) = -sign * std::abs((*rows)(i, col));
            }
        }
    };

    Rng rng(seed);
    // A few archetype poses: rest plus seeded smooth bends.
    constexpr int kArchetypes = 5;
    Eigen::MatrixXd archetypes = Eigen::MatrixXd::Zero(kArchetypes, d);
    for (int a = 1; a < kArchetypes; ++a) {
        for (int i = 0; i < d; ++i) archetypes(a, i) = rng.uniform(-0.4, 0.4);
    }
    naturalize(&archetypes);

    Eigen::MatrixXd bank(count, d);
    for (int i = 0; i < count; ++i) {
        const int a = static_cast<int>(rng.index(kArchetypes));
        for (int j = 0; j < d; ++j) bank(i, j) = archetypes(a, j) + jitter * rng.normal();
    }
    naturalize(&bank);
    return bank;
}

}  // namespace bodyfit
