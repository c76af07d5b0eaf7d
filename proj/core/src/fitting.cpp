#include "bodyfit/fitting.hpp"

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace bodyfit {

double Robustifier::rho(double e) const {
    if (type == Type::none) return e * e;
    const double e2 = e * e;
    const double s2 = sigma * sigma;
    return e2 * s2 / (e2 + s2);
}

double Robustifier::weight(double e) const {
    if (type == Type::none) return 1.0;
    const double s2 = sigma * sigma;
    const double d = e * e + s2;
    return s2 * s2 / (d * d);
}

void FitConfig::validate() const {
    if (lambda_theta < 0 || lambda_a < 0 || lambda_beta < 0) {
        throw std::invalid_argument("fit lambdas must be non-negative");
    }
    if (stages.empty()) throw std::invalid_argument("fit config needs at least one stage");
    for (const auto& s : stages) {
        if (s.max_iters < 1) throw std::invalid_argument("stage iteration budget must be >= 1");
    }
    if (run_camera_stage && camera_iters < 1) {
        throw std::invalid_argument("camera stage iteration budget must be >= 1");
    }
    if (robustifier.type == Robustifier::Type::geman_mcclure && !(robustifier.sigma > 0)) {
        throw std::invalid_argument("robustifier sigma must be positive");
    }
    if (!(damping_init > 0)) {
        throw std::invalid_argument("initial damping must be positive");
    }
}

FitConfig FitConfig::staged() {
    FitConfig cfg;
    cfg.stages.clear();
    // Descending prior ladder with ~85x / 12x / 1x of the final weights:
    // early stages lean on the priors to escape the mean-pose basin and keep
    // hinges away from backward-bend minima, the last stage relaxes to the
    // defaults so the data term dominates the endgame.
    constexpr double kLadder[4][2] = {{21.1, 15.2}, {21.1, 15.2}, {3.0, 3.0}, {0.25, 0.5}};
    for (const auto& [lt, la] : kLadder) {
        FitStage s;
        s.lambda_theta = lt;
        s.lambda_a = la;
        s.max_iters = 30;
        cfg.stages.push_back(s);
    }
    cfg.run_camera_stage = true;
    return cfg;
}

FitConfig FitConfig::single_stage(int max_iters) {
    FitConfig cfg;
    cfg.stages.clear();
    FitStage s;
    s.max_iters = max_iters;
    cfg.stages.push_back(s);
    // Warm starts already carry a translation estimate; the single stage
    // optimizes it jointly instead of running a separate alignment pass.
    cfg.run_camera_stage = false;
    return cfg;
}

FitProblem FitProblem::create(Keypoints2D keypoints, Camera camera, ModelParams init) {
    FitProblem p;
    p.keypoints = std::move(keypoints);
    p.camera = std::move(camera);
    p.init = std::move(init);
    p.validate();
    return p;
}

void FitProblem::validate() const {
    keypoints.validate();
    init.validate();
    if (!(camera.focal > 0) || !camera.principal_point.allFinite() ||
        !camera.translation.allFinite()) {
        throw std::invalid_argument("fit problem has invalid camera intrinsics");
    }
    const int observed = (keypoints.conf.array() > 0.0).count();
    if (observed < 6) {
        throw std::invalid_argument("fit problem is under-constrained (< 6 confident keypoints)");
    }
}

JointsEnergy e_joints(const BodyModel& model, const ModelParams& params, const Camera& camera,
                      const Keypoints2D& keypoints, const Robustifier& robustifier,
                      bool with_jacobian) {
    const int k = model.num_regressed_joints();
    if (keypoints.count() != k) {
        throw std::invalid_argument("keypoint count does not match the model");
    }
    const int joints = model.num_kinematic_joints();
    const int b = model.num_shape_dims();
    const int n = 3 + 3 * joints + b;

    const PosedBody body = forward(model, params);
    JointsJacobian fj;
    if (with_jacobian) fj = forward_jacobian(model, params);

    JointsEnergy out;
    out.residuals = Eigen::VectorXd::Zero(2 * k);
    out.weights = Eigen::VectorXd::Zero(k);
    if (with_jacobian) out.jacobian = Eigen::MatrixXd::Zero(2 * k, n);

    double err_sum = 0.0, conf_sum = 0.0;
    for (int i = 0; i < k; ++i) {
        const double conf = keypoints.conf[i];
        if (conf <= 0.0) continue;
        conf_sum += conf;

        Eigen::Vector2d uv;
        Eigen::Matrix<double, 2, 3> duv;
        const Eigen::Vector3d x = body.joints.row(i).transpose();
        if (!try_project_point(camera, x, &uv, with_jacobian ? &duv : nullptr)) {
            // Behind the camera: large finite penalty, no gradient.
            out.residuals.segment<2>(2 * i).setConstant(kBehindCameraResidual);
            const double e = out.residuals.segment<2>(2 * i).norm();
            out.value += conf * robustifier.rho(e);
            err_sum += conf * e;
            continue;
        }
        const Eigen::Vector2d delta = uv - keypoints.uv.row(i).transpose();
        const double e = delta.norm();
        out.residuals.segment<2>(2 * i) = delta;
        out.value += conf * robustifier.rho(e);
        out.weights[i] = conf * robustifier.weight(e);
        err_sum += conf * e;
        if (with_jacobian) {
            out.jacobian.block<2, 3>(2 * i, 0) = duv;
            out.jacobian.block(2 * i, 3, 2, 3 * joints) = duv * fj.d_theta.middleRows<3>(3 * i);
            if (b > 0) {
                out.jacobian.block(2 * i, 3 + 3 * joints, 2, b) =
                    duv * fj.d_beta.middleRows<3>(3 * i);
            }
        }
    }
    out.reproj_error = conf_sum > 0.0 ? err_sum / conf_sum : 0.0;
    return out;
}

namespace {

struct Lambdas {
    double theta, angle, beta;
};

Lambdas stage_lambdas(const FitConfig& cfg, const FitStage& s) {
    return {s.lambda_theta >= 0 ? s.lambda_theta : cfg.lambda_theta,
            s.lambda_a >= 0 ? s.lambda_a : cfg.lambda_a,
            s.lambda_beta >= 0 ? s.lambda_beta : cfg.lambda_beta};
}

struct State {
    ModelParams params;
    Eigen::Vector3d translation;
};

struct EvalContext {
    const BodyModel& model;
    Camera intrinsics;  // translation field overwritten per state
    const Keypoints2D& keypoints;
    const GmmPosePrior& pose_prior;
    const AnglePriorConfig& angle_prior;
    const Robustifier& robustifier;
};

Eigen::VectorXd body_pose(const State& x) { return x.params.theta.tail(x.params.theta.size() - 3); }

Camera with_translation(const EvalContext& ctx, const State& x) {
    Camera cam = ctx.intrinsics;
    cam.translation = x.translation;
    return cam;
}

EnergyBreakdown eval_energy(const EvalContext& ctx, const State& x, const Lambdas& l,
                            double* reproj = nullptr) {
    EnergyBreakdown bd;
    const JointsEnergy je =
        e_joints(ctx.model, x.params, with_translation(ctx, x), ctx.keypoints, ctx.robustifier,
                 /*with_jacobian=*/false);
    bd.joints = je.value;
    bd.theta = l.theta * e_theta(ctx.pose_prior, body_pose(x), false).value;
    bd.angle = l.angle * e_angle(x.params.theta, ctx.angle_prior, false).value;
    bd.beta = l.beta * e_beta(x.params.beta, false).value;
    if (reproj) *reproj = je.reproj_error;
    return bd;
}

struct System {
    EnergyBreakdown breakdown;
    double reproj = 0.0;
    Eigen::VectorXd g;
    Eigen::MatrixXd h;
};

System assemble(const EvalContext& ctx, const State& x, const Lambdas& l) {
    const int joints = ctx.model.num_kinematic_joints();
    const int b = ctx.model.num_shape_dims();
    const int n = 3 + 3 * joints + b;
    if (ctx.pose_prior.dim() != 3 * (joints - 1)) {
        throw std::invalid_argument("pose prior dimension does not match the model");
    }

    System sys;
    sys.g = Eigen::VectorXd::Zero(n);
    sys.h = Eigen::MatrixXd::Zero(n, n);

    const JointsEnergy je = e_joints(ctx.model, x.params, with_translation(ctx, x), ctx.keypoints,
                                     ctx.robustifier, /*with_jacobian=*/true);
    sys.breakdown.joints = je.value;
    sys.reproj = je.reproj_error;
    Eigen::VectorXd row_w(2 * ctx.model.num_regressed_joints());
    for (int i = 0; i < je.weights.size(); ++i) row_w.segment<2>(2 * i).setConstant(je.weights[i]);
    sys.g.noalias() = 2.0 * je.jacobian.transpose() * (row_w.asDiagonal() * je.residuals);
    sys.h.noalias() = 2.0 * je.jacobian.transpose() * row_w.asDiagonal() * je.jacobian;

    const EnergyEval et = e_theta(ctx.pose_prior, body_pose(x), true);
    sys.breakdown.theta = l.theta * et.value;
    sys.g.segment(6, et.gradient.size()) += l.theta * et.gradient;
    sys.h.block(6, 6, et.gradient.size(), et.gradient.size()) += l.theta * et.hessian;

    const EnergyEval ea = e_angle(x.params.theta, ctx.angle_prior, true);
    sys.breakdown.angle = l.angle * ea.value;
    sys.g.segment(3, 3 * joints) += l.angle * ea.gradient;
    sys.h.block(3, 3, 3 * joints, 3 * joints) += l.angle * ea.hessian;

    const EnergyEval eb = e_beta(x.params.beta, true);
    sys.breakdown.beta = l.beta * eb.value;
    if (b > 0) {
        sys.g.tail(b) += l.beta * eb.gradient;
        sys.h.bottomRightCorner(b, b) += l.beta * eb.hessian;
    }
    return sys;
}

struct StageSpec {
    int id = 0;  // -1 = camera stage
    bool translation = true, global_orient = true, pose = true, shape = true;
    Lambdas l;
    int max_iters = 30;
};

std::vector<int> free_indices(const StageSpec& s, int joints, int b) {
    std::vector<int> idx;
    if (s.translation) {
        for (int i = 0; i < 3; ++i) idx.push_back(i);
    }
    if (s.global_orient) {
        for (int i = 0; i < 3; ++i) idx.push_back(3 + i);
    }
    if (s.pose) {
        for (int i = 6; i < 3 + 3 * joints; ++i) idx.push_back(i);
    }
    if (s.shape) {
        for (int i = 0; i < b; ++i) idx.push_back(3 + 3 * joints + i);
    }
    return idx;
}

State apply_step(const State& x, const std::vector<int>& free, const Eigen::VectorXd& delta,
                 int joints, int b, bool clamp_shape) {
    State trial = x;
    for (std::size_t i = 0; i < free.size(); ++i) {
        const int idx = free[i];
        if (idx < 3) {
            trial.translation[idx] += delta[static_cast<int>(i)];
        } else if (idx < 3 + 3 * joints) {
            trial.params.theta[idx - 3] += delta[static_cast<int>(i)];
        } else {
            trial.params.beta[idx - 3 - 3 * joints] += delta[static_cast<int>(i)];
        }
    }
    if (clamp_shape && b > 0) {
        trial.params.beta = trial.params.beta.cwiseMax(-kBetaHardBound).cwiseMin(kBetaHardBound);
    }
    return trial;
}

// Damped Gauss-Newton loop over one stage. Returns true if the stage exited
// on a tolerance (as opposed to exhausting its budget or stalling).
bool run_stage(const EvalContext& ctx, const FitConfig& cfg, const StageSpec& spec, State& x,
               double& energy_x, int& accepted_total, FitTrace* trace) {
    const int joints = ctx.model.num_kinematic_joints();
    const int b = ctx.model.num_shape_dims();
    const std::vector<int> free = free_indices(spec, joints, b);
    if (free.empty()) return true;

    double damping = cfg.damping_init;
    System sys = assemble(ctx, x, spec.l);
    energy_x = sys.breakdown.total();
    for (int iter = 0; iter < spec.max_iters; ++iter) {
        const Eigen::VectorXd gf = sys.g(free);
        if (gf.lpNorm<Eigen::Infinity>() < cfg.gradient_tol) return true;

        Eigen::MatrixXd hff = sys.h(free, free);
        // Unit floor on the Marquardt scaling: directions with near-zero
        // curvature (the observation null space) must still feel the damping,
        // otherwise the solve is free to move them arbitrarily far.
        const Eigen::VectorXd scale = hff.diagonal().cwiseMax(1.0);
        hff.diagonal() += damping * scale;
        const Eigen::VectorXd delta = Eigen::LDLT<Eigen::MatrixXd>(hff).solve(-gf);

        bool accepted = false;
        double trial_energy = std::numeric_limits<double>::quiet_NaN();
        EnergyBreakdown trial_bd;
        State trial;
        if (delta.allFinite()) {
            trial = apply_step(x, free, delta, joints, b, spec.shape);
            trial_bd = eval_energy(ctx, trial, spec.l);
            trial_energy = trial_bd.total();
            accepted = std::isfinite(trial_energy) && trial_energy < energy_x;
        }
        if (trace) {
            trace->push_back(
                {spec.id, iter, accepted, trial_energy, trial_bd, delta.norm(), damping});
        }
        if (accepted) {
            const double decrease = energy_x - trial_energy;
            x = trial;
            energy_x = trial_energy;
            ++accepted_total;
            damping = std::max(damping / 3.0, 1e-12);
            if (delta.norm() < cfg.step_tol ||
                decrease < cfg.energy_tol * (1.0 + std::abs(trial_energy))) {
                return true;
            }
            sys = assemble(ctx, x, spec.l);
        } else {
            damping *= 2.0;
            if (damping > 1e12) return false;  // stalled
        }
    }
    return false;
}

}  // namespace

EnergyBreakdown total_energy(const BodyModel& model, const ModelParams& params,
                             const Camera& camera, const Keypoints2D& keypoints,
                             const GmmPosePrior& pose_prior, const AnglePriorConfig& angle_prior,
                             const FitConfig& cfg) {
    EvalContext ctx{model, camera, keypoints, pose_prior, angle_prior, cfg.robustifier};
    const State x{params, camera.translation};
    return eval_energy(ctx, x, {cfg.lambda_theta, cfg.lambda_a, cfg.lambda_beta});
}

Eigen::VectorXd total_energy_gradient(const BodyModel& model, const ModelParams& params,
                                      const Camera& camera, const Keypoints2D& keypoints,
                                      const GmmPosePrior& pose_prior,
                                      const AnglePriorConfig& angle_prior, const FitConfig& cfg) {
    EvalContext ctx{model, camera, keypoints, pose_prior, angle_prior, cfg.robustifier};
    const State x{params, camera.translation};
    return assemble(ctx, x, {cfg.lambda_theta, cfg.lambda_a, cfg.lambda_beta}).g;
}

CameraStageResult fit_camera_stage(const BodyModel& model, const FitProblem& problem,
                                   const GmmPosePrior& pose_prior,
                                   const AnglePriorConfig& angle_prior, const FitConfig& cfg) {
    cfg.validate();
    problem.validate();
    EvalContext ctx{model, problem.camera, problem.keypoints, pose_prior, angle_prior,
                    cfg.robustifier};
    State x{problem.init, problem.camera.translation};

    StageSpec spec;
    spec.id = -1;
    spec.translation = spec.global_orient = true;
    spec.pose = spec.shape = false;
    spec.l = {cfg.lambda_theta, cfg.lambda_a, cfg.lambda_beta};
    spec.max_iters = cfg.camera_iters;

    double energy = 0.0;
    int accepted = 0;
    run_stage(ctx, cfg, spec, x, energy, accepted, nullptr);
    if (!std::isfinite(energy)) {
        throw std::runtime_error("camera stage: energy not evaluable at the initial state");
    }
    return {x.translation, x.params.theta.head<3>(), accepted};
}

FitResult fit(const BodyModel& model, const FitProblem& problem, const GmmPosePrior& pose_prior,
              const AnglePriorConfig& angle_prior, const FitConfig& cfg, FitTrace* trace) {
    cfg.validate();
    problem.validate();
    if (problem.init.num_joints() != model.num_kinematic_joints() ||
        problem.init.beta.size() != model.num_shape_dims()) {
        throw std::invalid_argument("fit initialization does not match the model");
    }

    EvalContext ctx{model, problem.camera, problem.keypoints, pose_prior, angle_prior,
                    cfg.robustifier};
    State x{problem.init, problem.camera.translation};

    {
        const Lambdas l0 = stage_lambdas(cfg, cfg.stages.front());
        const double e0 = eval_energy(ctx, x, l0).total();
        if (!std::isfinite(e0)) {
            throw std::runtime_error("fit: energy not evaluable at the initial state");
        }
    }

    std::vector<StageSpec> specs;
    if (cfg.run_camera_stage) {
        StageSpec cam;
        cam.id = -1;
        cam.pose = cam.shape = false;
        cam.l = stage_lambdas(cfg, cfg.stages.front());
        cam.max_iters = cfg.camera_iters;
        specs.push_back(cam);
    }
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        const FitStage& s = cfg.stages[i];
        StageSpec spec;
        spec.id = static_cast<int>(i);
        spec.translation = s.translation;
        spec.global_orient = s.global_orient;
        spec.pose = s.pose;
        spec.shape = s.shape;
        spec.l = stage_lambdas(cfg, s);
        spec.max_iters = s.max_iters;
        specs.push_back(spec);
    }

    FitResult result;
    int accepted = 0;
    bool tol_exit = false;
    for (const auto& spec : specs) {
        double energy = 0.0;
        tol_exit = run_stage(ctx, cfg, spec, x, energy, accepted, trace);
    }

    result.params = x.params;
    result.translation = x.translation;
    result.iterations_used = accepted;
    result.converged = tol_exit;
    const Lambdas base{cfg.lambda_theta, cfg.lambda_a, cfg.lambda_beta};
    result.energy = eval_energy(ctx, x, base, &result.reproj_error);
    return result;
}

std::vector<FitResult> fit_batch(const BodyModel& model, const std::vector<FitProblem>& problems,
                                 const GmmPosePrior& pose_prior,
                                 const AnglePriorConfig& angle_prior, const FitConfig& cfg,
                                 int workers) {
    if (problems.empty()) throw std::invalid_argument("fit_batch needs at least one problem");
    std::vector<FitResult> results(problems.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= problems.size()) break;
            try {
                results[i] = fit(model, problems[i], pose_prior, angle_prior, cfg);
            } catch (const std::exception& ex) {
                FitResult failed;
                failed.params = problems[i].init;
                failed.translation = problems[i].camera.translation;
                failed.error = ex.what();
                results[i] = failed;
            }
        }
    };

    int n = workers > 0 ? workers : static_cast<int>(std::thread::hardware_concurrency());
    n = std::max(1, std::min<int>(n, static_cast<int>(problems.size())));
    if (n == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n);
        for (int t = 0; t < n; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    return results;
}

Keypoints2D fuse_keypoints(const Keypoints2D& gt, const Keypoints2D& det, const FuseConfig& cfg) {
    if (gt.count() != det.count()) {
        throw std::invalid_argument("fuse_keypoints: joint counts differ");
    }
    Keypoints2D out = gt;  // positions always come from the annotation
    for (int i = 0; i < gt.count(); ++i) {
        if (gt.conf[i] <= 0.0) {
            out.conf[i] = 0.0;
            continue;
        }
        if (det.conf[i] >= cfg.tau_det) {
            const double dist = (det.uv.row(i) - gt.uv.row(i)).norm();
            out.conf[i] = dist <= cfg.r_agree ? det.conf[i] : cfg.conf_disagree;
        } else {
            out.conf[i] = cfg.conf_gt_default;
        }
    }
    return out;
}

}  // namespace bodyfit
