// Informational micro/meso benchmarks for the hot paths: rotation kernels,
// model forward passes with jacobians, energy assembly, full single fits, and
// batch-fitting throughput across worker counts.
#include <benchmark/benchmark.h>

#include <vector>

#include "bodyfit/body_model.hpp"
#include "bodyfit/camera.hpp"
#include "bodyfit/fitting.hpp"
#include "bodyfit/priors.hpp"
#include "bodyfit/regressor.hpp"
#include "bodyfit/rng.hpp"
#include "bodyfit/rotations.hpp"
#include "bodyfit/training.hpp"

namespace {

using namespace bodyfit;

// One shared scene so every benchmark sees the same model and data.
struct Scene {
    BodyModel model = make_toy_model(ToySpec{});
    GmmPosePrior prior;
    AnglePriorConfig angle;
    SyntheticDataset data;

    Scene() {
        const Eigen::MatrixXd bank = sample_pose_bank(model, 200, 1);
        prior = fit_gmm_em(bank, 4, 1);
        angle = make_default_angle_prior(model);
        data = generate_synthetic_dataset(model, prior, 16, 1.0, 0.1, 3);
    }
};

Scene& scene() {
    static Scene s;
    return s;
}

void bench_axis_angle_roundtrip(benchmark::State& state) {
    Rng rng(5);
    Eigen::Vector3d aa(rng.normal(), rng.normal(), rng.normal());
    for (auto _ : state) {
        const Eigen::Matrix3d r = rot::aa_to_matrix(aa);
        aa = rot::matrix_to_aa(r);
        benchmark::DoNotOptimize(aa);
    }
}
BENCHMARK(bench_axis_angle_roundtrip);

void bench_rot6d_decode_with_jacobian(benchmark::State& state) {
    Rng rng(6);
    Eigen::Matrix<double, 6, 1> raw;
    for (int i = 0; i < 6; ++i) raw[i] = rng.normal();
    for (auto _ : state) {
        benchmark::DoNotOptimize(rot::rot6d_to_matrix(raw));
        benchmark::DoNotOptimize(rot::d_rot6d_to_matrix(raw));
    }
}
BENCHMARK(bench_rot6d_decode_with_jacobian);

void bench_model_forward(benchmark::State& state) {
    const Scene& s = scene();
    ModelParams params = ModelParams::zeros(s.model.num_kinematic_joints(),
                                            s.model.num_shape_dims());
    Rng rng(7);
    for (int i = 0; i < params.theta.size(); ++i) params.theta[i] = 0.2 * rng.normal();
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward(s.model, params));
    }
}
BENCHMARK(bench_model_forward);

void bench_joints_jacobian(benchmark::State& state) {
    const Scene& s = scene();
    ModelParams params = ModelParams::zeros(s.model.num_kinematic_joints(),
                                            s.model.num_shape_dims());
    Rng rng(8);
    for (int i = 0; i < params.theta.size(); ++i) params.theta[i] = 0.2 * rng.normal();
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward_jacobian(s.model, params));
    }
}
BENCHMARK(bench_joints_jacobian);

void bench_single_fit(benchmark::State& state) {
    const Scene& s = scene();
    const Camera intrinsics = s.data.intrinsics();
    const Regressor init = make_mean_pose_regressor(s.model);
    const FitConfig cfg = FitConfig::single_stage();
    const TrainExample& ex = s.data.examples.front();
    const RegressorPrediction pred = regress(init, s.model, ex.keypoints, intrinsics,
                                             s.data.crop_size);
    Camera cam = intrinsics;
    cam.translation = pred.translation;
    const FitProblem problem = FitProblem::create(ex.keypoints, cam, pred.params);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit(s.model, problem, s.prior, s.angle, cfg));
    }
}
BENCHMARK(bench_single_fit)->Unit(benchmark::kMillisecond);

void bench_batch_fit(benchmark::State& state) {
    const Scene& s = scene();
    const Camera intrinsics = s.data.intrinsics();
    const Regressor init = make_mean_pose_regressor(s.model);
    const FitConfig cfg = FitConfig::single_stage();
    std::vector<FitProblem> problems;
    for (const TrainExample& ex : s.data.examples) {
        const RegressorPrediction pred = regress(init, s.model, ex.keypoints, intrinsics,
                                                 s.data.crop_size);
        Camera cam = intrinsics;
        cam.translation = pred.translation;
        problems.push_back(FitProblem::create(ex.keypoints, cam, pred.params));
    }
    const int workers = static_cast<int>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit_batch(s.model, problems, s.prior, s.angle, cfg, workers));
    }
    state.counters["examples"] = static_cast<double>(problems.size());
}
BENCHMARK(bench_batch_fit)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void bench_regressor_step(benchmark::State& state) {
    const Scene& s = scene();
    const Camera intrinsics = s.data.intrinsics();
    Regressor reg = make_mlp_regressor(s.model, {64, 64}, 1);
    const TrainExample& ex = s.data.examples.front();
    const Eigen::VectorXd input =
        normalize_keypoints(ex.keypoints, intrinsics.principal_point, s.data.crop_size);
    MlpGradients grads = make_zero_gradients(reg.mlp);
    for (auto _ : state) {
        std::vector<Eigen::VectorXd> hidden;
        const Eigen::VectorXd out = mlp_forward(reg.mlp, input, &hidden);
        mlp_backward(reg.mlp, input, hidden, Eigen::VectorXd::Ones(out.size()), &grads);
        benchmark::DoNotOptimize(grads);
    }
}
BENCHMARK(bench_regressor_step);

void bench_pose_prior_energy(benchmark::State& state) {
    const Scene& s = scene();
    Rng rng(9);
    Eigen::VectorXd theta(3 * (s.model.num_kinematic_joints() - 1));
    for (int i = 0; i < theta.size(); ++i) theta[i] = 0.2 * rng.normal();
    for (auto _ : state) {
        benchmark::DoNotOptimize(e_theta(s.prior, theta));
    }
}
BENCHMARK(bench_pose_prior_energy);

}  // namespace

BENCHMARK_MAIN();
