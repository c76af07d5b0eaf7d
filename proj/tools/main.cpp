// Command-line surface for the body-fitting pipeline: synthetic assets in,
// fits / training / evaluation / mesh export out. Every command is
// deterministic given its flags and seed, exits 0 on success, and prints a
// one-line diagnostic on failure.
#include <cstdint>
#include <cstdio>
#include <exception>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bodyfit/body_model.hpp"
#include "bodyfit/camera.hpp"
#include "bodyfit/fitting.hpp"
#include "bodyfit/formats.hpp"
#include "bodyfit/metrics.hpp"
#include "bodyfit/priors.hpp"
#include "bodyfit/regressor.hpp"
#include "bodyfit/text_io.hpp"
#include "bodyfit/training.hpp"

namespace {

using namespace bodyfit;

// "SEGMENTSxVERTSxSHAPE[xREGRESSED]", e.g. "24x8x10".
ToySpec parse_model_spec(const std::string& text) {
    ToySpec spec;
    int regressed = -1;
    const int got = std::sscanf(text.c_str(), "%dx%dx%dx%d", &spec.n_segments,
                                &spec.verts_per_segment, &spec.shape_dims, &regressed);
    if (got < 3) {
        throw std::runtime_error("bad --spec '" + text + "': expected SEGMENTSxVERTSxSHAPE");
    }
    if (got == 4) spec.regressed_joints = regressed;
    return spec;
}

struct FitFlags {
    std::string model_path, prior_path, data_path, out_path;
    std::string schedule = "staged";
    std::string init = "mean";
    std::string init_file, trace_path, config_path;
    int workers = 0;
};

void run_fit(const FitFlags& flags) {
    const BodyModel model = load_body_model(flags.model_path);
    const GmmPosePrior prior = load_gmm_prior(flags.prior_path);
    const SyntheticDataset data = load_dataset(flags.data_path, /*with_gt=*/false);
    const AnglePriorConfig angle = make_default_angle_prior(model);
    const Camera intrinsics = data.intrinsics();
    const int joints = model.num_kinematic_joints();
    const int shape_dims = model.num_shape_dims();

    FitConfig cfg;
    if (flags.schedule == "staged") {
        cfg = FitConfig::staged();
    } else if (flags.schedule == "single") {
        cfg = FitConfig::single_stage();
    } else {
        throw std::runtime_error("bad --schedule '" + flags.schedule + "': staged or single");
    }
    if (!flags.config_path.empty()) {
        apply_config_overrides(load_text_document(flags.config_path), &cfg, nullptr);
    }
    cfg.validate();

    // Initial states per example.
    std::optional<Dictionary> init_dict;
    std::optional<Regressor> init_regressor;
    if (flags.init == "file") {
        if (flags.init_file.empty()) throw std::runtime_error("--init file needs --init-file");
        const TextDocument doc = load_text_document(flags.init_file);
        if (doc.doctype() == kDictionaryDoctype) {
            init_dict = dictionary_from(doc);
        } else if (doc.doctype() == kRegressorDoctype) {
            init_regressor = regressor_from(doc);
        } else {
            throw std::runtime_error("--init-file must be a fit dictionary or a regressor file");
        }
    } else if (flags.init != "mean" && flags.init != "translation-only") {
        throw std::runtime_error("bad --init '" + flags.init +
                                 "': mean, translation-only, or file");
    }
    const Regressor mean_regressor = make_mean_pose_regressor(model);

    std::vector<FitProblem> problems;
    std::vector<int> problem_ids;
    int skipped = 0;
    for (const TrainExample& ex : data.examples) {
        ModelParams params = ModelParams::zeros(joints, shape_dims);
        Eigen::Vector3d translation(0.0, 0.0, mean_regressor.fallback_depth);
        if (flags.init == "translation-only") {
            translation = translation_anchor(mean_regressor, model, ex.keypoints, intrinsics);
        } else if (init_dict) {
            const DictionaryEntry* entry = init_dict->find(ex.id);
            if (entry == nullptr) {
                ++skipped;
                continue;
            }
            params = entry->params;
            translation = entry->translation;
        } else if (init_regressor) {
            const RegressorPrediction pred =
                regress(*init_regressor, model, ex.keypoints, intrinsics, data.crop_size);
            params = pred.params;
            translation = pred.translation;
        }
        Camera cam = intrinsics;
        cam.translation = translation;
        try {
            problems.push_back(FitProblem::create(ex.keypoints, cam, params));
            problem_ids.push_back(ex.id);
        } catch (const std::exception&) {
            ++skipped;  // under-constrained example
        }
    }

    std::vector<FitResult> results;
    FitTrace trace;
    if (!flags.trace_path.empty()) {
        // Tracing runs sequentially; results are bitwise identical to the
        // batch path, the records just stay in example order.
        results.reserve(problems.size());
        for (const FitProblem& problem : problems) {
            results.push_back(fit(model, problem, prior, angle, cfg, &trace));
        }
        save_trace(flags.trace_path, trace);
    } else {
        results = fit_batch(model, problems, prior, angle, cfg, flags.workers);
    }

    Dictionary fits;
    int failed = 0, converged = 0;
    double reproj_sum = 0.0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const FitResult& r = results[i];
        if (!r.ok()) {
            ++failed;
            continue;
        }
        fits.update(problem_ids[i], r.params, r.translation, r.reproj_error, 0);
        reproj_sum += r.reproj_error;
        if (r.converged) ++converged;
    }
    const std::size_t succeeded = fits.size();
    if (succeeded == 0) throw std::runtime_error("no example could be fitted");
    save_dictionary(flags.out_path, fits, joints, shape_dims);
    std::printf("fit: %zu/%zu examples (%d skipped, %d failed), %d converged, mean reproj %.4f px -> %s\n",
                succeeded, data.examples.size(), skipped, failed, converged,
                reproj_sum / static_cast<double>(succeeded), flags.out_path.c_str());
}

struct TrainFlags {
    std::string model_path, prior_path, data_path;
    std::string config_path, dict_in, dict_out, regressor_out, log_path;
    int epochs = -1;  // below zero: config/default decides
    std::uint64_t seed = 0;
    std::vector<int> hidden{64, 64};
};

void run_train(const TrainFlags& flags) {
    const BodyModel model = load_body_model(flags.model_path);
    const GmmPosePrior prior = load_gmm_prior(flags.prior_path);
    // Structurally unpaired: the ground-truth section is never read here.
    const SyntheticDataset data = load_dataset(flags.data_path, /*with_gt=*/false);
    const AnglePriorConfig angle = make_default_angle_prior(model);
    const Camera intrinsics = data.intrinsics();

    TrainConfig tcfg;
    tcfg.seed = flags.seed;
    FitConfig fcfg = FitConfig::single_stage();
    if (!flags.config_path.empty()) {
        apply_config_overrides(load_text_document(flags.config_path), &fcfg, &tcfg);
    }
    if (flags.epochs >= 0) tcfg.epochs = flags.epochs;  // the flag beats the config
    tcfg.validate();
    fcfg.validate();

    Dictionary dict;
    if (!flags.dict_in.empty()) dict = load_dictionary(flags.dict_in);
    Regressor regressor = make_mlp_regressor(model, flags.hidden, tcfg.seed);

    Eigen::MatrixXd log_rows(tcfg.epochs, 8);
    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const EpochStats stats =
            train_epoch(&regressor, model, data.examples, intrinsics, data.crop_size, &dict,
                        prior, angle, fcfg, tcfg, epoch);
        std::printf(
            "epoch %d: dict %d entries (mean reproj %.4f px), accept %.2f, fit reproj %.4f px, "
            "L3d %.5f, Lmesh %.6f, L2d %.3f\n",
            stats.epoch, stats.dictionary_size, stats.mean_dict_reproj, stats.acceptance_rate,
            stats.mean_fit_reproj, stats.mean_loss_3d, stats.mean_loss_mesh, stats.mean_loss_2d);
        log_rows.row(epoch) << stats.epoch, stats.mean_loss_3d, stats.mean_loss_mesh,
            stats.mean_loss_2d, stats.mean_fit_reproj, stats.mean_dict_reproj,
            stats.acceptance_rate, stats.dictionary_size;
    }

    if (!flags.dict_out.empty()) {
        save_dictionary(flags.dict_out, dict, model.num_kinematic_joints(),
                        model.num_shape_dims());
    }
    if (!flags.regressor_out.empty()) save_regressor(flags.regressor_out, regressor);
    if (!flags.log_path.empty()) {
        TextDocument log("trainlog/1");
        log.add_matrix("epochs", log_rows);
        save_text_document(flags.log_path, log);
    }
    std::printf("train: %d epochs on %zu examples, dictionary %zu entries\n", tcfg.epochs,
                data.examples.size(), dict.size());
}

struct EvalFlags {
    std::string model_path, data_path, params_path, report_path;
};

void run_eval(const EvalFlags& flags) {
    const BodyModel model = load_body_model(flags.model_path);
    const SyntheticDataset data = load_dataset(flags.data_path, /*with_gt=*/true);
    const TextDocument params_doc = load_text_document(flags.params_path);

    std::optional<Dictionary> dict;
    std::optional<Regressor> regressor;
    if (params_doc.doctype() == kDictionaryDoctype) {
        dict = dictionary_from(params_doc);
    } else if (params_doc.doctype() == kRegressorDoctype) {
        regressor = regressor_from(params_doc);
    } else {
        throw std::runtime_error("--params must be a fit dictionary or a regressor file");
    }
    const Camera intrinsics = data.intrinsics();

    double mpjpe = 0.0, recon = 0.0, pck_sum = 0.0, auc_sum = 0.0, reproj = 0.0;
    Eigen::MatrixXd per_example(static_cast<Eigen::Index>(data.examples.size()), 5);
    Eigen::Index evaluated = 0;
    for (std::size_t i = 0; i < data.examples.size(); ++i) {
        const TrainExample& ex = data.examples[i];
        ModelParams params;
        if (dict) {
            const DictionaryEntry* entry = dict->find(ex.id);
            if (entry == nullptr) continue;  // uncovered example
            params = entry->params;
            reproj += entry->reproj_error;
        } else {
            params = regress(*regressor, model, ex.keypoints, intrinsics, data.crop_size).params;
        }
        const Eigen::MatrixX3d pred = forward(model, params).joints;
        const Eigen::MatrixX3d gt = forward(model, data.gt[i].params).joints;
        const PoseErrorReport report = evaluate_pose(pred, gt);
        report.validate();
        per_example.row(evaluated) << ex.id, report.mpjpe, report.recon_error, report.pck,
            report.auc;
        mpjpe += report.mpjpe;
        recon += report.recon_error;
        pck_sum += report.pck;
        auc_sum += report.auc;
        ++evaluated;
    }
    if (evaluated == 0) throw std::runtime_error("no example is covered by the given parameters");
    const double n = static_cast<double>(evaluated);

    TextDocument report(kReportDoctype);
    report.add_int("examples", static_cast<std::int64_t>(data.examples.size()));
    report.add_int("evaluated", evaluated);
    report.add_scalar("mean_mpjpe_mm", mpjpe / n);
    report.add_scalar("mean_recon_error_mm", recon / n);
    report.add_scalar("mean_pck", pck_sum / n);
    report.add_scalar("mean_auc", auc_sum / n);
    if (dict) report.add_scalar("mean_reproj_px", reproj / n);
    report.add_matrix("per_example", per_example.topRows(evaluated));
    save_text_document(flags.report_path, report);
    std::printf("eval: %lld/%zu examples, MPJPE %.3f mm, recon %.3f mm, PCK %.4f, AUC %.4f -> %s\n",
                static_cast<long long>(evaluated), data.examples.size(), mpjpe / n, recon / n,
                pck_sum / n, auc_sum / n, flags.report_path.c_str());
}

struct ExportFlags {
    std::string model_path, params_path, out_path;
    int id = 0;
};

void run_export(const ExportFlags& flags) {
    const BodyModel model = load_body_model(flags.model_path);
    const Dictionary dict = load_dictionary(flags.params_path);
    const DictionaryEntry* entry = dict.find(flags.id);
    if (entry == nullptr) {
        throw std::runtime_error("no entry for example id " + std::to_string(flags.id));
    }
    const PosedBody posed = forward(model, entry->params);
    // Camera frame, so meshes exported from one dataset share a space.
    const Eigen::MatrixX3d vertices =
        posed.vertices.rowwise() + entry->translation.transpose();
    save_obj(flags.out_path, vertices, model.faces);
    std::printf("export: example %d, %lld vertices, %lld faces -> %s\n", flags.id,
                static_cast<long long>(vertices.rows()),
                static_cast<long long>(model.faces.rows()), flags.out_path.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Model-based 3D body fitting: synthetic assets, optimization, "
                 "self-improving training, evaluation"};
    app.require_subcommand(1);

    // gen-model
    std::string gm_spec = "24x8x10";
    std::uint64_t gm_seed = 0;
    std::string gm_out;
    CLI::App* gen_model = app.add_subcommand("gen-model", "Generate a synthetic body model");
    gen_model->add_option("--spec", gm_spec, "SEGMENTSxVERTSxSHAPE[xREGRESSED]")->capture_default_str();
    gen_model->add_option("--seed", gm_seed, "Model seed")->capture_default_str();
    gen_model->add_option("--out", gm_out, "Output model file")->required();
    gen_model->callback([&] {
        const BodyModel model = make_toy_model([&] {
            ToySpec spec = parse_model_spec(gm_spec);
            spec.seed = gm_seed;
            return spec;
        }());
        save_body_model(gm_out, model);
        std::printf("gen-model: %d joints, %d vertices, %d shape dims -> %s\n",
                    model.num_kinematic_joints(), model.num_vertices(), model.num_shape_dims(),
                    gm_out.c_str());
    });

    // gen-prior
    std::string gp_model, gp_out;
    int gp_samples = 400, gp_components = 4;
    std::uint64_t gp_seed = 0;
    CLI::App* gen_prior = app.add_subcommand("gen-prior", "Fit a pose prior to a pose bank");
    gen_prior->add_option("--model", gp_model, "Body model file")->required();
    gen_prior->add_option("--samples", gp_samples, "Pose bank size")->capture_default_str();
    gen_prior->add_option("--components", gp_components, "Mixture components")->capture_default_str();
    gen_prior->add_option("--seed", gp_seed, "Sampling/EM seed")->capture_default_str();
    gen_prior->add_option("--out", gp_out, "Output prior file")->required();
    gen_prior->callback([&] {
        const BodyModel model = load_body_model(gp_model);
        const Eigen::MatrixXd bank =
            sample_pose_bank(model, gp_samples, static_cast<unsigned>(gp_seed));
        const GmmPosePrior prior =
            fit_gmm_em(bank, gp_components, static_cast<unsigned>(gp_seed));
        save_gmm_prior(gp_out, prior);
        std::printf("gen-prior: %d components over %d-dim poses from %d samples -> %s\n",
                    prior.components(), prior.dim(), gp_samples, gp_out.c_str());
    });

    // gen-data
    std::string gd_model, gd_prior, gd_out;
    int gd_n = 100;
    double gd_noise = 1.0, gd_occlusion = 0.1;
    std::uint64_t gd_seed = 0;
    CLI::App* gen_data = app.add_subcommand("gen-data", "Generate a synthetic keypoint dataset");
    gen_data->add_option("--model", gd_model, "Body model file")->required();
    gen_data->add_option("--prior", gd_prior, "Pose prior file")->required();
    gen_data->add_option("--n", gd_n, "Example count")->capture_default_str();
    gen_data->add_option("--noise-px", gd_noise, "Keypoint noise, pixels")->capture_default_str();
    gen_data->add_option("--occlusion", gd_occlusion, "Per-joint occlusion rate")->capture_default_str();
    gen_data->add_option("--seed", gd_seed, "Dataset seed")->capture_default_str();
    gen_data->add_option("--out", gd_out, "Output dataset file")->required();
    gen_data->callback([&] {
        const BodyModel model = load_body_model(gd_model);
        const GmmPosePrior prior = load_gmm_prior(gd_prior);
        const SyntheticDataset data =
            generate_synthetic_dataset(model, prior, gd_n, gd_noise, gd_occlusion, gd_seed);
        save_dataset(gd_out, data);
        std::printf("gen-data: %d examples, %d keypoints each, noise %.2f px -> %s\n", gd_n,
                    data.examples.empty() ? 0 : data.examples.front().keypoints.count(), gd_noise,
                    gd_out.c_str());
    });

    // fit
    FitFlags ff;
    CLI::App* fit_cmd = app.add_subcommand("fit", "Fit the model to every example");
    fit_cmd->add_option("--model", ff.model_path, "Body model file")->required();
    fit_cmd->add_option("--prior", ff.prior_path, "Pose prior file")->required();
    fit_cmd->add_option("--data", ff.data_path, "Dataset file")->required();
    fit_cmd->add_option("--schedule", ff.schedule, "staged | single")->capture_default_str();
    fit_cmd->add_option("--init", ff.init, "mean | translation-only | file")->capture_default_str();
    fit_cmd->add_option("--init-file", ff.init_file, "Dictionary or regressor file for --init file");
    fit_cmd->add_option("--trace", ff.trace_path, "Write per-iteration trace records here");
    fit_cmd->add_option("--config", ff.config_path, "Numeric overrides (config/1 file)");
    fit_cmd->add_option("--workers", ff.workers, "Fit worker threads (0 = auto)")->capture_default_str();
    fit_cmd->add_option("--out", ff.out_path, "Output fit dictionary")->required();
    fit_cmd->callback([&] { run_fit(ff); });

    // train
    TrainFlags tf;
    CLI::App* train_cmd = app.add_subcommand("train", "Self-improving regressor training");
    train_cmd->add_option("--model", tf.model_path, "Body model file")->required();
    train_cmd->add_option("--prior", tf.prior_path, "Pose prior file")->required();
    train_cmd->add_option("--data", tf.data_path, "Dataset file (ground truth is never read)")
        ->required();
    train_cmd->add_option("--epochs", tf.epochs, "Epoch count (overrides the config file)");
    train_cmd->add_option("--config", tf.config_path, "Numeric overrides (config/1 file)");
    train_cmd->add_option("--dict-in", tf.dict_in, "Resume from this fit dictionary");
    train_cmd->add_option("--dict-out", tf.dict_out, "Write the final dictionary here");
    train_cmd->add_option("--regressor-out", tf.regressor_out, "Write the trained regressor here");
    train_cmd->add_option("--log", tf.log_path, "Append per-epoch stats to this file");
    train_cmd->add_option("--seed", tf.seed, "Training seed")->capture_default_str();
    train_cmd->callback([&] { run_train(tf); });

    // eval
    EvalFlags ef;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate fits or a regressor against ground truth");
    eval_cmd->add_option("--model", ef.model_path, "Body model file")->required();
    eval_cmd->add_option("--data", ef.data_path, "Dataset file with ground truth")->required();
    eval_cmd->add_option("--params", ef.params_path, "Fit dictionary or regressor file")->required();
    eval_cmd->add_option("--report", ef.report_path, "Output report file")->required();
    eval_cmd->callback([&] { run_eval(ef); });

    // export
    ExportFlags xf;
    CLI::App* export_cmd = app.add_subcommand("export", "Export one fitted mesh as OBJ");
    export_cmd->add_option("--model", xf.model_path, "Body model file")->required();
    export_cmd->add_option("--params", xf.params_path, "Fit dictionary")->required();
    export_cmd->add_option("--id", xf.id, "Example id")->required();
    export_cmd->add_option("--out", xf.out_path, "Output OBJ file")->required();
    export_cmd->callback([&] { run_export(xf); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
