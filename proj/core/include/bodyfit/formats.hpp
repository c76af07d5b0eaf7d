#pragma once

#include <string>

#include <Eigen/Core>

#include "bodyfit/body_model.hpp"
#include "bodyfit/fitting.hpp"
#include "bodyfit/priors.hpp"
#include "bodyfit/regressor.hpp"
#include "bodyfit/text_io.hpp"
#include "bodyfit/training.hpp"

namespace bodyfit {

// Typed artifact formats, all carried by the shared structured-text
// container. Each format has a doctype tag checked on load, and every
// save/load pair round-trips bit-exactly.

inline constexpr const char* kBodyModelDoctype = "bodymodel/1";
inline constexpr const char* kGmmPriorDoctype = "gmmprior/1";
inline constexpr const char* kDatasetDoctype = "spindata/1";
inline constexpr const char* kDictionaryDoctype = "fitdict/1";
inline constexpr const char* kRegressorDoctype = "regressor/1";
inline constexpr const char* kTraceDoctype = "fittrace/1";
inline constexpr const char* kReportDoctype = "evalreport/1";
inline constexpr const char* kConfigDoctype = "config/1";

// ------------------------------------------------------------- body model --

TextDocument body_model_document(const BodyModel& model);
BodyModel body_model_from(const TextDocument& doc);
void save_body_model(const std::string& path, const BodyModel& model);
BodyModel load_body_model(const std::string& path);

// ------------------------------------------------------------------ prior --

// Precisions are stacked vertically (component c occupies rows c*D..c*D+D-1);
// the normalization constants are recomputed on load.
TextDocument gmm_prior_document(const GmmPosePrior& prior);
GmmPosePrior gmm_prior_from(const TextDocument& doc);
void save_gmm_prior(const std::string& path, const GmmPosePrior& prior);
GmmPosePrior load_gmm_prior(const std::string& path);

// ---------------------------------------------------------------- dataset --

// Header: keypoint count, crop size, focal length. One keypoint row per
// example (u, v, conf per joint). The ground-truth section (gt_theta,
// gt_beta, gt_translation) is written only when present and is skipped
// entirely unless with_gt is set, so training loads can never see it;
// with_gt on a gt-less file throws.
TextDocument dataset_document(const SyntheticDataset& dataset);
SyntheticDataset dataset_from(const TextDocument& doc, bool with_gt);
void save_dataset(const std::string& path, const SyntheticDataset& dataset);
SyntheticDataset load_dataset(const std::string& path, bool with_gt);

// ------------------------------------------------------------- dictionary --

// One line-delimited record set per entry field, rows aligned and sorted by
// example id (the dictionary's canonical order), so equal dictionaries
// serialize to identical bytes.
TextDocument dictionary_document(const Dictionary& dict, int joints, int shape_dims);
Dictionary dictionary_from(const TextDocument& doc);
void save_dictionary(const std::string& path, const Dictionary& dict, int joints, int shape_dims);
Dictionary load_dictionary(const std::string& path);

// -------------------------------------------------------------- regressor --

TextDocument regressor_document(const Regressor& regressor);
Regressor regressor_from(const TextDocument& doc);
void save_regressor(const std::string& path, const Regressor& regressor);
Regressor load_regressor(const std::string& path);

// ------------------------------------------------------------------ trace --

// One row per Gauss-Newton trial: stage, iteration, accepted, total energy,
// the four energy terms, step norm, damping.
TextDocument trace_document(const FitTrace& trace);
FitTrace trace_from(const TextDocument& doc);
void save_trace(const std::string& path, const FitTrace& trace);

// ------------------------------------------------------------ mesh export --

// Vertex/face text format: "v x y z" with 6 decimal places, "f a b c" with
// 1-based indices.
std::string export_obj(const Eigen::MatrixX3d& vertices, const Eigen::MatrixX3i& faces);
void save_obj(const std::string& path, const Eigen::MatrixX3d& vertices,
              const Eigen::MatrixX3i& faces);

struct ObjMesh {
    Eigen::MatrixX3d vertices;
    Eigen::MatrixX3i faces;
};
// Reads back v/f lines (test oracle for the exporter); other lines are
// ignored. Throws std::runtime_error on malformed rows.
ObjMesh parse_obj(const std::string& text);

// ----------------------------------------------------------------- config --

// Numeric overrides in the same container style: every section is a scalar
// named after the field it overrides. Recognized keys:
//   fit:   lambda_theta, lambda_a, lambda_beta, robust_sigma, camera_iters,
//          stage_iters (applies to every body stage), gradient_tol,
//          step_tol, energy_tol
//   train: epochs, batch_size, learning_rate, w_3d, w_mesh, w_2d,
//          l2d_on_accepted (0/1), tau_rej, shape_bound, fit_workers
// Unknown keys throw; pass nullptr for a config you do not want touched
// (keys for it then throw as unknown).
void apply_config_overrides(const TextDocument& doc, FitConfig* fit, TrainConfig* train);

}  // namespace bodyfit
