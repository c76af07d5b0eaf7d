#include "bodyfit/formats.hpp"

#include <climits>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace bodyfit {

namespace {

using IMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

int checked_int(std::int64_t v, const std::string& what) {
    if (v < INT_MIN || v > INT_MAX) throw std::runtime_error(what + " out of range");
    return static_cast<int>(v);
}

Eigen::MatrixXi to_int_matrix(const IMatrix& m, const std::string& what) {
    Eigen::MatrixXi out(m.rows(), m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            out(r, c) = checked_int(m(r, c), what);
        }
    }
    return out;
}

void require_cols(const Eigen::MatrixXd& m, Eigen::Index cols, const std::string& what) {
    if (m.cols() != cols) {
        throw std::runtime_error(what + ": expected " + std::to_string(cols) + " columns, found " +
                                 std::to_string(m.cols()));
    }
}

}  // namespace

// ------------------------------------------------------------- body model --

TextDocument body_model_document(const BodyModel& model) {
    model.validate();
    TextDocument doc(kBodyModelDoctype);
    doc.add_matrix("template_vertices", model.template_vertices);
    doc.add_imatrix("faces", model.faces.cast<std::int64_t>());
    doc.add_matrix("shape_dirs", model.shape_dirs);
    doc.add_matrix("joint_regressor", model.joint_regressor);
    doc.add_matrix("rest_joint_regressor", model.rest_joint_regressor);
    doc.add_imatrix("parents", model.parents.cast<std::int64_t>());
    doc.add_matrix("skin_weights", model.skin_weights);
    doc.add_strings("joint_names", model.joint_names);
    return doc;
}

BodyModel body_model_from(const TextDocument& doc) {
    require_doctype(doc, kBodyModelDoctype);
    BodyModel model;
    require_cols(doc.matrix("template_vertices"), 3, "template_vertices");
    model.template_vertices = doc.matrix("template_vertices");
    const Eigen::MatrixXi faces = to_int_matrix(doc.imatrix("faces"), "faces");
    if (faces.cols() != 3) throw std::runtime_error("faces: expected 3 columns");
    model.faces = faces;
    model.shape_dirs = doc.matrix("shape_dirs");
    model.joint_regressor = doc.matrix("joint_regressor");
    model.rest_joint_regressor = doc.matrix("rest_joint_regressor");
    const Eigen::MatrixXi parents = to_int_matrix(doc.imatrix("parents"), "parents");
    if (parents.cols() != 1) throw std::runtime_error("parents: expected 1 column");
    model.parents = parents.col(0);
    model.skin_weights = doc.matrix("skin_weights");
    model.joint_names = doc.strings("joint_names");
    model.validate();
    return model;
}

void save_body_model(const std::string& path, const BodyModel& model) {
    save_text_document(path, body_model_document(model));
}

BodyModel load_body_model(const std::string& path) {
    return body_model_from(load_text_document(path));
}

// ------------------------------------------------------------------ prior --

TextDocument gmm_prior_document(const GmmPosePrior& prior) {
    prior.validate();
    const int components = prior.components();
    const int dim = prior.dim();
    TextDocument doc(kGmmPriorDoctype);
    doc.add_matrix("weights", prior.weights);
    doc.add_matrix("means", prior.means);
    Eigen::MatrixXd precisions(static_cast<Eigen::Index>(components) * dim, dim);
    for (int c = 0; c < components; ++c) {
        precisions.middleRows(static_cast<Eigen::Index>(c) * dim, dim) = prior.precisions[c];
    }
    doc.add_matrix("precisions", precisions);
    return doc;
}

GmmPosePrior gmm_prior_from(const TextDocument& doc) {
    require_doctype(doc, kGmmPriorDoctype);
    GmmPosePrior prior;
    require_cols(doc.matrix("weights"), 1, "weights");
    prior.weights = doc.matrix("weights").col(0);
    prior.means = doc.matrix("means");
    const Eigen::MatrixXd& precisions = doc.matrix("precisions");
    const Eigen::Index components = prior.weights.size();
    const Eigen::Index dim = prior.means.cols();
    if (prior.means.rows() != components) {
        throw std::runtime_error("means: expected one row per component");
    }
    if (precisions.rows() != components * dim || precisions.cols() != dim) {
        throw std::runtime_error("precisions: expected stacked D x D blocks per component");
    }
    prior.precisions.reserve(components);
    for (Eigen::Index c = 0; c < components; ++c) {
        prior.precisions.push_back(precisions.middleRows(c * dim, dim));
    }
    prior.refresh_norm_constants();
    prior.validate();
    return prior;
}

void save_gmm_prior(const std::string& path, const GmmPosePrior& prior) {
    save_text_document(path, gmm_prior_document(prior));
}

GmmPosePrior load_gmm_prior(const std::string& path) {
    return gmm_prior_from(load_text_document(path));
}

// ---------------------------------------------------------------- dataset --

TextDocument dataset_document(const SyntheticDataset& dataset) {
    dataset.validate();
    const Eigen::Index n = static_cast<Eigen::Index>(dataset.examples.size());
    const int k = n > 0 ? dataset.examples.front().keypoints.count() : 0;

    TextDocument doc(kDatasetDoctype);
    doc.add_int("keypoint_count", k);
    doc.add_scalar("crop_size", dataset.crop_size);
    doc.add_scalar("focal", dataset.focal);

    IMatrix ids(n, 1);
    Eigen::MatrixXd keypoints(n, 3 * k);
    for (Eigen::Index i = 0; i < n; ++i) {
        const TrainExample& ex = dataset.examples[i];
        ids(i, 0) = ex.id;
        for (int j = 0; j < k; ++j) {
            keypoints(i, 3 * j) = ex.keypoints.uv(j, 0);
            keypoints(i, 3 * j + 1) = ex.keypoints.uv(j, 1);
            keypoints(i, 3 * j + 2) = ex.keypoints.conf[j];
        }
    }
    doc.add_imatrix("ids", ids);
    doc.add_matrix("keypoints", keypoints);

    if (dataset.has_gt()) {
        const Eigen::Index theta_dim = dataset.gt.front().params.theta.size();
        const Eigen::Index beta_dim = dataset.gt.front().params.beta.size();
        Eigen::MatrixXd theta(n, theta_dim), beta(n, beta_dim), translation(n, 3);
        for (Eigen::Index i = 0; i < n; ++i) {
            const GtRecord& gt = dataset.gt[i];
            if (gt.params.theta.size() != theta_dim || gt.params.beta.size() != beta_dim) {
                throw std::invalid_argument("ground-truth records must share one parameter size");
            }
            theta.row(i) = gt.params.theta.transpose();
            beta.row(i) = gt.params.beta.transpose();
            translation.row(i) = gt.translation.transpose();
        }
        doc.add_matrix("gt_theta", theta);
        doc.add_matrix("gt_beta", beta);
        doc.add_matrix("gt_translation", translation);
    }
    return doc;
}

SyntheticDataset dataset_from(const TextDocument& doc, bool with_gt) {
    require_doctype(doc, kDatasetDoctype);
    SyntheticDataset dataset;
    dataset.crop_size = doc.scalar("crop_size");
    dataset.focal = doc.scalar("focal");
    const int k = checked_int(doc.int_scalar("keypoint_count"), "keypoint_count");
    if (k < 0) throw std::runtime_error("keypoint_count must be non-negative");

    const IMatrix& ids = doc.imatrix("ids");
    const Eigen::MatrixXd& keypoints = doc.matrix("keypoints");
    require_cols(keypoints, 3 * k, "keypoints");
    if (ids.rows() != keypoints.rows() || ids.cols() != 1) {
        throw std::runtime_error("ids: expected one id per keypoint row");
    }
    const Eigen::Index n = ids.rows();
    dataset.examples.reserve(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        TrainExample ex;
        ex.id = checked_int(ids(i, 0), "example id");
        ex.keypoints.uv.resize(k, 2);
        ex.keypoints.conf.resize(k);
        for (int j = 0; j < k; ++j) {
            ex.keypoints.uv(j, 0) = keypoints(i, 3 * j);
            ex.keypoints.uv(j, 1) = keypoints(i, 3 * j + 1);
            ex.keypoints.conf[j] = keypoints(i, 3 * j + 2);
        }
        dataset.examples.push_back(std::move(ex));
    }

    if (with_gt) {
        if (!doc.has("gt_theta") || !doc.has("gt_beta") || !doc.has("gt_translation")) {
            throw std::runtime_error("dataset has no ground-truth section");
        }
        const Eigen::MatrixXd& theta = doc.matrix("gt_theta");
        const Eigen::MatrixXd& beta = doc.matrix("gt_beta");
        const Eigen::MatrixXd& translation = doc.matrix("gt_translation");
        if (theta.rows() != n || beta.rows() != n || translation.rows() != n) {
            throw std::runtime_error("ground-truth rows must align with the examples");
        }
        require_cols(translation, 3, "gt_translation");
        if (theta.cols() % 3 != 0) {
            throw std::runtime_error("gt_theta: expected 3 columns per joint");
        }
        dataset.gt.reserve(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            GtRecord gt;
            gt.params.theta = theta.row(i).transpose();
            gt.params.beta = beta.row(i).transpose();
            gt.translation = translation.row(i).transpose();
            dataset.gt.push_back(std::move(gt));
        }
    }
    dataset.validate();
    return dataset;
}

void save_dataset(const std::string& path, const SyntheticDataset& dataset) {
    save_text_document(path, dataset_document(dataset));
}

SyntheticDataset load_dataset(const std::string& path, bool with_gt) {
    return dataset_from(load_text_document(path), with_gt);
}

// ------------------------------------------------------------- dictionary --

TextDocument dictionary_document(const Dictionary& dict, int joints, int shape_dims) {
    const Eigen::Index n = static_cast<Eigen::Index>(dict.size());
    TextDocument doc(kDictionaryDoctype);
    doc.add_int("joints", joints);
    doc.add_int("shape_dims", shape_dims);

    IMatrix ids(n, 1), epochs(n, 1);
    Eigen::MatrixXd reproj(n, 1), theta(n, 3 * joints), beta(n, shape_dims), translation(n, 3);
    Eigen::Index row = 0;
    for (const auto& [id, entry] : dict.entries()) {
        if (entry.params.theta.size() != 3 * joints || entry.params.beta.size() != shape_dims) {
            throw std::invalid_argument("dictionary entry does not match the stated sizes");
        }
        ids(row, 0) = id;
        epochs(row, 0) = entry.epoch_found;
        reproj(row, 0) = entry.reproj_error;
        theta.row(row) = entry.params.theta.transpose();
        beta.row(row) = entry.params.beta.transpose();
        translation.row(row) = entry.translation.transpose();
        ++row;
    }
    doc.add_imatrix("ids", ids);
    doc.add_imatrix("epochs", epochs);
    doc.add_matrix("reproj", reproj);
    doc.add_matrix("theta", theta);
    doc.add_matrix("beta", beta);
    doc.add_matrix("translation", translation);
    return doc;
}

Dictionary dictionary_from(const TextDocument& doc) {
    require_doctype(doc, kDictionaryDoctype);
    const int joints = checked_int(doc.int_scalar("joints"), "joints");
    const int shape_dims = checked_int(doc.int_scalar("shape_dims"), "shape_dims");
    const IMatrix& ids = doc.imatrix("ids");
    const IMatrix& epochs = doc.imatrix("epochs");
    const Eigen::MatrixXd& reproj = doc.matrix("reproj");
    const Eigen::MatrixXd& theta = doc.matrix("theta");
    const Eigen::MatrixXd& beta = doc.matrix("beta");
    const Eigen::MatrixXd& translation = doc.matrix("translation");

    const Eigen::Index n = ids.rows();
    if (epochs.rows() != n || reproj.rows() != n || theta.rows() != n || beta.rows() != n ||
        translation.rows() != n) {
        throw std::runtime_error("dictionary sections must have aligned rows");
    }
    require_cols(theta, 3 * joints, "theta");
    require_cols(beta, shape_dims, "beta");
    require_cols(translation, 3, "translation");

    Dictionary dict;
    for (Eigen::Index i = 0; i < n; ++i) {
        DictionaryEntry entry;
        entry.example_id = checked_int(ids(i, 0), "example id");
        entry.epoch_found = checked_int(epochs(i, 0), "epoch");
        entry.reproj_error = reproj(i, 0);
        entry.params.theta = theta.row(i).transpose();
        entry.params.beta = beta.row(i).transpose();
        entry.translation = translation.row(i).transpose();
        dict.insert_loaded(std::move(entry));
    }
    return dict;
}

void save_dictionary(const std::string& path, const Dictionary& dict, int joints,
                     int shape_dims) {
    save_text_document(path, dictionary_document(dict, joints, shape_dims));
}

Dictionary load_dictionary(const std::string& path) {
    return dictionary_from(load_text_document(path));
}

// -------------------------------------------------------------- regressor --

TextDocument regressor_document(const Regressor& regressor) {
    regressor.validate();
    TextDocument doc(kRegressorDoctype);
    doc.add_strings("variant",
                    {regressor.variant == Regressor::Variant::mlp ? "mlp" : "mean_pose"});
    doc.add_int("joints", regressor.joints);
    doc.add_int("shape_dims", regressor.shape_dims);
    doc.add_int("keypoint_count", regressor.keypoint_count);
    doc.add_scalar("fallback_depth", regressor.fallback_depth);
    if (regressor.variant == Regressor::Variant::mlp) {
        doc.add_int("tanh_hidden", regressor.mlp.tanh_hidden ? 1 : 0);
        doc.add_int("layers", regressor.mlp.layers());
        for (int l = 0; l < regressor.mlp.layers(); ++l) {
            doc.add_matrix("weights_" + std::to_string(l), regressor.mlp.weights[l]);
            doc.add_matrix("biases_" + std::to_string(l), regressor.mlp.biases[l]);
        }
    }
    return doc;
}

Regressor regressor_from(const TextDocument& doc) {
    require_doctype(doc, kRegressorDoctype);
    Regressor regressor;
    const std::vector<std::string>& variant = doc.strings("variant");
    if (variant.size() != 1) throw std::runtime_error("variant: expected one row");
    if (variant[0] == "mean_pose") {
        regressor.variant = Regressor::Variant::mean_pose;
    } else if (variant[0] == "mlp") {
        regressor.variant = Regressor::Variant::mlp;
    } else {
        throw std::runtime_error("unknown regressor variant '" + variant[0] + "'");
    }
    regressor.joints = checked_int(doc.int_scalar("joints"), "joints");
    regressor.shape_dims = checked_int(doc.int_scalar("shape_dims"), "shape_dims");
    regressor.keypoint_count = checked_int(doc.int_scalar("keypoint_count"), "keypoint_count");
    regressor.fallback_depth = doc.scalar("fallback_depth");
    if (regressor.variant == Regressor::Variant::mlp) {
        regressor.mlp.tanh_hidden = doc.int_scalar("tanh_hidden") != 0;
        const int layers = checked_int(doc.int_scalar("layers"), "layers");
        regressor.mlp.weights.reserve(layers);
        regressor.mlp.biases.reserve(layers);
        for (int l = 0; l < layers; ++l) {
            regressor.mlp.weights.push_back(doc.matrix("weights_" + std::to_string(l)));
            const Eigen::MatrixXd& bias = doc.matrix("biases_" + std::to_string(l));
            require_cols(bias, 1, "biases_" + std::to_string(l));
            regressor.mlp.biases.push_back(bias.col(0));
        }
    }
    regressor.validate();
    return regressor;
}

void save_regressor(const std::string& path, const Regressor& regressor) {
    save_text_document(path, regressor_document(regressor));
}

Regressor load_regressor(const std::string& path) {
    return regressor_from(load_text_document(path));
}

// ------------------------------------------------------------------ trace --

TextDocument trace_document(const FitTrace& trace) {
    TextDocument doc(kTraceDoctype);
    Eigen::MatrixXd records(static_cast<Eigen::Index>(trace.size()), 10);
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const TraceRecord& r = trace[i];
        records.row(static_cast<Eigen::Index>(i)) << r.stage, r.iteration,
            r.accepted ? 1.0 : 0.0, r.energy, r.breakdown.joints, r.breakdown.theta,
            r.breakdown.angle, r.breakdown.beta, r.step_norm, r.damping;
    }
    doc.add_matrix("records", records);
    return doc;
}

FitTrace trace_from(const TextDocument& doc) {
    require_doctype(doc, kTraceDoctype);
    const Eigen::MatrixXd& records = doc.matrix("records");
    require_cols(records, 10, "records");
    FitTrace trace;
    trace.reserve(records.rows());
    for (Eigen::Index i = 0; i < records.rows(); ++i) {
        TraceRecord r;
        r.stage = static_cast<int>(records(i, 0));
        r.iteration = static_cast<int>(records(i, 1));
        r.accepted = records(i, 2) != 0.0;
        r.energy = records(i, 3);
        r.breakdown.joints = records(i, 4);
        r.breakdown.theta = records(i, 5);
        r.breakdown.angle = records(i, 6);
        r.breakdown.beta = records(i, 7);
        r.step_norm = records(i, 8);
        r.damping = records(i, 9);
        trace.push_back(r);
    }
    return trace;
}

void save_trace(const std::string& path, const FitTrace& trace) {
    save_text_document(path, trace_document(trace));
}

// ------------------------------------------------------------ mesh export --

std::string export_obj(const Eigen::MatrixX3d& vertices, const Eigen::MatrixX3i& faces) {
    std::string out;
    char buf[128];
    for (Eigen::Index v = 0; v < vertices.rows(); ++v) {
        std::snprintf(buf, sizeof(buf), "v %.6f %.6f %.6f\n", vertices(v, 0), vertices(v, 1),
                      vertices(v, 2));
        out += buf;
    }
    for (Eigen::Index f = 0; f < faces.rows(); ++f) {
        std::snprintf(buf, sizeof(buf), "f %d %d %d\n", faces(f, 0) + 1, faces(f, 1) + 1,
                      faces(f, 2) + 1);
        out += buf;
    }
    return out;
}

void save_obj(const std::string& path, const Eigen::MatrixX3d& vertices,
              const Eigen::MatrixX3i& faces) {
    const std::string text = export_obj(vertices, faces);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

ObjMesh parse_obj(const std::string& text) {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<Eigen::Vector3i> faces;
    std::size_t start = 0;
    std::size_t line_no = 0;
    while (start < text.size()) {
        std::size_t stop = text.find('\n', start);
        if (stop == std::string::npos) stop = text.size();
        std::string line = text.substr(start, stop - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        start = stop + 1;
        ++line_no;

        if (line.rfind("v ", 0) == 0) {
            Eigen::Vector3d v;
            if (std::sscanf(line.c_str(), "v %lf %lf %lf", &v.x(), &v.y(), &v.z()) != 3) {
                throw std::runtime_error("bad vertex at line " + std::to_string(line_no));
            }
            vertices.push_back(v);
        } else if (line.rfind("f ", 0) == 0) {
            Eigen::Vector3i f;
            if (std::sscanf(line.c_str(), "f %d %d %d", &f.x(), &f.y(), &f.z()) != 3) {
                throw std::runtime_error("bad face at line " + std::to_string(line_no));
            }
            faces.push_back(f - Eigen::Vector3i::Ones());
        }
    }
    ObjMesh mesh;
    mesh.vertices.resize(static_cast<Eigen::Index>(vertices.size()), 3);
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        mesh.vertices.row(static_cast<Eigen::Index>(i)) = vertices[i].transpose();
    }
    mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
    for (std::size_t i = 0; i < faces.size(); ++i) {
        mesh.faces.row(static_cast<Eigen::Index>(i)) = faces[i].transpose();
    }
    return mesh;
}

// ----------------------------------------------------------------- config --

namespace {

double section_number(const TextDocument::Section& s) {
    if (s.kind == TextDocument::Kind::matrix && s.matrix.rows() == 1 && s.matrix.cols() == 1) {
        return s.matrix(0, 0);
    }
    if (s.kind == TextDocument::Kind::imatrix && s.imatrix.rows() == 1 && s.imatrix.cols() == 1) {
        return static_cast<double>(s.imatrix(0, 0));
    }
    throw std::runtime_error("config key '" + s.name + "' must be a scalar");
}

int config_int(const std::string& key, double v) {
    if (!(v == std::floor(v)) || std::abs(v) > 1e9) {
        throw std::runtime_error("config key '" + key + "' must be an integer");
    }
    return static_cast<int>(v);
}

bool config_bool(const std::string& key, double v) {
    if (v != 0.0 && v != 1.0) {
        throw std::runtime_error("config key '" + key + "' must be 0 or 1");
    }
    return v == 1.0;
}

bool apply_fit_key(FitConfig* fit, const std::string& key, double v) {
    if (key == "lambda_theta") {
        fit->lambda_theta = v;
    } else if (key == "lambda_a") {
        fit->lambda_a = v;
    } else if (key == "lambda_beta") {
        fit->lambda_beta = v;
    } else if (key == "robust_sigma") {
        fit->robustifier.sigma = v;
    } else if (key == "camera_iters") {
        fit->camera_iters = config_int(key, v);
    } else if (key == "stage_iters") {
        const int iters = config_int(key, v);
        for (FitStage& stage : fit->stages) stage.max_iters = iters;
    } else if (key == "gradient_tol") {
        fit->gradient_tol = v;
    } else if (key == "step_tol") {
        fit->step_tol = v;
    } else if (key == "energy_tol") {
        fit->energy_tol = v;
    } else if (key == "damping_init") {
        fit->damping_init = v;
    } else {
        return false;
    }
    return true;
}

bool apply_train_key(TrainConfig* train, const std::string& key, double v) {
    if (key == "epochs") {
        train->epochs = config_int(key, v);
    } else if (key == "batch_size") {
        train->batch_size = config_int(key, v);
    } else if (key == "learning_rate") {
        train->learning_rate = v;
    } else if (key == "lr_decay") {
        train->lr_decay = v;
    } else if (key == "w_3d") {
        train->w_3d = v;
    } else if (key == "w_mesh") {
        train->w_mesh = v;
    } else if (key == "w_2d") {
        train->w_2d = v;
    } else if (key == "l2d_on_accepted") {
        train->l2d_on_accepted = config_bool(key, v);
    } else if (key == "tau_rej") {
        train->tau_rej = v;
    } else if (key == "shape_bound") {
        train->shape_bound = v;
    } else if (key == "fit_workers") {
        train->fit_workers = config_int(key, v);
    } else {
        return false;
    }
    return true;
}

}  // namespace

void apply_config_overrides(const TextDocument& doc, FitConfig* fit, TrainConfig* train) {
    require_doctype(doc, kConfigDoctype);
    for (const TextDocument::Section& s : doc.sections()) {
        const double v = section_number(s);
        if (fit != nullptr && apply_fit_key(fit, s.name, v)) continue;
        if (train != nullptr && apply_train_key(train, s.name, v)) continue;
        throw std::runtime_error("unknown config key '" + s.name + "'");
    }
}

}  // namespace bodyfit
