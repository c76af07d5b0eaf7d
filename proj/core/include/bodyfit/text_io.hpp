#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace bodyfit {

// One structured-text container style shared by every artifact, chosen for
// diffability at desk scale. A document is a doctype line followed by named
// sections; each section is one typed array with line-delimited rows:
//
//   bodymodel/1
//   @template_vertices matrix 4 3
//   0 0 0
//   ...
//   @parents imatrix 4 1
//   -1
//   ...
//   @joint_names strings 4
//   root
//   ...
//
// Doubles are written with 17 significant digits so save/load round-trips
// bit-exactly; string rows are taken verbatim to end of line.
class TextDocument {
public:
    enum class Kind { matrix, imatrix, strings };

    struct Section {
        std::string name;
        Kind kind = Kind::matrix;
        Eigen::MatrixXd matrix;
        Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> imatrix;
        std::vector<std::string> strings;
    };

    TextDocument() = default;
    explicit TextDocument(std::string doctype) : doctype_(std::move(doctype)) {}

    const std::string& doctype() const { return doctype_; }
    void set_doctype(std::string doctype) { doctype_ = std::move(doctype); }

    // Adding a key twice throws std::invalid_argument.
    void add_matrix(const std::string& name, const Eigen::MatrixXd& value);
    void add_imatrix(const std::string& name,
                     const Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>& value);
    void add_strings(const std::string& name, const std::vector<std::string>& value);
    // 1x1 sugar for scalar fields.
    void add_scalar(const std::string& name, double value);
    void add_int(const std::string& name, std::int64_t value);

    bool has(const std::string& name) const;
    // Accessors throw std::runtime_error when the key is absent or the kind
    // does not match.
    const Eigen::MatrixXd& matrix(const std::string& name) const;
    const Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>& imatrix(
        const std::string& name) const;
    const std::vector<std::string>& strings(const std::string& name) const;
    double scalar(const std::string& name) const;
    std::int64_t int_scalar(const std::string& name) const;

    const std::vector<Section>& sections() const { return sections_; }

private:
    const Section& find(const std::string& name, Kind kind) const;

    std::string doctype_;
    std::vector<Section> sections_;
};

// Serialization. Parsing throws std::runtime_error with a line number on
// malformed input.
std::string write_text_document(const TextDocument& doc);
TextDocument parse_text_document(const std::string& text);

// File convenience; errors become std::runtime_error naming the path.
void save_text_document(const std::string& path, const TextDocument& doc);
TextDocument load_text_document(const std::string& path);

// Doctype check shared by the typed loaders: throws std::runtime_error
// ("version mismatch...") unless doc.doctype() == expected.
void require_doctype(const TextDocument& doc, const std::string& expected);

}  // namespace bodyfit
