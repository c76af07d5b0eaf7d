#include "bodyfit/text_io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bodyfit {

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
    throw std::runtime_error("parse error at line " + std::to_string(line) + ": " + what);
}

// Splits on spaces/tabs; empty tokens dropped.
std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

double parse_double(const std::string& token, std::size_t line) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') parse_fail(line, "bad number '" + token + "'");
    return v;
}

std::int64_t parse_int(const std::string& token, std::size_t line) {
    errno = 0;
    char* end = nullptr;
    const long long v = std::strtoll(token.c_str(), &end, 10);
    if (end == token.c_str() || *end != '\0' || errno == ERANGE) {
        parse_fail(line, "bad integer '" + token + "'");
    }
    return v;
}

}  // namespace

void TextDocument::add_matrix(const std::string& name, const Eigen::MatrixXd& value) {
    if (has(name)) throw std::invalid_argument("duplicate section '" + name + "'");
    Section s;
    s.name = name;
    s.kind = Kind::matrix;
    s.matrix = value;
    sections_.push_back(std::move(s));
}

void TextDocument::add_imatrix(
    const std::string& name,
    const Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>& value) {
    if (has(name)) throw std::invalid_argument("duplicate section '" + name + "'");
    Section s;
    s.name = name;
    s.kind = Kind::imatrix;
    s.imatrix = value;
    sections_.push_back(std::move(s));
}

void TextDocument::add_strings(const std::string& name, const std::vector<std::string>& value) {
    if (has(name)) throw std::invalid_argument("duplicate section '" + name + "'");
    for (const std::string& row : value) {
        if (row.find('\n') != std::string::npos || row.find('\r') != std::string::npos) {
            throw std::invalid_argument("string rows must be single lines");
        }
    }
    Section s;
    s.name = name;
    s.kind = Kind::strings;
    s.strings = value;
    sections_.push_back(std::move(s));
}

void TextDocument::add_scalar(const std::string& name, double value) {
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = value;
    add_matrix(name, m);
}

void TextDocument::add_int(const std::string& name, std::int64_t value) {
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> m(1, 1);
    m(0, 0) = value;
    add_imatrix(name, m);
}

bool TextDocument::has(const std::string& name) const {
    for (const Section& s : sections_) {
        if (s.name == name) return true;
    }
    return false;
}

const TextDocument::Section& TextDocument::find(const std::string& name, Kind kind) const {
    for (const Section& s : sections_) {
        if (s.name != name) continue;
        if (s.kind != kind) throw std::runtime_error("section '" + name + "' has the wrong kind");
        return s;
    }
    throw std::runtime_error("missing section '" + name + "'");
}

const Eigen::MatrixXd& TextDocument::matrix(const std::string& name) const {
    return find(name, Kind::matrix).matrix;
}

const Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>& TextDocument::imatrix(
    const std::string& name) const {
    return find(name, Kind::imatrix).imatrix;
}

const std::vector<std::string>& TextDocument::strings(const std::string& name) const {
    return find(name, Kind::strings).strings;
}

double TextDocument::scalar(const std::string& name) const {
    const Eigen::MatrixXd& m = matrix(name);
    if (m.rows() != 1 || m.cols() != 1) {
        throw std::runtime_error("section '" + name + "' is not a scalar");
    }
    return m(0, 0);
}

std::int64_t TextDocument::int_scalar(const std::string& name) const {
    const auto& m = imatrix(name);
    if (m.rows() != 1 || m.cols() != 1) {
        throw std::runtime_error("section '" + name + "' is not a scalar");
    }
    return m(0, 0);
}

std::string write_text_document(const TextDocument& doc) {
    if (doc.doctype().empty()) throw std::invalid_argument("document has no doctype");
    std::string out = doc.doctype();
    out += '\n';
    for (const TextDocument::Section& s : doc.sections()) {
        out += '@';
        out += s.name;
        switch (s.kind) {
            case TextDocument::Kind::matrix: {
                out += " matrix " + std::to_string(s.matrix.rows()) + ' ' +
                       std::to_string(s.matrix.cols()) + '\n';
                for (Eigen::Index r = 0; r < s.matrix.rows(); ++r) {
                    for (Eigen::Index c = 0; c < s.matrix.cols(); ++c) {
                        if (c) out += ' ';
                        out += format_double(s.matrix(r, c));
                    }
                    out += '\n';
                }
                break;
            }
            case TextDocument::Kind::imatrix: {
                out += " imatrix " + std::to_string(s.imatrix.rows()) + ' ' +
                       std::to_string(s.imatrix.cols()) + '\n';
                for (Eigen::Index r = 0; r < s.imatrix.rows(); ++r) {
                    for (Eigen::Index c = 0; c < s.imatrix.cols(); ++c) {
                        if (c) out += ' ';
                        out += std::to_string(s.imatrix(r, c));
                    }
                    out += '\n';
                }
                break;
            }
            case TextDocument::Kind::strings: {
                out += " strings " + std::to_string(s.strings.size()) + '\n';
                for (const std::string& row : s.strings) {
                    out += row;
                    out += '\n';
                }
                break;
            }
        }
    }
    return out;
}

TextDocument parse_text_document(const std::string& text) {
    std::vector<std::string> lines;
    {
        std::size_t start = 0;
        while (start <= text.size()) {
            std::size_t stop = text.find('\n', start);
            if (stop == std::string::npos) stop = text.size();
            std::string line = text.substr(start, stop - start);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines.push_back(std::move(line));
            start = stop + 1;
        }
        // A trailing newline yields one empty trailing element; drop it.
        if (!lines.empty() && lines.back().empty()) lines.pop_back();
    }

    std::size_t i = 0;
    while (i < lines.size() && split_fields(lines[i]).empty()) ++i;
    if (i >= lines.size()) parse_fail(1, "empty document");
    const std::string doctype = split_fields(lines[i]).size() == 1 && lines[i][0] != '@'
                                    ? split_fields(lines[i])[0]
                                    : std::string();
    if (doctype.empty() || doctype.find('/') == std::string::npos) {
        parse_fail(i + 1, "expected a doctype line like 'bodymodel/1'");
    }
    TextDocument doc(doctype);
    ++i;

    while (i < lines.size()) {
        const std::string& header = lines[i];
        if (header.empty()) {
            ++i;
            continue;
        }
        if (header[0] != '@') parse_fail(i + 1, "expected a section header starting with '@'");
        const std::vector<std::string> fields = split_fields(header.substr(1));
        if (fields.size() < 2) parse_fail(i + 1, "section header needs a name and a kind");
        const std::string& name = fields[0];
        const std::string& kind = fields[1];
        ++i;

        if (kind == "matrix" || kind == "imatrix") {
            if (fields.size() != 4) parse_fail(i, "matrix header needs rows and cols");
            const std::int64_t rows = parse_int(fields[2], i);
            const std::int64_t cols = parse_int(fields[3], i);
            if (rows < 0 || cols < 0) parse_fail(i, "negative dimensions");
            if (kind == "matrix") {
                Eigen::MatrixXd m(rows, cols);
                for (std::int64_t r = 0; r < rows; ++r, ++i) {
                    if (i >= lines.size()) parse_fail(i + 1, "truncated section '" + name + "'");
                    const std::vector<std::string> row = split_fields(lines[i]);
                    if (static_cast<std::int64_t>(row.size()) != cols) {
                        parse_fail(i + 1, "expected " + std::to_string(cols) + " values");
                    }
                    for (std::int64_t c = 0; c < cols; ++c) m(r, c) = parse_double(row[c], i + 1);
                }
                doc.add_matrix(name, m);
            } else {
                Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> m(rows, cols);
                for (std::int64_t r = 0; r < rows; ++r, ++i) {
                    if (i >= lines.size()) parse_fail(i + 1, "truncated section '" + name + "'");
                    const std::vector<std::string> row = split_fields(lines[i]);
                    if (static_cast<std::int64_t>(row.size()) != cols) {
                        parse_fail(i + 1, "expected " + std::to_string(cols) + " values");
                    }
                    for (std::int64_t c = 0; c < cols; ++c) m(r, c) = parse_int(row[c], i + 1);
                }
                doc.add_imatrix(name, m);
            }
        } else if (kind == "strings") {
            if (fields.size() != 3) parse_fail(i, "strings header needs a count");
            const std::int64_t count = parse_int(fields[2], i);
            if (count < 0) parse_fail(i, "negative count");
            std::vector<std::string> rows;
            rows.reserve(count);
            for (std::int64_t r = 0; r < count; ++r, ++i) {
                if (i >= lines.size()) parse_fail(i + 1, "truncated section '" + name + "'");
                rows.push_back(lines[i]);
            }
            doc.add_strings(name, rows);
        } else {
            parse_fail(i, "unknown section kind '" + kind + "'");
        }
    }
    return doc;
}

void save_text_document(const std::string& path, const TextDocument& doc) {
    const std::string text = write_text_document(doc);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

TextDocument load_text_document(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_text_document(buf.str());
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

void require_doctype(const TextDocument& doc, const std::string& expected) {
    if (doc.doctype() != expected) {
        throw std::runtime_error("version mismatch: expected '" + expected + "', found '" +
                                 doc.doctype() + "'");
    }
}

}  // namespace bodyfit
