#pragma once

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "sensel/configuration.hpp"
#include "sensel/errors.hpp"
#include "sensel/gaussian_model.hpp"
#include "sensel/gibbs.hpp"
#include "sensel/learning.hpp"

namespace sensel::io {

using json = nlohmann::json;

/// Shortest round-trip representation of a double.
inline std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SpecError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes to a temporary sibling and renames it over the target.
inline void write_atomic(const std::filesystem::path& path, std::string_view content)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw SpecError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw SpecError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline double parse_double(std::string_view tok)
{
    while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
    while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r')) tok.remove_suffix(1);
    const std::string s(tok);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
        throw SpecError("not a number: '" + s + "'");
    }
    return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',')
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::vector<std::string_view> lines(std::string_view text)
{
    std::vector<std::string_view> out;
    for (auto& l : split(text, '\n')) {
        std::string_view t = l;
        if (!t.empty() && t.back() == '\r') t.remove_suffix(1);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

/// N rows of N comma-separated reals, no header.
inline Eigen::MatrixXd parse_covariance_csv(std::string_view text)
{
    const auto rows = lines(text);
    const auto n = static_cast<Eigen::Index>(rows.size());
    if (n == 0) throw SpecError("covariance CSV is empty");
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto cells = split(rows[static_cast<std::size_t>(i)]);
        if (static_cast<Eigen::Index>(cells.size()) != n) {
            throw SpecError("covariance CSV row " + std::to_string(i + 1) + " has " + std::to_string(cells.size()) +
                            " entries, expected " + std::to_string(n));
        }
        for (Eigen::Index j = 0; j < n; ++j) m(i, j) = parse_double(cells[static_cast<std::size_t>(j)]);
    }
    return m;
}

/// {"n": N, "covariance": [[...], ...]}
inline Eigen::MatrixXd parse_covariance_json(std::string_view text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw SpecError(std::string("covariance JSON: ") + e.what());
    }
    if (!doc.contains("n") || !doc.contains("covariance")) {
        throw SpecError("covariance JSON needs fields 'n' and 'covariance'");
    }
    const int n = doc.at("n").get<int>();
    const auto& rows = doc.at("covariance");
    if (n < 1 || !rows.is_array() || static_cast<int>(rows.size()) != n) {
        throw SpecError("covariance JSON: expected " + std::to_string(n) + " rows");
    }
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<int>(row.size()) != n) {
            throw SpecError("covariance JSON: row " + std::to_string(i + 1) + " has wrong length");
        }
        for (int j = 0; j < n; ++j) m(i, j) = row[static_cast<std::size_t>(j)].get<double>();
    }
    return m;
}

/// Loads CSV or JSON, chosen by the first non-blank character.
inline GaussianModel load_covariance(const std::filesystem::path& path, double jitter = 0.0)
{
    const std::string text = read_file(path);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') return GaussianModel(parse_covariance_json(text), jitter);
    return GaussianModel(parse_covariance_csv(text), jitter);
}

inline std::string covariance_csv(const Eigen::MatrixXd& m)
{
    std::string out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j > 0) out += ',';
            out += fmt(m(i, j));
        }
        out += '\n';
    }
    return out;
}

inline json covariance_json(const Eigen::MatrixXd& m)
{
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return {{"n", m.rows()}, {"covariance", std::move(rows)}};
}

inline json config_json(const Configuration& c)
{
    return {{"bits_hex", c.to_hex()}, {"n", c.size()}, {"active", c.active()}};
}

inline const char* kChainTraceHeader = "t,beta,lambda,bits_hex,popcount,cost";
inline const char* kLearningTraceHeader = "t,lambda,popcount,cost";

inline std::string chain_trace_csv(const std::vector<TraceRow>& trace)
{
    std::string out = std::string(kChainTraceHeader) + "\n";
    for (const auto& r : trace) {
        out += std::to_string(r.t) + ',' + fmt(r.beta) + ',' + fmt(r.lambda) + ',' + r.config.to_hex() + ',' +
               std::to_string(r.config.count()) + ',' + fmt(r.cost) + '\n';
    }
    return out;
}

inline std::string learning_trace_csv(const std::vector<LearningRecord>& trace)
{
    std::string out = std::string(kLearningTraceHeader) + "\n";
    for (const auto& r : trace) {
        out += std::to_string(r.t) + ',' + fmt(r.lambda) + ',' + std::to_string(r.popcount) + ',' + fmt(r.cost) + '\n';
    }
    return out;
}

/// Checks a CSV against its header: every row has the header's column count and every
/// cell parses as a number (columns named in `hex_columns` as hex bitmasks).
/// Returns the number of data rows.
inline std::size_t validate_csv(std::string_view text, std::string_view expected_header,
                                const std::vector<std::string>& hex_columns = {"bits_hex"})
{
    const auto rows = lines(text);
    if (rows.empty() || rows.front() != expected_header) {
        throw SpecError("CSV header mismatch: expected '" + std::string(expected_header) + "'");
    }
    const auto header = split(rows.front());
    std::vector<bool> is_hex(header.size(), false);
    for (std::size_t i = 0; i < header.size(); ++i) {
        for (const auto& h : hex_columns) is_hex[i] = is_hex[i] || header[i] == h;
    }
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto cells = split(rows[r]);
        if (cells.size() != header.size()) {
            throw SpecError("CSV row " + std::to_string(r) + " has " + std::to_string(cells.size()) + " columns");
        }
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (is_hex[i]) {
                Configuration::from_hex(cells[i], 64);
            } else {
                parse_double(cells[i]);
            }
        }
    }
    return rows.size() - 1;
}

} // namespace sensel::io
