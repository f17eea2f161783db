#include "pathprof/reports.hpp"

#include <cstdio>
#include <fstream>

#include "pathprof/errors.hpp"

namespace pathprof {

std::string format_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void save_report(const std::string& path, ReportKind kind, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
    (void)kind;  // layout is fully determined by header/rows; kind names intent
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot create report", path);
    }
    auto write_row = [&](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) {
                out << ',';
            }
            out << row[i];
        }
        out << '\n';
    };
    write_row(header);
    for (const auto& row : rows) {
        if (row.size() != header.size()) {
            throw DomainError("report row width " + std::to_string(row.size()) +
                              " does not match header width " + std::to_string(header.size()));
        }
        write_row(row);
    }
    if (!out) {
        throw IoError("report write failed", path);
    }
}

void save_roc_points(const std::string& path,
                     const std::vector<std::pair<double, double>>& fpr_tpr) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(fpr_tpr.size());
    for (const auto& [fpr, tpr] : fpr_tpr) {
        rows.push_back({format_g9(fpr), format_g9(tpr)});
    }
    save_report(path, ReportKind::RocPoints, {"fpr", "tpr"}, rows);
}

void save_similarity_matrix(const std::string& path, const Eigen::MatrixXd& matrix,
                            const std::vector<int>& class_ids) {
    if (matrix.rows() != matrix.cols() ||
        matrix.rows() != static_cast<Eigen::Index>(class_ids.size())) {
        throw DomainError("similarity matrix must be square with one id per row");
    }
    std::vector<std::string> header{"class"};
    for (int id : class_ids) {
        header.push_back(std::to_string(id));
    }
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
        std::vector<std::string> row{std::to_string(class_ids[static_cast<std::size_t>(r)])};
        for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
            row.push_back(format_g9(matrix(r, c)));
        }
        rows.push_back(std::move(row));
    }
    save_report(path, ReportKind::SimilarityMatrix, header, rows);
}

}  // namespace pathprof
