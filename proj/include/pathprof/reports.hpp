#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace pathprof {

// Doubles render with 9 significant digits ("%.9g") in every report.
std::string format_g9(double v);

enum class ReportKind { Csv, RocPoints, SimilarityMatrix };

// Deterministic CSV writer: header row mandatory, "\n" line ends, no quoting
// (cells must not contain commas or newlines).
void save_report(const std::string& path, ReportKind kind, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows);

void save_roc_points(const std::string& path,
                     const std::vector<std::pair<double, double>>& fpr_tpr);

// Square matrix with a class-id header row and column.
void save_similarity_matrix(const std::string& path, const Eigen::MatrixXd& matrix,
                            const std::vector<int>& class_ids);

}  // namespace pathprof
