#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kgcoop/config.hpp"
#include "kgcoop/trainer.hpp"

namespace kgcoop {

// One row of a benchmark report. Accuracies are percentages. new-class
// fields are absent for few-shot runs, where every class is seen.
struct RunReport {
  std::string method;
  double lambda = 0.0;
  double base_acc = 0.0;
  std::optional<double> new_acc;
  std::optional<double> h;
  std::optional<double> drop;  // percent of zero-shot new-class accuracy lost
  double zero_shot_base = 0.0;
  double zero_shot_new = 0.0;
  double kg_dist = 0.0;  // final distance of seen-class embeddings to anchors
  std::uint64_t seed = 0;
  std::shared_ptr<RunHistory> history;  // null for the zero-shot row
};

// Percentage of samples whose highest-probability class matches the label.
// `class_ids` names the class behind each row of `w`; sample labels must be
// drawn from it (each split is scored against its own label set).
double accuracy(const ClassEmbeddings& w, const std::vector<Sample>& samples,
                const std::vector<int>& class_ids, double tau);

double harmonic_mean(double base, double novel);  // 2bn/(b+n), percentages

// (zero_shot_new - method_new) / zero_shot_new; negative when the method
// beats zero-shot.
double drop_ratio(double zero_shot_new, double method_new);

// Mean squared row distance; same quantity kg_loss optimizes.
double embedding_distance(const ClassEmbeddings& a, const ClassEmbeddings& b);

// Trains every method on the base split and scores base and new splits
// against their own label sets. First row is the zero-shot anchor baseline.
std::vector<RunReport> base_to_new_experiment(const SyntheticTask& task,
                                              const std::vector<Method>& methods,
                                              const RunConfig& cfg);

struct LambdaPoint {
  double lambda = 0.0;
  double kg_dist = 0.0;
  double h = 0.0;
};

// Anchor-weight sweep, one fresh kgcoop run per value.
std::vector<LambdaPoint> lambda_ablation(const SyntheticTask& task,
                                         const std::vector<double>& lambdas,
                                         const RunConfig& cfg);

// K-shot on a task whose classes are all seen; reports carry no new-class
// fields.
std::vector<RunReport> few_shot_experiment(const SyntheticTask& task,
                                           const std::vector<Method>& methods,
                                           const RunConfig& cfg);

enum class ReportFormat { csv, json };
ReportFormat report_format_from_string(const std::string& s);  // ConfigError

// Stable column order: method, lambda, base, new, h, drop_ratio, kg_dist,
// seed. Percentages print with 2 decimals, distances with 6. Writes are
// atomic (temp file + rename). Few-shot reports drop the new-class columns.
void emit_report(const std::vector<RunReport>& reports, ReportFormat format,
                 const std::string& path);
void emit_lambda_table(const std::vector<LambdaPoint>& points,
                       ReportFormat format, const std::string& path);
void emit_history(const RunHistory& history, const std::string& path);

// Rendered table for terminal output; same columns as the report files.
std::string format_report_table(const std::vector<RunReport>& reports);
std::string format_lambda_table(const std::vector<LambdaPoint>& points);

}  // namespace kgcoop
