#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "chexfuse/data.hpp"
#include "chexfuse/model.hpp"
#include "chexfuse/pathology.hpp"

// Per-pathology AUROC with exact tie handling, plus the published baseline
// AUROC table for side-by-side comparison.

namespace chexfuse {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;  // {0,1}
  std::string pathology;
};

/// Mann-Whitney AUROC via rank sums with average ranks on ties (O(n log n));
/// equals pair counting with ties worth 1/2. Throws UndefinedAurocError when
/// either class is missing.
double auroc(const ScoredSet& set);

struct ClassResult {
  std::string pathology;
  std::optional<double> auroc;  // empty = undefined (single-class split)
  int positives = 0;
  int negatives = 0;
};

struct EvalReport {
  std::array<ClassResult, 14> classes;
  std::optional<double> mean_auroc;  // over defined classes only
  std::string split_name;
};

/// Builds a report from per-sample class scores and labels (rows align).
EvalReport evaluate_scores(const std::vector<std::array<double, 14>>& scores,
                           const std::vector<LabelVector>& labels,
                           const std::string& split_name);

/// Inference over all samples in eval mode, then evaluate_scores.
EvalReport evaluate_model(FusedClassifier<float>& model,
                          const std::vector<Sample>& samples,
                          const std::string& split_name, int batch_size = 16);

struct BaselineEntry {
  std::string_view pathology;
  double chexnet;
  double ourmodel;
};

/// Published per-pathology AUROC constants, canonical order.
extern const std::array<BaselineEntry, 14> kBaselineTable;

struct ComparisonRow {
  std::string pathology;
  std::optional<double> ours;
  double chexnet_paper = 0.0;
  double ourmodel_paper = 0.0;
  std::optional<double> delta_chexnet;   // ours - chexnet_paper
  std::optional<double> delta_ourmodel;  // ours - ourmodel_paper
};

std::array<ComparisonRow, 14> compare_baseline(const EvalReport& report);

enum class ReportFormat { kText, kCsv };

/// 14 class rows in canonical order plus a mean row. Undefined classes render
/// "n/a" and stay out of the mean. CSV header:
/// pathology,auroc,chexnet_paper,ourmodel_paper,delta_chexnet,delta_ourmodel
std::string render_report(const EvalReport& report,
                          const std::array<ComparisonRow, 14>& comparison,
                          ReportFormat format);

}  // namespace chexfuse
