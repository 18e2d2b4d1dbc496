#include "chexfuse/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "chexfuse/errors.hpp"

namespace chexfuse {

// Transcribed per-pathology AUROC constants (reference CheXNet vs the fused
// model), reordered into canonical pathology order.
const std::array<BaselineEntry, 14> kBaselineTable = {{
    {"Atelectasis", 0.8094, 0.8328},
    {"Cardiomegaly", 0.9248, 0.9012},
    {"Consolidation", 0.7901, 0.8155},
    {"Edema", 0.8878, 0.9138},
    {"Effusion", 0.8638, 0.8911},
    {"Emphysema", 0.9371, 0.9271},
    {"Fibrosis", 0.8047, 0.8221},
    {"Hernia", 0.9164, 0.9733},
    {"Infiltration", 0.7345, 0.7205},
    {"Mass", 0.8676, 0.8814},
    {"Nodule", 0.7802, 0.8175},
    {"Pleural Thickening", 0.8062, 0.8110},
    {"Pneumonia", 0.7680, 0.7665},
    {"Pneumothorax", 0.8887, 0.9145},
}};

double auroc(const ScoredSet& set) {
  const std::size_t n = set.scores.size();
  if (set.labels.size() != n) {
    throw ShapeError("auroc: scores and labels differ in length");
  }
  std::size_t positives = 0;
  for (const int l : set.labels) positives += static_cast<std::size_t>(l != 0);
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw UndefinedAurocError("AUROC undefined for '" + set.pathology +
                              "': needs at least one positive and one negative");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return set.scores[a] < set.scores[b];
  });

  // Average ranks over tie groups; sum the positives' ranks.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && set.scores[order[j + 1]] == set.scores[order[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) {
      if (set.labels[order[k]] != 0) rank_sum_pos += avg_rank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(negatives);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

EvalReport evaluate_scores(const std::vector<std::array<double, 14>>& scores,
                           const std::vector<LabelVector>& labels,
                           const std::string& split_name) {
  if (scores.size() != labels.size()) {
    throw ShapeError("evaluate_scores: score/label row mismatch");
  }
  EvalReport report;
  report.split_name = split_name;
  double sum = 0.0;
  int defined = 0;
  for (std::size_t c = 0; c < 14; ++c) {
    ScoredSet set;
    set.pathology = std::string(kPathologies[c]);
    set.scores.reserve(scores.size());
    set.labels.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      set.scores.push_back(scores[i][c]);
      set.labels.push_back(labels[i][c] != 0.0f ? 1 : 0);
    }
    ClassResult result;
    result.pathology = set.pathology;
    for (const int l : set.labels) {
      if (l) ++result.positives;
      else ++result.negatives;
    }
    try {
      result.auroc = auroc(set);
      sum += *result.auroc;
      ++defined;
    } catch (const UndefinedAurocError&) {
      result.auroc = std::nullopt;  // flagged, not fatal
    }
    report.classes[c] = std::move(result);
  }
  if (defined > 0) report.mean_auroc = sum / defined;
  return report;
}

EvalReport evaluate_model(FusedClassifier<float>& model,
                          const std::vector<Sample>& samples,
                          const std::string& split_name, int batch_size) {
  std::vector<std::array<double, 14>> scores;
  std::vector<LabelVector> labels;
  scores.reserve(samples.size());
  labels.reserve(samples.size());

  std::size_t pos = 0;
  while (pos < samples.size()) {
    const int n = static_cast<int>(std::min<std::size_t>(
        static_cast<std::size_t>(batch_size), samples.size() - pos));
    const int ch = samples[pos].image.dim(0);
    const int sh = samples[pos].image.dim(1);
    const int sw = samples[pos].image.dim(2);
    Tensor images({n, ch, sh, sw});
    Tensor meta({n, 6});
    const std::size_t image_len = samples[pos].image.numel();
    for (int b = 0; b < n; ++b) {
      const Sample& s = samples[pos + static_cast<std::size_t>(b)];
      std::copy(s.image.data(), s.image.data() + image_len,
                images.data() + static_cast<std::size_t>(b) * image_len);
      for (int j = 0; j < 6; ++j) meta.at2(b, j) = s.meta[static_cast<std::size_t>(j)];
    }
    auto out = model.forward(images, meta, false);
    for (int b = 0; b < n; ++b) {
      std::array<double, 14> row{};
      for (int j = 0; j < 14; ++j) row[static_cast<std::size_t>(j)] = out.probs.at2(b, j);
      scores.push_back(row);
      labels.push_back(samples[pos + static_cast<std::size_t>(b)].labels);
    }
    pos += static_cast<std::size_t>(n);
  }
  return evaluate_scores(scores, labels, split_name);
}

std::array<ComparisonRow, 14> compare_baseline(const EvalReport& report) {
  std::array<ComparisonRow, 14> rows;
  for (std::size_t c = 0; c < 14; ++c) {
    ComparisonRow row;
    row.pathology = std::string(kPathologies[c]);
    row.chexnet_paper = kBaselineTable[c].chexnet;
    row.ourmodel_paper = kBaselineTable[c].ourmodel;
    row.ours = report.classes[c].auroc;
    if (row.ours) {
      row.delta_chexnet = *row.ours - row.chexnet_paper;
      row.delta_ourmodel = *row.ours - row.ourmodel_paper;
    }
    rows[c] = std::move(row);
  }
  return rows;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) {
  return v ? fmt(*v) : std::string("n/a");
}

}  // namespace

std::string render_report(const EvalReport& report,
                          const std::array<ComparisonRow, 14>& comparison,
                          ReportFormat format) {
  // The paper columns' means track the same defined subset as ours so the
  // mean row's deltas stay comparable on partial splits.
  double chex_sum = 0.0, our_paper_sum = 0.0;
  int defined = 0;
  for (const auto& row : comparison) {
    if (row.ours) {
      chex_sum += row.chexnet_paper;
      our_paper_sum += row.ourmodel_paper;
      ++defined;
    }
  }
  std::optional<double> chex_mean, our_paper_mean, delta_chex_mean,
      delta_our_mean;
  if (defined > 0 && report.mean_auroc) {
    chex_mean = chex_sum / defined;
    our_paper_mean = our_paper_sum / defined;
    delta_chex_mean = *report.mean_auroc - *chex_mean;
    delta_our_mean = *report.mean_auroc - *our_paper_mean;
  }

  std::ostringstream out;
  if (format == ReportFormat::kCsv) {
    out << "pathology,auroc,chexnet_paper,ourmodel_paper,delta_chexnet,"
           "delta_ourmodel\n";
    for (const auto& row : comparison) {
      out << row.pathology << "," << fmt_opt(row.ours) << ","
          << fmt(row.chexnet_paper) << "," << fmt(row.ourmodel_paper) << ","
          << fmt_opt(row.delta_chexnet) << "," << fmt_opt(row.delta_ourmodel)
          << "\n";
    }
    out << "Mean," << fmt_opt(report.mean_auroc) << "," << fmt_opt(chex_mean)
        << "," << fmt_opt(our_paper_mean) << "," << fmt_opt(delta_chex_mean)
        << "," << fmt_opt(delta_our_mean) << "\n";
    return out.str();
  }

  out << "AUROC report (" << report.split_name << " split)\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-20s %10s %10s %10s %10s %10s\n",
                "Pathology", "AUROC", "ChexNet", "OurModel", "dChexNet",
                "dOurModel");
  out << line;
  for (std::size_t c = 0; c < 14; ++c) {
    const auto& row = comparison[c];
    std::snprintf(line, sizeof(line), "%-20s %10s %10s %10s %10s %10s\n",
                  row.pathology.c_str(), fmt_opt(row.ours).c_str(),
                  fmt(row.chexnet_paper).c_str(), fmt(row.ourmodel_paper).c_str(),
                  fmt_opt(row.delta_chexnet).c_str(),
                  fmt_opt(row.delta_ourmodel).c_str());
    out << line;
  }
  std::snprintf(line, sizeof(line), "%-20s %10s %10s %10s %10s %10s\n", "Mean",
                fmt_opt(report.mean_auroc).c_str(), fmt_opt(chex_mean).c_str(),
                fmt_opt(our_paper_mean).c_str(), fmt_opt(delta_chex_mean).c_str(),
                fmt_opt(delta_our_mean).c_str());
  out << line;
  return out.str();
}

}  // namespace chexfuse
