#pragma once

// Patient-level aggregation and the murmur-task metrics: weighted accuracy
// (Present 5x, Unknown 3x, Absent 1x), unweighted average recall, per-class
// recall, and the ablation comparison between two reports.

#include "stx/classifier.hpp"
#include "stx/pipeline.hpp"

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace stx {

struct ConfusionCounts {
  // matrix[true][predicted], indexed Present, Unknown, Absent.
  std::array<std::array<long long, kClassCount>, kClassCount> matrix{};

  void add(MurmurLabel truth, MurmurLabel predicted, long long n = 1);
  void merge(const ConfusionCounts& other);

  long long total_true(MurmurLabel l) const;  // c_i
  long long correct(MurmurLabel l) const;     // t_i
  long long total() const;

  // Counts with the given totals; misses are booked against the next class.
  static ConfusionCounts from_totals(std::array<long long, kClassCount> c, std::array<long long, kClassCount> t);
};

double weighted_accuracy(const ConfusionCounts& counts);

struct RecallSummary {
  std::array<std::optional<double>, kClassCount> recall;  // nullopt when c_i = 0
  double uar = 0.0;                                       // mean over defined recalls
  bool partial = false;                                   // some class was absent
};

RecallSummary recall_summary(const ConfusionCounts& counts);

// Macro-average of per-class recalls; classes absent from the counts are
// skipped (see recall_summary for the flag).
double unweighted_average_recall(const ConfusionCounts& counts);

enum class Aggregation { Mean, Median };

ClassScores aggregate_scores(const std::vector<ClassScores>& per_segment, Aggregation how = Aggregation::Mean);
MurmurLabel aggregate_patient(const std::vector<ClassScores>& per_segment, Aggregation how = Aggregation::Mean);

// FNV-1a over the sorted, newline-joined test patient ids, as 16 hex digits.
std::string split_fingerprint(std::vector<std::string> patient_ids);

struct MetricsReport {
  double w_acc = 0.0;
  double uar = 0.0;
  std::array<std::optional<double>, kClassCount> recall;
  ConfusionCounts counts;
  std::string fingerprint;
  std::vector<std::string> warnings;

  double recall_or_nan(MurmurLabel l) const;
};

MetricsReport make_report(const ConfusionCounts& counts, std::string fingerprint);

struct PatientScores {
  std::string patient_id;
  MurmurLabel truth = MurmurLabel::Absent;
  std::vector<ClassScores> segment_scores;
};

MetricsReport evaluate_scores(const std::vector<PatientScores>& patients, Aggregation how = Aggregation::Mean);

using EmbeddingFn = std::function<std::vector<Embedding>(const PatientRecord&)>;
using ScoreFn = std::function<ClassScores(const Embedding&)>;

MetricsReport evaluate(const ScoreFn& scorer, const std::vector<PatientRecord>& test_patients,
                       const EmbeddingFn& embedding_fn, Aggregation how = Aggregation::Mean);

MetricsReport evaluate(const SvmModel& model, const std::vector<PatientRecord>& test_patients,
                       const EmbeddingFn& embedding_fn, Aggregation how = Aggregation::Mean);

struct AblationComparison {
  MetricsReport full;
  MetricsReport baseline;
  double w_acc_abs = 0.0;
  double w_acc_rel = 0.0;  // fraction, 0.634 = +63.4 %
  double uar_abs = 0.0;
  double uar_rel = 0.0;
};

AblationComparison ablation_compare(const MetricsReport& full, const MetricsReport& baseline);

std::string render_report_text(const MetricsReport& report);
std::string render_report_json(const MetricsReport& report, const std::string& config_echo = {});
MetricsReport parse_report_json(const std::string& text);

std::string render_ablation_text(const AblationComparison& cmp);
std::string render_ablation_json(const AblationComparison& cmp, const std::string& config_echo = {});
// Bar-chart data: one row per arm with W.acc and UAR.
std::string render_ablation_chart_csv(const AblationComparison& cmp);

}  // namespace stx
