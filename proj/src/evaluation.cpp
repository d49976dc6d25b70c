#include "stx/evaluation.hpp"

#include "stx/error.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace stx {
namespace {

constexpr std::array<long long, kClassCount> kWeights{5, 3, 1};

std::string fmt_metric(double v) {
  if (std::isnan(v)) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["w_acc"] = r.w_acc;
  j["uar"] = r.uar;
  auto recall = [&](MurmurLabel l) -> nlohmann::json {
    const auto& v = r.recall[index_of(l)];
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  j["recall_present"] = recall(MurmurLabel::Present);
  j["recall_unknown"] = recall(MurmurLabel::Unknown);
  j["recall_absent"] = recall(MurmurLabel::Absent);
  j["confusion"] = r.counts.matrix;
  j["confusion_axes"] = {"true", "predicted", {"Present", "Unknown", "Absent"}};
  j["split_fingerprint"] = r.fingerprint;
  j["warnings"] = r.warnings;
  return j;
}

}  // namespace

void ConfusionCounts::add(MurmurLabel truth, MurmurLabel predicted, long long n) {
  matrix[index_of(truth)][index_of(predicted)] += n;
}

void ConfusionCounts::merge(const ConfusionCounts& other) {
  for (std::size_t i = 0; i < kClassCount; ++i)
    for (std::size_t j = 0; j < kClassCount; ++j) matrix[i][j] += other.matrix[i][j];
}

long long ConfusionCounts::total_true(MurmurLabel l) const {
  long long s = 0;
  for (auto v : matrix[index_of(l)]) s += v;
  return s;
}

long long ConfusionCounts::correct(MurmurLabel l) const { return matrix[index_of(l)][index_of(l)]; }

long long ConfusionCounts::total() const {
  long long s = 0;
  for (auto l : kAllLabels) s += total_true(l);
  return s;
}

ConfusionCounts ConfusionCounts::from_totals(std::array<long long, kClassCount> c, std::array<long long, kClassCount> t) {
  ConfusionCounts out;
  for (std::size_t i = 0; i < kClassCount; ++i) {
    require(c[i] >= 0 && t[i] >= 0 && t[i] <= c[i], ErrorKind::InvalidArgument, "need 0 <= t_i <= c_i");
    out.matrix[i][i] = t[i];
    out.matrix[i][(i + 1) % kClassCount] = c[i] - t[i];
  }
  return out;
}

double weighted_accuracy(const ConfusionCounts& counts) {
  long long num = 0;
  long long den = 0;
  for (auto l : kAllLabels) {
    num += kWeights[index_of(l)] * counts.correct(l);
    den += kWeights[index_of(l)] * counts.total_true(l);
  }
  require(den > 0, ErrorKind::UndefinedMetric, "weighted accuracy undefined: no true labels");
  return static_cast<double>(num) / static_cast<double>(den);
}

RecallSummary recall_summary(const ConfusionCounts& counts) {
  RecallSummary s;
  double sum = 0.0;
  int defined = 0;
  for (auto l : kAllLabels) {
    const auto c = counts.total_true(l);
    if (c == 0) {
      s.partial = true;
      continue;
    }
    const double r = static_cast<double>(counts.correct(l)) / static_cast<double>(c);
    s.recall[index_of(l)] = r;
    sum += r;
    ++defined;
  }
  require(defined > 0, ErrorKind::UndefinedMetric, "recall undefined: no true labels");
  s.uar = sum / defined;
  return s;
}

double unweighted_average_recall(const ConfusionCounts& counts) { return recall_summary(counts).uar; }

ClassScores aggregate_scores(const std::vector<ClassScores>& per_segment, Aggregation how) {
  require(!per_segment.empty(), ErrorKind::Data, "cannot aggregate an empty score list");
  ClassScores out;
  for (std::size_t c = 0; c < kClassCount; ++c) {
    std::vector<double> v;
    v.reserve(per_segment.size());
    for (const auto& s : per_segment) v.push_back(s.scores[c]);
    if (how == Aggregation::Mean) {
      double acc = 0.0;
      for (double x : v) acc += x;
      out.scores[c] = acc / static_cast<double>(v.size());
    } else {
      std::sort(v.begin(), v.end());
      const auto n = v.size();
      out.scores[c] = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }
  }
  return out;
}

MurmurLabel aggregate_patient(const std::vector<ClassScores>& per_segment, Aggregation how) {
  return predict_label(aggregate_scores(per_segment, how));
}

std::string split_fingerprint(std::vector<std::string> patient_ids) {
  std::sort(patient_ids.begin(), patient_ids.end());
  std::uint64_t h = 14695981039346656037ULL;
  bool first = true;
  for (const auto& id : patient_ids) {
    if (!first) {
      h ^= static_cast<unsigned char>('\n');
      h *= 1099511628211ULL;
    }
    first = false;
    for (unsigned char ch : id) {
      h ^= ch;
      h *= 1099511628211ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double MetricsReport::recall_or_nan(MurmurLabel l) const {
  const auto& r = recall[index_of(l)];
  return r ? *r : std::numeric_limits<double>::quiet_NaN();
}

MetricsReport make_report(const ConfusionCounts& counts, std::string fingerprint) {
  MetricsReport r;
  r.counts = counts;
  r.fingerprint = std::move(fingerprint);
  r.w_acc = weighted_accuracy(counts);
  const auto rs = recall_summary(counts);
  r.recall = rs.recall;
  r.uar = rs.uar;
  if (rs.partial) {
    std::string missing;
    for (auto l : kAllLabels)
      if (!rs.recall[index_of(l)]) missing += std::string(missing.empty() ? "" : ", ") + to_string(l);
    r.warnings.push_back("classes absent from the evaluation set (" + missing +
                         "); UAR averaged over present classes only");
    spdlog::warn("{}", r.warnings.back());
  }
  return r;
}

MetricsReport evaluate_scores(const std::vector<PatientScores>& patients, Aggregation how) {
  require(!patients.empty(), ErrorKind::Data, "evaluation set is empty");
  ConfusionCounts counts;
  std::vector<std::string> ids;
  for (const auto& p : patients) {
    ids.push_back(p.patient_id);
    try {
      counts.add(p.truth, aggregate_patient(p.segment_scores, how));
    } catch (const Error& e) {
      fail(e.kind(), "patient " + p.patient_id + ": " + e.detail());
    }
  }
  return make_report(counts, split_fingerprint(std::move(ids)));
}

MetricsReport evaluate(const ScoreFn& scorer, const std::vector<PatientRecord>& test_patients,
                       const EmbeddingFn& embedding_fn, Aggregation how) {
  require(!test_patients.empty(), ErrorKind::Data, "evaluation set is empty");
  std::vector<PatientScores> scored;
  scored.reserve(test_patients.size());
  for (const auto& p : test_patients) {
    PatientScores ps{p.patient_id, p.label, {}};
    try {
      for (const auto& e : embedding_fn(p)) ps.segment_scores.push_back(scorer(e));
    } catch (const Error& e) {
      fail(e.kind(), "patient " + p.patient_id + ": " + e.detail());
    }
    scored.push_back(std::move(ps));
  }
  return evaluate_scores(scored, how);
}

MetricsReport evaluate(const SvmModel& model, const std::vector<PatientRecord>& test_patients,
                       const EmbeddingFn& embedding_fn, Aggregation how) {
  return evaluate([&model](const Embedding& e) { return predict_scores(model, e); }, test_patients, embedding_fn,
                  how);
}

AblationComparison ablation_compare(const MetricsReport& full, const MetricsReport& baseline) {
  require(full.fingerprint == baseline.fingerprint, ErrorKind::Comparison,
          "reports were computed on different test splits (" + full.fingerprint + " vs " + baseline.fingerprint + ")");
  AblationComparison cmp;
  cmp.full = full;
  cmp.baseline = baseline;
  cmp.w_acc_abs = full.w_acc - baseline.w_acc;
  cmp.uar_abs = full.uar - baseline.uar;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  cmp.w_acc_rel = baseline.w_acc > 0 ? cmp.w_acc_abs / baseline.w_acc : nan;
  cmp.uar_rel = baseline.uar > 0 ? cmp.uar_abs / baseline.uar : nan;
  return cmp;
}

std::string render_report_text(const MetricsReport& r) {
  std::ostringstream out;
  out << "W.acc   " << fmt_metric(r.w_acc) << '\n';
  out << "UAR     " << fmt_metric(r.uar) << '\n';
  for (auto l : kAllLabels) {
    out << "Recall(" << to_string(l)[0] << ") " << fmt_metric(r.recall_or_nan(l)) << "  (" << r.counts.correct(l) << '/'
        << r.counts.total_true(l) << ")\n";
  }
  out << "confusion (rows true, cols predicted: P U A)\n";
  for (auto l : kAllLabels) {
    out << "  " << to_string(l)[0];
    for (auto v : r.counts.matrix[index_of(l)]) out << ' ' << v;
    out << '\n';
  }
  out << "split   " << r.fingerprint << '\n';
  for (const auto& w : r.warnings) out << "warning: " << w << '\n';
  return out.str();
}

std::string render_report_json(const MetricsReport& r, const std::string& config_echo) {
  auto j = report_to_json(r);
  if (!config_echo.empty()) j["config"] = config_echo;
  return j.dump(2) + "\n";
}

MetricsReport parse_report_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("report: ") + e.what());
  }
  MetricsReport r;
  try {
    r.w_acc = j.at("w_acc").get<double>();
    r.uar = j.at("uar").get<double>();
    const char* keys[] = {"recall_present", "recall_unknown", "recall_absent"};
    for (std::size_t c = 0; c < kClassCount; ++c)
      if (!j.at(keys[c]).is_null()) r.recall[c] = j.at(keys[c]).get<double>();
    r.counts.matrix = j.at("confusion").get<decltype(r.counts.matrix)>();
    r.fingerprint = j.at("split_fingerprint").get<std::string>();
    r.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("report: ") + e.what());
  }
  return r;
}

std::string render_ablation_text(const AblationComparison& c) {
  auto pct = [](double v) {
    if (std::isnan(v)) return std::string("undefined");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.1f%%", 100.0 * v);
    return std::string(buf);
  };
  auto abs = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.4f", v);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "metric  baseline  full     abs      rel\n";
  out << "W.acc   " << fmt_metric(c.baseline.w_acc) << "    " << fmt_metric(c.full.w_acc) << "   " << abs(c.w_acc_abs)
      << "  " << pct(c.w_acc_rel) << '\n';
  out << "UAR     " << fmt_metric(c.baseline.uar) << "    " << fmt_metric(c.full.uar) << "   " << abs(c.uar_abs)
      << "  " << pct(c.uar_rel) << '\n';
  out << "split   " << c.full.fingerprint << '\n';
  return out.str();
}

std::string render_ablation_json(const AblationComparison& c, const std::string& config_echo) {
  nlohmann::json j;
  j["full"] = report_to_json(c.full);
  j["baseline"] = report_to_json(c.baseline);
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  j["delta"] = {{"w_acc_abs", c.w_acc_abs},
                {"w_acc_rel", num(c.w_acc_rel)},
                {"uar_abs", c.uar_abs},
                {"uar_rel", num(c.uar_rel)}};
  j["split_fingerprint"] = c.full.fingerprint;
  if (!config_echo.empty()) j["config"] = config_echo;
  return j.dump(2) + "\n";
}

std::string render_ablation_chart_csv(const AblationComparison& c) {
  std::ostringstream out;
  out.precision(9);
  out << "arm,w_acc,uar\n";
  out << "WSN(Baseline)," << c.baseline.w_acc << ',' << c.baseline.uar << '\n';
  out << "Scattering Transformer," << c.full.w_acc << ',' << c.full.uar << '\n';
  return out.str();
}

}  // namespace stx
