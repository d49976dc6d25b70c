#include "stx/workflow.hpp"

#include "stx/error.hpp"
#include "stx/parallel.hpp"
#include "stx/rng.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace stx {
namespace {

struct PatientRows {
  const PatientRecord* patient = nullptr;
  std::set<std::pair<int, std::size_t>> wanted;  // (recording, start_sample)
};

std::vector<PatientRows> group_manifest(const PreparedData& data) {
  std::map<std::string, const PatientRecord*> by_id;
  for (const auto& p : data.patients) by_id[p.patient_id] = &p;
  std::vector<PatientRows> out;
  std::map<std::string, std::size_t> slot;
  for (const auto& row : data.manifest) {
    auto it = slot.find(row.patient_id);
    if (it == slot.end()) {
      auto p = by_id.find(row.patient_id);
      require(p != by_id.end(), ErrorKind::Data, "manifest patient " + row.patient_id + " missing from dataset");
      it = slot.emplace(row.patient_id, out.size()).first;
      out.push_back(PatientRows{p->second, {}});
    }
    out[it->second].wanted.emplace(row.recording, row.start_sample);
  }
  return out;
}

struct ScatteredSegment {
  int recording = 0;
  std::size_t start = 0;
  ScatteringMatrix matrix;
};

std::vector<ScatteredSegment> scatter_patient(const RunConfig& cfg, const FilterBank& bank, const PatientRows& rows) {
  std::vector<ScatteredSegment> out;
  const auto& patient = *rows.patient;
  for (int r = 0; r < static_cast<int>(patient.recordings.size()); ++r) {
    bool any = false;
    for (const auto& w : rows.wanted) any = any || w.first == r;
    if (!any) continue;
    for (const auto& seg : load_recording_segments(patient, r, cfg.segmentation)) {
      if (!rows.wanted.count({r, seg.start_sample})) continue;
      try {
        out.push_back({r, seg.start_sample, scattering_transform(seg.signal, bank, cfg.scattering)});
      } catch (const Error& e) {
        fail(e.kind(), "segment " + item_id(patient.patient_id, r, seg.start_sample) + ": " + e.detail());
      }
    }
  }
  require(out.size() == rows.wanted.size(), ErrorKind::Data,
          "patient " + patient.patient_id + ": audio no longer yields the manifest segments");
  return out;
}

// Token sequences for multi-segment mode, with their ids.
std::vector<std::pair<std::string, std::vector<Eigen::VectorXd>>> multiseg_groups(
    const RunConfig& cfg, const std::string& pid, const std::vector<ScatteredSegment>& segs,
    const std::vector<Eigen::VectorXd>& averages) {
  std::vector<std::pair<std::string, std::vector<Eigen::VectorXd>>> groups;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const std::string id = cfg.grouping == SequenceGrouping::PerPatient
                               ? pid
                               : pid + "/" + std::to_string(segs[i].recording);
    if (groups.empty() || groups.back().first != id) groups.push_back({id, {}});
    groups.back().second.push_back(averages[i]);
  }
  return groups;
}

Eigen::MatrixXd stack(const std::vector<Eigen::VectorXd>& tokens) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(tokens.size()), tokens.front().size());
  for (std::size_t t = 0; t < tokens.size(); ++t) m.row(static_cast<Eigen::Index>(t)) = tokens[t].transpose();
  return m;
}

// Attended rows of every sequence one patient contributes, for fitting feature selection.
std::vector<Eigen::MatrixXd> attended_rows(const RunConfig& cfg, const FilterBank& bank, const PatientRows& rows) {
  const auto segs = scatter_patient(cfg, bank, rows);
  std::vector<Eigen::MatrixXd> out;
  if (cfg.mode == SequenceMode::PathsAsSequence) {
    for (const auto& s : segs)
      out.push_back(attend(FeatureSequence{s.matrix.values, SequenceMode::PathsAsSequence}, cfg.context).rows);
    return out;
  }
  std::vector<Eigen::VectorXd> averages;
  for (const auto& s : segs) averages.push_back(path_average(s.matrix));
  for (const auto& [id, tokens] : multiseg_groups(cfg, rows.patient->patient_id, segs, averages))
    out.push_back(attend(FeatureSequence{stack(tokens), SequenceMode::MultiSegment}, cfg.context).rows);
  return out;
}

std::vector<Embedding> gather(std::vector<std::vector<Embedding>>& parts) {
  std::vector<Embedding> out;
  for (auto& p : parts)
    for (auto& e : p) out.push_back(std::move(e));
  return out;
}

std::map<std::string, std::pair<MurmurLabel, std::string>> patient_sides(const std::vector<ManifestRow>& manifest) {
  std::map<std::string, std::pair<MurmurLabel, std::string>> out;
  for (const auto& r : manifest) {
    auto [it, inserted] = out.emplace(r.patient_id, std::make_pair(r.label, r.split));
    require(inserted || (it->second.first == r.label && it->second.second == r.split), ErrorKind::Data,
            "manifest is inconsistent for patient " + r.patient_id);
  }
  return out;
}

SvmModel fit_oversampled(const std::vector<Embedding>& items, const std::vector<MurmurLabel>& labels,
                         const SvmConfig& svm, std::uint64_t seed) {
  const auto idx = oversample_indices(labels, seed);
  std::vector<Embedding> x;
  std::vector<MurmurLabel> y;
  x.reserve(idx.size());
  y.reserve(idx.size());
  for (auto i : idx) {
    x.push_back(items[i]);
    y.push_back(labels[i]);
  }
  return train(x, y, svm);
}

MetricsReport score_patients(const SvmModel& model, const std::vector<std::string>& patients,
                             const std::map<std::string, MurmurLabel>& truth,
                             const std::map<std::string, std::vector<const Embedding*>>& by_patient, Aggregation how,
                             int workers) {
  std::vector<PatientScores> scored(patients.size());
  parallel_for(patients.size(), workers, [&](std::size_t i) {
    const auto& pid = patients[i];
    auto it = by_patient.find(pid);
    require(it != by_patient.end() && !it->second.empty(), ErrorKind::Data, "no embeddings for patient " + pid);
    scored[i] = PatientScores{pid, truth.at(pid), {}};
    for (const auto* e : it->second) scored[i].segment_scores.push_back(predict_scores(model, *e));
  });
  return evaluate_scores(scored, how);
}

}  // namespace

std::string item_id(const std::string& patient, int recording, std::size_t start) {
  return patient + "/" + std::to_string(recording) + "/" + std::to_string(start);
}

std::string patient_of(const std::string& id) { return id.substr(0, id.find('/')); }

std::string config_comment(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += "# " + k + " = " + v + "\n";
  return out;
}

PreparedData prepare_data(const RunConfig& cfg) {
  cfg.validate();
  require(!cfg.dataset_dir.empty() && std::filesystem::is_directory(cfg.dataset_dir), ErrorKind::Path,
          "dataset directory '" + cfg.dataset_dir.string() + "' does not exist");
  PreparedData data;
  auto patients = load_metadata(cfg.dataset_dir, &data.load_report);
  std::sort(patients.begin(), patients.end(),
            [](const auto& a, const auto& b) { return a.patient_id < b.patient_id; });

  std::vector<std::vector<ManifestRow>> rows(patients.size());
  parallel_for(patients.size(), cfg.workers, [&](std::size_t i) {
    const auto& p = patients[i];
    for (int r = 0; r < static_cast<int>(p.recordings.size()); ++r) {
      try {
        for (const auto& seg : load_recording_segments(p, r, cfg.segmentation))
          rows[i].push_back(ManifestRow{p.patient_id, r, seg.start_sample, p.label, {}});
      } catch (const Error& e) {
        fail(e.kind(), "patient " + p.patient_id + " recording " + std::to_string(r) + ": " + e.detail());
      }
    }
  });

  std::vector<std::vector<ManifestRow>> kept_rows;
  for (std::size_t i = 0; i < patients.size(); ++i) {
    if (rows[i].empty()) {
      data.load_report.warnings.push_back("patient " + patients[i].patient_id + " has no usable segments; dropped");
      continue;
    }
    data.patients.push_back(patients[i]);
    kept_rows.push_back(std::move(rows[i]));
  }
  require(!data.patients.empty(), ErrorKind::Data, "no usable patients in " + cfg.dataset_dir.string());

  if (data.patients.size() < 4) {
    // Too few to split; everything trains and evaluation will report no test set.
    data.split.train = data.patients;
    data.split.seed = cfg.split_seed;
    data.split.warnings.push_back("fewer than 4 patients; all assigned to train");
  } else {
    data.split = patient_split(data.patients, cfg.train_fraction, cfg.split_seed);
  }
  assert_leakage_free(data.split);
  std::set<std::string> train_ids;
  for (const auto& p : data.split.train) train_ids.insert(p.patient_id);
  for (auto& group : kept_rows)
    for (auto& row : group) {
      row.split = train_ids.count(row.patient_id) ? "train" : "test";
      data.manifest.push_back(std::move(row));
    }
  for (const auto& w : data.load_report.warnings) spdlog::warn("{}", w);
  for (const auto& w : data.split.warnings) spdlog::warn("{}", w);
  return data;
}

PreparedData prepared_from_manifest(const RunConfig& cfg, const std::vector<ManifestRow>& manifest) {
  require(!manifest.empty(), ErrorKind::Data, "manifest is empty");
  require(std::filesystem::is_directory(cfg.dataset_dir), ErrorKind::Path,
          "dataset directory '" + cfg.dataset_dir.string() + "' does not exist");
  PreparedData data;
  data.manifest = manifest;
  const auto sides = patient_sides(manifest);
  for (auto& p : load_metadata(cfg.dataset_dir, &data.load_report)) {
    auto it = sides.find(p.patient_id);
    if (it == sides.end()) continue;
    require(it->second.first == p.label, ErrorKind::Data,
            "patient " + p.patient_id + ": manifest label disagrees with metadata");
    (it->second.second == "train" ? data.split.train : data.split.test).push_back(p);
    data.patients.push_back(std::move(p));
  }
  std::sort(data.patients.begin(), data.patients.end(),
            [](const auto& a, const auto& b) { return a.patient_id < b.patient_id; });
  data.split.seed = cfg.split_seed;
  assert_leakage_free(data.split);
  return data;
}

void write_manifest_file(const std::filesystem::path& path, const RunConfig& cfg, const std::vector<ManifestRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Path, "cannot write " + path.string());
  out << config_comment(cfg);
  write_manifest(out, rows);
}

std::vector<ManifestRow> read_manifest_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Path, "cannot read manifest " + path.string());
  std::stringstream body;
  std::string line;
  while (std::getline(in, line))
    if (line.empty() || line[0] != '#') body << line << '\n';
  return read_manifest(body);
}

EmbeddingSet compute_embeddings(const RunConfig& cfg, const PreparedData& data, EmbeddingRequest request) {
  cfg.validate();
  const auto bank = build_filter_bank(cfg.scattering, cfg.segmentation.sample_rate);
  const auto groups = group_manifest(data);
  const auto sides = patient_sides(data.manifest);

  RunConfig run = cfg;
  auto* tv = std::get_if<TopVarianceFfn>(&run.context.ffn);
  if (request.full && tv && !tv->columns) {
    // Fit on training patients, a bounded batch at a time so memory stays flat.
    std::vector<const PatientRows*> train;
    for (const auto& g : groups)
      if (sides.at(g.patient->patient_id).second == "train") train.push_back(&g);
    ColumnVariance stats;
    const std::size_t batch = static_cast<std::size_t>(std::max(1, cfg.workers)) * 2;
    for (std::size_t b = 0; b < train.size(); b += batch) {
      const std::size_t n = std::min(batch, train.size() - b);
      std::vector<std::vector<Eigen::MatrixXd>> part(n);
      parallel_for(n, cfg.workers, [&](std::size_t i) { part[i] = attended_rows(run, bank, *train[b + i]); });
      for (const auto& p : part)
        for (const auto& m : p) stats.add(m);
    }
    require(stats.count() > 0, ErrorKind::Data, "no training rows to fit feature selection");
    tv->columns = select_top_variance(stats, tv->target_dim);
  }

  std::vector<std::vector<Embedding>> full(groups.size()), base(groups.size());
  parallel_for(groups.size(), cfg.workers, [&](std::size_t g) {
    const auto& pid = groups[g].patient->patient_id;
    const auto segs = scatter_patient(run, bank, groups[g]);
    std::vector<Eigen::VectorXd> averages;
    for (const auto& s : segs) averages.push_back(path_average(s.matrix));
    if (request.baseline)
      for (std::size_t i = 0; i < segs.size(); ++i)
        base[g].push_back(Embedding{averages[i], item_id(pid, segs[i].recording, segs[i].start), SequenceMode::Baseline});
    if (!request.full) return;
    if (run.mode == SequenceMode::PathsAsSequence) {
      for (const auto& s : segs)
        full[g].push_back(contextualize_paths_mode(s.matrix, run.context, item_id(pid, s.recording, s.start)));
    } else {
      for (auto& [id, tokens] : multiseg_groups(run, pid, segs, averages))
        full[g].push_back(contextualize_multisegment_mode(tokens, run.context, id));
    }
  });
  return EmbeddingSet{gather(full), gather(base), run.context};
}

LabelledItems select_split(const std::vector<Embedding>& embeddings, const std::vector<ManifestRow>& manifest,
                           const std::string& side) {
  const auto sides = patient_sides(manifest);
  LabelledItems out;
  for (const auto& e : embeddings) {
    const auto pid = patient_of(e.id);
    auto it = sides.find(pid);
    require(it != sides.end(), ErrorKind::Data, "embedding " + e.id + " has no manifest entry");
    if (it->second.second != side) continue;
    out.items.push_back(e);
    out.labels.push_back(it->second.first);
    out.patients.push_back(pid);
  }
  return out;
}

TrainOutcome train_classifier(const RunConfig& cfg, const LabelledItems& train) {
  require(!train.items.empty(), ErrorKind::Data, "no training embeddings");
  TrainOutcome out;
  out.chosen = cfg.svm;

  if (cfg.grid_search) {
    const double dim = static_cast<double>(train.items.front().dim());
    for (double c : {0.1, 1.0, 10.0})
      for (double g : {0.1, 1.0, 10.0}) out.grid.push_back(GridPoint{c, g / dim, 0.0, 0});

    // Patient-grouped folds, assigned round-robin after a seeded shuffle.
    std::vector<std::string> ids(train.patients);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::mt19937_64 gen(cfg.split_seed ^ 0x5bd1e995ULL);
    rng::shuffle(ids, gen);
    std::map<std::string, int> fold_of;
    for (std::size_t i = 0; i < ids.size(); ++i) fold_of[ids[i]] = static_cast<int>(i % static_cast<std::size_t>(cfg.cv_folds));
    std::map<std::string, MurmurLabel> truth;
    for (std::size_t i = 0; i < train.items.size(); ++i) truth[train.patients[i]] = train.labels[i];

    parallel_for(out.grid.size(), cfg.workers, [&](std::size_t k) {
      auto& point = out.grid[k];
      SvmConfig svm = cfg.svm;
      svm.c = point.c;
      svm.gamma = point.gamma;
      double sum = 0.0;
      for (int f = 0; f < cfg.cv_folds; ++f) {
        std::vector<Embedding> x;
        std::vector<MurmurLabel> y;
        std::map<std::string, std::vector<const Embedding*>> held;
        std::vector<std::string> held_ids;
        for (std::size_t i = 0; i < train.items.size(); ++i) {
          if (fold_of.at(train.patients[i]) == f) {
            auto& v = held[train.patients[i]];
            if (v.empty()) held_ids.push_back(train.patients[i]);
            v.push_back(&train.items[i]);
          } else {
            x.push_back(train.items[i]);
            y.push_back(train.labels[i]);
          }
        }
        if (held_ids.empty()) continue;
        try {
          const auto model = fit_oversampled(x, y, svm, cfg.oversample_seed);
          sum += score_patients(model, held_ids, truth, held, cfg.aggregation, 1).w_acc;
          ++point.folds_used;
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::Degenerate && e.kind() != ErrorKind::UndefinedMetric) throw;
        }
      }
      point.cv_w_acc = point.folds_used ? sum / point.folds_used : std::numeric_limits<double>::quiet_NaN();
    });

    const GridPoint* best = nullptr;
    for (const auto& p : out.grid) {
      spdlog::info("grid c={} gamma={:.6g} cv_w_acc={:.4f} folds={}", p.c, p.gamma, p.cv_w_acc, p.folds_used);
      if (!std::isnan(p.cv_w_acc) && (!best || p.cv_w_acc > best->cv_w_acc)) best = &p;
    }
    if (best) {
      out.chosen.c = best->c;
      out.chosen.gamma = best->gamma;
    } else {
      spdlog::warn("no cross-validation fold was usable; keeping configured c and gamma");
    }
  }

  try {
    out.model = fit_oversampled(train.items, train.labels, out.chosen, cfg.oversample_seed);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Degenerate) fail(ErrorKind::Data, e.what());
    throw;
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < train.items.size(); ++i)
    hits += predict_label(predict_scores(out.model, train.items[i])) == train.labels[i];
  out.train_accuracy = static_cast<double>(hits) / static_cast<double>(train.items.size());
  return out;
}

std::string manifest_fingerprint(const std::vector<ManifestRow>& manifest) {
  std::vector<std::string> ids;
  for (const auto& [pid, side] : patient_sides(manifest))
    if (side.second == "test") ids.push_back(pid);
  return split_fingerprint(std::move(ids));
}

MetricsReport evaluate_split(const RunConfig& cfg, const SvmModel& model, const std::vector<Embedding>& embeddings,
                             const std::vector<ManifestRow>& manifest) {
  std::map<std::string, MurmurLabel> truth;
  std::vector<std::string> test_ids;
  for (const auto& [pid, side] : patient_sides(manifest)) {
    truth[pid] = side.first;
    if (side.second == "test") test_ids.push_back(pid);
  }
  require(!test_ids.empty(), ErrorKind::Data, "manifest has no test patients");
  std::map<std::string, std::vector<const Embedding*>> by_patient;
  for (const auto& e : embeddings) by_patient[patient_of(e.id)].push_back(&e);
  return score_patients(model, test_ids, truth, by_patient, cfg.aggregation, cfg.workers);
}

AblationOutcome run_ablation(const RunConfig& cfg, const EmbeddingSet& embeddings,
                             const std::vector<ManifestRow>& manifest) {
  AblationOutcome out;
  out.full_training = train_classifier(cfg, select_split(embeddings.full, manifest, "train"));
  out.baseline_training = train_classifier(cfg, select_split(embeddings.baseline, manifest, "train"));
  const auto full = evaluate_split(cfg, out.full_training.model, embeddings.full, manifest);
  const auto base = evaluate_split(cfg, out.baseline_training.model, embeddings.baseline, manifest);
  out.comparison = ablation_compare(full, base);
  return out;
}

}  // namespace stx
