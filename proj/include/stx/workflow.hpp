#pragma once

// End-to-end orchestration shared by the CLI and the acceptance checks:
// prepare (manifest + split), embed, train with grid search, evaluate, ablate.

#include "stx/classifier.hpp"
#include "stx/config.hpp"
#include "stx/contextualizer.hpp"
#include "stx/evaluation.hpp"
#include "stx/pipeline.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace stx {

struct PreparedData {
  std::vector<PatientRecord> patients;  // every usable patient, sorted by id
  DatasetSplit split;
  std::vector<ManifestRow> manifest;
  LoadReport load_report;
};

// Loads metadata, segments every recording and assigns the patient split.
// Patients left with no segment are dropped with a warning.
PreparedData prepare_data(const RunConfig& cfg);

// Rebuilds the split from an existing manifest and the dataset metadata.
PreparedData prepared_from_manifest(const RunConfig& cfg, const std::vector<ManifestRow>& manifest);

// Lines `# key = value` for text artifacts.
std::string config_comment(const RunConfig& cfg);

void write_manifest_file(const std::filesystem::path& path, const RunConfig& cfg, const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> read_manifest_file(const std::filesystem::path& path);

std::string item_id(const std::string& patient, int recording, std::size_t start);
std::string patient_of(const std::string& id);

struct EmbeddingRequest {
  bool full = true;
  bool baseline = false;
};

struct EmbeddingSet {
  std::vector<Embedding> full;      // contextualized, per cfg.mode
  std::vector<Embedding> baseline;  // per-segment path averages
  ContextConfig context;            // with any fitted feature selection
};

// Computes embeddings for every manifest segment. Scattering is computed once
// and shared by both arms. A top-variance feed-forward is fitted on the
// training split first.
EmbeddingSet compute_embeddings(const RunConfig& cfg, const PreparedData& data, EmbeddingRequest request = {});

struct LabelledItems {
  std::vector<Embedding> items;
  std::vector<MurmurLabel> labels;
  std::vector<std::string> patients;
};

// Embeddings whose patient sits on the named side of the manifest split.
LabelledItems select_split(const std::vector<Embedding>& embeddings, const std::vector<ManifestRow>& manifest,
                           const std::string& side);

struct GridPoint {
  double c = 0.0;
  double gamma = 0.0;
  double cv_w_acc = 0.0;
  int folds_used = 0;
};

struct TrainOutcome {
  SvmModel model;
  SvmConfig chosen;
  std::vector<GridPoint> grid;
  double train_accuracy = 0.0;  // item level, before oversampling
};

// Oversamples the training items, optionally grid-searching (c, gamma) with
// patient-grouped cross-validation on W.acc.
TrainOutcome train_classifier(const RunConfig& cfg, const LabelledItems& train);

// Scores the test patients of the manifest and aggregates per patient.
MetricsReport evaluate_split(const RunConfig& cfg, const SvmModel& model, const std::vector<Embedding>& embeddings,
                             const std::vector<ManifestRow>& manifest);

std::string manifest_fingerprint(const std::vector<ManifestRow>& manifest);

struct AblationOutcome {
  AblationComparison comparison;
  TrainOutcome full_training;
  TrainOutcome baseline_training;
};

// Both arms on the identical split and seeds, from precomputed embeddings.
AblationOutcome run_ablation(const RunConfig& cfg, const EmbeddingSet& embeddings,
                             const std::vector<ManifestRow>& manifest);

}  // namespace stx
