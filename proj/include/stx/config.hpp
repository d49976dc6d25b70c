#pragma once

// Run configuration: one flat `key = value` file covering every threshold,
// model parameter and seed. Unknown keys are rejected.

#include "stx/classifier.hpp"
#include "stx/contextualizer.hpp"
#include "stx/evaluation.hpp"
#include "stx/pipeline.hpp"
#include "stx/scattering.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace stx {

enum class SequenceGrouping { PerRecording, PerPatient };

struct RunConfig {
  std::filesystem::path dataset_dir;
  std::filesystem::path output_dir = "stx_out";
  SequenceMode mode = SequenceMode::MultiSegment;
  SequenceGrouping grouping = SequenceGrouping::PerRecording;

  ScatteringConfig scattering;
  ContextConfig context;
  SvmConfig svm;
  SegmentPolicy segmentation;

  double train_fraction = 0.75;
  bool grid_search = true;
  int cv_folds = 3;
  Aggregation aggregation = Aggregation::Mean;
  int workers = 1;

  std::uint64_t split_seed = 0;
  std::uint64_t oversample_seed = 0;
  std::uint64_t projection_seed = 0;

  void validate() const;
};

// Applies one `key = value` assignment. Throws InvalidConfig for unknown keys or bad values.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

// Every key with its resolved value, sorted, one `key = value` per line.
std::map<std::string, std::string> config_entries(const RunConfig& cfg);
std::string render_config(const RunConfig& cfg);

}  // namespace stx
