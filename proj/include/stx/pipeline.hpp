#pragma once

// Dataset ingestion and preprocessing: CirCor-format metadata, resampling,
// overlapping segmentation, patient-level stratified split and minority
// oversampling.

#include "stx/classifier.hpp"
#include "stx/scattering.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace stx {

struct Recording {
  std::string location;
  std::filesystem::path audio_path;
};

struct PatientRecord {
  std::string patient_id;
  MurmurLabel label = MurmurLabel::Absent;
  std::vector<Recording> recordings;
};

struct LoadReport {
  std::size_t metadata_files = 0;
  std::size_t loaded = 0;
  std::size_t skipped_missing_audio = 0;
  std::vector<std::string> warnings;
};

// Reads every `<id>.txt` in dir. Patients referencing a missing WAV are
// skipped and counted; malformed lines throw Parse, unknown labels Data,
// both naming file and line.
std::vector<PatientRecord> load_metadata(const std::filesystem::path& dir, LoadReport* report = nullptr);

// Polyphase rational resampler with a Kaiser-windowed sinc low-pass at
// 0.45 * min(source, target) Hz. Output length round(len * target / source).
Signal resample(const Signal& signal, int target_rate = 8000);

// Scales so max |x| = 1; an all-zero signal is returned unchanged.
Signal peak_normalize(Signal signal);

struct SegmentPolicy {
  int sample_rate = 8000;
  double window_s = 5.0;
  double hop_s = 2.5;
  double pad_threshold = 0.6;   // fraction of a window a leftover must reach to be zero-padded
  double min_duration_s = 3.0;  // shorter recordings are discarded

  std::size_t window() const;
  std::size_t hop() const;
  void validate() const;
};

struct SegmentSpan {
  std::size_t start_sample = 0;
  Signal signal;
};

// Full windows at start = k * hop; a leftover past the last full window
// becomes one zero-padded window when it reaches pad_threshold * window.
// Recordings shorter than one window but at least min_duration_s yield a
// single zero-padded window.
std::vector<SegmentSpan> segment(const Signal& signal, const SegmentPolicy& policy = {});

// Closed form for the number of windows produced for `length` samples.
std::size_t expected_segment_count(std::size_t length, const SegmentPolicy& policy = {});

struct Segment {
  std::string patient_id;
  int recording_index = 0;
  std::size_t start_sample = 0;
  Signal signal;
  MurmurLabel label = MurmurLabel::Absent;
};

// Read, resample, peak-normalize and segment one recording.
std::vector<Segment> load_recording_segments(const PatientRecord& patient, int recording_index,
                                             const SegmentPolicy& policy);

struct DatasetSplit {
  std::vector<PatientRecord> train;
  std::vector<PatientRecord> test;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

// Seeded, label-stratified patient split. Always checks disjointness.
DatasetSplit patient_split(const std::vector<PatientRecord>& records, double train_fraction, std::uint64_t seed);

// Throws Data when any patient id appears on both sides.
void assert_leakage_free(const DatasetSplit& split);

// Original indices in order, followed by seeded draws with replacement from
// each minority class until every class matches the majority count.
std::vector<std::size_t> oversample_indices(const std::vector<MurmurLabel>& labels, std::uint64_t seed);

std::vector<Segment> oversample(const std::vector<Segment>& segments, std::uint64_t seed);

struct ManifestRow {
  std::string patient_id;
  int recording = 0;
  std::size_t start_sample = 0;
  MurmurLabel label = MurmurLabel::Absent;
  std::string split;  // "train" | "test"
};

void write_manifest(std::ostream& out, const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> read_manifest(std::istream& in);

}  // namespace stx
