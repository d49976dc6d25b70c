#include "stx/pipeline.hpp"

#include "stx/error.hpp"
#include "stx/rng.hpp"
#include "stx/wav.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace stx {
namespace {

constexpr double kKaiserBeta = 8.6;
constexpr double kZeroCrossings = 16.0;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

double kaiser(double t) {
  if (std::abs(t) > 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - t * t)) / std::cyl_bessel_i(0.0, kKaiserBeta);
}

std::optional<PatientRecord> parse_patient(const std::filesystem::path& file, LoadReport& report) {
  std::ifstream in(file);
  require(static_cast<bool>(in), ErrorKind::Path, "cannot read " + file.string());
  auto where = [&](std::size_t line) { return file.string() + ":" + std::to_string(line); };

  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!trim(line).empty()) return true;
    }
    return false;
  };

  require(next_line(), ErrorKind::Parse, where(line_no + 1) + ": empty metadata file");
  PatientRecord rec;
  long locations = 0;
  long rate = 0;
  {
    std::istringstream ss(line);
    require(static_cast<bool>(ss >> rec.patient_id >> locations >> rate) && locations >= 0, ErrorKind::Parse,
            where(line_no) + ": expected '<patient_id> <num_locations> <sample_rate>'");
  }
  for (long i = 0; i < locations; ++i) {
    require(next_line(), ErrorKind::Parse, where(line_no + 1) + ": missing recording line");
    std::istringstream ss(line);
    std::string loc, header, wav;
    require(static_cast<bool>(ss >> loc >> header >> wav) && wav.size() > 4 &&
                wav.substr(wav.size() - 4) == ".wav",
            ErrorKind::Parse, where(line_no) + ": expected '<location> <hea> <wav> [tsv]'");
    rec.recordings.push_back(Recording{loc, file.parent_path() / wav});
  }
  bool have_label = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.rfind("#Murmur:", 0) == 0) {
      const auto value = trim(t.substr(8));
      try {
        rec.label = parse_label(value);
      } catch (const Error&) {
        fail(ErrorKind::Data, where(line_no) + ": unknown murmur label '" + value + "'");
      }
      have_label = true;
    }
  }
  require(have_label, ErrorKind::Parse, file.string() + ": no '#Murmur:' field");

  if (rec.recordings.empty()) {
    report.warnings.push_back(rec.patient_id + ": no recordings listed, skipped");
    ++report.skipped_missing_audio;
    return std::nullopt;
  }
  for (const auto& r : rec.recordings) {
    if (!std::filesystem::exists(r.audio_path)) {
      const auto msg = rec.patient_id + ": missing audio " + r.audio_path.string() + ", patient skipped";
      spdlog::warn("{}", msg);
      report.warnings.push_back(msg);
      ++report.skipped_missing_audio;
      return std::nullopt;
    }
  }
  return rec;
}

}  // namespace

std::vector<PatientRecord> load_metadata(const std::filesystem::path& dir, LoadReport* report) {
  require(std::filesystem::is_directory(dir), ErrorKind::Path, "dataset directory not found: " + dir.string());
  LoadReport local;
  LoadReport& rep = report ? *report : local;

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  rep.metadata_files = files.size();

  std::vector<PatientRecord> out;
  std::set<std::string> seen;
  for (const auto& f : files) {
    auto rec = parse_patient(f, rep);
    if (!rec) continue;
    require(seen.insert(rec->patient_id).second, ErrorKind::Data, f.string() + ": duplicate patient id " + rec->patient_id);
    out.push_back(std::move(*rec));
  }
  rep.loaded = out.size();
  if (out.empty()) {
    const auto msg = "no usable patients found in " + dir.string();
    spdlog::warn("{}", msg);
    rep.warnings.push_back(msg);
  }
  return out;
}

Signal resample(const Signal& signal, int target_rate) {
  require(target_rate > 0, ErrorKind::InvalidArgument, "target rate must be positive");
  signal.validate();
  if (signal.sample_rate == target_rate) return signal;

  const long long g = std::gcd(signal.sample_rate, target_rate);
  const long long up = target_rate / g;
  const long long down = signal.sample_rate / g;
  const auto n_in = static_cast<long long>(signal.size());
  const long long n_out = (n_in * up + down / 2) / down;

  // Cutoff in cycles per input sample.
  const double fc = 0.45 * std::min(signal.sample_rate, target_rate) / signal.sample_rate;
  const auto half = static_cast<long long>(std::ceil(kZeroCrossings / (2.0 * fc)));

  // One filter per output phase p/up; taps indexed by input offset k in [-half+1, half].
  std::vector<std::vector<double>> phases(static_cast<std::size_t>(up), std::vector<double>(2 * half));
  for (long long p = 0; p < up; ++p) {
    const double frac = static_cast<double>(p) / static_cast<double>(up);
    for (long long k = -half + 1; k <= half; ++k) {
      const double tau = frac - static_cast<double>(k);
      phases[p][k + half - 1] = 2.0 * fc * sinc(2.0 * fc * tau) * kaiser(tau / static_cast<double>(half));
    }
  }

  Signal out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<std::size_t>(n_out));
  for (long long n = 0; n < n_out; ++n) {
    const long long pos = n * down;
    const long long base = pos / up;
    const auto& h = phases[pos % up];
    double acc = 0.0;
    const long long lo = std::max(-half + 1, -base);
    const long long hi = std::min(half, n_in - 1 - base);
    for (long long k = lo; k <= hi; ++k) acc += signal.samples[base + k] * h[k + half - 1];
    out.samples[n] = acc;
  }
  return out;
}

Signal peak_normalize(Signal signal) {
  double peak = 0.0;
  for (double v : signal.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : signal.samples) v /= peak;
  return signal;
}

std::size_t SegmentPolicy::window() const {
  return static_cast<std::size_t>(std::llround(window_s * sample_rate));
}
std::size_t SegmentPolicy::hop() const { return static_cast<std::size_t>(std::llround(hop_s * sample_rate)); }

void SegmentPolicy::validate() const {
  require(sample_rate > 0, ErrorKind::InvalidConfig, "segment sample rate must be positive");
  require(window() > 0 && hop() > 0, ErrorKind::InvalidConfig, "segment window and hop must be positive");
  require(pad_threshold >= 0.0 && pad_threshold <= 1.0, ErrorKind::InvalidConfig, "pad threshold must lie in [0, 1]");
  require(min_duration_s >= 0.0, ErrorKind::InvalidConfig, "minimum duration must be nonnegative");
}

std::size_t expected_segment_count(std::size_t length, const SegmentPolicy& policy) {
  const std::size_t win = policy.window();
  const std::size_t hop = policy.hop();
  if (static_cast<double>(length) < policy.min_duration_s * policy.sample_rate) return 0;
  if (length < win) return static_cast<double>(length) >= policy.pad_threshold * static_cast<double>(win) ? 1 : 0;
  const std::size_t full = (length - win) / hop + 1;
  const std::size_t leftover = length - ((full - 1) * hop + win);
  const bool pad = leftover > 0 && static_cast<double>(leftover) >= policy.pad_threshold * static_cast<double>(win);
  return full + (pad ? 1 : 0);
}

std::vector<SegmentSpan> segment(const Signal& signal, const SegmentPolicy& policy) {
  policy.validate();
  signal.validate();
  require(signal.sample_rate == policy.sample_rate, ErrorKind::InvalidArgument,
          "segment expects " + std::to_string(policy.sample_rate) + " Hz input, got " +
              std::to_string(signal.sample_rate));
  const std::size_t win = policy.window();
  const std::size_t hop = policy.hop();
  const std::size_t len = signal.size();

  std::vector<SegmentSpan> out;
  auto emit = [&](std::size_t start) {
    SegmentSpan s;
    s.start_sample = start;
    s.signal.sample_rate = signal.sample_rate;
    s.signal.samples.assign(win, 0.0);
    const std::size_t n = std::min(win, len - start);
    std::copy_n(signal.samples.begin() + static_cast<std::ptrdiff_t>(start), n, s.signal.samples.begin());
    out.push_back(std::move(s));
  };

  if (static_cast<double>(len) < policy.min_duration_s * policy.sample_rate) {
    spdlog::debug("recording of {:.2f} s discarded (shorter than {:.2f} s)", signal.duration_s(), policy.min_duration_s);
    return out;
  }
  if (len < win) {
    if (static_cast<double>(len) >= policy.pad_threshold * static_cast<double>(win)) emit(0);
    return out;
  }
  const std::size_t full = (len - win) / hop + 1;
  for (std::size_t k = 0; k < full; ++k) emit(k * hop);
  const std::size_t covered = (full - 1) * hop + win;
  const std::size_t leftover = len - covered;
  if (leftover > 0 && static_cast<double>(leftover) >= policy.pad_threshold * static_cast<double>(win)) emit(full * hop);
  return out;
}

std::vector<Segment> load_recording_segments(const PatientRecord& patient, int recording_index,
                                             const SegmentPolicy& policy) {
  const auto& rec = patient.recordings.at(static_cast<std::size_t>(recording_index));
  auto signal = peak_normalize(resample(read_wav(rec.audio_path), policy.sample_rate));
  std::vector<Segment> out;
  for (auto& span : segment(signal, policy))
    out.push_back(Segment{patient.patient_id, recording_index, span.start_sample, std::move(span.signal), patient.label});
  return out;
}

DatasetSplit patient_split(const std::vector<PatientRecord>& records, double train_fraction, std::uint64_t seed) {
  require(records.size() >= 4, ErrorKind::Data, "patient split needs at least 4 patients");
  require(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::InvalidArgument, "train fraction must lie in (0, 1)");

  std::array<std::vector<const PatientRecord*>, kClassCount> by_class;
  for (const auto& r : records) by_class[index_of(r.label)].push_back(&r);
  for (auto& group : by_class)
    std::sort(group.begin(), group.end(), [](auto* a, auto* b) { return a->patient_id < b->patient_id; });

  DatasetSplit split;
  split.seed = seed;
  std::mt19937_64 gen(seed);

  // Largest-remainder allocation keeps each class and the total within one patient of the target.
  std::array<std::size_t, kClassCount> take{};
  std::array<double, kClassCount> remainder{};
  std::size_t allocated = 0;
  std::size_t stratified_total = 0;
  for (std::size_t c = 0; c < kClassCount; ++c) {
    const auto n = by_class[c].size();
    if (n < 2) continue;
    stratified_total += n;
    const double exact = train_fraction * static_cast<double>(n);
    take[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - std::floor(exact);
    allocated += take[c];
  }
  const auto target = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(stratified_total)));
  std::array<std::size_t, kClassCount> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return remainder[a] > remainder[b]; });
  for (auto c : order) {
    if (allocated >= target) break;
    if (by_class[c].size() < 2 || remainder[c] <= 0.0) continue;
    ++take[c];
    ++allocated;
  }

  for (std::size_t c = 0; c < kClassCount; ++c) {
    auto group = by_class[c];
    if (group.empty()) continue;
    if (group.size() < 2) {
      const auto msg = std::string("class ") + to_string(kAllLabels[c]) +
                       " has fewer than 2 patients; kept whole in the training split";
      spdlog::warn("{}", msg);
      split.warnings.push_back(msg);
      for (auto* r : group) split.train.push_back(*r);
      continue;
    }
    rng::shuffle(group, gen);
    for (std::size_t i = 0; i < group.size(); ++i) (i < take[c] ? split.train : split.test).push_back(*group[i]);
  }
  assert_leakage_free(split);
  return split;
}

void assert_leakage_free(const DatasetSplit& split) {
  std::set<std::string> train_ids;
  for (const auto& r : split.train) train_ids.insert(r.patient_id);
  for (const auto& r : split.test)
    require(!train_ids.count(r.patient_id), ErrorKind::Data, "patient " + r.patient_id + " appears in both splits");
}

std::vector<std::size_t> oversample_indices(const std::vector<MurmurLabel>& labels, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, kClassCount> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[index_of(labels[i])].push_back(i);
  for (std::size_t c = 0; c < kClassCount; ++c)
    require(!members[c].empty(), ErrorKind::Degenerate,
            std::string("cannot oversample: class ") + to_string(kAllLabels[c]) + " has no segments");

  std::size_t majority = 0;
  for (const auto& m : members) majority = std::max(majority, m.size());

  std::vector<std::size_t> out(labels.size());
  std::iota(out.begin(), out.end(), std::size_t{0});
  std::mt19937_64 gen(seed);
  for (const auto& m : members)
    for (std::size_t k = m.size(); k < majority; ++k) out.push_back(m[rng::uniform_index(gen, m.size())]);
  return out;
}

std::vector<Segment> oversample(const std::vector<Segment>& segments, std::uint64_t seed) {
  std::vector<MurmurLabel> labels;
  labels.reserve(segments.size());
  for (const auto& s : segments) labels.push_back(s.label);
  std::vector<Segment> out;
  for (auto i : oversample_indices(labels, seed)) out.push_back(segments[i]);
  return out;
}

void write_manifest(std::ostream& out, const std::vector<ManifestRow>& rows) {
  out << "patient_id,recording,start_sample,label,split\n";
  for (const auto& r : rows)
    out << r.patient_id << ',' << r.recording << ',' << r.start_sample << ',' << to_string(r.label) << ',' << r.split
        << '\n';
}

std::vector<ManifestRow> read_manifest(std::istream& in) {
  std::vector<ManifestRow> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      require(line == "patient_id,recording,start_sample,label,split", ErrorKind::Parse, "manifest: bad header");
      header = true;
      continue;
    }
    std::istringstream ss(line);
    std::string f[5];
    for (auto& field : f) std::getline(ss, field, ',');
    ManifestRow r;
    try {
      r.patient_id = f[0];
      r.recording = std::stoi(f[1]);
      r.start_sample = std::stoull(f[2]);
    } catch (const std::exception&) {
      fail(ErrorKind::Parse, "manifest line " + std::to_string(line_no) + ": bad number");
    }
    r.label = parse_label(f[3]);
    r.split = f[4];
    require(r.split == "train" || r.split == "test", ErrorKind::Parse,
            "manifest line " + std::to_string(line_no) + ": split must be train or test");
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace stx
