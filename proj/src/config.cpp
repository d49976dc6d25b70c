#include "stx/config.hpp"

#include "stx/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace stx {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  fail(ErrorKind::InvalidConfig, "bad value '" + value + "' for key '" + key + "'");
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v);
    return d;
  } catch (const std::logic_error&) {
    bad_value(key, v);
  }
}

template <class Int>
Int to_int(const std::string& key, const std::string& v) {
  Int out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) bad_value(key, v);
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v);
}

std::string fmt_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

int ffn_target_dim(const FeedForward& ffn) {
  if (auto* rp = std::get_if<RandomProjectionFfn>(&ffn)) return rp->target_dim;
  if (auto* tv = std::get_if<TopVarianceFfn>(&ffn)) return tv->target_dim;
  return 64;
}

void set_target_dim(FeedForward& ffn, int dim) {
  if (auto* rp = std::get_if<RandomProjectionFfn>(&ffn)) rp->target_dim = dim;
  if (auto* tv = std::get_if<TopVarianceFfn>(&ffn)) tv->target_dim = dim;
}

}  // namespace

void RunConfig::validate() const {
  scattering.validate();
  svm.validate();
  segmentation.validate();
  require(scattering.segment_len == segmentation.window(), ErrorKind::InvalidConfig,
          "scattering.segment_len must equal the segment window in samples");
  require(train_fraction > 0 && train_fraction < 1, ErrorKind::InvalidConfig, "split.train_fraction must lie in (0, 1)");
  require(cv_folds >= 2, ErrorKind::InvalidConfig, "svm.cv_folds must be at least 2");
  require(workers >= 1, ErrorKind::InvalidConfig, "workers must be at least 1");
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& raw) {
  const auto value = trim(raw);
  auto& sc = cfg.scattering;
  if (key == "dataset_dir") cfg.dataset_dir = value;
  else if (key == "output_dir") cfg.output_dir = value;
  else if (key == "mode") {
    if (value == "paths") cfg.mode = SequenceMode::PathsAsSequence;
    else if (value == "multiseg") cfg.mode = SequenceMode::MultiSegment;
    else bad_value(key, value);
  } else if (key == "multiseg.grouping") {
    if (value == "recording") cfg.grouping = SequenceGrouping::PerRecording;
    else if (value == "patient") cfg.grouping = SequenceGrouping::PerPatient;
    else bad_value(key, value);
  } else if (key == "scattering.J") sc.J = to_int<int>(key, value);
  else if (key == "scattering.Q") {
    sc.Q.clear();
    std::istringstream ss(value);
    std::string part;
    while (std::getline(ss, part, ',')) sc.Q.push_back(to_int<int>(key, trim(part)));
  } else if (key == "scattering.M") sc.M = to_int<int>(key, value);
  else if (key == "scattering.segment_len") sc.segment_len = to_int<std::size_t>(key, value);
  else if (key == "scattering.oversampling") sc.oversampling = to_int<int>(key, value);
  else if (key == "scattering.log_coeffs") sc.log_coeffs = to_bool(key, value);
  else if (key == "context.ffn") {
    const int dim = ffn_target_dim(cfg.context.ffn);
    if (value == "identity") cfg.context.ffn = IdentityFfn{};
    else if (value == "random_projection") cfg.context.ffn = RandomProjectionFfn{dim, cfg.projection_seed};
    else if (value == "top_variance") cfg.context.ffn = TopVarianceFfn{dim, std::nullopt};
    else bad_value(key, value);
  } else if (key == "context.target_dim") set_target_dim(cfg.context.ffn, to_int<int>(key, value));
  else if (key == "context.pooling") {
    if (value == "mean") cfg.context.pooling = Pooling::MeanOverRows;
    else if (value == "flatten") cfg.context.pooling = Pooling::Flatten;
    else bad_value(key, value);
  } else if (key == "context.positional_encoding") cfg.context.positional_encoding = to_bool(key, value);
  else if (key == "svm.c") cfg.svm.c = to_double(key, value);
  else if (key == "svm.gamma") {
    if (value == "auto") cfg.svm.gamma.reset();
    else cfg.svm.gamma = to_double(key, value);
  } else if (key == "svm.coef0") cfg.svm.coef0 = to_double(key, value);
  else if (key == "svm.tol") cfg.svm.tol = to_double(key, value);
  else if (key == "svm.max_passes") {
    if (value == "auto") cfg.svm.max_passes.reset();
    else cfg.svm.max_passes = to_int<long long>(key, value);
  } else if (key == "svm.grid_search") cfg.grid_search = to_bool(key, value);
  else if (key == "svm.cv_folds") cfg.cv_folds = to_int<int>(key, value);
  else if (key == "segment.sample_rate") cfg.segmentation.sample_rate = to_int<int>(key, value);
  else if (key == "segment.window_s") cfg.segmentation.window_s = to_double(key, value);
  else if (key == "segment.hop_s") cfg.segmentation.hop_s = to_double(key, value);
  else if (key == "segment.pad_threshold") cfg.segmentation.pad_threshold = to_double(key, value);
  else if (key == "segment.min_duration_s") cfg.segmentation.min_duration_s = to_double(key, value);
  else if (key == "split.train_fraction") cfg.train_fraction = to_double(key, value);
  else if (key == "aggregation") {
    if (value == "mean") cfg.aggregation = Aggregation::Mean;
    else if (value == "median") cfg.aggregation = Aggregation::Median;
    else bad_value(key, value);
  } else if (key == "workers") cfg.workers = to_int<int>(key, value);
  else if (key == "seed.split") cfg.split_seed = to_int<std::uint64_t>(key, value);
  else if (key == "seed.oversample") cfg.oversample_seed = to_int<std::uint64_t>(key, value);
  else if (key == "seed.projection") {
    cfg.projection_seed = to_int<std::uint64_t>(key, value);
    if (auto* rp = std::get_if<RandomProjectionFfn>(&cfg.context.ffn)) rp->seed = cfg.projection_seed;
  } else fail(ErrorKind::InvalidConfig, "unknown config key '" + key + "'");
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Path, "cannot read config " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    require(eq != std::string::npos, ErrorKind::Parse,
            path.string() + ":" + std::to_string(line_no) + ": expected 'key = value'");
    try {
      apply_setting(base, trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const Error& e) {
      fail(e.kind(), path.string() + ":" + std::to_string(line_no) + ": " + e.detail());
    }
  }
  return base;
}

std::map<std::string, std::string> config_entries(const RunConfig& cfg) {
  std::map<std::string, std::string> m;
  const auto& sc = cfg.scattering;
  m["dataset_dir"] = cfg.dataset_dir.string();
  m["output_dir"] = cfg.output_dir.string();
  m["mode"] = cfg.mode == SequenceMode::PathsAsSequence ? "paths" : "multiseg";
  m["multiseg.grouping"] = cfg.grouping == SequenceGrouping::PerRecording ? "recording" : "patient";
  m["scattering.J"] = std::to_string(sc.J);
  std::string q;
  for (std::size_t i = 0; i < sc.Q.size(); ++i) q += (i ? "," : "") + std::to_string(sc.Q[i]);
  m["scattering.Q"] = q;
  m["scattering.M"] = std::to_string(sc.M);
  m["scattering.segment_len"] = std::to_string(sc.segment_len);
  m["scattering.oversampling"] = std::to_string(sc.oversampling);
  m["scattering.log_coeffs"] = sc.log_coeffs ? "true" : "false";
  m["context.ffn"] = std::holds_alternative<IdentityFfn>(cfg.context.ffn)            ? "identity"
                     : std::holds_alternative<RandomProjectionFfn>(cfg.context.ffn) ? "random_projection"
                                                                                    : "top_variance";
  m["context.target_dim"] = std::to_string(ffn_target_dim(cfg.context.ffn));
  m["context.pooling"] = cfg.context.pooling == Pooling::MeanOverRows ? "mean" : "flatten";
  m["context.positional_encoding"] = cfg.context.positional_encoding ? "true" : "false";
  m["svm.c"] = fmt_double(cfg.svm.c);
  m["svm.gamma"] = cfg.svm.gamma ? fmt_double(*cfg.svm.gamma) : "auto";
  m["svm.coef0"] = fmt_double(cfg.svm.coef0);
  m["svm.tol"] = fmt_double(cfg.svm.tol);
  m["svm.max_passes"] = cfg.svm.max_passes ? std::to_string(*cfg.svm.max_passes) : "auto";
  m["svm.grid_search"] = cfg.grid_search ? "true" : "false";
  m["svm.cv_folds"] = std::to_string(cfg.cv_folds);
  m["segment.sample_rate"] = std::to_string(cfg.segmentation.sample_rate);
  m["segment.window_s"] = fmt_double(cfg.segmentation.window_s);
  m["segment.hop_s"] = fmt_double(cfg.segmentation.hop_s);
  m["segment.pad_threshold"] = fmt_double(cfg.segmentation.pad_threshold);
  m["segment.min_duration_s"] = fmt_double(cfg.segmentation.min_duration_s);
  m["split.train_fraction"] = fmt_double(cfg.train_fraction);
  m["aggregation"] = cfg.aggregation == Aggregation::Mean ? "mean" : "median";
  m["workers"] = std::to_string(cfg.workers);
  m["seed.split"] = std::to_string(cfg.split_seed);
  m["seed.oversample"] = std::to_string(cfg.oversample_seed);
  m["seed.projection"] = std::to_string(cfg.projection_seed);
  return m;
}

std::string render_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace stx
