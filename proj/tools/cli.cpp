#include "cli.hpp"

#include "stx/embedding_io.hpp"
#include "stx/error.hpp"
#include "stx/workflow.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace stx {
namespace {

struct Options {
  std::string config_path;
  std::string dataset;
  std::string output;
  std::string mode;
  bool no_pe = false;
  bool log_coeffs = false;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed_split, seed_oversample, seed_proj;
  std::vector<std::string> overrides;  // key=value
  bool verbose = false;

  bool ablate_baseline = false;
  std::string embeddings;
  std::string model;
  std::string input;
};

RunConfig resolve(const Options& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) cfg = load_config(o.config_path);
  if (!o.dataset.empty()) cfg.dataset_dir = o.dataset;
  if (!o.output.empty()) cfg.output_dir = o.output;
  if (!o.mode.empty()) apply_setting(cfg, "mode", o.mode);
  if (o.no_pe) cfg.context.positional_encoding = false;
  if (o.log_coeffs) cfg.scattering.log_coeffs = true;
  if (o.workers) apply_setting(cfg, "workers", std::to_string(*o.workers));
  if (o.seed_split) apply_setting(cfg, "seed.split", std::to_string(*o.seed_split));
  if (o.seed_oversample) apply_setting(cfg, "seed.oversample", std::to_string(*o.seed_oversample));
  if (o.seed_proj) apply_setting(cfg, "seed.projection", std::to_string(*o.seed_proj));
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos, ErrorKind::InvalidConfig, "--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

std::filesystem::path out_path(const RunConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.output_dir);
  return cfg.output_dir / name;
}

void write_text(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Path, "cannot write " + path.string());
  out << body;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Path, "cannot read " + path.string());
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Binary artifacts get a `<file>.config` sidecar with the resolved config.
void write_sidecar(const std::filesystem::path& artifact, const RunConfig& cfg,
                   const std::map<std::string, std::string>& extra = {}) {
  std::string body = render_config(cfg);
  for (const auto& [k, v] : extra) body += k + " = " + v + "\n";
  write_text(artifact.string() + ".config", body);
}

std::map<std::string, std::string> read_sidecar(const std::filesystem::path& artifact) {
  std::map<std::string, std::string> out;
  std::istringstream in(read_text(artifact.string() + ".config"));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return out;
}

PreparedData load_or_prepare(const RunConfig& cfg, std::ostream& out) {
  const auto manifest = cfg.output_dir / "manifest.csv";
  if (std::filesystem::exists(manifest)) return prepared_from_manifest(cfg, read_manifest_file(manifest));
  auto data = prepare_data(cfg);
  write_manifest_file(out_path(cfg, "manifest.csv"), cfg, data.manifest);
  out << "wrote " << manifest.string() << " (" << data.manifest.size() << " segments)\n";
  return data;
}

void save_embedding_files(const RunConfig& cfg, const std::filesystem::path& csv, const std::vector<Embedding>& emb) {
  std::ostringstream body;
  body << config_comment(cfg);
  write_embeddings_csv(body, emb);
  write_text(csv, body.str());
  auto bin = csv;
  bin.replace_extension(".bin");
  std::ofstream b(bin, std::ios::binary);
  require(static_cast<bool>(b), ErrorKind::Path, "cannot write " + bin.string());
  write_embeddings_binary(b, emb);
  write_sidecar(bin, cfg);
}

void print_grid(std::ostream& out, const TrainOutcome& t) {
  for (const auto& g : t.grid)
    out << "grid c=" << g.c << " gamma=" << g.gamma << " cv_w_acc=" << g.cv_w_acc << " folds=" << g.folds_used << '\n';
  out << "chosen c=" << t.chosen.c << " gamma=" << t.chosen.resolved_gamma(t.model.dim()) << '\n';
  out << "training accuracy " << t.train_accuracy << '\n';
}

std::string grid_csv(const RunConfig& cfg, const TrainOutcome& t) {
  std::ostringstream s;
  s.precision(9);
  s << config_comment(cfg) << "c,gamma,cv_w_acc,folds\n";
  for (const auto& g : t.grid) s << g.c << ',' << g.gamma << ',' << g.cv_w_acc << ',' << g.folds_used << '\n';
  return s.str();
}

int cmd_prepare(const Options& o, std::ostream& out) {
  const auto cfg = resolve(o);
  const auto data = prepare_data(cfg);
  const auto path = out_path(cfg, "manifest.csv");
  write_manifest_file(path, cfg, data.manifest);
  out << "patients " << data.patients.size() << " (train " << data.split.train.size() << ", test "
      << data.split.test.size() << "), segments " << data.manifest.size() << ", skipped "
      << data.load_report.skipped_missing_audio << '\n';
  out << "wrote " << path.string() << '\n';
  return 0;
}

int cmd_embed(const Options& o, std::ostream& out) {
  const auto cfg = resolve(o);
  const auto data = load_or_prepare(cfg, out);
  const EmbeddingRequest req{!o.ablate_baseline, o.ablate_baseline};
  const auto set = compute_embeddings(cfg, data, req);
  const auto& emb = o.ablate_baseline ? set.baseline : set.full;
  const auto path = o.embeddings.empty() ? out_path(cfg, "embeddings.csv") : std::filesystem::path(o.embeddings);
  save_embedding_files(cfg, path, emb);
  out << "embeddings " << emb.size() << " (" << to_string(emb.empty() ? cfg.mode : emb.front().mode) << ", dim "
      << (emb.empty() ? 0 : emb.front().dim()) << ")\nwrote " << path.string() << '\n';
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  const auto cfg = resolve(o);
  const auto manifest = read_manifest_file(cfg.output_dir / "manifest.csv");
  const auto emb_path = o.embeddings.empty() ? cfg.output_dir / "embeddings.csv" : std::filesystem::path(o.embeddings);
  const auto outcome = train_classifier(cfg, select_split(load_embeddings(emb_path), manifest, "train"));
  print_grid(out, outcome);
  const auto model_path = o.model.empty() ? out_path(cfg, "model.svm") : std::filesystem::path(o.model);
  save_model(model_path, outcome.model);
  std::ostringstream acc;
  acc.precision(17);
  acc << outcome.train_accuracy;
  write_sidecar(model_path, cfg, {{"split_fingerprint", manifest_fingerprint(manifest)}, {"train_accuracy", acc.str()}});
  write_text(out_path(cfg, "grid.csv"), grid_csv(cfg, outcome));
  out << "wrote " << model_path.string() << '\n';
  return 0;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  const auto cfg = resolve(o);
  const auto manifest = read_manifest_file(cfg.output_dir / "manifest.csv");
  const auto model_path = o.model.empty() ? cfg.output_dir / "model.svm" : std::filesystem::path(o.model);
  const auto model = load_model(model_path);
  const auto sidecar = read_sidecar(model_path);
  const auto fp = manifest_fingerprint(manifest);
  if (auto it = sidecar.find("split_fingerprint"); it != sidecar.end())
    require(it->second == fp, ErrorKind::Comparison,
            "model was trained on split " + it->second + " but the manifest test split is " + fp);
  const auto emb_path = o.embeddings.empty() ? cfg.output_dir / "embeddings.csv" : std::filesystem::path(o.embeddings);
  const auto report = evaluate_split(cfg, model, load_embeddings(emb_path), manifest);
  const auto text = render_report_text(report);
  write_text(out_path(cfg, "report.txt"), config_comment(cfg) + text);
  write_text(out_path(cfg, "report.json"), render_report_json(report, render_config(cfg)));
  out << text;
  return 0;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  auto cfg = resolve(o);
  const auto data = load_or_prepare(cfg, out);
  const auto set = compute_embeddings(cfg, data, {true, true});
  const auto result = run_ablation(cfg, set, data.manifest);
  out << "full model\n";
  print_grid(out, result.full_training);
  out << "baseline\n";
  print_grid(out, result.baseline_training);
  const auto text = render_ablation_text(result.comparison);
  write_text(out_path(cfg, "ablation.txt"), config_comment(cfg) + text);
  write_text(out_path(cfg, "ablation.json"), render_ablation_json(result.comparison, render_config(cfg)));
  write_text(out_path(cfg, "ablation_chart.csv"), config_comment(cfg) + render_ablation_chart_csv(result.comparison));
  out << text;
  return 0;
}

int cmd_report(const Options& o, std::ostream& out) {
  std::filesystem::path path = o.input;
  if (path.empty()) {
    const auto cfg = resolve(o);
    path = cfg.output_dir / "report.json";
  }
  const auto text = read_text(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  if (j.contains("full") && j.contains("baseline")) {
    const auto full = parse_report_json(j["full"].dump());
    const auto base = parse_report_json(j["baseline"].dump());
    out << render_ablation_text(ablation_compare(full, base));
  } else {
    out << render_report_text(parse_report_json(text));
  }
  return 0;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::InvalidArgument: return 1;
    case ErrorKind::Numeric: return 3;
    default: return 2;
  }
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scattering embeddings and murmur classification"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--dataset", o.dataset, "dataset directory (CirCor layout)");
  app.add_option("--output,-o", o.output, "output directory");
  app.add_option("--mode", o.mode, "sequence mode")->check(CLI::IsMember({"paths", "multiseg"}));
  app.add_flag("--no-pe", o.no_pe, "skip positional encoding");
  app.add_flag("--log-coeffs", o.log_coeffs, "log-compress scattering coefficients");
  app.add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed-split", o.seed_split, "patient split seed");
  app.add_option("--seed-oversample", o.seed_oversample, "oversampling seed");
  app.add_option("--seed-proj", o.seed_proj, "random projection seed");
  app.add_option("--set", o.overrides, "override any config key (key=value), repeatable");
  app.add_flag("--verbose,-v", o.verbose, "debug logging");

  auto* prepare = app.add_subcommand("prepare", "segment the dataset and write the split manifest");
  auto* embed = app.add_subcommand("embed", "compute embeddings for every manifest segment");
  embed->add_flag("--ablate-baseline", o.ablate_baseline, "raw path-averaged scattering, no attention");
  embed->add_option("--embeddings", o.embeddings, "output CSV path");
  auto* train = app.add_subcommand("train", "fit the classifier on the training split");
  train->add_option("--embeddings", o.embeddings, "embedding CSV");
  train->add_option("--model", o.model, "model output path");
  auto* evaluate = app.add_subcommand("evaluate", "score the test split and write reports");
  evaluate->add_option("--embeddings", o.embeddings, "embedding CSV");
  evaluate->add_option("--model", o.model, "model path");
  auto* ablate = app.add_subcommand("ablate", "full model against the path-average baseline");
  auto* report = app.add_subcommand("report", "print a saved report or ablation JSON");
  report->add_option("--input", o.input, "report JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }
  spdlog::set_level(o.verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    if (*prepare) return cmd_prepare(o, out);
    if (*embed) return cmd_embed(o, out);
    if (*train) return cmd_train(o, out);
    if (*evaluate) return cmd_evaluate(o, out);
    if (*ablate) return cmd_ablate(o, out);
    if (*report) return cmd_report(o, out);
  } catch (const Error& e) {
    err << "stx: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "stx: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace stx
