#include <doctest.h>

#include "cli.hpp"
#include "synth.hpp"

#include "stx/classifier.hpp"
#include "stx/config.hpp"
#include "stx/embedding_io.hpp"
#include "stx/error.hpp"
#include "stx/workflow.hpp"

#include <json.hpp>

#include <fstream>
#include <random>
#include <set>
#include <sstream>

using namespace stx;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("stx_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Run {
  int code = 0;
  std::string out, err;
};

Run stx_run(std::vector<std::string> args) {
  args.insert(args.begin(), "stx");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Small, fast settings for the generated datasets.
fs::path fast_config(const fs::path& dir, const std::string& extra = {}) {
  const auto path = dir / "fast.cfg";
  std::ofstream(path) << "# test settings\n"
                         "segment.sample_rate = 2000\n"
                         "scattering.J = 5\n"
                         "scattering.Q = 4, 1\n"
                         "scattering.segment_len = 10000\n"
                      << extra;
  return path;
}

// Ordering dataset shared by the CLI cases below; written once.
const fs::path& ordering_data() {
  static const fs::path dir = [] {
    auto d = fresh_dir("ordering_data");
    synth::write_ordering_dataset(d, {4, 1, 2000, 2.5, 7});
    return d;
  }();
  return dir;
}

std::size_t data_lines(const std::string& text) {
  std::istringstream in(text);
  std::size_t n = 0;
  for (std::string l; std::getline(in, l);)
    if (!l.empty() && l[0] != '#') ++n;
  return n;
}

}  // namespace

TEST_CASE("config file round trip") {
  const auto dir = fresh_dir("config");
  RunConfig cfg;
  apply_setting(cfg, "scattering.Q", "6, 2");
  apply_setting(cfg, "context.ffn", "random_projection");
  apply_setting(cfg, "context.target_dim", "16");
  apply_setting(cfg, "seed.projection", "42");
  apply_setting(cfg, "svm.gamma", "0.5");
  apply_setting(cfg, "multiseg.grouping", "patient");
  std::ofstream(dir / "a.cfg") << render_config(cfg);
  const auto back = load_config(dir / "a.cfg");
  CHECK(render_config(back) == render_config(cfg));
  CHECK(back.scattering.Q == std::vector<int>{6, 2});
  CHECK(std::get<RandomProjectionFfn>(back.context.ffn).seed == 42);
  CHECK(std::get<RandomProjectionFfn>(back.context.ffn).target_dim == 16);

  std::ofstream(dir / "b.cfg") << "scattering.J = 6\n\nno_such_key = 1\n";
  try {
    load_config(dir / "b.cfg");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidConfig);
    CHECK(std::string(e.what()).find("b.cfg:3") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_setting(cfg, "svm.c", "lots"), Error);
  CHECK_THROWS_AS(apply_setting(cfg, "mode", "sideways"), Error);

  RunConfig mismatch;
  mismatch.scattering.segment_len = 1000;
  CHECK_THROWS_AS(mismatch.validate(), Error);
  CHECK_NOTHROW(RunConfig{}.validate());
}

TEST_CASE("default seeds are explicit zeros") {
  const RunConfig cfg;
  CHECK(cfg.split_seed == 0);
  CHECK(cfg.oversample_seed == 0);
  CHECK(cfg.projection_seed == 0);
  const auto entries = config_entries(cfg);
  CHECK(entries.at("seed.split") == "0");
}

TEST_CASE("prepare on a three-patient fixture") {
  const auto dir = fresh_dir("three");
  const auto data = dir / "data";
  synth::write_patient(data, "301", MurmurLabel::Present, {synth::tone(150, 10.0, 4000)});
  synth::write_patient(data, "302", MurmurLabel::Absent, {synth::tone(150, 12.5, 4000), synth::tone(90, 4.0, 4000)});
  synth::write_patient(data, "303", MurmurLabel::Unknown, {synth::tone(150, 20.0, 4000), synth::tone(150, 2.0, 4000)});

  const auto r = stx_run({"prepare", "--dataset", data.string(), "-o", (dir / "out").string()});
  REQUIRE(r.code == 0);
  const auto manifest = read_manifest_file(dir / "out" / "manifest.csv");
  std::map<std::string, int> per_patient;
  for (const auto& row : manifest) ++per_patient[row.patient_id];
  // floor((L - 5) / 2.5) + 1 per recording; 4 s pads to one window; 2 s is dropped
  CHECK(per_patient["301"] == 3);
  CHECK(per_patient["302"] == 4 + 1);
  CHECK(per_patient["303"] == 7);
  const auto text = slurp(dir / "out" / "manifest.csv");
  CHECK(text.find("# seed.split = 0") != std::string::npos);
  CHECK(text.find("patient_id,recording,start_sample,label,split\n") != std::string::npos);

  REQUIRE(stx_run({"prepare", "--dataset", data.string(), "-o", (dir / "out").string()}).code == 0);
  CHECK(slurp(dir / "out" / "manifest.csv") == text);
}

TEST_CASE("error exits") {
  const auto dir = fresh_dir("errors");
  synth::write_patient(dir / "data", "401", MurmurLabel::Absent, {synth::tone(100, 6, 4000)}, "Perhaps");
  auto r = stx_run({"prepare", "--dataset", (dir / "data").string(), "-o", (dir / "out").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("401.txt:4") != std::string::npos);

  r = stx_run({"prepare", "--dataset", (dir / "nowhere").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("path error") != std::string::npos);

  CHECK(stx_run({}).code == 1);
  CHECK(stx_run({"prepare", "--bogus-flag"}).code == 1);
  CHECK(stx_run({"prepare", "--mode", "sideways"}).code == 1);
  CHECK(stx_run({"prepare", "--set", "svm.c=-1"}).code == 1);
  CHECK(stx_run({"--help"}).code == 0);
}

TEST_CASE("paths-mode chain") {
  const auto dir = fresh_dir("chain");
  const auto cfg = fast_config(dir, "mode = paths\n");
  const auto out = dir / "out";
  const std::vector<std::string> common{"--config", cfg.string(), "--dataset", ordering_data().string(), "-o", out.string()};
  auto with = [&](std::vector<std::string> head, std::vector<std::string> tail = {}) {
    head.insert(head.end(), common.begin(), common.end());
    head.insert(head.end(), tail.begin(), tail.end());
    return stx_run(head);
  };

  REQUIRE(with({"prepare"}).code == 0);
  const auto manifest = read_manifest_file(out / "manifest.csv");

  auto r = with({"embed"});
  REQUIRE(r.code == 0);
  const auto emb = load_embeddings(out / "embeddings.csv");
  CHECK(emb.size() == manifest.size());
  const auto first_bytes = slurp(out / "embeddings.bin");
  CHECK(fs::exists(out / "embeddings.bin.config"));

  REQUIRE(with({"embed"}).code == 0);
  CHECK(slurp(out / "embeddings.bin") == first_bytes);

  r = with({"embed"}, {"--ablate-baseline", "--embeddings", (out / "baseline.csv").string()});
  REQUIRE(r.code == 0);
  const auto base = load_embeddings(out / "baseline.csv");
  CHECK(base.size() == manifest.size());
  CHECK(base.front().mode == SequenceMode::Baseline);
  RunConfig rc = load_config(cfg);
  const auto bank = build_filter_bank(rc.scattering, rc.segmentation.sample_rate);
  CHECK(static_cast<std::size_t>(base.front().dim()) == bank.path_count());

  r = with({"train"});
  REQUIRE(r.code == 0);
  std::size_t grid_lines = 0;
  for (std::size_t p = r.out.find("grid c="); p != std::string::npos; p = r.out.find("grid c=", p + 1)) ++grid_lines;
  CHECK(grid_lines == 9);
  CHECK(r.out.find("training accuracy") != std::string::npos);
  CHECK(data_lines(slurp(out / "grid.csv")) == 10);

  // persisted model scores exactly like a freshly trained one
  const auto model = load_model(out / "model.svm");
  const auto train_items = select_split(emb, manifest, "train");
  const auto again = train_classifier(rc, train_items);
  for (const auto& e : emb) {
    const auto a = predict_scores(model, e), b = predict_scores(again.model, e);
    for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(a.scores[c] - b.scores[c]) <= 1e-12);
  }

  r = with({"evaluate"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("W.acc") != std::string::npos);
  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  for (const char* key : {"w_acc", "uar", "recall_present", "recall_unknown", "recall_absent", "confusion", "split_fingerprint", "config"})
    CHECK(report.contains(key));
  CHECK(slurp(out / "report.txt").rfind("# ", 0) == 0);

  r = stx_run({"report", "--input", (out / "report.json").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("UAR") != std::string::npos);

  // a different test split must not be scored with this model
  auto tampered = manifest;
  for (auto& row : tampered)
    if (row.patient_id == tampered.front().patient_id) row.split = row.split == "train" ? "test" : "train";
  write_manifest_file(out / "manifest.csv", rc, tampered);
  r = with({"evaluate"});
  CHECK(r.code == 2);
  CHECK(r.err.find("comparison error") != std::string::npos);
}

TEST_CASE("ablate writes both arms on one split") {
  const auto dir = fresh_dir("ablate");
  const auto cfg = fast_config(dir);
  const auto out = dir / "out";
  const auto r = stx_run({"ablate", "--config", cfg.string(), "--dataset", ordering_data().string(), "-o", out.string()});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(out / "ablation.json"));
  CHECK(j["full"]["split_fingerprint"] == j["baseline"]["split_fingerprint"]);
  for (const char* key : {"w_acc_abs", "w_acc_rel", "uar_abs", "uar_rel"}) CHECK(j["delta"].contains(key));
  const auto text = slurp(out / "ablation.txt");
  CHECK(text.find(" abs ") != std::string::npos);
  CHECK(text.find(" rel") != std::string::npos);
  CHECK(slurp(out / "ablation_chart.csv").find("arm,w_acc,uar") != std::string::npos);
  const auto again = stx_run({"report", "--input", (out / "ablation.json").string()});
  CHECK(again.code == 0);
  CHECK(again.out.find("+") != std::string::npos);
}

TEST_CASE("end-to-end runs are reproducible") {
  const auto dir = fresh_dir("determinism");
  const auto cfg = fast_config(dir, "seed.split = 3\nseed.oversample = 5\n");
  std::vector<nlohmann::json> reports;
  for (const char* name : {"a", "b"}) {
    const auto out = (dir / name).string();
    const std::vector<std::string> common{"--config", cfg.string(), "--dataset", ordering_data().string(), "-o", out};
    for (const char* sub : {"prepare", "embed", "train", "evaluate"}) {
      std::vector<std::string> args{sub};
      args.insert(args.end(), common.begin(), common.end());
      REQUIRE(stx_run(args).code == 0);
    }
    reports.push_back(nlohmann::json::parse(slurp(dir / name / "report.json")));
  }
  for (const char* key : {"w_acc", "uar"}) CHECK(std::abs(reports[0][key].get<double>() - reports[1][key].get<double>()) <= 1e-9);
  CHECK(reports[0]["confusion"] == reports[1]["confusion"]);
  // only the echoed output directory may differ
  reports[0].erase("config");
  reports[1].erase("config");
  CHECK(reports[0] == reports[1]);
}

TEST_CASE("oversampling stays on the training side") {
  RunConfig cfg = load_config(fast_config(fresh_dir("wiring")));
  cfg.dataset_dir = ordering_data();
  cfg.grid_search = false;
  const auto data = prepare_data(cfg);
  const auto set = compute_embeddings(cfg, data);
  const auto test_before = select_split(set.full, data.manifest, "test");
  const auto outcome = train_classifier(cfg, select_split(set.full, data.manifest, "train"));
  const auto test_after = select_split(set.full, data.manifest, "test");
  CHECK(test_before.items.size() == test_after.items.size());
  std::size_t manifest_test_recordings = 0;
  std::set<std::pair<std::string, int>> seen;
  for (const auto& row : data.manifest)
    if (row.split == "test" && seen.insert({row.patient_id, row.recording}).second) ++manifest_test_recordings;
  CHECK(test_after.items.size() == manifest_test_recordings);
  CHECK(outcome.grid.empty());
}

TEST_CASE("separable embeddings train perfectly") {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> n(0.0, 0.2);
  LabelledItems items;
  for (int i = 0; i < 36; ++i) {
    const auto label = kAllLabels[static_cast<std::size_t>(i % 3)];
    Embedding e;
    e.values = Eigen::VectorXd::Zero(3);
    e.values[static_cast<Eigen::Index>(i % 3)] = 3.0;
    for (Eigen::Index k = 0; k < 3; ++k) e.values[k] += n(gen);
    e.id = "p" + std::to_string(i) + "/0";
    items.items.push_back(e);
    items.labels.push_back(label);
    items.patients.push_back("p" + std::to_string(i));
  }
  RunConfig cfg;
  const auto outcome = train_classifier(cfg, items);
  CHECK(outcome.train_accuracy == 1.0);
  CHECK(outcome.grid.size() == 9);
  for (const auto& g : outcome.grid) CHECK(g.folds_used == 3);

  items.labels.assign(items.labels.size(), MurmurLabel::Absent);
  try {
    train_classifier(cfg, items);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Data);
  }
}

TEST_CASE("multi-segment grouping") {
  RunConfig cfg = load_config(fast_config(fresh_dir("grouping")));
  cfg.dataset_dir = ordering_data();
  const auto data = prepare_data(cfg);
  std::set<std::string> patients, recordings;
  for (const auto& row : data.manifest) {
    patients.insert(row.patient_id);
    recordings.insert(row.patient_id + "/" + std::to_string(row.recording));
  }
  const auto per_recording = compute_embeddings(cfg, data, {true, true});
  CHECK(per_recording.full.size() == recordings.size());
  CHECK(per_recording.baseline.size() == data.manifest.size());
  cfg.grouping = SequenceGrouping::PerPatient;
  const auto per_patient = compute_embeddings(cfg, data);
  CHECK(per_patient.full.size() == patients.size());
  CHECK(per_patient.full.front().id.find('/') == std::string::npos);
}

TEST_CASE("top-variance selection is fitted on the training split") {
  RunConfig cfg = load_config(fast_config(fresh_dir("topvar"), "context.ffn = top_variance\ncontext.target_dim = 8\n"));
  cfg.dataset_dir = ordering_data();
  const auto data = prepare_data(cfg);
  const auto set = compute_embeddings(cfg, data);
  const auto& tv = std::get<TopVarianceFfn>(set.context.ffn);
  REQUIRE(tv.columns.has_value());
  CHECK(tv.columns->size() == 8);
  CHECK(set.full.front().dim() == 8);
}
