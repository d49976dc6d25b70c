#include <doctest.h>

#include "stx/classifier.hpp"
#include "stx/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

using namespace stx;

namespace {

Embedding point(std::initializer_list<double> v) {
  Embedding e;
  e.values = Eigen::Map<const Eigen::VectorXd>(v.begin(), static_cast<Eigen::Index>(v.size()));
  return e;
}

struct Data {
  std::vector<Embedding> x;
  std::vector<MurmurLabel> y;
};

// XOR: Present on the (+,+)/(-,-) diagonal, Absent on the other.
Data xor_data(std::uint64_t seed, int per_quadrant = 10) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  Data d;
  for (int q = 0; q < 4; ++q)
    for (int i = 0; i < per_quadrant; ++i) {
      const double sx = (q & 1) ? 1 : -1, sy = (q & 2) ? 1 : -1;
      d.x.push_back(point({sx * u(gen), sy * u(gen)}));
      d.y.push_back(sx * sy > 0 ? MurmurLabel::Present : MurmurLabel::Absent);
    }
  return d;
}

Data blobs(std::uint64_t seed, int per_class = 15) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(0.0, 0.4);
  const double centers[3][2] = {{0, 3}, {3, -2}, {-3, -2}};
  Data d;
  for (std::size_t c = 0; c < 3; ++c)
    for (int i = 0; i < per_class; ++i) {
      d.x.push_back(point({centers[c][0] + n(gen), centers[c][1] + n(gen)}));
      d.y.push_back(kAllLabels[c]);
    }
  return d;
}

double accuracy(const SvmModel& m, const Data& d) {
  int hits = 0;
  for (std::size_t i = 0; i < d.x.size(); ++i) hits += predict_label(predict_scores(m, d.x[i])) == d.y[i];
  return static_cast<double>(hits) / static_cast<double>(d.x.size());
}

// Worst KKT violation of one binary machine, recomputed from its decision values.
double kkt_violation(const SvmModel& m, std::size_t cls, const Data& d, double c) {
  const auto& machine = m.machines[cls];
  std::vector<double> alpha(d.x.size(), 0.0);
  for (std::size_t k = 0; k < machine.support_indices.size(); ++k) {
    const auto i = static_cast<std::size_t>(machine.support_indices[k]);
    const double y = index_of(d.y[i]) == cls ? 1.0 : -1.0;
    alpha[i] = machine.dual[static_cast<Eigen::Index>(k)] * y;
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    const double y = index_of(d.y[i]) == cls ? 1.0 : -1.0;
    const double margin = y * predict_scores(m, d.x[i]).scores[cls];
    double v = 0.0;
    if (alpha[i] <= 1e-12) v = std::max(0.0, 1.0 - margin);
    else if (alpha[i] >= c - 1e-12) v = std::max(0.0, margin - 1.0);
    else v = std::abs(margin - 1.0);
    worst = std::max(worst, v);
  }
  return worst;
}

std::vector<Eigen::VectorXd> grid() {
  std::vector<Eigen::VectorXd> g;
  for (double a = -2; a <= 2; a += 0.5)
    for (double b = -2; b <= 2; b += 0.5) g.push_back(Eigen::Vector2d(a, b));
  return g;
}

}  // namespace

TEST_CASE("labels") {
  CHECK(parse_label("Present") == MurmurLabel::Present);
  CHECK(parse_label("Unknown") == MurmurLabel::Unknown);
  CHECK(parse_label("Absent") == MurmurLabel::Absent);
  CHECK(std::string(to_string(MurmurLabel::Unknown)) == "Unknown");
  CHECK_THROWS_AS(parse_label("Maybe"), Error);
}

TEST_CASE("quadratic kernel") {
  SvmConfig cfg;
  cfg.gamma = 0.3;
  CHECK(kernel_quadratic(Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 0), cfg) == 1.0);
  cfg.coef0 = 0.0;
  CHECK(kernel_quadratic(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 5), cfg) == 0.0);
  cfg.gamma = 1.0;
  cfg.coef0 = 1.0;
  CHECK(kernel_quadratic(Eigen::Vector2d(1, 2), Eigen::Vector2d(3, 4), cfg) == 144.0);
  CHECK_THROWS_AS(kernel_quadratic(Eigen::Vector2d(1, 2), Eigen::Vector3d(1, 2, 3), cfg), Error);
}

TEST_CASE("predict_label tie-break") {
  CHECK(predict_label(ClassScores{{2.0, 1.0, 0.5}}) == MurmurLabel::Present);
  CHECK(predict_label(ClassScores{{1.0, 1.0, 0.0}}) == MurmurLabel::Present);
  CHECK(predict_label(ClassScores{{0.0, 1.0, 1.0}}) == MurmurLabel::Unknown);
  CHECK(predict_label(ClassScores{{-1.0, -0.2, -0.5}}) == MurmurLabel::Unknown);
  CHECK(predict_label(ClassScores{{0.0, 0.0, 0.1}}) == MurmurLabel::Absent);
}

TEST_CASE("config validation") {
  SvmConfig cfg;
  cfg.c = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.gamma = -1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.tol = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  CHECK(cfg.resolved_gamma(4) == 0.25);
}

TEST_CASE("separable corners") {
  Data d;
  for (double sx : {-2.0, 2.0})
    for (double sy : {-2.0, 2.0}) {
      d.x.push_back(point({sx, sy}));
      d.y.push_back(sx > 0 ? MurmurLabel::Present : MurmurLabel::Absent);
    }
  SvmConfig cfg;
  cfg.c = 10;
  const auto m = train(d.x, d.y, cfg);
  CHECK(accuracy(m, d) == 1.0);
  // margin support vectors sit on the margin
  const auto& pm = m.machines[index_of(MurmurLabel::Present)];
  for (auto i : pm.support_indices) {
    const double y = d.y[static_cast<std::size_t>(i)] == MurmurLabel::Present ? 1.0 : -1.0;
    CHECK(y * predict_scores(m, d.x[static_cast<std::size_t>(i)])[MurmurLabel::Present] >= 1.0 - cfg.tol);
  }
}

TEST_CASE("XOR needs the quadratic kernel") {
  const auto d = xor_data(3);
  SvmConfig cfg;
  cfg.c = 10;
  const auto quad = train(d.x, d.y, cfg);
  CHECK(accuracy(quad, d) == 1.0);
  for (std::size_t c : {0u, 2u}) {
    CHECK(quad.machines[c].converged);
    CHECK(quad.machines[c].kkt_residual <= cfg.tol);
    CHECK(kkt_violation(quad, c, d, cfg.c) <= cfg.tol);
  }
  cfg.kernel = KernelKind::Linear;
  CHECK(accuracy(train(d.x, d.y, cfg), d) < 0.8);
}

TEST_CASE("three blobs") {
  const auto d = blobs(4);
  SvmConfig cfg;
  const auto m = train(d.x, d.y, cfg);
  CHECK(accuracy(m, d) == 1.0);
  const double centers[3][2] = {{0, 3}, {3, -2}, {-3, -2}};
  for (std::size_t c = 0; c < 3; ++c) {
    const auto s = predict_scores(m, point({centers[c][0], centers[c][1]}));
    for (double v : s.scores) CHECK(std::isfinite(v));
    CHECK(predict_label(s) == kAllLabels[c]);
    CHECK(m.machines[c].kkt_residual <= cfg.tol);
    CHECK(kkt_violation(m, c, d, cfg.c) <= cfg.tol);
    for (Eigen::Index k = 0; k < m.machines[c].dual.size(); ++k) CHECK(std::abs(m.machines[c].dual[k]) <= cfg.c + 1e-12);
    CHECK(static_cast<std::size_t>(m.machines[c].support_vectors.rows()) <= d.x.size());
  }
}

TEST_CASE("duplicated training set gives the same decisions") {
  const auto d = xor_data(5);
  Data twice = d;
  twice.x.insert(twice.x.end(), d.x.begin(), d.x.end());
  twice.y.insert(twice.y.end(), d.y.begin(), d.y.end());
  SvmConfig cfg;
  cfg.c = 10;
  cfg.tol = 1e-6;
  const auto a = train(d.x, d.y, cfg);
  const auto b = train(twice.x, twice.y, cfg);
  for (const auto& g : grid()) CHECK(predict_label(predict_scores(a, g)) == predict_label(predict_scores(b, g)));
}

TEST_CASE("example order does not matter at convergence") {
  const auto d = blobs(6, 12);
  std::vector<std::size_t> perm(d.x.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 gen(1);
  std::shuffle(perm.begin(), perm.end(), gen);
  Data p;
  for (auto i : perm) {
    p.x.push_back(d.x[i]);
    p.y.push_back(d.y[i]);
  }
  SvmConfig cfg;
  cfg.tol = 1e-10;
  cfg.max_passes = 100000;
  const auto a = train(d.x, d.y, cfg);
  const auto b = train(p.x, p.y, cfg);
  double worst = 0.0;
  for (const auto& g : grid())
    for (std::size_t c = 0; c < 3; ++c)
      worst = std::max(worst, std::abs(predict_scores(a, g).scores[c] - predict_scores(b, g).scores[c]));
  CHECK(worst <= 1e-9);
}

TEST_CASE("training is deterministic") {
  const auto d = blobs(7);
  const auto a = train(d.x, d.y, SvmConfig{});
  const auto b = train(d.x, d.y, SvmConfig{});
  for (std::size_t c = 0; c < 3; ++c) CHECK(a.machines[c].support_indices == b.machines[c].support_indices);
  for (const auto& g : grid())
    for (std::size_t c = 0; c < 3; ++c) CHECK(predict_scores(a, g).scores[c] == predict_scores(b, g).scores[c]);
}

TEST_CASE("standardizer") {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> n(3.0, 7.0);
  Eigen::MatrixXd rows(50, 4);
  for (Eigen::Index i = 0; i < 50; ++i) {
    rows(i, 0) = n(gen);
    rows(i, 1) = 1e-4 * n(gen);
    rows(i, 2) = 5.0;  // constant
    rows(i, 3) = 1e4 * n(gen);
  }
  const auto s = Standardizer::fit(rows);
  const auto z = s.apply_rows(rows);
  for (Eigen::Index c : {0, 1, 3}) {
    const double mean = z.col(c).mean();
    const double sd = std::sqrt((z.col(c).array() - mean).square().mean());
    CHECK(std::abs(mean) <= 1e-9);
    CHECK(std::abs(sd - 1.0) <= 1e-9);
  }
  CHECK(s.stddev[2] == 1.0);
  CHECK(z.col(2).isZero(0.0));
}

TEST_CASE("training errors") {
  auto kind = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::State;
  };
  std::vector<Embedding> x{point({1, 2}), point({2, 3})};
  CHECK(kind([&] { train(x, {MurmurLabel::Absent, MurmurLabel::Absent}, {}); }) == ErrorKind::Degenerate);
  CHECK(kind([&] { train(x, {MurmurLabel::Absent}, {}); }) == ErrorKind::Shape);
  x[1].values[0] = std::nan("");
  CHECK(kind([&] { train(x, {MurmurLabel::Absent, MurmurLabel::Present}, {}); }) == ErrorKind::Data);

  const auto d = blobs(8, 5);
  const auto m = train(d.x, d.y, {});
  CHECK(kind([&] { predict_scores(m, Eigen::Vector3d(1, 2, 3)); }) == ErrorKind::Shape);
}

TEST_CASE("two-class data still yields three machines") {
  const auto d = xor_data(9, 5);
  const auto m = train(d.x, d.y, {});
  for (const auto& g : grid()) {
    const auto s = predict_scores(m, g);
    CHECK(predict_label(s) != MurmurLabel::Unknown);
  }
}

TEST_CASE("model persistence round trip") {
  const auto d = blobs(10);
  const auto m = train(d.x, d.y, {});
  std::stringstream buf;
  save_model(buf, m);
  CHECK(buf.str().substr(0, 4) == "SVM2");
  const auto back = load_model(buf);
  CHECK(back.dim() == m.dim());
  for (const auto& g : grid())
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(std::abs(predict_scores(back, g).scores[c] - predict_scores(m, g).scores[c]) <= 1e-12);

  std::stringstream junk("NOPE");
  CHECK_THROWS_AS(load_model(junk), Error);
}
