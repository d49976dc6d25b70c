#include "stx/classifier.hpp"

#include "stx/binary_io.hpp"
#include "stx/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <list>
#include <unordered_map>

namespace stx {
namespace {

constexpr double kTau = 1e-12;

double kernel_value(KernelKind kind, double dot, double gamma, double coef0) {
  if (kind == KernelKind::Linear) return dot;
  const double base = gamma * dot + coef0;
  return base * base;
}

// Kernel rows over the standardized training matrix with a bounded LRU cache.
class KernelRows {
 public:
  KernelRows(const Eigen::MatrixXd& x, KernelKind kind, double gamma, double coef0)
      : x_(x), kind_(kind), gamma_(gamma), coef0_(coef0) {
    const auto n = static_cast<std::size_t>(x.rows());
    constexpr std::size_t kBudgetBytes = std::size_t{512} << 20;
    capacity_ = std::max<std::size_t>(2, kBudgetBytes / std::max<std::size_t>(1, n * sizeof(double)));
    diag_.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) diag_[i] = kernel_value(kind_, x.row(i).squaredNorm(), gamma_, coef0_);
  }

  const Eigen::VectorXd& row(Eigen::Index i) {
    if (auto it = index_.find(i); it != index_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      return it->second->second;
    }
    if (lru_.size() >= capacity_) {
      index_.erase(lru_.back().first);
      lru_.pop_back();
    }
    Eigen::VectorXd dots = x_ * x_.row(i).transpose();
    for (Eigen::Index t = 0; t < dots.size(); ++t) dots[t] = kernel_value(kind_, dots[t], gamma_, coef0_);
    lru_.emplace_front(i, std::move(dots));
    index_[i] = lru_.begin();
    return lru_.front().second;
  }

  double diag(Eigen::Index i) const { return diag_[i]; }

 private:
  const Eigen::MatrixXd& x_;
  KernelKind kind_;
  double gamma_;
  double coef0_;
  std::size_t capacity_;
  Eigen::VectorXd diag_;
  std::list<std::pair<Eigen::Index, Eigen::VectorXd>> lru_;
  std::unordered_map<Eigen::Index, std::list<std::pair<Eigen::Index, Eigen::VectorXd>>::iterator> index_;
};

struct SmoResult {
  Eigen::VectorXd alpha;
  double rho = 0.0;
  long long iterations = 0;
  bool converged = false;
};

// Dual: min 1/2 a'Qa - e'a, 0 <= a <= C, y'a = 0, Q_ij = y_i y_j K_ij.
// Maximal-violating first index, second-order choice of the partner
// (Fan, Chen & Lin working-set selection). Ties go to the lowest index.
SmoResult solve_smo(KernelRows& kernel, const std::vector<int>& y, double c, double tol, long long max_iter) {
  const auto n = static_cast<Eigen::Index>(y.size());
  SmoResult res;
  res.alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd grad = Eigen::VectorXd::Constant(n, -1.0);
  auto& alpha = res.alpha;

  auto in_up = [&](Eigen::Index t) { return (y[t] > 0 && alpha[t] < c) || (y[t] < 0 && alpha[t] > 0); };
  auto in_low = [&](Eigen::Index t) { return (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < c); };

  while (res.iterations < max_iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (in_up(t) && -y[t] * grad[t] > gmax) {
        gmax = -y[t] * grad[t];
        i = t;
      }
    }
    double gmax2 = -std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    double best = std::numeric_limits<double>::infinity();
    const Eigen::VectorXd* ki = i >= 0 ? &kernel.row(i) : nullptr;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      gmax2 = std::max(gmax2, y[t] * grad[t]);
      const double diff = gmax + y[t] * grad[t];
      if (i < 0 || diff <= 0) continue;
      double quad = kernel.diag(i) + kernel.diag(t) - 2.0 * (*ki)[t];
      if (quad <= 0) quad = kTau;
      const double obj = -(diff * diff) / quad;
      if (obj < best) {
        best = obj;
        j = t;
      }
    }
    if (i < 0 || j < 0 || gmax + gmax2 < tol) {
      res.converged = true;
      break;
    }
    ++res.iterations;

    const Eigen::VectorXd& row_i = *ki;
    const double kij = row_i[j];
    const double old_ai = alpha[i];
    const double old_aj = alpha[j];
    double quad = kernel.diag(i) + kernel.diag(j) - 2.0 * kij;
    if (quad <= 0) quad = kTau;

    if (y[i] != y[j]) {
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0 && alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = diff;
      } else if (diff <= 0 && alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > 0 && alpha[i] > c) {
        alpha[i] = c;
        alpha[j] = c - diff;
      } else if (diff <= 0 && alpha[j] > c) {
        alpha[j] = c;
        alpha[i] = c + diff;
      }
    } else {
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c && alpha[i] > c) {
        alpha[i] = c;
        alpha[j] = sum - c;
      } else if (sum <= c && alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = sum;
      }
      if (sum > c && alpha[j] > c) {
        alpha[j] = c;
        alpha[i] = sum - c;
      } else if (sum <= c && alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = sum;
      }
    }

    const double dai = alpha[i] - old_ai;
    const double daj = alpha[j] - old_aj;
    // row_i may be evicted by fetching row j; copy the scaled contribution first.
    Eigen::VectorXd step = row_i * (y[i] * dai);
    step += kernel.row(j) * (y[j] * daj);
    for (Eigen::Index t = 0; t < n; ++t) grad[t] += y[t] * step[t];
  }

  // Bias from free vectors, falling back to the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  long long n_free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (alpha[t] >= c) {
      if (y[t] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0) {
      if (y[t] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  res.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
  return res;
}

double decision(const BinaryMachine& m, const Eigen::VectorXd& z, KernelKind kind, double gamma, double coef0) {
  if (m.dual.size() == 0) return m.bias;
  Eigen::VectorXd dots = m.support_vectors * z;
  double acc = 0.0;
  for (Eigen::Index s = 0; s < dots.size(); ++s) acc += m.dual[s] * kernel_value(kind, dots[s], gamma, coef0);
  return acc + m.bias;
}

}  // namespace

const char* to_string(MurmurLabel label) {
  switch (label) {
    case MurmurLabel::Present: return "Present";
    case MurmurLabel::Unknown: return "Unknown";
    case MurmurLabel::Absent: return "Absent";
  }
  return "?";
}

MurmurLabel parse_label(const std::string& text) {
  for (auto l : kAllLabels)
    if (text == to_string(l)) return l;
  fail(ErrorKind::Data, "unknown murmur label '" + text + "'");
}

void SvmConfig::validate() const {
  require(c > 0 && std::isfinite(c), ErrorKind::InvalidConfig, "svm c must be positive");
  require(!gamma || (*gamma > 0 && std::isfinite(*gamma)), ErrorKind::InvalidConfig, "svm gamma must be positive");
  require(tol > 0, ErrorKind::InvalidConfig, "svm tol must be positive");
  require(!max_passes || *max_passes > 0, ErrorKind::InvalidConfig, "svm max_passes must be positive");
  require(std::isfinite(coef0), ErrorKind::InvalidConfig, "svm coef0 must be finite");
}

double SvmConfig::resolved_gamma(Eigen::Index dim) const {
  return gamma ? *gamma : 1.0 / static_cast<double>(std::max<Eigen::Index>(1, dim));
}

double kernel_quadratic(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const SvmConfig& cfg) {
  require(x.size() == y.size(), ErrorKind::Shape, "kernel arguments differ in dimension");
  return kernel_value(KernelKind::Quadratic, x.dot(y), cfg.resolved_gamma(x.size()), cfg.coef0);
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& rows) {
  Standardizer s;
  const auto n = static_cast<double>(rows.rows());
  s.mean = rows.colwise().mean().transpose();
  s.stddev.resize(rows.cols());
  for (Eigen::Index d = 0; d < rows.cols(); ++d) {
    const double var = (rows.col(d).array() - s.mean[d]).square().sum() / n;
    const double sd = std::sqrt(var);
    // Constant (or numerically constant) dimensions are left unscaled.
    s.stddev[d] = sd > 1e-12 * std::max(1.0, std::abs(s.mean[d])) ? sd : 1.0;
  }
  return s;
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& x) const {
  return ((x - mean).array() / stddev.array()).matrix();
}

Eigen::MatrixXd Standardizer::apply_rows(const Eigen::MatrixXd& rows) const {
  return ((rows.rowwise() - mean.transpose()).array().rowwise() / stddev.transpose().array()).matrix();
}

SvmModel train(const std::vector<Embedding>& embeddings, const std::vector<MurmurLabel>& labels,
               const SvmConfig& cfg) {
  cfg.validate();
  require(embeddings.size() == labels.size(), ErrorKind::Shape, "embeddings and labels differ in length");
  require(!embeddings.empty(), ErrorKind::Degenerate, "no training data");
  const Eigen::Index dim = embeddings.front().dim();
  const auto n = static_cast<Eigen::Index>(embeddings.size());

  std::array<long long, kClassCount> counts{};
  for (auto l : labels) ++counts[index_of(l)];
  const auto present = std::count_if(counts.begin(), counts.end(), [](long long c) { return c > 0; });
  require(present >= 2, ErrorKind::Degenerate, "training data has fewer than two distinct labels");

  Eigen::MatrixXd raw(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& e = embeddings[static_cast<std::size_t>(i)];
    require(e.dim() == dim, ErrorKind::Shape, "embedding '" + e.id + "' has a different dimension");
    require(e.values.allFinite(), ErrorKind::Data, "embedding '" + e.id + "' has non-finite features");
    raw.row(i) = e.values.transpose();
  }

  SvmModel model;
  model.standardizer = Standardizer::fit(raw);
  model.kernel = cfg.kernel;
  model.gamma = cfg.resolved_gamma(dim);
  model.coef0 = cfg.coef0;
  model.c = cfg.c;
  const Eigen::MatrixXd x = model.standardizer.apply_rows(raw);

  KernelRows kernel(x, cfg.kernel, model.gamma, model.coef0);
  const long long passes = cfg.max_passes.value_or(10LL * n);
  const long long max_iter = passes > std::numeric_limits<long long>::max() / std::max<long long>(1, n)
                                 ? std::numeric_limits<long long>::max()
                                 : passes * n;

  for (auto cls : kAllLabels) {
    auto& machine = model.machines[index_of(cls)];
    if (counts[index_of(cls)] == 0) {
      // No positives: a constant machine that always votes against the class.
      machine.bias = -1.0;
      continue;
    }
    std::vector<int> y(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i)] == cls ? 1 : -1;

    const auto res = solve_smo(kernel, y, cfg.c, cfg.tol, max_iter);
    if (!res.converged)
      spdlog::warn("SMO for class {} stopped after {} iterations without reaching tol {}", to_string(cls),
                   res.iterations, cfg.tol);

    std::vector<Eigen::Index> sv;
    for (Eigen::Index i = 0; i < n; ++i)
      if (res.alpha[i] > 0) sv.push_back(i);
    machine.support_indices = sv;
    machine.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), dim);
    machine.dual.resize(static_cast<Eigen::Index>(sv.size()));
    for (std::size_t s = 0; s < sv.size(); ++s) {
      machine.support_vectors.row(static_cast<Eigen::Index>(s)) = x.row(sv[s]);
      machine.dual[static_cast<Eigen::Index>(s)] = res.alpha[sv[s]] * y[static_cast<std::size_t>(sv[s])];
    }
    machine.bias = -res.rho;
    machine.iterations = res.iterations;
    machine.converged = res.converged;

    double worst = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double margin = y[static_cast<std::size_t>(i)] * decision(machine, x.row(i).transpose(), model.kernel,
                                                                       model.gamma, model.coef0);
      const double a = res.alpha[i];
      double v = 0.0;
      if (a <= 0) v = std::max(0.0, 1.0 - margin);
      else if (a >= cfg.c) v = std::max(0.0, margin - 1.0);
      else v = std::abs(margin - 1.0);
      worst = std::max(worst, v);
    }
    machine.kkt_residual = worst;
  }
  return model;
}

ClassScores predict_scores(const SvmModel& model, const Eigen::VectorXd& e) {
  require(e.size() == model.dim(), ErrorKind::Shape,
          "embedding dimension " + std::to_string(e.size()) + " != model dimension " + std::to_string(model.dim()));
  const Eigen::VectorXd z = model.standardizer.apply(e);
  ClassScores out;
  for (auto cls : kAllLabels)
    out.scores[index_of(cls)] = decision(model.machines[index_of(cls)], z, model.kernel, model.gamma, model.coef0);
  return out;
}

MurmurLabel predict_label(const ClassScores& scores) {
  // kAllLabels is in tie-break priority order; only a strictly larger score displaces.
  MurmurLabel best = kAllLabels[0];
  for (auto l : kAllLabels)
    if (scores[l] > scores[best]) best = l;
  return best;
}

void save_model(std::ostream& out, const SvmModel& model) {
  const auto dim = static_cast<std::uint32_t>(model.dim());
  out.write("SVM2", 4);
  binio::put<std::uint16_t>(out, 1);
  binio::put<std::uint32_t>(out, dim);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(kClassCount));
  binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(model.kernel));
  binio::put<double>(out, model.gamma);
  binio::put<double>(out, model.coef0);
  binio::put<double>(out, model.c);
  for (std::uint32_t d = 0; d < dim; ++d) binio::put<double>(out, model.standardizer.mean[d]);
  for (std::uint32_t d = 0; d < dim; ++d) binio::put<double>(out, model.standardizer.stddev[d]);
  for (const auto& m : model.machines) {
    const auto count = static_cast<std::uint32_t>(m.dual.size());
    binio::put<std::uint32_t>(out, count);
    for (std::uint32_t s = 0; s < count; ++s)
      for (std::uint32_t d = 0; d < dim; ++d) binio::put<double>(out, m.support_vectors(s, d));
    for (std::uint32_t s = 0; s < count; ++s) binio::put<double>(out, m.dual[s]);
    binio::put<double>(out, m.bias);
  }
  require(static_cast<bool>(out), ErrorKind::Path, "failed writing model");
}

SvmModel load_model(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  require(in.gcount() == 4 && std::string(magic, 4) == "SVM2", ErrorKind::Parse, "bad model file magic");
  require(binio::get<std::uint16_t>(in) == 1, ErrorKind::Parse, "unsupported model file version");
  const auto dim = binio::get<std::uint32_t>(in);
  require(binio::get<std::uint32_t>(in) == kClassCount, ErrorKind::Parse, "unexpected class count in model file");
  SvmModel model;
  const auto kernel = binio::get<std::uint8_t>(in);
  require(kernel <= 1, ErrorKind::Parse, "unknown kernel id in model file");
  model.kernel = static_cast<KernelKind>(kernel);
  model.gamma = binio::get<double>(in);
  model.coef0 = binio::get<double>(in);
  model.c = binio::get<double>(in);
  model.standardizer.mean.resize(dim);
  model.standardizer.stddev.resize(dim);
  for (std::uint32_t d = 0; d < dim; ++d) model.standardizer.mean[d] = binio::get<double>(in);
  for (std::uint32_t d = 0; d < dim; ++d) model.standardizer.stddev[d] = binio::get<double>(in);
  for (auto& m : model.machines) {
    const auto count = binio::get<std::uint32_t>(in);
    m.support_vectors.resize(count, dim);
    m.dual.resize(count);
    for (std::uint32_t s = 0; s < count; ++s)
      for (std::uint32_t d = 0; d < dim; ++d) m.support_vectors(s, d) = binio::get<double>(in);
    for (std::uint32_t s = 0; s < count; ++s) m.dual[s] = binio::get<double>(in);
    m.bias = binio::get<double>(in);
  }
  return model;
}

void save_model(const std::filesystem::path& path, const SvmModel& model) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Path, "cannot write " + path.string());
  save_model(out, model);
}

SvmModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Path, "cannot read " + path.string());
  return load_model(in);
}

}  // namespace stx
