#pragma once

// One-vs-rest quadratic-kernel SVM trained with SMO. Decision values are raw
// margins; downstream code averages them per patient and takes the argmax.

#include "stx/contextualizer.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace stx {

enum class MurmurLabel : std::uint8_t { Present = 0, Unknown = 1, Absent = 2 };

inline constexpr std::array<MurmurLabel, 3> kAllLabels{MurmurLabel::Present, MurmurLabel::Unknown,
                                                       MurmurLabel::Absent};
inline constexpr std::size_t kClassCount = 3;

const char* to_string(MurmurLabel label);
MurmurLabel parse_label(const std::string& text);
inline std::size_t index_of(MurmurLabel label) { return static_cast<std::size_t>(label); }

// Linear exists only so tests can show what the quadratic kernel buys.
enum class KernelKind : std::uint8_t { Quadratic = 0, Linear = 1 };

struct SvmConfig {
  double c = 1.0;
  std::optional<double> gamma;  // unset: 1 / dim
  double coef0 = 1.0;
  double tol = 1e-3;
  std::optional<long long> max_passes;  // unset: 10 * n; one pass is n pair updates
  KernelKind kernel = KernelKind::Quadratic;

  void validate() const;
  double resolved_gamma(Eigen::Index dim) const;
};

// (gamma <x, y> + coef0)^2
double kernel_quadratic(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const SvmConfig& cfg);

struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;  // constant dimensions clamped to 1

  static Standardizer fit(const Eigen::MatrixXd& rows);
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& rows) const;
};

struct BinaryMachine {
  Eigen::MatrixXd support_vectors;  // standardized, one per row
  Eigen::VectorXd dual;             // alpha_i * y_i
  double bias = 0.0;
  std::vector<Eigen::Index> support_indices;  // training rows, for diagnostics
  long long iterations = 0;
  bool converged = true;

  // Worst KKT violation over the training set this machine was fit on
  // (filled in by train; not persisted).
  double kkt_residual = 0.0;
};

struct ClassScores {
  std::array<double, kClassCount> scores{};  // (Present, Unknown, Absent)

  double operator[](MurmurLabel l) const { return scores[index_of(l)]; }
};

struct SvmModel {
  Standardizer standardizer;
  KernelKind kernel = KernelKind::Quadratic;
  double gamma = 1.0;
  double coef0 = 1.0;
  double c = 1.0;
  std::array<BinaryMachine, kClassCount> machines;

  Eigen::Index dim() const { return standardizer.mean.size(); }
};

SvmModel train(const std::vector<Embedding>& embeddings, const std::vector<MurmurLabel>& labels, const SvmConfig& cfg);

ClassScores predict_scores(const SvmModel& model, const Eigen::VectorXd& e);
inline ClassScores predict_scores(const SvmModel& model, const Embedding& e) { return predict_scores(model, e.values); }

// Argmax; exact ties resolve Present > Unknown > Absent.
MurmurLabel predict_label(const ClassScores& scores);

// Versioned little-endian binary:
//   "SVM2", u16 version, u32 dim, u32 class count, u8 kernel, f64 gamma, f64 coef0, f64 c,
//   f64 mean[dim], f64 stddev[dim],
//   per class: u32 sv count, f64 svs[count * dim], f64 dual[count], f64 bias.
void save_model(std::ostream& out, const SvmModel& model);
SvmModel load_model(std::istream& in);
void save_model(const std::filesystem::path& path, const SvmModel& model);
SvmModel load_model(const std::filesystem::path& path);

}  // namespace stx
