#pragma once

// Training-free transformer block: sinusoidal positional encoding,
// projection-free scaled dot-product self-attention, an optional
// feed-forward reduction and pooling to a fixed-length embedding.

#include "stx/scattering.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace stx {

enum class SequenceMode : std::uint8_t { PathsAsSequence = 0, MultiSegment = 1, Baseline = 2 };

const char* to_string(SequenceMode mode);
SequenceMode parse_sequence_mode(const std::string& text);

struct FeatureSequence {
  Eigen::MatrixXd rows;  // tokens x d_model
  SequenceMode mode = SequenceMode::PathsAsSequence;

  Eigen::Index length() const { return rows.rows(); }
  Eigen::Index d_model() const { return rows.cols(); }
  void validate() const;
};

struct IdentityFfn {};

struct RandomProjectionFfn {
  int target_dim = 64;
  std::uint64_t seed = 0;
};

// Column indices are fitted once on the training split; an unfitted
// selection is rejected at application time.
struct TopVarianceFfn {
  int target_dim = 64;
  std::optional<std::vector<Eigen::Index>> columns;
};

using FeedForward = std::variant<IdentityFfn, RandomProjectionFfn, TopVarianceFfn>;

enum class Pooling { MeanOverRows, Flatten };

struct ContextConfig {
  FeedForward ffn = IdentityFfn{};
  Pooling pooling = Pooling::MeanOverRows;
  bool positional_encoding = true;
};

struct Embedding {
  Eigen::VectorXd values;
  std::string id;
  SequenceMode mode = SequenceMode::PathsAsSequence;

  Eigen::Index dim() const { return values.size(); }
};

Eigen::MatrixXd positional_encoding(Eigen::Index seq_len, Eigen::Index d_model);

FeatureSequence add_positional_encoding(const FeatureSequence& x);

// Row-wise softmax of X X^T / sqrt(d), times X. Throws Numeric naming the row
// whose logits overflow.
FeatureSequence self_attention(const FeatureSequence& x_pos);

// The row-stochastic weight matrix used by self_attention.
Eigen::MatrixXd attention_weights(const FeatureSequence& x_pos);

// Seeded Gaussian matrix d_model x target_dim, entries N(0, 1) / sqrt(target_dim).
// Generated from mt19937_64 with Box-Muller so values are identical across platforms.
Eigen::MatrixXd random_projection_matrix(Eigen::Index d_model, int target_dim, std::uint64_t seed);

FeatureSequence feed_forward(const FeatureSequence& x, const ContextConfig& cfg);

// Streaming per-column variance over training rows (Welford).
class ColumnVariance {
 public:
  void add(const Eigen::MatrixXd& rows);
  Eigen::Index dim() const { return mean_.size(); }
  long long count() const { return count_; }
  Eigen::VectorXd variance() const;

 private:
  long long count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

// Indices of the target_dim highest-variance columns, ties to the lower index,
// returned in ascending column order.
std::vector<Eigen::Index> select_top_variance(const ColumnVariance& stats, int target_dim);

Eigen::VectorXd pool(const FeatureSequence& x, Pooling pooling);

// PE (unless disabled) followed by self-attention.
FeatureSequence attend(const FeatureSequence& x, const ContextConfig& cfg);

Embedding contextualize_sequence(const FeatureSequence& x, const ContextConfig& cfg, std::string id = {});

Embedding contextualize_paths_mode(const ScatteringMatrix& sm, const ContextConfig& cfg, std::string id = {});

Embedding contextualize_multisegment_mode(const std::vector<Eigen::VectorXd>& tokens, const ContextConfig& cfg,
                                          std::string id = {});

}  // namespace stx
