#include "stx/contextualizer.hpp"

#include "stx/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace stx {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Uniform in (0, 1): 53 random mantissa bits, offset by half an ulp so log() is finite.
double unit_open(std::mt19937_64& gen) {
  return (static_cast<double>(gen() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

}  // namespace

const char* to_string(SequenceMode mode) {
  switch (mode) {
    case SequenceMode::PathsAsSequence: return "paths";
    case SequenceMode::MultiSegment: return "multiseg";
    case SequenceMode::Baseline: return "baseline";
  }
  return "unknown";
}

SequenceMode parse_sequence_mode(const std::string& text) {
  if (text == "paths") return SequenceMode::PathsAsSequence;
  if (text == "multiseg") return SequenceMode::MultiSegment;
  if (text == "baseline") return SequenceMode::Baseline;
  fail(ErrorKind::Parse, "unknown mode '" + text + "'");
}

void FeatureSequence::validate() const {
  require(rows.rows() >= 1, ErrorKind::Shape, "feature sequence needs at least one row");
  require(rows.cols() >= 1, ErrorKind::Shape, "feature sequence needs d_model >= 1");
  require(rows.allFinite(), ErrorKind::Data, "feature sequence has non-finite values");
}

Eigen::MatrixXd positional_encoding(Eigen::Index seq_len, Eigen::Index d_model) {
  require(seq_len >= 1 && d_model >= 1, ErrorKind::InvalidArgument, "positional encoding needs positive sizes");
  Eigen::MatrixXd pe(seq_len, d_model);
  const double d = static_cast<double>(d_model);
  for (Eigen::Index pos = 0; pos < seq_len; ++pos) {
    for (Eigen::Index col = 0; col < d_model; ++col) {
      const Eigen::Index pair = col / 2;
      const double angle = static_cast<double>(pos) / std::pow(10000.0, 2.0 * static_cast<double>(pair) / d);
      // An odd trailing column has no partner and takes the sine branch.
      pe(pos, col) = (col % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

FeatureSequence add_positional_encoding(const FeatureSequence& x) {
  x.validate();
  return FeatureSequence{x.rows + positional_encoding(x.length(), x.d_model()), x.mode};
}

Eigen::MatrixXd attention_weights(const FeatureSequence& x_pos) {
  x_pos.validate();
  const double scale = 1.0 / std::sqrt(static_cast<double>(x_pos.d_model()));
  Eigen::MatrixXd logits = (x_pos.rows * x_pos.rows.transpose()) * scale;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    require(row.allFinite(), ErrorKind::Numeric, "attention logits overflow in row " + std::to_string(r));
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
  return logits;
}

FeatureSequence self_attention(const FeatureSequence& x_pos) {
  Eigen::MatrixXd out = attention_weights(x_pos) * x_pos.rows;
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    require(out.row(r).allFinite(), ErrorKind::Numeric, "attention output overflow in row " + std::to_string(r));
  return FeatureSequence{std::move(out), x_pos.mode};
}

Eigen::MatrixXd random_projection_matrix(Eigen::Index d_model, int target_dim, std::uint64_t seed) {
  require(target_dim >= 1, ErrorKind::InvalidConfig, "projection target_dim must be positive");
  std::mt19937_64 gen(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(target_dim));
  Eigen::MatrixXd w(d_model, target_dim);
  // Row-major fill order so the matrix does not depend on Eigen's storage order.
  for (Eigen::Index i = 0; i < d_model; ++i) {
    for (Eigen::Index j = 0; j < target_dim; j += 2) {
      const double r = std::sqrt(-2.0 * std::log(unit_open(gen)));
      const double theta = 2.0 * std::numbers::pi * unit_open(gen);
      w(i, j) = r * std::cos(theta) * scale;
      if (j + 1 < target_dim) w(i, j + 1) = r * std::sin(theta) * scale;
    }
  }
  return w;
}

FeatureSequence feed_forward(const FeatureSequence& x, const ContextConfig& cfg) {
  x.validate();
  return std::visit(
      overloaded{
          [&](const IdentityFfn&) { return x; },
          [&](const RandomProjectionFfn& rp) {
            require(rp.target_dim >= 1 && rp.target_dim <= x.d_model(), ErrorKind::InvalidConfig,
                    "projection target_dim must lie in [1, d_model]");
            return FeatureSequence{x.rows * random_projection_matrix(x.d_model(), rp.target_dim, rp.seed), x.mode};
          },
          [&](const TopVarianceFfn& tv) {
            require(tv.columns.has_value(), ErrorKind::State, "top-variance selection used before it was fitted");
            require(tv.target_dim >= 1 && tv.target_dim <= x.d_model(), ErrorKind::InvalidConfig,
                    "selection target_dim must lie in [1, d_model]");
            const auto& cols = *tv.columns;
            require(cols.size() == static_cast<std::size_t>(tv.target_dim), ErrorKind::State,
                    "fitted selection size differs from target_dim");
            Eigen::MatrixXd out(x.length(), tv.target_dim);
            for (std::size_t c = 0; c < cols.size(); ++c) {
              require(cols[c] >= 0 && cols[c] < x.d_model(), ErrorKind::Shape, "selected column out of range");
              out.col(static_cast<Eigen::Index>(c)) = x.rows.col(cols[c]);
            }
            return FeatureSequence{std::move(out), x.mode};
          },
      },
      cfg.ffn);
}

void ColumnVariance::add(const Eigen::MatrixXd& rows) {
  if (count_ == 0) {
    mean_ = Eigen::VectorXd::Zero(rows.cols());
    m2_ = Eigen::VectorXd::Zero(rows.cols());
  }
  require(rows.cols() == mean_.size(), ErrorKind::Shape, "variance statistics dimension mismatch");
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    ++count_;
    const Eigen::VectorXd v = rows.row(r).transpose();
    const Eigen::VectorXd delta = v - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta.cwiseProduct(v - mean_);
  }
}

Eigen::VectorXd ColumnVariance::variance() const {
  require(count_ > 0, ErrorKind::State, "no rows accumulated");
  return m2_ / static_cast<double>(count_);
}

std::vector<Eigen::Index> select_top_variance(const ColumnVariance& stats, int target_dim) {
  const Eigen::VectorXd var = stats.variance();
  require(target_dim >= 1 && target_dim <= var.size(), ErrorKind::InvalidConfig,
          "selection target_dim must lie in [1, d_model]");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(var.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return var[a] > var[b]; });
  order.resize(static_cast<std::size_t>(target_dim));
  std::sort(order.begin(), order.end());
  return order;
}

Eigen::VectorXd pool(const FeatureSequence& x, Pooling pooling) {
  x.validate();
  if (pooling == Pooling::MeanOverRows) return x.rows.colwise().mean().transpose();
  Eigen::VectorXd flat(x.rows.size());
  for (Eigen::Index r = 0; r < x.length(); ++r) flat.segment(r * x.d_model(), x.d_model()) = x.rows.row(r).transpose();
  return flat;
}

FeatureSequence attend(const FeatureSequence& x, const ContextConfig& cfg) {
  return self_attention(cfg.positional_encoding ? add_positional_encoding(x) : x);
}

Embedding contextualize_sequence(const FeatureSequence& x, const ContextConfig& cfg, std::string id) {
  const auto out = feed_forward(attend(x, cfg), cfg);
  return Embedding{pool(out, cfg.pooling), std::move(id), x.mode};
}

Embedding contextualize_paths_mode(const ScatteringMatrix& sm, const ContextConfig& cfg, std::string id) {
  sm.validate();
  return contextualize_sequence(FeatureSequence{sm.values, SequenceMode::PathsAsSequence}, cfg, std::move(id));
}

Embedding contextualize_multisegment_mode(const std::vector<Eigen::VectorXd>& tokens, const ContextConfig& cfg,
                                          std::string id) {
  require(!tokens.empty(), ErrorKind::Shape, "multi-segment mode needs at least one token");
  const Eigen::Index d = tokens.front().size();
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(tokens.size()), d);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    require(tokens[t].size() == d, ErrorKind::Shape,
            "token " + std::to_string(t) + " has dimension " + std::to_string(tokens[t].size()) + ", expected " +
                std::to_string(d));
    rows.row(static_cast<Eigen::Index>(t)) = tokens[t].transpose();
  }
  return contextualize_sequence(FeatureSequence{std::move(rows), SequenceMode::MultiSegment}, cfg, std::move(id));
}

}  // namespace stx
