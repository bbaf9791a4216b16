#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "posclip/store.hpp"

namespace posclip {

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct ProbeConfig {
  Index epochs = 10;
  Index batch_size = 128;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  AdamParams adam;
  Index max_positions = 300;  // number of position classes M
};

void validate_config(const ProbeConfig& config);

/// Mean softmax cross-entropy of the bias-free linear map `weights` (classes x
/// dim) over the rows of `batch` (n x dim). When `gradient` is non-null it
/// receives d loss / d weights.
template <typename Scalar>
Scalar softmax_cross_entropy(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& weights,
                             const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& batch,
                             std::span<const Index> labels,
                             Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>* gradient = nullptr) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Index n = batch.rows();
  Matrix logits = batch * weights.transpose();  // n x classes
  Matrix probs(n, weights.rows());
  Scalar loss = 0;
  for (Index i = 0; i < n; ++i) {
    const Scalar shift = logits.row(i).maxCoeff();
    probs.row(i) = (logits.row(i).array() - shift).exp().matrix();
    const Scalar total = probs.row(i).sum();
    probs.row(i) /= total;
    loss += std::log(total) - (logits(i, labels[static_cast<std::size_t>(i)]) - shift);
  }
  if (gradient != nullptr) {
    for (Index i = 0; i < n; ++i) probs(i, labels[static_cast<std::size_t>(i)]) -= Scalar(1);
    *gradient = probs.transpose() * batch / static_cast<Scalar>(n);
  }
  return loss / static_cast<Scalar>(n);
}

/// Result of fitting a bias-free softmax classifier.
struct LinearFit {
  Eigen::MatrixXf weights;          // classes x dim
  std::vector<double> epoch_loss;   // mean batch loss per epoch
};

/// Mini-batch Adam on softmax cross-entropy. `rows` holds candidate feature
/// vectors; `samples[i]` selects the row for training example i and
/// `labels[i]` its class. Weights start at zero; the seed fixes the shuffle
/// order, so identical inputs give bit-identical weights.
LinearFit train_softmax(const Eigen::Ref<const RowMajorMatrixXf>& rows, std::span<const std::size_t> samples,
                        std::span<const Index> labels, Index n_classes, const ProbeConfig& config);

/// Argmax class of weights * v, lowest index on ties.
Index argmax_class(const Eigen::Ref<const Eigen::VectorXf>& scores);

struct ProbeModel {
  Eigen::MatrixXf weights;  // max_positions x dim, no bias
  Index layer = 0;
  ProbeConfig config;
  std::vector<double> epoch_loss;
};

/// Token indices for each split. Built from a sentence-level partition so no
/// sentence contributes to two splits.
struct TokenSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// 80/10/10 partition of sentences by seeded hash of sentence_id.
enum class SplitPart { Train, Val, Test };
SplitPart split_part_of(std::string_view sentence_id, std::uint64_t seed);
TokenSplit split_tokens_by_sentence(const EmbeddingStore& store, std::uint64_t seed);

/// Throws PositionOverflow if any split token sits at position >= M, EmptySplit
/// if the train or test split is empty.
ProbeModel train_probe(const EmbeddingStore& store, Index layer, const TokenSplit& split, const ProbeConfig& config);

struct PositionPrediction {
  Index position = 0;
  Eigen::VectorXf scores;
};

PositionPrediction predict_position(const ProbeModel& model, const Eigen::Ref<const Eigen::VectorXf>& v);

/// Fraction of `tokens` at `layer` whose predicted position equals the gold one.
double probe_accuracy(const ProbeModel& model, const EmbeddingStore& store, Index layer,
                      std::span<const std::size_t> tokens);

/// c(i) = |W[cls][i] * v[i]|.
Eigen::VectorXf contribution(const ProbeModel& model, const Eigen::Ref<const Eigen::VectorXf>& v, Index cls);

enum class ContributionClass { Gold, Predicted };

struct ContributionSummary {
  Eigen::VectorXd mean;          // dim
  Eigen::MatrixXd per_position;  // max_positions x dim, zero rows where no token falls
  Eigen::VectorXi position_counts;
};

ContributionSummary aggregate_contributions(const ProbeModel& model, const EmbeddingStore& store, Index layer,
                                            std::span<const std::size_t> eval_tokens,
                                            ContributionClass row = ContributionClass::Gold);

/// Probe file: a JSON header line followed by one ParamVector line per weight row.
std::string format_probe_model(const ProbeModel& model);
ProbeModel parse_probe_model(std::string_view text);

}  // namespace posclip
