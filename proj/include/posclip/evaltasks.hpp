#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "posclip/probe.hpp"
#include "posclip/store.hpp"

namespace posclip {

/// Inclusive range of global token indices.
struct TokenSpan {
  std::size_t first = 0;
  std::size_t last = 0;
};

/// One sentence-pair example. `gold` is 0/1 for word-in-context tasks and a
/// 0-5 relatedness score for STS tasks.
struct PairExample {
  std::string id;
  std::string sent_a;
  std::string sent_b;
  std::optional<TokenSpan> span_a;
  std::optional<TokenSpan> span_b;
  double gold = 0.0;
};

/// One labelled sentence for frozen-feature classification.
struct LabeledSentence {
  std::string id;
  std::string sentence_id;
  Index label = 0;
  std::optional<SplitPart> split;  // hash split when absent
};

enum class PairTaskKind { WordInContext, Sts };

std::vector<PairExample> parse_pair_tasks(std::string_view jsonl, PairTaskKind kind);
std::vector<LabeledSentence> parse_labeled_sentences(std::string_view jsonl);

struct EvalRow {
  Index layer = 0;
  std::optional<double> threshold;
  double value = 0.0;  // accuracy in [0,1], or Spearman rho x 100
};

struct EvalResult {
  std::string task;
  std::vector<EvalRow> rows;
  std::optional<double> baseline;  // all-true accuracy for word-in-context
  EvalRow best;
};

/// Keeps every row and picks the overall best; ties keep the earlier row.
EvalResult merge_results(std::span<const EvalResult> per_layer);

Eigen::VectorXd mean_pool(const EmbeddingStore& store, Index layer, std::string_view sentence_id);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> xs, std::span<const double> ys);

/// 0.1, 0.2, ..., 0.9
std::vector<double> default_wic_thresholds();

/// Mean vector over a target span, which must lie inside `sentence_id`.
Eigen::VectorXd target_vector(const EmbeddingStore& store, Index layer, std::string_view sentence_id,
                              const std::optional<TokenSpan>& span);

EvalResult wic_eval(const EmbeddingStore& store, std::span<const PairExample> examples, Index layer,
                    std::span<const double> thresholds);
EvalResult wic_eval(const EmbeddingStore& store, std::span<const PairExample> examples, Index layer);

EvalResult sts_eval(const EmbeddingStore& store, std::span<const PairExample> examples, Index layer);

struct ClassifierResult {
  Index layer = 0;
  double test_accuracy = 0.0;
  double val_accuracy = 0.0;  // NaN without validation sentences
  std::vector<double> epoch_loss;
};

/// Bias-free softmax classifier over mean-pooled frozen embeddings, scored
/// on the held-out test sentences.
ClassifierResult train_linear_classifier(const EmbeddingStore& store, Index layer,
                                         std::span<const LabeledSentence> labels, Index n_classes,
                                         const ProbeConfig& config);

}  // namespace posclip
