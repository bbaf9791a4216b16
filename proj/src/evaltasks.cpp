#include "posclip/evaltasks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "posclip/error.hpp"
#include "posclip/geometry.hpp"

namespace posclip {

using nlohmann::json;

namespace {

template <typename Fn>
void for_each_json_line(std::string_view jsonl, std::string_view what, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= jsonl.size()) {
    auto end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    auto line = jsonl.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      fn(json::parse(line), line_no);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::MalformedInput,
                  std::string(what) + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::string id_text(const json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_integer()) return std::to_string(value.get<std::int64_t>());
  throw Error(ErrorKind::MalformedInput, "ids must be strings or integers");
}

std::optional<TokenSpan> span_from_json(const json& record, const char* key) {
  if (!record.contains(key) || record.at(key).is_null()) return std::nullopt;
  const auto& value = record.at(key);
  if (value.is_number_integer()) {
    const auto t = value.get<std::size_t>();
    return TokenSpan{t, t};
  }
  const auto bounds = value.get<std::vector<std::size_t>>();
  if (bounds.size() != 2 || bounds[0] > bounds[1]) {
    throw Error(ErrorKind::MalformedInput, std::string(key) + " must be an index or [first, last]");
  }
  return TokenSpan{bounds[0], bounds[1]};
}

std::vector<double> average_ranks(std::span<const double> values) {
  const auto n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // ranks are 1-based; a tie block [i, j) shares the mean of i+1..j
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

}  // namespace

std::vector<PairExample> parse_pair_tasks(std::string_view jsonl, PairTaskKind kind) {
  std::vector<PairExample> examples;
  for_each_json_line(jsonl, "task", [&](const json& record, std::size_t line_no) {
    PairExample example;
    example.id = record.contains("id") ? id_text(record.at("id")) : std::to_string(line_no);
    example.sent_a = id_text(record.at("sent_a"));
    example.sent_b = id_text(record.at("sent_b"));
    example.span_a = span_from_json(record, "span_a");
    example.span_b = span_from_json(record, "span_b");
    const auto& gold = record.at("gold");
    if (kind == PairTaskKind::WordInContext) {
      example.gold = gold.is_boolean() ? (gold.get<bool>() ? 1.0 : 0.0) : (gold.get<double>() != 0.0 ? 1.0 : 0.0);
    } else {
      example.gold = gold.get<double>();
      if (!(example.gold >= 0.0 && example.gold <= 5.0)) {
        throw Error(ErrorKind::MalformedInput,
                    "task line " + std::to_string(line_no) + ": STS gold must lie in [0, 5]");
      }
    }
    examples.push_back(std::move(example));
  });
  return examples;
}

std::vector<LabeledSentence> parse_labeled_sentences(std::string_view jsonl) {
  std::vector<LabeledSentence> labeled;
  for_each_json_line(jsonl, "task", [&](const json& record, std::size_t line_no) {
    LabeledSentence item;
    item.id = record.contains("id") ? id_text(record.at("id")) : std::to_string(line_no);
    item.sentence_id = id_text(record.at("sent"));
    item.label = record.at("gold").get<Index>();
    if (record.contains("split")) {
      const auto split = record.at("split").get<std::string>();
      if (split == "train") {
        item.split = SplitPart::Train;
      } else if (split == "val" || split == "validation" || split == "dev") {
        item.split = SplitPart::Val;
      } else if (split == "test") {
        item.split = SplitPart::Test;
      } else {
        throw Error(ErrorKind::MalformedInput, "task line " + std::to_string(line_no) + ": unknown split " + split);
      }
    }
    labeled.push_back(std::move(item));
  });
  return labeled;
}

EvalResult merge_results(std::span<const EvalResult> per_layer) {
  EvalResult merged;
  bool have_best = false;
  for (const auto& result : per_layer) {
    if (merged.task.empty()) merged.task = result.task;
    if (!merged.baseline) merged.baseline = result.baseline;
    merged.rows.insert(merged.rows.end(), result.rows.begin(), result.rows.end());
    if (!have_best || result.best.value > merged.best.value) {
      merged.best = result.best;
      have_best = true;
    }
  }
  return merged;
}

Eigen::VectorXd mean_pool(const EmbeddingStore& store, Index layer, std::string_view sentence_id) {
  const auto* sentence = store.find_sentence(sentence_id);
  if (sentence == nullptr || sentence->tokens.empty()) {
    throw Error(ErrorKind::EmptySentence, "sentence '" + std::string(sentence_id) + "' has no tokens in the store");
  }
  Eigen::VectorXd total = Eigen::VectorXd::Zero(store.dim());
  for (const auto token : sentence->tokens) total += store.vector(layer, static_cast<Index>(token)).cast<double>();
  return total / static_cast<double>(sentence->tokens.size());
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw Error(ErrorKind::LengthMismatch,
                "spearman inputs have lengths " + std::to_string(xs.size()) + " and " + std::to_string(ys.size()));
  }
  if (xs.size() < 2) throw Error(ErrorKind::LengthMismatch, "spearman needs at least two observations");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  // one loop for all three sums, so identical or mirrored rank vectors give exactly +-1
  const auto n = static_cast<double>(rx.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mx;
    const double dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorKind::ConstantInput, "spearman of a constant sequence");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> default_wic_thresholds() {
  std::vector<double> thresholds;
  for (int i = 1; i <= 9; ++i) thresholds.push_back(i / 10.0);
  return thresholds;
}

Eigen::VectorXd target_vector(const EmbeddingStore& store, Index layer, std::string_view sentence_id,
                              const std::optional<TokenSpan>& span) {
  if (!span) throw Error(ErrorKind::MissingTarget, "no target span for sentence '" + std::string(sentence_id) + "'");
  Eigen::VectorXd total = Eigen::VectorXd::Zero(store.dim());
  for (std::size_t t = span->first; t <= span->last; ++t) {
    if (t >= static_cast<std::size_t>(store.n_tokens()) || store.meta()[t].sentence_id != sentence_id) {
      throw Error(ErrorKind::MissingTarget,
                  "target token " + std::to_string(t) + " is not part of sentence '" + std::string(sentence_id) + "'");
    }
    total += store.vector(layer, static_cast<Index>(t)).cast<double>();
  }
  return total / static_cast<double>(span->last - span->first + 1);
}

EvalResult wic_eval(const EmbeddingStore& store, std::span<const PairExample> examples, Index layer,
                    std::span<const double> thresholds) {
  if (examples.empty()) throw Error(ErrorKind::EmptyEvalSet, "no word-in-context examples");
  std::vector<double> similarities;
  similarities.reserve(examples.size());
  std::size_t positives = 0;
  for (const auto& example : examples) {
    similarities.push_back(cosine(target_vector(store, layer, example.sent_a, example.span_a),
                                  target_vector(store, layer, example.sent_b, example.span_b)));
    if (example.gold != 0.0) ++positives;
  }
  const auto n = static_cast<double>(examples.size());
  EvalResult result;
  result.task = "wic";
  result.baseline = static_cast<double>(positives) / n;
  for (const double threshold : thresholds) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      if ((similarities[i] > threshold) == (examples[i].gold != 0.0)) ++correct;
    }
    EvalRow row{layer, threshold, static_cast<double>(correct) / n};
    if (result.rows.empty() || row.value > result.best.value) result.best = row;
    result.rows.push_back(row);
  }
  return result;
}

EvalResult wic_eval(const EmbeddingStore& store, std::span<const PairExample> examples, Index layer) {
  const auto thresholds = default_wic_thresholds();
  return wic_eval(store, examples, layer, thresholds);
}

EvalResult sts_eval(const EmbeddingStore& store, std::span<const PairExample> examples, Index layer) {
  if (examples.size() < 2) throw Error(ErrorKind::LengthMismatch, "STS evaluation needs at least two pairs");
  std::vector<double> similarities;
  std::vector<double> gold;
  for (const auto& example : examples) {
    similarities.push_back(cosine(mean_pool(store, layer, example.sent_a), mean_pool(store, layer, example.sent_b)));
    gold.push_back(example.gold);
  }
  EvalResult result;
  result.task = "sts";
  result.best = EvalRow{layer, std::nullopt, 100.0 * spearman(similarities, gold)};
  result.rows.push_back(result.best);
  return result;
}

ClassifierResult train_linear_classifier(const EmbeddingStore& store, Index layer,
                                         std::span<const LabeledSentence> labels, Index n_classes,
                                         const ProbeConfig& config) {
  if (labels.empty()) throw Error(ErrorKind::EmptySplit, "no labelled sentences");
  for (const auto& item : labels) {
    if (item.label < 0 || item.label >= n_classes) {
      throw Error(ErrorKind::MalformedInput, "example '" + item.id + "' has label " + std::to_string(item.label) +
                                                 " outside [0, " + std::to_string(n_classes) + ")");
    }
  }
  RowMajorMatrixXf pooled(static_cast<Index>(labels.size()), store.dim());
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> val_rows;
  std::vector<std::size_t> test_rows;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    pooled.row(static_cast<Index>(i)) = mean_pool(store, layer, labels[i].sentence_id).cast<float>().transpose();
    const auto part = labels[i].split.value_or(split_part_of(labels[i].sentence_id, config.seed));
    (part == SplitPart::Train ? train_rows : part == SplitPart::Val ? val_rows : test_rows).push_back(i);
  }
  if (train_rows.empty()) throw Error(ErrorKind::EmptySplit, "classifier train split is empty");
  if (test_rows.empty()) throw Error(ErrorKind::EmptySplit, "classifier test split is empty");

  std::vector<Index> train_labels;
  train_labels.reserve(train_rows.size());
  for (const auto row : train_rows) train_labels.push_back(labels[row].label);
  auto fit = train_softmax(pooled, train_rows, train_labels, n_classes, config);

  auto accuracy = [&](const std::vector<std::size_t>& rows) {
    if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::size_t correct = 0;
    for (const auto row : rows) {
      const Eigen::VectorXf scores = fit.weights * pooled.row(static_cast<Index>(row)).transpose();
      if (argmax_class(scores) == labels[row].label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(rows.size());
  };
  return ClassifierResult{layer, accuracy(test_rows), accuracy(val_rows), std::move(fit.epoch_loss)};
}

}  // namespace posclip
