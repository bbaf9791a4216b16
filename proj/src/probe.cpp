#include "posclip/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "posclip/error.hpp"
#include "posclip/random.hpp"

namespace posclip {

using nlohmann::json;

void validate_config(const ProbeConfig& config) {
  if (config.epochs < 1) throw Error(ErrorKind::MalformedInput, "epochs must be >= 1");
  if (config.batch_size < 1) throw Error(ErrorKind::MalformedInput, "batch size must be >= 1");
  if (!(config.learning_rate > 0.0)) throw Error(ErrorKind::MalformedInput, "learning rate must be > 0");
  if (config.max_positions < 1) throw Error(ErrorKind::MalformedInput, "max positions must be >= 1");
}

LinearFit train_softmax(const Eigen::Ref<const RowMajorMatrixXf>& rows, std::span<const std::size_t> samples,
                        std::span<const Index> labels, Index n_classes, const ProbeConfig& config) {
  validate_config(config);
  if (samples.empty()) throw Error(ErrorKind::EmptySplit, "no training examples");
  if (samples.size() != labels.size()) {
    throw Error(ErrorKind::LengthMismatch, "samples and labels differ in length");
  }
  for (const Index label : labels) {
    if (label < 0 || label >= n_classes) {
      throw Error(ErrorKind::PositionOverflow,
                  "label " + std::to_string(label) + " outside [0, " + std::to_string(n_classes) + ")");
    }
  }

  const Index dim = rows.cols();
  LinearFit fit;
  fit.weights = Eigen::MatrixXf::Zero(n_classes, dim);
  Eigen::MatrixXf first_moment = Eigen::MatrixXf::Zero(n_classes, dim);
  Eigen::MatrixXf second_moment = Eigen::MatrixXf::Zero(n_classes, dim);
  Eigen::MatrixXf gradient;
  Eigen::MatrixXf batch;
  std::vector<Index> batch_labels;

  const auto beta1 = static_cast<float>(config.adam.beta1);
  const auto beta2 = static_cast<float>(config.adam.beta2);
  const auto epsilon = static_cast<float>(config.adam.epsilon);
  const auto lr = static_cast<float>(config.learning_rate);

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(config.seed);
  std::int64_t step = 0;

  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const auto n = static_cast<Index>(end - start);
      batch.resize(n, dim);
      batch_labels.resize(static_cast<std::size_t>(n));
      for (Index i = 0; i < n; ++i) {
        const auto example = order[start + static_cast<std::size_t>(i)];
        batch.row(i) = rows.row(static_cast<Index>(samples[example]));
        batch_labels[static_cast<std::size_t>(i)] = labels[example];
      }
      epoch_loss += softmax_cross_entropy<float>(fit.weights, batch, batch_labels, &gradient);
      ++n_batches;

      ++step;
      first_moment = beta1 * first_moment + (1.0F - beta1) * gradient;
      second_moment = beta2 * second_moment + (1.0F - beta2) * gradient.cwiseAbs2();
      const float correction1 = 1.0F - std::pow(beta1, static_cast<float>(step));
      const float correction2 = 1.0F - std::pow(beta2, static_cast<float>(step));
      fit.weights.array() -= lr * (first_moment.array() / correction1) /
                             ((second_moment.array() / correction2).sqrt() + epsilon);
    }
    fit.epoch_loss.push_back(epoch_loss / static_cast<double>(n_batches));
  }
  if (!fit.weights.allFinite()) throw Error(ErrorKind::NonFiniteValue, "training diverged");
  return fit;
}

Index argmax_class(const Eigen::Ref<const Eigen::VectorXf>& scores) {
  Index best = 0;
  for (Index i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

SplitPart split_part_of(std::string_view sentence_id, std::uint64_t seed) {
  const auto bucket = seeded_hash(seed, sentence_id) % 10;
  if (bucket < 8) return SplitPart::Train;
  return bucket == 8 ? SplitPart::Val : SplitPart::Test;
}

TokenSplit split_tokens_by_sentence(const EmbeddingStore& store, std::uint64_t seed) {
  TokenSplit split;
  for (const auto& sentence : store.sentences()) {
    auto& target = [&]() -> std::vector<std::size_t>& {
      switch (split_part_of(sentence.id, seed)) {
        case SplitPart::Train: return split.train;
        case SplitPart::Val: return split.val;
        case SplitPart::Test: return split.test;
      }
      return split.train;
    }();
    target.insert(target.end(), sentence.tokens.begin(), sentence.tokens.end());
  }
  for (auto* part : {&split.train, &split.val, &split.test}) std::sort(part->begin(), part->end());
  return split;
}

ProbeModel train_probe(const EmbeddingStore& store, Index layer, const TokenSplit& split, const ProbeConfig& config) {
  validate_config(config);
  if (split.train.empty()) throw Error(ErrorKind::EmptySplit, "probe train split is empty");
  if (split.test.empty()) throw Error(ErrorKind::EmptySplit, "probe test split is empty");
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (const auto token : *part) {
      if (token >= static_cast<std::size_t>(store.n_tokens())) {
        throw Error(ErrorKind::IndexOutOfRange, "split token " + std::to_string(token) + " outside store");
      }
      const auto position = store.meta()[token].position;
      if (position >= static_cast<std::size_t>(config.max_positions)) {
        throw Error(ErrorKind::PositionOverflow, "token " + std::to_string(token) + " at position " +
                                                     std::to_string(position) + " >= M = " +
                                                     std::to_string(config.max_positions));
      }
    }
  }
  std::vector<Index> labels;
  labels.reserve(split.train.size());
  for (const auto token : split.train) labels.push_back(static_cast<Index>(store.meta()[token].position));

  auto fit = train_softmax(store.layer(layer), split.train, labels, config.max_positions, config);
  return ProbeModel{std::move(fit.weights), layer, config, std::move(fit.epoch_loss)};
}

PositionPrediction predict_position(const ProbeModel& model, const Eigen::Ref<const Eigen::VectorXf>& v) {
  if (v.size() != model.weights.cols()) {
    throw Error(ErrorKind::DimMismatch, "vector length " + std::to_string(v.size()) + " vs probe dim " +
                                            std::to_string(model.weights.cols()));
  }
  PositionPrediction prediction;
  prediction.scores = model.weights * v;
  prediction.position = argmax_class(prediction.scores);
  return prediction;
}

double probe_accuracy(const ProbeModel& model, const EmbeddingStore& store, Index layer,
                      std::span<const std::size_t> tokens) {
  if (tokens.empty()) throw Error(ErrorKind::EmptyEvalSet, "no tokens to score");
  std::size_t correct = 0;
  for (const auto token : tokens) {
    const auto predicted = predict_position(model, store.vector(layer, static_cast<Index>(token))).position;
    if (static_cast<std::size_t>(predicted) == store.meta()[token].position) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(tokens.size());
}

Eigen::VectorXf contribution(const ProbeModel& model, const Eigen::Ref<const Eigen::VectorXf>& v, Index cls) {
  if (v.size() != model.weights.cols()) {
    throw Error(ErrorKind::DimMismatch, "vector length " + std::to_string(v.size()) + " vs probe dim " +
                                            std::to_string(model.weights.cols()));
  }
  if (cls < 0 || cls >= model.weights.rows()) {
    throw Error(ErrorKind::IndexOutOfRange, "class " + std::to_string(cls) + " outside probe");
  }
  return model.weights.row(cls).transpose().cwiseProduct(v).cwiseAbs();
}

ContributionSummary aggregate_contributions(const ProbeModel& model, const EmbeddingStore& store, Index layer,
                                            std::span<const std::size_t> eval_tokens, ContributionClass row) {
  if (eval_tokens.empty()) throw Error(ErrorKind::EmptyEvalSet, "aggregate_contributions needs tokens");
  const Index classes = model.weights.rows();
  const Index dim = model.weights.cols();
  ContributionSummary summary{Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Zero(classes, dim),
                              Eigen::VectorXi::Zero(classes)};
  for (const auto token : eval_tokens) {
    const auto v = store.vector(layer, static_cast<Index>(token));
    const auto gold = static_cast<Index>(store.meta()[token].position);
    if (gold >= classes) {
      throw Error(ErrorKind::PositionOverflow, "token " + std::to_string(token) + " at position " +
                                                   std::to_string(gold) + " >= M = " + std::to_string(classes));
    }
    const Index cls = row == ContributionClass::Gold ? gold : predict_position(model, v).position;
    const Eigen::VectorXd c = contribution(model, v, cls).cast<double>();
    summary.mean += c;
    summary.per_position.row(gold) += c.transpose();
    summary.position_counts[gold] += 1;
  }
  summary.mean /= static_cast<double>(eval_tokens.size());
  for (Index p = 0; p < classes; ++p) {
    if (summary.position_counts[p] > 0) summary.per_position.row(p) /= summary.position_counts[p];
  }
  return summary;
}

std::string format_probe_model(const ProbeModel& model) {
  json header = json::object();
  header["kind"] = "position_probe";
  header["layer"] = model.layer;
  header["rows"] = model.weights.rows();
  header["dim"] = model.weights.cols();
  header["config"] = {{"epochs", model.config.epochs},
                      {"batch_size", model.config.batch_size},
                      {"learning_rate", model.config.learning_rate},
                      {"seed", model.config.seed},
                      {"beta1", model.config.adam.beta1},
                      {"beta2", model.config.adam.beta2},
                      {"epsilon", model.config.adam.epsilon},
                      {"max_positions", model.config.max_positions}};
  header["epoch_loss"] = model.epoch_loss;
  std::vector<ParamVector> rows;
  rows.reserve(static_cast<std::size_t>(model.weights.rows()));
  for (Index r = 0; r < model.weights.rows(); ++r) {
    rows.push_back({"probe.layer" + std::to_string(model.layer) + ".w[" + std::to_string(r) + "]",
                    model.weights.row(r).transpose()});
  }
  return header.dump() + "\n" + format_params(rows);
}

ProbeModel parse_probe_model(std::string_view text) {
  const auto newline = text.find('\n');
  ProbeModel model;
  try {
    const auto header = json::parse(text.substr(0, newline));
    model.layer = header.at("layer").get<Index>();
    const auto& config = header.at("config");
    model.config.epochs = config.at("epochs").get<Index>();
    model.config.batch_size = config.at("batch_size").get<Index>();
    model.config.learning_rate = config.at("learning_rate").get<double>();
    model.config.seed = config.at("seed").get<std::uint64_t>();
    model.config.adam = {config.at("beta1").get<double>(), config.at("beta2").get<double>(),
                         config.at("epsilon").get<double>()};
    model.config.max_positions = config.at("max_positions").get<Index>();
    model.epoch_loss = header.value("epoch_loss", std::vector<double>{});
    const auto rows = parse_params(newline == std::string_view::npos ? std::string_view{} : text.substr(newline + 1));
    const auto expected_rows = header.at("rows").get<Index>();
    const auto dim = header.at("dim").get<Index>();
    if (static_cast<Index>(rows.size()) != expected_rows) {
      throw Error(ErrorKind::MalformedInput, "probe file row count does not match header");
    }
    model.weights.resize(expected_rows, dim);
    for (Index r = 0; r < expected_rows; ++r) {
      if (rows[static_cast<std::size_t>(r)].values.size() != dim) {
        throw Error(ErrorKind::DimMismatch, "probe row " + std::to_string(r) + " has wrong length");
      }
      model.weights.row(r) = rows[static_cast<std::size_t>(r)].values.transpose();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, std::string("probe file: ") + e.what());
  }
  return model;
}

}  // namespace posclip
