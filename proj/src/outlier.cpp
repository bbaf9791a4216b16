#include "posclip/outlier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "posclip/error.hpp"

namespace posclip {

namespace {

struct ExtremumCounts {
  Eigen::VectorXd min_count;
  Eigen::VectorXd max_count;
};

ExtremumCounts count_extrema(const EmbeddingStore& store, Index layer) {
  const auto values = store.layer(layer);
  ExtremumCounts counts{Eigen::VectorXd::Zero(store.dim()), Eigen::VectorXd::Zero(store.dim())};
  for (Index t = 0; t < values.rows(); ++t) {
    Index arg_min = 0;
    Index arg_max = 0;
    for (Index d = 1; d < values.cols(); ++d) {
      // strict comparisons keep the lowest dim on ties
      if (values(t, d) < values(t, arg_min)) arg_min = d;
      if (values(t, d) > values(t, arg_max)) arg_max = d;
    }
    counts.min_count[arg_min] += 1.0;
    counts.max_count[arg_max] += 1.0;
  }
  return counts;
}

Index first_layer(bool skip_input, const EmbeddingStore& store) {
  return (skip_input && store.n_layers() > 1) ? 1 : 0;
}

}  // namespace

std::string_view to_string(ExtremumKind kind) { return kind == ExtremumKind::Min ? "min" : "max"; }

std::vector<Eigen::VectorXd> layer_mean_vectors(const EmbeddingStore& store, bool skip_input) {
  std::vector<Eigen::VectorXd> means;
  for (Index l = first_layer(skip_input, store); l < store.n_layers(); ++l) {
    means.push_back(store.layer(l).cast<double>().colwise().mean().transpose());
  }
  return means;
}

ExtremumStats extremum_frequencies(const EmbeddingStore& store, Index layer) {
  auto counts = count_extrema(store, layer);
  const auto n = static_cast<double>(store.n_tokens());
  return ExtremumStats{layer, counts.min_count / n, counts.max_count / n, store.n_tokens()};
}

OutlierReport detect_outliers(const EmbeddingStore& store, double threshold, bool skip_input) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw Error(ErrorKind::MalformedInput, "outlier threshold must lie in (0, 1]");
  }
  OutlierReport report;
  report.threshold = threshold;
  report.skip_input = skip_input;

  const Index dim = store.dim();
  Eigen::VectorXd pooled_min = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd pooled_max = Eigen::VectorXd::Zero(dim);
  Index pooled_tokens = 0;
  for (Index l = first_layer(skip_input, store); l < store.n_layers(); ++l) {
    const auto counts = count_extrema(store, l);
    pooled_min += counts.min_count;
    pooled_max += counts.max_count;
    pooled_tokens += store.n_tokens();
    const auto n = static_cast<double>(store.n_tokens());
    report.per_layer.push_back({l, counts.min_count / n, counts.max_count / n, store.n_tokens()});
  }
  report.pooled = {-1, pooled_min / static_cast<double>(pooled_tokens),
                   pooled_max / static_cast<double>(pooled_tokens), pooled_tokens};

  for (const auto kind : {ExtremumKind::Min, ExtremumKind::Max}) {
    for (Index d = 0; d < dim; ++d) {
      OutlierDim found{d, kind, 0.0, {}};
      for (const auto& stats : report.per_layer) {
        const double freq = kind == ExtremumKind::Min ? stats.min_freq[d] : stats.max_freq[d];
        if (freq >= threshold) {
          found.layers.push_back(stats.layer);
          found.frequency = std::max(found.frequency, freq);
        }
      }
      if (!found.layers.empty()) report.outlier_dims.push_back(std::move(found));
    }
  }
  std::stable_sort(report.outlier_dims.begin(), report.outlier_dims.end(),
                   [](const OutlierDim& a, const OutlierDim& b) { return a.dim < b.dim; });
  return report;
}

RankBy parse_rank_by(std::string_view text) {
  if (text == "value") return RankBy::Value;
  if (text == "abs") return RankBy::Abs;
  if (text == "neg") return RankBy::Neg;
  throw Error(ErrorKind::MalformedInput, "rank key must be one of value|abs|neg, got '" + std::string(text) + "'");
}

std::vector<RankedElement> topk_elements(const ParamVector& param, Index k, RankBy by) {
  const Index n = param.values.size();
  if (k < 0 || k > n) {
    throw Error(ErrorKind::IndexOutOfRange, "k = " + std::to_string(k) + " exceeds D = " + std::to_string(n));
  }
  auto key = [&](Index d) -> float {
    const float v = param.values[d];
    switch (by) {
      case RankBy::Value: return v;
      case RankBy::Abs: return std::abs(v);
      case RankBy::Neg: return -v;
    }
    return v;
  };
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index a, Index b) {
    const float ka = key(a);
    const float kb = key(b);
    return ka != kb ? ka > kb : a < b;
  });
  std::vector<RankedElement> ranked;
  ranked.reserve(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) ranked.push_back({order[i], param.values[order[i]]});
  return ranked;
}

}  // namespace posclip
