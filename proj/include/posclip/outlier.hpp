#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "posclip/store.hpp"

namespace posclip {

inline constexpr double kDefaultOutlierThreshold = 0.8;

/// Per-layer tally of which dimension holds each token's minimum / maximum.
struct ExtremumStats {
  Index layer = 0;
  Eigen::VectorXd min_freq;
  Eigen::VectorXd max_freq;
  Index n_tokens = 0;
};

enum class ExtremumKind { Min, Max };
std::string_view to_string(ExtremumKind kind);

struct OutlierDim {
  Index dim = 0;
  ExtremumKind kind = ExtremumKind::Max;
  double frequency = 0.0;     // highest per-layer frequency among included layers
  std::vector<Index> layers;  // layers where the frequency reaches the threshold
};

struct OutlierReport {
  std::vector<ExtremumStats> per_layer;
  ExtremumStats pooled;  // over all included layers; `layer` is -1
  std::vector<OutlierDim> outlier_dims;
  double threshold = kDefaultOutlierThreshold;
  bool skip_input = true;
};

/// Mean token vector of every included layer; element 0 is layer 0 unless
/// `skip_input`, in which case element 0 is layer 1.
std::vector<Eigen::VectorXd> layer_mean_vectors(const EmbeddingStore& store, bool skip_input = true);

/// Ties go to the lowest dimension.
ExtremumStats extremum_frequencies(const EmbeddingStore& store, Index layer);

OutlierReport detect_outliers(const EmbeddingStore& store, double threshold = kDefaultOutlierThreshold,
                              bool skip_input = true);

enum class RankBy { Value, Abs, Neg };
RankBy parse_rank_by(std::string_view text);

struct RankedElement {
  Index dim = 0;
  float value = 0.0F;
  friend bool operator==(const RankedElement&, const RankedElement&) = default;
};

/// Largest `k` elements by the chosen key (value, |value| or -value),
/// lower dimension first on ties.
std::vector<RankedElement> topk_elements(const ParamVector& param, Index k, RankBy by = RankBy::Value);

}  // namespace posclip
