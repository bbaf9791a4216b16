#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "posclip/clip.hpp"
#include "posclip/evaltasks.hpp"
#include "posclip/geometry.hpp"
#include "posclip/outlier.hpp"
#include "posclip/probe.hpp"

namespace posclip {

/// Shortest round-trip decimal form; "nan" for NaN.
std::string format_number(double value);

nlohmann::ordered_json to_json(const OutlierReport& report);
/// Columns: layer, dim, min_freq, max_freq. Pooled rows use layer "pooled".
std::string extremum_csv(const OutlierReport& report);

nlohmann::ordered_json to_json(const EvalResult& result);
/// Columns: task, layer, threshold, value.
std::string eval_csv(const EvalResult& result);

nlohmann::ordered_json to_json(const AnisotropyEstimate& estimate);

/// Columns: position, dim_0..dim_{D-1}; one row per position class.
std::string contribution_heatmap_csv(const ContributionSummary& summary);

struct ComparisonRow {
  Index layer = 0;
  std::string metric;
  double before_clip = 0.0;
  double after_clip = 0.0;
};

/// Columns: layer, metric, before_clip, after_clip.
std::string comparison_csv(const std::vector<ComparisonRow>& rows);

struct PipelineOptions {
  double threshold = kDefaultOutlierThreshold;
  bool skip_input = true;
  std::optional<ClipSpec> clip;  // derived from the outlier report when absent
  Index n_pairs = kDefaultAnisotropyPairs;
  std::uint64_t seed = 0;
  Index min_sentences = 10;
  Index max_words = 1000;
  SelfSimNormalization normalization = SelfSimNormalization::UnorderedPairs;
  std::vector<PairExample> wic;
  std::vector<PairExample> sts;
};

struct PipelineReport {
  OutlierReport outliers;
  ClipSpec clip;
  std::vector<std::string> words;
  std::vector<ComparisonRow> rows;
  std::optional<EvalResult> wic_before;
  std::optional<EvalResult> wic_after;
  std::optional<EvalResult> sts_before;
  std::optional<EvalResult> sts_after;
};

/// Outlier detection, clipping, and before/after anisotropy, self-similarity
/// (raw and anisotropy-adjusted, averaged over the selected words) and any
/// supplied word-in-context / STS tasks, for every included layer.
PipelineReport run_pipeline(const EmbeddingStore& store, const PipelineOptions& options);

nlohmann::ordered_json to_json(const PipelineReport& report, const PipelineOptions& options);

}  // namespace posclip
