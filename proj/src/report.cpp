#include "posclip/report.hpp"

#include <charconv>
#include <cmath>
#include <limits>

namespace posclip {

using nlohmann::ordered_json;

namespace {

ordered_json number_or_null(double value) { return std::isnan(value) ? ordered_json(nullptr) : ordered_json(value); }

ordered_json to_json(const ClipSpec& spec) {
  ordered_json entries = ordered_json::array();
  for (const auto& entry : spec.entries) {
    entries.push_back({{"layers", {entry.first_layer, entry.last_layer}},
                       {"dims", std::vector<Index>(entry.dims.begin(), entry.dims.end())}});
  }
  return entries;
}

struct SelfSimAverages {
  double raw = std::numeric_limits<double>::quiet_NaN();
  double adjusted = std::numeric_limits<double>::quiet_NaN();
};

SelfSimAverages average_self_similarity(const EmbeddingStore& store, const std::vector<std::string>& words,
                                        const AnisotropyEstimate& aniso, SelfSimNormalization normalization) {
  if (words.empty()) return {};
  double raw = 0.0;
  double adjusted = 0.0;
  for (const auto& word : words) {
    const auto result = self_similarity_result(store, word, aniso, normalization);
    raw += result.raw;
    adjusted += result.adjusted;
  }
  const auto n = static_cast<double>(words.size());
  return {raw / n, adjusted / n};
}

}  // namespace

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  char buffer[64];
  const auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, end);
}

ordered_json to_json(const OutlierReport& report) {
  ordered_json doc;
  doc["threshold"] = report.threshold;
  doc["skip_input"] = report.skip_input;
  ordered_json dims = ordered_json::array();
  for (const auto& outlier : report.outlier_dims) {
    dims.push_back({{"dim", outlier.dim},
                    {"kind", std::string(to_string(outlier.kind))},
                    {"frequency", outlier.frequency},
                    {"layers", outlier.layers}});
  }
  doc["outlier_dims"] = dims;

  auto top = [](const ExtremumStats& stats) {
    Index arg_min = 0;
    Index arg_max = 0;
    stats.min_freq.maxCoeff(&arg_min);
    stats.max_freq.maxCoeff(&arg_max);
    return ordered_json{{"layer", stats.layer},
                        {"n_tokens", stats.n_tokens},
                        {"top_min_dim", arg_min},
                        {"top_min_freq", stats.min_freq[arg_min]},
                        {"top_max_dim", arg_max},
                        {"top_max_freq", stats.max_freq[arg_max]}};
  };
  ordered_json pooled = top(report.pooled);
  pooled.erase("layer");
  doc["pooled"] = pooled;
  ordered_json layers = ordered_json::array();
  for (const auto& stats : report.per_layer) layers.push_back(top(stats));
  doc["per_layer"] = layers;
  return doc;
}

std::string extremum_csv(const OutlierReport& report) {
  std::string out = "layer,dim,min_freq,max_freq\n";
  auto emit = [&out](const std::string& layer, const ExtremumStats& stats) {
    for (Index d = 0; d < stats.min_freq.size(); ++d) {
      out += layer + "," + std::to_string(d) + "," + format_number(stats.min_freq[d]) + "," +
             format_number(stats.max_freq[d]) + "\n";
    }
  };
  for (const auto& stats : report.per_layer) emit(std::to_string(stats.layer), stats);
  emit("pooled", report.pooled);
  return out;
}

ordered_json to_json(const EvalResult& result) {
  auto row_json = [](const EvalRow& row) {
    ordered_json j{{"layer", row.layer}};
    if (row.threshold) j["threshold"] = *row.threshold;
    j["value"] = row.value;
    return j;
  };
  ordered_json doc;
  doc["task"] = result.task;
  if (result.baseline) doc["baseline"] = *result.baseline;
  doc["best"] = row_json(result.best);
  ordered_json rows = ordered_json::array();
  for (const auto& row : result.rows) rows.push_back(row_json(row));
  doc["rows"] = rows;
  return doc;
}

std::string eval_csv(const EvalResult& result) {
  std::string out = "task,layer,threshold,value\n";
  for (const auto& row : result.rows) {
    out += result.task + "," + std::to_string(row.layer) + "," + (row.threshold ? format_number(*row.threshold) : "") +
           "," + format_number(row.value) + "\n";
  }
  return out;
}

ordered_json to_json(const AnisotropyEstimate& estimate) {
  return {{"layer", estimate.layer}, {"mean_cos", estimate.mean_cos}, {"n_pairs", estimate.n_pairs},
          {"seed", estimate.seed}};
}

std::string contribution_heatmap_csv(const ContributionSummary& summary) {
  std::string out = "position";
  for (Index d = 0; d < summary.per_position.cols(); ++d) out += ",dim_" + std::to_string(d);
  out += "\n";
  for (Index p = 0; p < summary.per_position.rows(); ++p) {
    out += std::to_string(p);
    for (Index d = 0; d < summary.per_position.cols(); ++d) out += "," + format_number(summary.per_position(p, d));
    out += "\n";
  }
  return out;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::string out = "layer,metric,before_clip,after_clip\n";
  for (const auto& row : rows) {
    out += std::to_string(row.layer) + "," + row.metric + "," + format_number(row.before_clip) + "," +
           format_number(row.after_clip) + "\n";
  }
  return out;
}

PipelineReport run_pipeline(const EmbeddingStore& store, const PipelineOptions& options) {
  PipelineReport report;
  report.outliers = detect_outliers(store, options.threshold, options.skip_input);
  report.clip = options.clip.value_or(clip_spec_from_report(report.outliers));
  const auto clipped = clip_store(store, report.clip);
  report.words = select_words(store, options.min_sentences, options.max_words, options.seed);

  const Index first = (options.skip_input && store.n_layers() > 1) ? 1 : 0;
  std::vector<EvalResult> wic_before;
  std::vector<EvalResult> wic_after;
  std::vector<EvalResult> sts_before;
  std::vector<EvalResult> sts_after;
  for (Index layer = first; layer < store.n_layers(); ++layer) {
    const auto aniso_before = estimate_anisotropy(store, layer, options.n_pairs, options.seed);
    const auto aniso_after = estimate_anisotropy(clipped, layer, options.n_pairs, options.seed);
    report.rows.push_back({layer, "anisotropy", aniso_before.mean_cos, aniso_after.mean_cos});

    const auto self_before = average_self_similarity(store, report.words, aniso_before, options.normalization);
    const auto self_after = average_self_similarity(clipped, report.words, aniso_after, options.normalization);
    report.rows.push_back({layer, "self_similarity", self_before.raw, self_after.raw});
    report.rows.push_back({layer, "adjusted_self_similarity", self_before.adjusted, self_after.adjusted});

    if (!options.wic.empty()) {
      wic_before.push_back(wic_eval(store, options.wic, layer));
      wic_after.push_back(wic_eval(clipped, options.wic, layer));
    }
    if (!options.sts.empty()) {
      sts_before.push_back(sts_eval(store, options.sts, layer));
      sts_after.push_back(sts_eval(clipped, options.sts, layer));
    }
  }
  if (!wic_before.empty()) {
    report.wic_before = merge_results(wic_before);
    report.wic_after = merge_results(wic_after);
  }
  if (!sts_before.empty()) {
    report.sts_before = merge_results(sts_before);
    report.sts_after = merge_results(sts_after);
  }
  return report;
}

ordered_json to_json(const PipelineReport& report, const PipelineOptions& options) {
  ordered_json doc;
  doc["seed"] = options.seed;
  doc["n_pairs"] = options.n_pairs;
  doc["threshold"] = options.threshold;
  doc["skip_input"] = options.skip_input;
  doc["self_similarity_normalization"] =
      options.normalization == SelfSimNormalization::UnorderedPairs ? "unordered_pairs" : "literal_eq1";
  doc["n_words"] = report.words.size();
  doc["outliers"] = to_json(report.outliers);
  doc["clip"] = to_json(report.clip);
  ordered_json rows = ordered_json::array();
  for (const auto& row : report.rows) {
    rows.push_back({{"layer", row.layer},
                    {"metric", row.metric},
                    {"before_clip", number_or_null(row.before_clip)},
                    {"after_clip", number_or_null(row.after_clip)}});
  }
  doc["comparison"] = rows;
  if (report.wic_before) doc["wic"] = {{"before_clip", to_json(*report.wic_before)}, {"after_clip", to_json(*report.wic_after)}};
  if (report.sts_before) doc["sts"] = {{"before_clip", to_json(*report.sts_before)}, {"after_clip", to_json(*report.sts_after)}};
  return doc;
}

}  // namespace posclip
