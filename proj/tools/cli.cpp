#include "cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <utility>

#include <CLI11.hpp>
#include <json.hpp>

#include "posclip/clip.hpp"
#include "posclip/error.hpp"
#include "posclip/evaltasks.hpp"
#include "posclip/geometry.hpp"
#include "posclip/outlier.hpp"
#include "posclip/probe.hpp"
#include "posclip/report.hpp"
#include "posclip/store.hpp"

namespace posclip::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr const char* kLayerHelp =
    "Layers to analyse: 'all', 'lo-hi' (inclusive) or a comma list. Layer 0 is the input-embedding layer; "
    "the first transformer layer is 1. Default: every non-input layer.";

struct StoreArgs {
  std::string store;
  std::string meta;
  std::string layers;
  bool include_input = false;
  std::string clip_path;
  std::optional<double> auto_clip;
};

struct Outputs {
  std::vector<std::pair<std::string, std::string>> files;
  void add(std::string name, std::string content) { files.emplace_back(std::move(name), std::move(content)); }
};

void add_store_options(CLI::App* sub, StoreArgs& args, bool with_clip) {
  sub->add_option("--store", args.store, "EMB1 tensor file")->required();
  sub->add_option("--meta", args.meta, "token metadata (JSON lines)")->required();
  sub->add_option("--layers", args.layers, kLayerHelp);
  sub->add_flag("--include-input", args.include_input, "include layer 0 in the default layer set");
  if (with_clip) {
    auto* clip = sub->add_option("--clip", args.clip_path, "clip spec JSON applied before analysis");
    auto* autoclip =
        sub->add_option("--auto-clip", args.auto_clip, "derive the clip spec from outlier detection at this threshold");
    clip->excludes(autoclip);
  }
}

std::string with_file(const std::string& path, const std::exception& e) { return path + ": " + e.what(); }

EmbeddingStore load(const StoreArgs& args) {
  try {
    return load_store(args.store, args.meta);
  } catch (const Error& e) {
    throw Error(e.kind(), args.store + " / " + args.meta + ": " + e.what());
  }
}

std::string read_input(const std::string& path) { return read_file(path); }

std::vector<Index> select_layers(const StoreArgs& args, Index n_layers) {
  std::vector<Index> layers;
  const Index first = (args.include_input || n_layers == 1) ? 0 : 1;
  if (args.layers.empty()) {
    for (Index l = first; l < n_layers; ++l) layers.push_back(l);
    return layers;
  }
  if (args.layers == "all") {
    for (Index l = 0; l < n_layers; ++l) layers.push_back(l);
    return layers;
  }
  auto parse_index = [&](const std::string& text) -> Index {
    try {
      std::size_t used = 0;
      const auto value = std::stoll(text, &used);
      if (used != text.size() || value < 0 || value >= n_layers) throw std::out_of_range(text);
      return static_cast<Index>(value);
    } catch (const std::exception&) {
      throw Error(ErrorKind::IndexOutOfRange, "--layers: '" + text + "' is not a layer in [0, " +
                                                  std::to_string(n_layers) + ")");
    }
  };
  std::stringstream stream(args.layers);
  std::string part;
  while (std::getline(stream, part, ',')) {
    const auto dash = part.find('-');
    if (dash == std::string::npos) {
      layers.push_back(parse_index(part));
    } else {
      const auto lo = parse_index(part.substr(0, dash));
      const auto hi = parse_index(part.substr(dash + 1));
      for (Index l = lo; l <= hi; ++l) layers.push_back(l);
    }
  }
  return layers;
}

/// Resolves --clip / --auto-clip. nullopt when neither was given.
std::optional<ClipSpec> resolve_clip(const StoreArgs& args, const EmbeddingStore& store) {
  if (!args.clip_path.empty()) {
    try {
      return parse_clip_spec(read_input(args.clip_path));
    } catch (const Error& e) {
      throw Error(e.kind(), with_file(args.clip_path, e));
    }
  }
  if (args.auto_clip) return clip_spec_from_report(detect_outliers(store, *args.auto_clip, !args.include_input));
  return std::nullopt;
}

EmbeddingStore maybe_clipped(const StoreArgs& args, const EmbeddingStore& store, Outputs& outputs) {
  if (auto spec = resolve_clip(args, store)) {
    outputs.add("clip_spec.json", format_clip_spec(*spec));
    return clip_store(store, *spec);
  }
  return store;
}

void commit(const fs::path& dir, const Outputs& outputs) {
  fs::create_directories(dir);
  for (const auto& [name, content] : outputs.files) {
    const auto path = dir / name;
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw Error(ErrorKind::Io, "cannot write " + path.string());
    file.write(content.data(), static_cast<std::streamsize>(content.size()));
  }
}

std::string dump(const ordered_json& doc) { return doc.dump(2) + "\n"; }

std::vector<PairExample> load_pairs(const std::string& path, PairTaskKind kind) {
  try {
    return parse_pair_tasks(read_input(path), kind);
  } catch (const Error& e) {
    throw Error(e.kind(), with_file(path, e));
  }
}

// ---- subcommands ----------------------------------------------------------

void cmd_inspect(const StoreArgs& args, Outputs& outputs, std::ostream& out) {
  const auto store = load(args);
  std::set<std::string> words;
  for (const auto& token : store.meta()) words.insert(fold_case(token.word_key));
  ordered_json doc{{"n_layers", store.n_layers()},
                   {"n_tokens", store.n_tokens()},
                   {"dim", store.dim()},
                   {"version", store.header().version},
                   {"float_width", store.header().float_width},
                   {"n_sentences", store.sentences().size()},
                   {"n_word_keys", words.size()}};
  out << doc.dump(2) << "\n";
  outputs.add("inspect.json", dump(doc));
}

void cmd_outliers(const StoreArgs& args, double threshold, Outputs& outputs) {
  const auto store = load(args);
  const auto report = detect_outliers(store, threshold, !args.include_input);
  outputs.add("outliers.json", dump(to_json(report)));
  outputs.add("extremum.csv", extremum_csv(report));

  std::string means_csv = "layer,dim,mean\n";
  const auto means = layer_mean_vectors(store, !args.include_input);
  const Index first = store.n_layers() - static_cast<Index>(means.size());
  for (std::size_t i = 0; i < means.size(); ++i) {
    for (Index d = 0; d < means[i].size(); ++d) {
      means_csv += std::to_string(first + static_cast<Index>(i)) + "," + std::to_string(d) + "," +
                   format_number(means[i][d]) + "\n";
    }
  }
  outputs.add("layer_means.csv", means_csv);
}

void cmd_topk(const std::string& params_path, const std::string& name_filter, Index k, const std::string& by,
              Outputs& outputs) {
  std::vector<ParamVector> params;
  try {
    params = parse_params(read_input(params_path));
  } catch (const Error& e) {
    throw Error(e.kind(), with_file(params_path, e));
  }
  const auto key = parse_rank_by(by);
  ordered_json doc = ordered_json::array();
  for (const auto& param : params) {
    if (!name_filter.empty() && param.name.find(name_filter) == std::string::npos) continue;
    ordered_json ranked = ordered_json::array();
    for (const auto& element : topk_elements(param, k, key)) {
      ranked.push_back({{"dim", element.dim}, {"value", element.value}});
    }
    doc.push_back({{"name", param.name}, {"by", by}, {"k", k}, {"top", ranked}});
  }
  if (doc.empty()) throw Error(ErrorKind::MalformedInput, params_path + ": no parameter vector matches the filter");
  outputs.add("topk.json", dump(doc));
}

void cmd_anisotropy(const StoreArgs& args, Index n_pairs, std::uint64_t seed, Outputs& outputs) {
  const auto source = load(args);
  const auto store = maybe_clipped(args, source, outputs);
  ordered_json doc = ordered_json::array();
  std::string csv = "layer,mean_cos,n_pairs,seed\n";
  for (const auto layer : select_layers(args, store.n_layers())) {
    const auto estimate = estimate_anisotropy(store, layer, n_pairs, seed);
    doc.push_back(to_json(estimate));
    csv += std::to_string(layer) + "," + format_number(estimate.mean_cos) + "," + std::to_string(n_pairs) + "," +
           std::to_string(seed) + "\n";
  }
  outputs.add("anisotropy.json", dump(doc));
  outputs.add("anisotropy.csv", csv);
}

struct SelfSimArgs {
  Index n_pairs = kDefaultAnisotropyPairs;
  Index min_sentences = 10;
  Index max_words = 1000;
  bool literal_eq1 = false;
};

void cmd_selfsim(const StoreArgs& args, const SelfSimArgs& opts, std::uint64_t seed, Outputs& outputs) {
  const auto source = load(args);
  const auto store = maybe_clipped(args, source, outputs);
  const auto words = select_words(store, opts.min_sentences, opts.max_words, seed);
  if (words.empty()) {
    throw Error(ErrorKind::TooFewOccurrences, "no word occurs in at least " + std::to_string(opts.min_sentences) +
                                                  " sentences");
  }
  const auto normalization =
      opts.literal_eq1 ? SelfSimNormalization::LiteralEq1 : SelfSimNormalization::UnorderedPairs;
  std::string detail = "word,layer,raw,adjusted,n_occurrences\n";
  std::string summary = "layer,anisotropy,mean_raw,mean_adjusted,n_words\n";
  for (const auto layer : select_layers(args, store.n_layers())) {
    const auto aniso = estimate_anisotropy(store, layer, opts.n_pairs, seed);
    double raw = 0.0;
    double adjusted = 0.0;
    for (const auto& word : words) {
      const auto result = self_similarity_result(store, word, aniso, normalization);
      raw += result.raw;
      adjusted += result.adjusted;
      ordered_json quoted = word;
      detail += quoted.dump() + "," + std::to_string(layer) + "," + format_number(result.raw) + "," +
                format_number(result.adjusted) + "," + std::to_string(result.n_occurrences) + "\n";
    }
    const auto n = static_cast<double>(words.size());
    summary += std::to_string(layer) + "," + format_number(aniso.mean_cos) + "," + format_number(raw / n) + "," +
               format_number(adjusted / n) + "," + std::to_string(words.size()) + "\n";
  }
  outputs.add("selfsim.csv", detail);
  outputs.add("selfsim_summary.csv", summary);
}

void cmd_probe(const StoreArgs& args, const ProbeConfig& config, bool predicted_class, Outputs& outputs) {
  const auto source = load(args);
  const auto store = maybe_clipped(args, source, outputs);
  const auto split = split_tokens_by_sentence(store, config.seed);
  std::string accuracy_csv = "layer,val_accuracy,test_accuracy\n";
  std::string mean_csv = "layer,dim,mean_contribution\n";
  const auto row = predicted_class ? ContributionClass::Predicted : ContributionClass::Gold;
  for (const auto layer : select_layers(args, store.n_layers())) {
    const auto model = train_probe(store, layer, split, config);
    const double val = split.val.empty() ? std::nan("") : probe_accuracy(model, store, layer, split.val);
    const double test = probe_accuracy(model, store, layer, split.test);
    accuracy_csv += std::to_string(layer) + "," + format_number(val) + "," + format_number(test) + "\n";
    const auto summary = aggregate_contributions(model, store, layer, split.test, row);
    for (Index d = 0; d < summary.mean.size(); ++d) {
      mean_csv += std::to_string(layer) + "," + std::to_string(d) + "," + format_number(summary.mean[d]) + "\n";
    }
    outputs.add("probe_layer" + std::to_string(layer) + ".jsonl", format_probe_model(model));
    outputs.add("contributions_layer" + std::to_string(layer) + ".csv", contribution_heatmap_csv(summary));
  }
  outputs.add("probe_accuracy.csv", accuracy_csv);
  outputs.add("contributions_mean.csv", mean_csv);
}

void cmd_clip(const StoreArgs& args, Outputs& outputs) {
  if (args.clip_path.empty() && !args.auto_clip) {
    throw CLI::RequiredError("clip needs --clip or --auto-clip");
  }
  const auto source = load(args);
  const auto clipped = maybe_clipped(args, source, outputs);
  const auto bytes = encode_tensor(clipped);
  outputs.add("clipped.emb", std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  outputs.add("clipped.jsonl", format_meta(clipped.meta()));
}

void cmd_eval_pairs(const StoreArgs& args, const std::string& task_path, PairTaskKind kind,
                    const std::vector<double>& thresholds, Outputs& outputs) {
  const auto source = load(args);
  const auto store = maybe_clipped(args, source, outputs);
  const auto examples = load_pairs(task_path, kind);
  std::vector<EvalResult> per_layer;
  for (const auto layer : select_layers(args, store.n_layers())) {
    per_layer.push_back(kind == PairTaskKind::WordInContext ? wic_eval(store, examples, layer, thresholds)
                                                            : sts_eval(store, examples, layer));
  }
  const auto merged = merge_results(per_layer);
  const std::string stem = kind == PairTaskKind::WordInContext ? "wic" : "sts";
  outputs.add(stem + ".json", dump(to_json(merged)));
  outputs.add(stem + ".csv", eval_csv(merged));
}

void cmd_eval_cls(const StoreArgs& args, const std::string& task_path, Index n_classes, const ProbeConfig& config,
                  Outputs& outputs) {
  const auto source = load(args);
  const auto store = maybe_clipped(args, source, outputs);
  std::vector<LabeledSentence> labels;
  try {
    labels = parse_labeled_sentences(read_input(task_path));
  } catch (const Error& e) {
    throw Error(e.kind(), with_file(task_path, e));
  }
  ordered_json rows = ordered_json::array();
  std::string csv = "task,layer,val_accuracy,test_accuracy\n";
  std::optional<ClassifierResult> best;
  for (const auto layer : select_layers(args, store.n_layers())) {
    const auto result = train_linear_classifier(store, layer, labels, n_classes, config);
    rows.push_back({{"layer", layer},
                    {"val_accuracy", std::isnan(result.val_accuracy) ? ordered_json(nullptr)
                                                                      : ordered_json(result.val_accuracy)},
                    {"test_accuracy", result.test_accuracy},
                    {"epoch_loss", result.epoch_loss}});
    csv += "cls," + std::to_string(layer) + "," + format_number(result.val_accuracy) + "," +
           format_number(result.test_accuracy) + "\n";
    if (!best || result.test_accuracy > best->test_accuracy) best = result;
  }
  ordered_json doc{{"task", "cls"},
                   {"n_classes", n_classes},
                   {"best", {{"layer", best->layer}, {"value", best->test_accuracy}}},
                   {"rows", rows}};
  outputs.add("cls.json", dump(doc));
  outputs.add("cls.csv", csv);
}

void cmd_report(const StoreArgs& args, PipelineOptions options, const SelfSimArgs& opts, const std::string& wic_path,
                const std::string& sts_path, Outputs& outputs) {
  const auto store = load(args);
  options.skip_input = !args.include_input;
  if (args.auto_clip) options.threshold = *args.auto_clip;
  options.clip = resolve_clip(args, store);
  options.n_pairs = opts.n_pairs;
  options.min_sentences = opts.min_sentences;
  options.max_words = opts.max_words;
  options.normalization = opts.literal_eq1 ? SelfSimNormalization::LiteralEq1 : SelfSimNormalization::UnorderedPairs;
  if (!wic_path.empty()) options.wic = load_pairs(wic_path, PairTaskKind::WordInContext);
  if (!sts_path.empty()) options.sts = load_pairs(sts_path, PairTaskKind::Sts);

  const auto report = run_pipeline(store, options);
  outputs.add("report.json", dump(to_json(report, options)));
  outputs.add("avg_cos_self_sim.csv", comparison_csv(report.rows));
  outputs.add("outliers.json", dump(to_json(report.outliers)));
  outputs.add("extremum.csv", extremum_csv(report.outliers));
  outputs.add("clip_spec.json", format_clip_spec(report.clip));
  if (report.wic_before) {
    outputs.add("wic_before.csv", eval_csv(*report.wic_before));
    outputs.add("wic_after.csv", eval_csv(*report.wic_after));
  }
  if (report.sts_before) {
    outputs.add("sts_before.csv", eval_csv(*report.sts_before));
    outputs.add("sts_after.csv", eval_csv(*report.sts_after));
  }
}

void add_train_options(CLI::App* sub, ProbeConfig& config) {
  sub->add_option("--epochs", config.epochs, "training epochs")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--batch-size", config.batch_size, "mini-batch size")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--lr", config.learning_rate, "Adam learning rate")->capture_default_str();
  sub->add_option("--seed", config.seed, "seed for the split and shuffle order")->required();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"posclip: outlier dimensions, positional probes and clipping diagnostics for embedding dumps"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string out_dir;
  if (const char* env = std::getenv(kOutDirEnv)) out_dir = env;
  if (out_dir.empty()) out_dir = ".";
  app.add_option("--out", out_dir, std::string("output directory (default: $") + kOutDirEnv + " or .)");

  StoreArgs store_args;
  double threshold = kDefaultOutlierThreshold;
  Index n_pairs = kDefaultAnisotropyPairs;
  std::uint64_t seed = 0;
  SelfSimArgs selfsim;
  ProbeConfig probe_config;
  ProbeConfig cls_config;
  bool predicted_class = false;
  std::string params_path;
  std::string name_filter;
  Index k = 6;
  std::string rank_by = "value";
  std::string task_path;
  std::vector<double> thresholds = default_wic_thresholds();
  Index n_classes = 2;
  std::string wic_path;
  std::string sts_path;

  auto* inspect = app.add_subcommand("inspect", "summarise a dump");
  add_store_options(inspect, store_args, false);

  auto* outliers = app.add_subcommand("outliers", "per-layer extremum frequencies and outlier dimensions");
  add_store_options(outliers, store_args, false);
  outliers->add_option("--threshold", threshold, "minimum extremum frequency")->capture_default_str();

  auto* topk = app.add_subcommand("topk", "rank elements of parameter vectors");
  topk->add_option("--params", params_path, "parameter vectors (JSON lines)")->required();
  topk->add_option("--name", name_filter, "only vectors whose name contains this text");
  topk->add_option("--k", k, "number of elements")->capture_default_str();
  topk->add_option("--by", rank_by, "ranking key")->check(CLI::IsMember({"value", "abs", "neg"}))->capture_default_str();

  auto* anisotropy = app.add_subcommand("anisotropy", "mean cosine between random token pairs per layer");
  add_store_options(anisotropy, store_args, true);
  anisotropy->add_option("--n-pairs", n_pairs, "sentence pairs sampled")->capture_default_str();
  anisotropy->add_option("--seed", seed, "sampling seed")->required();

  auto* selfsim_cmd = app.add_subcommand("selfsim", "self-similarity of frequent words, raw and adjusted");
  add_store_options(selfsim_cmd, store_args, true);
  selfsim_cmd->add_option("--n-pairs", selfsim.n_pairs, "anisotropy sentence pairs")->capture_default_str();
  selfsim_cmd->add_option("--min-sentences", selfsim.min_sentences, "minimum distinct sentences per word")
      ->capture_default_str();
  selfsim_cmd->add_option("--max-words", selfsim.max_words, "words sampled")->capture_default_str();
  selfsim_cmd->add_flag("--literal-eq1", selfsim.literal_eq1, "divide the pair sum by n(n-1)");
  selfsim_cmd->add_option("--seed", seed, "sampling seed")->required();

  auto* probe = app.add_subcommand("probe", "train position probes and aggregate neuron contributions");
  add_store_options(probe, store_args, true);
  add_train_options(probe, probe_config);
  probe->add_option("--max-positions", probe_config.max_positions, "position classes M")->capture_default_str();
  probe->add_flag("--predicted-class", predicted_class, "score contributions on the predicted row");

  auto* clip = app.add_subcommand("clip", "write a clipped copy of the dump");
  add_store_options(clip, store_args, true);

  auto* eval_wic = app.add_subcommand("eval-wic", "word-in-context threshold accuracy per layer");
  add_store_options(eval_wic, store_args, true);
  eval_wic->add_option("--task", task_path, "task file (JSON lines)")->required();
  eval_wic->add_option("--thresholds", thresholds, "cosine thresholds")->delimiter(',');

  auto* eval_sts = app.add_subcommand("eval-sts", "STS Spearman correlation of mean-pooled embeddings");
  add_store_options(eval_sts, store_args, true);
  eval_sts->add_option("--task", task_path, "task file (JSON lines)")->required();

  auto* eval_cls = app.add_subcommand("eval-cls", "linear classification on frozen mean-pooled embeddings");
  add_store_options(eval_cls, store_args, true);
  eval_cls->add_option("--task", task_path, "task file (JSON lines)")->required();
  eval_cls->add_option("--n-classes", n_classes, "number of classes")->capture_default_str();
  add_train_options(eval_cls, cls_config);

  auto* report = app.add_subcommand("report", "before/after-clip comparison pipeline");
  add_store_options(report, store_args, true);
  report->add_option("--seed", seed, "sampling seed")->required();
  report->add_option("--n-pairs", selfsim.n_pairs, "anisotropy sentence pairs")->capture_default_str();
  report->add_option("--min-sentences", selfsim.min_sentences, "minimum distinct sentences per word")
      ->capture_default_str();
  report->add_option("--max-words", selfsim.max_words, "words sampled")->capture_default_str();
  report->add_flag("--literal-eq1", selfsim.literal_eq1, "divide the pair sum by n(n-1)");
  report->add_option("--wic", wic_path, "optional word-in-context task file");
  report->add_option("--sts", sts_path, "optional STS task file");

  std::vector<const char*> argv{"posclip"};
  for (const auto& arg : args) argv.push_back(arg.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    return kExitUsage;
  }

  Outputs outputs;
  try {
    if (inspect->parsed()) cmd_inspect(store_args, outputs, out);
    if (outliers->parsed()) cmd_outliers(store_args, threshold, outputs);
    if (topk->parsed()) cmd_topk(params_path, name_filter, k, rank_by, outputs);
    if (anisotropy->parsed()) cmd_anisotropy(store_args, n_pairs, seed, outputs);
    if (selfsim_cmd->parsed()) cmd_selfsim(store_args, selfsim, seed, outputs);
    if (probe->parsed()) cmd_probe(store_args, probe_config, predicted_class, outputs);
    if (clip->parsed()) cmd_clip(store_args, outputs);
    if (eval_wic->parsed()) cmd_eval_pairs(store_args, task_path, PairTaskKind::WordInContext, thresholds, outputs);
    if (eval_sts->parsed()) cmd_eval_pairs(store_args, task_path, PairTaskKind::Sts, {}, outputs);
    if (eval_cls->parsed()) cmd_eval_cls(store_args, task_path, n_classes, cls_config, outputs);
    if (report->parsed()) {
      PipelineOptions options;
      options.seed = seed;
      cmd_report(store_args, options, selfsim, wic_path, sts_path, outputs);
    }
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }

  try {
    commit(out_dir, outputs);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace posclip::cli
