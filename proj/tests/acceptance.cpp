// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "posclip/clip.hpp"
#include "posclip/evaltasks.hpp"
#include "posclip/geometry.hpp"
#include "posclip/outlier.hpp"
#include "posclip/probe.hpp"

using namespace posclip;
using namespace posclip::testing;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << "\n";
  if (!ok) ++failures;
}

std::string fmt(double value) {
  std::ostringstream out;
  out.precision(6);
  out << value;
  return out.str();
}

// i.i.d. standard normal vectors in D=64 with +10 at dim 3; every layer drawn the same way.
EmbeddingStore planted_store(std::size_t sentences, std::size_t length, std::uint64_t seed) {
  return gaussian_store(2, make_meta(std::vector<std::size_t>(sentences, length)), 64, 3, 10.0F, seed);
}

void planted_recovery() {
  const auto store = planted_store(100, 10, 2024);
  const auto start = std::chrono::steady_clock::now();
  const auto result = detect_outliers(store, 0.8);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool exact = result.outlier_dims.size() == 1 && result.outlier_dims[0].dim == 3 &&
                     result.outlier_dims[0].kind == ExtremumKind::Max && result.outlier_dims[0].frequency == 1.0;
  std::string found;
  for (const auto& o : result.outlier_dims) {
    if (!found.empty()) found += ", ";
    found += "(" + std::to_string(o.dim) + ", " + std::string(to_string(o.kind)) + ", " + fmt(o.frequency) + ")";
  }
  report("planted-outlier recovery", exact && seconds < 1.0,
         "T=1000 D=64 found {" + found + "} in " + fmt(seconds) + " s (want exactly (3, max, 1), < 1 s)");
}

void anisotropy_before_after() {
  // 1000 pairs need 2000 distinct sentences; same generative law, two tokens each
  const auto store = planted_store(2000, 2, 77);
  const auto clipped = clip_store(store, ClipSpec{{{0, 1, {3}}}});
  const double before = estimate_anisotropy(store, 1, 1000, 5).mean_cos;
  const double after = estimate_anisotropy(clipped, 1, 1000, 5).mean_cos;
  report("anisotropy before clipping", before >= 0.9, "mean cos " + fmt(before) + " (want >= 0.9)");
  report("anisotropy after clipping", after >= -0.1 && after <= 0.1, "mean cos " + fmt(after) + " (want in [-0.1, 0.1])");
}

void self_similarity_oracle() {
  std::mt19937_64 engine(31);
  std::uniform_int_distribution<int> count(2, 20);
  std::normal_distribution<float> normal;
  // word k opens n_k consecutive sentences; "same" opens three more with one shared vector
  std::vector<int> occurrences;
  std::vector<std::size_t> lengths;
  std::vector<std::string> first_word;
  for (int k = 0; k < 100; ++k) {
    occurrences.push_back(count(engine));
    for (int i = 0; i < occurrences.back(); ++i) {
      lengths.push_back(1 + engine() % 3);
      first_word.push_back("word" + std::to_string(k));
    }
  }
  lengths.push_back(3);
  first_word.push_back("same");
  lengths.push_back(2);
  first_word.push_back("same");
  lengths.push_back(4);
  first_word.push_back("same");
  const auto meta = make_meta(lengths, [&](std::size_t s, std::size_t p) {
    return p == 0 ? first_word[s] : "filler" + std::to_string(s) + "_" + std::to_string(p);
  });
  const auto store = make_store(1, meta, 24, [&](std::size_t, std::size_t t, std::size_t d) {
    return meta[t].word_key == "same" ? 0.5F + static_cast<float>(d) : normal(engine);
  });

  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto key = "word" + std::to_string(k);
    std::vector<std::vector<double>> vectors;
    for (const auto& o : occurrences_of_word(store, key)) {
      const auto v = store.vector(0, static_cast<Index>(o.token_index));
      vectors.emplace_back(v.begin(), v.end());
    }
    worst = std::max(worst, std::abs(self_similarity(store, key, 0) - oracle_self_similarity(vectors)));
  }
  const double identical = self_similarity(store, "same", 0);
  report("self-similarity oracle", worst <= 1e-12 && identical == 1.0,
         "max |diff| over 100 words " + fmt(worst) + " (want <= 1e-12); identical-vector word " + fmt(identical) +
             " (want exactly 1)");
}

void probe_correctness() {
  // gradient check, D=6, M=4, batch 8
  std::mt19937_64 engine(41);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd weights(4, 6);
    Eigen::MatrixXd batch(8, 6);
    for (Index i = 0; i < weights.size(); ++i) weights(i) = normal(engine);
    for (Index i = 0; i < batch.size(); ++i) batch(i) = normal(engine);
    std::vector<Index> labels;
    for (int i = 0; i < 8; ++i) labels.push_back(static_cast<Index>(engine() % 4));
    Eigen::MatrixXd gradient;
    (void)softmax_cross_entropy<double>(weights, batch, labels, &gradient);
    for (Index i = 0; i < weights.size(); ++i) {
      Eigen::MatrixXd plus = weights;
      Eigen::MatrixXd minus = weights;
      plus(i) += 1e-4;
      minus(i) -= 1e-4;
      const double numeric = (softmax_cross_entropy<double>(plus, batch, labels) -
                              softmax_cross_entropy<double>(minus, batch, labels)) / 2e-4;
      const double scale = std::max(std::abs(numeric) + std::abs(gradient(i)), 1e-8);
      worst = std::max(worst, std::abs(numeric - gradient(i)) / scale);
    }
  }
  report("probe gradient check", worst < 1e-4, "max relative error " + fmt(worst) + " (want < 1e-4)");

  ProbeConfig config;
  config.max_positions = 8;
  config.seed = 1;

  // one-hot(position), D=M=8
  const auto onehot = onehot_position_store(250, 8, 8);
  const auto onehot_split = split_tokens_by_sentence(onehot, 0);
  const auto onehot_model = train_probe(onehot, 1, onehot_split, config);
  const double onehot_acc = probe_accuracy(onehot_model, onehot, 1, onehot_split.test);
  report("probe one-hot fixture", onehot_acc == 1.0,
         "test accuracy after 10 epochs " + fmt(onehot_acc) + " (want 1.0)");

  // position carried by the sign of dim 5 alone; other dims are weak noise
  const auto sign_meta = make_meta(std::vector<std::size_t>(400, 2));
  std::normal_distribution<float> noise(0.0F, 0.1F);
  const auto sign_store = make_store(2, sign_meta, 8, [&](std::size_t, std::size_t t, std::size_t d) {
    if (d == 5) return sign_meta[t].position == 0 ? 1.0F : -1.0F;
    return noise(engine);
  });
  ProbeConfig two = config;
  two.max_positions = 2;
  const auto sign_split = split_tokens_by_sentence(sign_store, 0);
  const auto sign_model = train_probe(sign_store, 1, sign_split, two);
  Index encoding = -1;
  aggregate_contributions(sign_model, sign_store, 1, sign_split.test).mean.maxCoeff(&encoding);
  // one-hot fixture: each position's heatmap row must peak at its own dim
  const auto heat = aggregate_contributions(onehot_model, onehot, 1, onehot_split.test);
  int rows_ok = 0;
  for (Index p = 0; p < 8; ++p) {
    Index best = -1;
    heat.per_position.row(p).maxCoeff(&best);
    if (best == p) ++rows_ok;
  }
  report("probe contribution argmax", encoding == 5 && rows_ok == 8,
         "mean-contribution argmax dim " + std::to_string(encoding) + " (want 5); one-hot heatmap rows peaking at "
         "their own dim " + std::to_string(rows_ok) + "/8");

  // position-independent vectors, M=8
  const auto noise_store = gaussian_store(2, make_meta(std::vector<std::size_t>(500, 8)), 16, -1, 0.0F, 43);
  const auto noise_split = split_tokens_by_sentence(noise_store, 0);
  const double chance_acc = probe_accuracy(train_probe(noise_store, 1, noise_split, config), noise_store, 1,
                                           noise_split.test);
  report("probe chance level", std::abs(chance_acc - 0.125) <= 0.1,
         "test accuracy " + fmt(chance_acc) + " (want 0.125 +- 0.1)");
}

void spearman_oracle() {
  std::mt19937_64 engine(51);
  double worst = 0.0;
  int compared = 0;
  bool monotone_exact = true;
  while (compared < 1000) {
    std::vector<double> x;
    std::vector<double> y;
    for (int i = 0; i < 20; ++i) {
      x.push_back(static_cast<double>(engine() % 8));
      y.push_back(static_cast<double>(engine() % 6) / 4.0);
    }
    const auto constant = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [&](double e) { return e == v[0]; });
    };
    if (constant(x) || constant(y)) continue;
    worst = std::max(worst, std::abs(spearman(x, y) - oracle_spearman(x, y)));
    ++compared;

    std::vector<double> up;
    std::vector<double> down;
    for (const double v : x) {
      up.push_back(std::exp(0.7 * v) + 3.0);
      down.push_back(-v * v * v);
    }
    monotone_exact = monotone_exact && spearman(x, up) == 1.0 && spearman(x, down) == -1.0;
  }
  report("spearman oracle", worst <= 1e-12 && monotone_exact,
         "max |diff| over 1000 tied lists " + fmt(worst) + " (want <= 1e-12); monotone lists exactly +-1: " +
             (monotone_exact ? "yes" : "no"));
}

void pipeline_determinism() {
  TempDir dir;
  const auto meta = make_meta(std::vector<std::size_t>(200, 6), [](std::size_t s, std::size_t p) {
    return p < 2 ? "common" + std::to_string(p) : "w" + std::to_string(s % 17) + "_" + std::to_string(p);
  });
  write_store(gaussian_store(4, meta, 32, 3, 10.0F, 61), dir / "d.emb", dir / "d.jsonl");
  auto run_report = [&](const std::string& sub) {
    std::ostringstream out;
    std::ostringstream err;
    return cli::run({"--out", (dir / sub).string(), "report", "--store", (dir / "d.emb").string(), "--meta",
                     (dir / "d.jsonl").string(), "--seed", "7", "--n-pairs", "50", "--min-sentences", "10"},
                    out, err);
  };
  const int a = run_report("a");
  const int b = run_report("b");
  std::size_t files = 0;
  std::size_t identical = 0;
  if (a == 0 && b == 0) {
    for (const auto& entry : std::filesystem::directory_iterator(dir / "a")) {
      ++files;
      const auto twin = dir / "b" / entry.path().filename();
      if (std::filesystem::exists(twin) && read_file(entry.path()) == read_file(twin)) ++identical;
    }
  }
  report("pipeline determinism", a == 0 && b == 0 && files > 0 && identical == files,
         std::to_string(identical) + "/" + std::to_string(files) + " report files byte-identical across two runs");
}

void clipping_properties() {
  std::mt19937_64 engine(71);
  std::normal_distribution<double> normal;
  int idempotent = 0;
  int local = 0;
  int norm_ok = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Index n = 1 + static_cast<Index>(engine() % 64);
    Eigen::VectorXd v(n);
    for (Index i = 0; i < n; ++i) v[i] = normal(engine);
    std::set<Index> dims;
    for (Index i = 0; i < n; ++i) {
      if (engine() % 4 == 0) dims.insert(i);
    }
    const Eigen::VectorXd once = clip_vector(v, dims);
    if (clip_vector(once, dims) == once) ++idempotent;
    bool untouched = true;
    for (Index i = 0; i < n; ++i) {
      const bool expected_zero = dims.count(i) != 0;
      if (expected_zero ? once[i] != 0.0 : once[i] != v[i]) untouched = false;
    }
    if (untouched) ++local;
    if (once.norm() <= v.norm()) ++norm_ok;
  }
  report("clipping properties", idempotent == 1000 && local == 1000 && norm_ok == 1000,
         "idempotent " + std::to_string(idempotent) + "/1000, local " + std::to_string(local) +
             "/1000, norm non-increasing " + std::to_string(norm_ok) + "/1000");
}

}  // namespace

int main() {
  planted_recovery();
  anisotropy_before_after();
  self_similarity_oracle();
  probe_correctness();
  spearman_oracle();
  pipeline_determinism();
  clipping_properties();
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << "\n";
  return failures == 0 ? 0 : 1;
}
