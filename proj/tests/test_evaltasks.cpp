#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "posclip/evaltasks.hpp"

using namespace posclip;
using posclip::testing::error_kind;
using posclip::testing::gaussian_store;
using posclip::testing::make_meta;
using posclip::testing::make_store;
using posclip::testing::oracle_spearman;

namespace {

// Every sentence has two tokens; token 0 of sentence s is `first(s)`, token 1 is constant.
EmbeddingStore two_token_store(std::size_t n_sentences, std::uint32_t dim,
                               const std::function<float(std::size_t, std::size_t)>& first) {
  const auto meta = make_meta(std::vector<std::size_t>(n_sentences, 2));
  return make_store(1, meta, dim, [&](std::size_t, std::size_t t, std::size_t d) {
    return t % 2 == 0 ? first(t / 2, d) : 1.0F;
  });
}

PairExample pair(std::size_t a, std::size_t b, double gold) {
  return {std::to_string(a) + "-" + std::to_string(b), "s" + std::to_string(a), "s" + std::to_string(b),
          TokenSpan{2 * a, 2 * a}, TokenSpan{2 * b, 2 * b}, gold};
}

}  // namespace

TEST(MeanPool, AveragesSentenceTokens) {
  const auto meta = make_meta({2, 1});
  const EmbeddingStore store(1, 3, 2, {1, 2, 3, 6, 5, 5}, meta);
  EXPECT_EQ(mean_pool(store, 0, "s0"), Eigen::Vector2d(2, 4));
  EXPECT_EQ(mean_pool(store, 0, "s1"), Eigen::Vector2d(5, 5));
  EXPECT_EQ(error_kind([&] { (void)mean_pool(store, 0, "missing"); }), ErrorKind::EmptySentence);
}

TEST(Spearman, Examples) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> up{2, 4, 8, 16, 32};
  const std::vector<double> down{5, 4, 3, 2, 1};
  EXPECT_EQ(spearman(x, up), 1.0);
  EXPECT_EQ(spearman(x, down), -1.0);
  const std::vector<double> tied{1, 2, 2, 3};
  const std::vector<double> other{1, 3, 2, 4};
  EXPECT_NEAR(spearman(tied, other), oracle_spearman(tied, other), 1e-12);
  EXPECT_EQ(error_kind([] { (void)spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}); }),
            ErrorKind::ConstantInput);
  EXPECT_EQ(error_kind([] { (void)spearman(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}); }),
            ErrorKind::LengthMismatch);
}

TEST(Spearman, MatchesOracleWithTies) {
  std::mt19937 engine(13);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> x;
    std::vector<double> y;
    for (int i = 0; i < 20; ++i) {
      x.push_back(static_cast<double>(engine() % 7));
      y.push_back(static_cast<double>(engine() % 5) * 0.5);
    }
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) continue;
    if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; })) continue;
    EXPECT_NEAR(spearman(x, y), oracle_spearman(x, y), 1e-12);
  }
}

TEST(Spearman, InvariantUnderMonotoneTransforms) {
  std::mt19937 engine(14);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> x_transformed;
    for (int i = 0; i < 15; ++i) {
      x.push_back(normal(engine));
      y.push_back(normal(engine));
      x_transformed.push_back(std::exp(3.0 * x.back()) + 7.0);
    }
    EXPECT_EQ(spearman(x, y), spearman(x_transformed, y));
    EXPECT_EQ(spearman(x, y), spearman(y, x));
  }
}

TEST(WordInContext, SeparableExampleAndBaseline) {
  // sentence 2k and 2k+1 share a target vector; sentences 2k and 2k+2 are orthogonal
  const auto store = two_token_store(8, 8, [](std::size_t s, std::size_t d) { return d == s / 2 ? 1.0F : 0.0F; });
  const std::vector<PairExample> examples{pair(0, 1, 1), pair(2, 3, 1), pair(0, 2, 0), pair(4, 6, 0)};
  const auto result = wic_eval(store, examples, 0);
  ASSERT_EQ(result.rows.size(), 9U);
  for (const auto& row : result.rows) EXPECT_EQ(row.value, 1.0);
  EXPECT_EQ(result.best.threshold, 0.1);
  EXPECT_EQ(result.baseline, 0.5);
}

TEST(WordInContext, BestBeatsTrivialPredictorsAndThresholdsAreOrdered) {
  std::mt19937 engine(15);
  std::normal_distribution<float> normal;
  std::vector<std::vector<float>> vectors;
  for (int s = 0; s < 40; ++s) {
    vectors.emplace_back();
    for (int d = 0; d < 6; ++d) vectors.back().push_back(normal(engine) + 1.0F);
  }
  const auto store = two_token_store(40, 6, [&](std::size_t s, std::size_t d) { return vectors[s][d]; });
  std::vector<PairExample> examples;
  for (std::size_t i = 0; i + 1 < 40; i += 2) examples.push_back(pair(i, i + 1, engine() % 2));
  // a threshold of -1 predicts "same" for everything; 1 predicts "different" for everything
  const std::vector<double> thresholds{-1.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0};
  const auto result = wic_eval(store, examples, 0, thresholds);
  EXPECT_EQ(result.rows.front().value, *result.baseline);
  EXPECT_EQ(result.rows.back().value, 1.0 - *result.baseline);
  EXPECT_GE(result.best.value, std::max(*result.baseline, 1.0 - *result.baseline));

  // all-positive set: accuracy can only fall as the threshold rises
  for (auto& example : examples) example.gold = 1;
  const auto positives = wic_eval(store, examples, 0, thresholds);
  for (std::size_t i = 1; i < positives.rows.size(); ++i) {
    EXPECT_LE(positives.rows[i].value, positives.rows[i - 1].value);
  }
}

TEST(WordInContext, MissingTargetAndEmptySet) {
  const auto store = two_token_store(2, 2, [](auto...) { return 1.0F; });
  auto example = pair(0, 1, 1);
  example.span_b.reset();
  EXPECT_EQ(error_kind([&] { (void)wic_eval(store, std::vector<PairExample>{example}, 0); }), ErrorKind::MissingTarget);
  example.span_b = TokenSpan{0, 0};  // token of s0, not s1
  EXPECT_EQ(error_kind([&] { (void)wic_eval(store, std::vector<PairExample>{example}, 0); }), ErrorKind::MissingTarget);
  EXPECT_EQ(error_kind([&] { (void)wic_eval(store, std::vector<PairExample>{}, 0); }), ErrorKind::EmptyEvalSet);
}

TEST(Sts, PerfectOrderingGivesPlusMinusHundred) {
  // sentence 0 is the anchor; sentence k sits at angle k * 10 degrees from it
  const auto meta = make_meta(std::vector<std::size_t>(7, 1));
  const auto store = make_store(1, meta, 2, [](std::size_t, std::size_t t, std::size_t d) {
    const double angle = static_cast<double>(t) * 10.0 * M_PI / 180.0;
    return static_cast<float>(d == 0 ? std::cos(angle) : std::sin(angle));
  });
  std::vector<PairExample> agree;
  std::vector<PairExample> disagree;
  for (std::size_t k = 1; k < 7; ++k) {
    agree.push_back({"", "s0", "s" + std::to_string(k), std::nullopt, std::nullopt, 5.0 - 0.5 * static_cast<double>(k)});
    disagree.push_back({"", "s0", "s" + std::to_string(k), std::nullopt, std::nullopt, 0.5 * static_cast<double>(k)});
  }
  EXPECT_EQ(sts_eval(store, agree, 0).best.value, 100.0);
  EXPECT_EQ(sts_eval(store, disagree, 0).best.value, -100.0);

  // rescaling every vector changes nothing
  std::vector<float> scaled(store.data().begin(), store.data().end());
  for (auto& v : scaled) v *= 3.5F;
  EXPECT_EQ(sts_eval(store.with_data(std::move(scaled)), agree, 0).best.value, 100.0);
  EXPECT_EQ(error_kind([&] { (void)sts_eval(store, std::span(agree).first(1), 0); }), ErrorKind::LengthMismatch);
}

TEST(Classifier, SeparableSentencesAreClassifiedPerfectly) {
  const auto meta = make_meta(std::vector<std::size_t>(300, 3));
  const auto store = make_store(1, meta, 4, [&](std::size_t, std::size_t t, std::size_t d) {
    const std::size_t label = (t / 3) % 3;
    return d == label ? 1.0F : 0.0F;
  });
  std::vector<LabeledSentence> labels;
  for (std::size_t s = 0; s < 300; ++s) labels.push_back({"", "s" + std::to_string(s), static_cast<Index>(s % 3), {}});
  ProbeConfig config;
  config.batch_size = 32;
  const auto result = train_linear_classifier(store, 0, labels, 3, config);
  EXPECT_EQ(result.test_accuracy, 1.0);
  EXPECT_EQ(result.val_accuracy, 1.0);
}

TEST(Classifier, ShuffledLabelsStayAtChance) {
  const auto meta = make_meta(std::vector<std::size_t>(3000, 2));
  const auto store = gaussian_store(1, meta, 8, -1, 0.0F, 21);
  std::mt19937 engine(22);
  std::vector<LabeledSentence> labels;
  for (std::size_t s = 0; s < 3000; ++s) {
    labels.push_back({"", "s" + std::to_string(s), static_cast<Index>(engine() % 2), {}});
  }
  ProbeConfig config;
  config.batch_size = 64;
  EXPECT_NEAR(train_linear_classifier(store, 0, labels, 2, config).test_accuracy, 0.5, 0.1);
}

TEST(Classifier, ExplicitSplitsAndErrors) {
  const auto meta = make_meta(std::vector<std::size_t>(4, 1));
  const auto store = make_store(1, meta, 2, [](std::size_t, std::size_t t, std::size_t d) {
    return d == t % 2 ? 1.0F : 0.0F;
  });
  std::vector<LabeledSentence> labels{{"a", "s0", 0, SplitPart::Train},
                                      {"b", "s1", 1, SplitPart::Train},
                                      {"c", "s2", 0, SplitPart::Test},
                                      {"d", "s3", 1, SplitPart::Test}};
  ProbeConfig config;
  const auto result = train_linear_classifier(store, 0, labels, 2, config);
  EXPECT_EQ(result.test_accuracy, 1.0);
  EXPECT_TRUE(std::isnan(result.val_accuracy));
  labels[3].label = 2;
  EXPECT_EQ(error_kind([&] { (void)train_linear_classifier(store, 0, labels, 2, config); }), ErrorKind::MalformedInput);
  labels[3].label = 1;
  labels[2].split = labels[3].split = SplitPart::Train;
  EXPECT_EQ(error_kind([&] { (void)train_linear_classifier(store, 0, labels, 2, config); }), ErrorKind::EmptySplit);
}

TEST(TaskFiles, ParsePairAndLabelledRecords) {
  const auto wic = parse_pair_tasks(
      "{\"id\":\"w1\",\"sent_a\":\"s0\",\"sent_b\":3,\"span_a\":[0,1],\"span_b\":7,\"gold\":true}\n"
      "\n"
      "{\"sent_a\":\"s0\",\"sent_b\":\"s1\",\"span_a\":0,\"span_b\":2,\"gold\":0}\n",
      PairTaskKind::WordInContext);
  ASSERT_EQ(wic.size(), 2U);
  EXPECT_EQ(wic[0].sent_b, "3");
  EXPECT_EQ(wic[0].span_a->last, 1U);
  EXPECT_EQ(wic[0].span_b->first, 7U);
  EXPECT_EQ(wic[0].gold, 1.0);
  EXPECT_EQ(wic[1].id, "3");
  EXPECT_EQ(wic[1].gold, 0.0);

  const auto sts = parse_pair_tasks("{\"sent_a\":\"a\",\"sent_b\":\"b\",\"gold\":4.2}\n", PairTaskKind::Sts);
  EXPECT_EQ(sts[0].gold, 4.2);
  EXPECT_FALSE(sts[0].span_a.has_value());
  EXPECT_EQ(error_kind([] { (void)parse_pair_tasks("{\"sent_a\":\"a\",\"sent_b\":\"b\",\"gold\":6}", PairTaskKind::Sts); }),
            ErrorKind::MalformedInput);
  EXPECT_EQ(error_kind([] { (void)parse_pair_tasks("{\"sent_a\":\"a\",\"gold\":1}", PairTaskKind::Sts); }),
            ErrorKind::MalformedInput);
  EXPECT_EQ(error_kind([] { (void)parse_pair_tasks("{\"sent_a\":\"a\",\"sent_b\":\"b\",\"span_a\":[3,1],\"gold\":1}",
                                                   PairTaskKind::WordInContext); }),
            ErrorKind::MalformedInput);

  const auto labelled = parse_labeled_sentences(
      "{\"sent\":\"s1\",\"gold\":2,\"split\":\"dev\"}\n{\"id\":9,\"sent\":4,\"gold\":0}\n");
  ASSERT_EQ(labelled.size(), 2U);
  EXPECT_EQ(labelled[0].split, SplitPart::Val);
  EXPECT_EQ(labelled[1].id, "9");
  EXPECT_FALSE(labelled[1].split.has_value());
  EXPECT_EQ(error_kind([] { (void)parse_labeled_sentences("{\"sent\":\"s\",\"gold\":1,\"split\":\"x\"}"); }),
            ErrorKind::MalformedInput);
}

TEST(MergeResults, KeepsRowsAndEarliestBest) {
  EvalResult a{"wic", {{1, 0.5, 0.6}}, 0.5, {1, 0.5, 0.6}};
  EvalResult b{"wic", {{2, 0.3, 0.7}}, 0.5, {2, 0.3, 0.7}};
  EvalResult c{"wic", {{3, 0.3, 0.7}}, 0.5, {3, 0.3, 0.7}};
  const std::vector<EvalResult> parts{a, b, c};
  const auto merged = merge_results(parts);
  EXPECT_EQ(merged.rows.size(), 3U);
  EXPECT_EQ(merged.best.layer, 2);
  EXPECT_EQ(merged.baseline, 0.5);
}
