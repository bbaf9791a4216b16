#include <cstring>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "posclip/random.hpp"
#include "posclip/report.hpp"

using namespace posclip;
using posclip::testing::gaussian_store;
using posclip::testing::make_meta;

namespace {

std::uint64_t fingerprint(const EmbeddingStore& store) {
  const auto data = store.data();
  return seeded_hash(0, std::string_view(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float)));
}

std::vector<TokenMeta> repeated_word_meta(std::size_t sentences) {
  return make_meta(std::vector<std::size_t>(sentences, 4), [](std::size_t s, std::size_t p) {
    if (p == 0) return std::string("the");
    if (p == 1) return std::string(s % 2 == 0 ? "bank" : "river");
    return "w" + std::to_string(s) + "_" + std::to_string(p);
  });
}

}  // namespace

TEST(FormatNumber, ShortestRoundTrip) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(-2.0), "-2");
  EXPECT_EQ(format_number(std::nan("")), "nan");
}

TEST(Pipeline, ClippingPlantedDimReducesAnisotropyAndLeavesInputUntouched) {
  const auto store = gaussian_store(3, repeated_word_meta(60), 32, 3, 10.0F, 5);
  const auto before = fingerprint(store);
  PipelineOptions options;
  options.n_pairs = 20;
  options.seed = 4;
  const auto report = run_pipeline(store, options);
  EXPECT_EQ(fingerprint(store), before);

  ASSERT_EQ(report.outliers.outlier_dims.size(), 1U);
  EXPECT_EQ(report.clip, (ClipSpec{{{1, 2, {3}}}}));
  EXPECT_EQ(report.words, (std::vector<std::string>{"bank", "river", "the"}));
  bool saw_anisotropy = false;
  for (const auto& row : report.rows) {
    if (row.metric == "anisotropy") {
      saw_anisotropy = true;
      EXPECT_GT(row.before_clip, 0.5);
      EXPECT_LT(std::abs(row.after_clip), 0.2);
    }
  }
  EXPECT_TRUE(saw_anisotropy);
  EXPECT_FALSE(report.wic_before.has_value());

  const auto json = to_json(report, options).dump();
  EXPECT_EQ(json, to_json(run_pipeline(store, options), options).dump());
}

TEST(Pipeline, ExplicitClipSpecIsUsed) {
  const auto store = gaussian_store(2, repeated_word_meta(30), 8, -1, 0.0F, 6);
  PipelineOptions options;
  options.n_pairs = 5;
  options.clip = ClipSpec{{{1, 1, {0, 1}}}};
  EXPECT_EQ(run_pipeline(store, options).clip, *options.clip);
}

TEST(Csv, ComparisonAndExtremumLayouts) {
  const auto csv = comparison_csv({{1, "anisotropy", 0.5, 0.25}});
  EXPECT_EQ(csv, "layer,metric,before_clip,after_clip\n1,anisotropy,0.5,0.25\n");
  const auto store = gaussian_store(2, make_meta({3}), 2, -1, 0.0F, 1);
  const auto extremum = extremum_csv(detect_outliers(store, 0.8));
  EXPECT_EQ(extremum.substr(0, extremum.find('\n')), "layer,dim,min_freq,max_freq");
  EXPECT_NE(extremum.find("\npooled,"), std::string::npos);
}
