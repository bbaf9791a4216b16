#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "posclip/error.hpp"
#include "posclip/store.hpp"

namespace posclip {

inline constexpr Index kDefaultAnisotropyPairs = 1000;

/// Cosine similarity in double precision, clamped to [-1, 1].
/// Throws ZeroVector if either argument has zero norm.
template <typename DerivedA, typename DerivedB>
double cosine(const Eigen::MatrixBase<DerivedA>& u, const Eigen::MatrixBase<DerivedB>& v) {
  if (u.size() != v.size()) {
    throw Error(ErrorKind::DimMismatch,
                "cosine of vectors with lengths " + std::to_string(u.size()) + " and " + std::to_string(v.size()));
  }
  const auto a = u.template cast<double>();
  const auto b = v.template cast<double>();
  const double norm_a = a.norm();
  const double norm_b = b.norm();
  if (norm_a == 0.0 || norm_b == 0.0) throw Error(ErrorKind::ZeroVector, "cosine of a zero vector");
  return std::clamp(a.dot(b) / (norm_a * norm_b), -1.0, 1.0);
}

struct AnisotropyEstimate {
  Index layer = 0;
  double mean_cos = 0.0;
  Index n_pairs = 0;
  std::uint64_t seed = 0;
};

/// Token pairs drawn for anisotropy estimation: 2 * n_pairs distinct sentences
/// sampled without replacement and paired consecutively, one uniformly chosen
/// token from each. Depends only on the store's metadata and the seed, so a
/// clipped copy of a store yields the same pairs.
std::vector<std::pair<std::size_t, std::size_t>> sample_token_pairs(const EmbeddingStore& store, Index n_pairs,
                                                                    std::uint64_t seed);

AnisotropyEstimate estimate_anisotropy(const EmbeddingStore& store, Index layer,
                                       Index n_pairs = kDefaultAnisotropyPairs, std::uint64_t seed = 0);

enum class SelfSimNormalization {
  UnorderedPairs,  // sum over i<j divided by n(n-1)/2; identical vectors give 1
  LiteralEq1,      // the same sum divided by n(n-1)
};

struct SelfSimResult {
  std::string word_key;
  Index layer = 0;
  double raw = 0.0;
  double adjusted = 0.0;
  Index n_occurrences = 0;
};

/// Mean cosine over all unordered pairs of the word's occurrences at `layer`,
/// summed in (i, j>i) order. Throws TooFewOccurrences below two occurrences.
double self_similarity(const EmbeddingStore& store, std::string_view word_key, Index layer,
                       SelfSimNormalization normalization = SelfSimNormalization::UnorderedPairs);

/// raw - aniso.mean_cos; throws LayerMismatch if the layers differ.
double adjusted_self_similarity(double raw, Index raw_layer, const AnisotropyEstimate& aniso);

SelfSimResult self_similarity_result(const EmbeddingStore& store, std::string_view word_key,
                                     const AnisotropyEstimate& aniso,
                                     SelfSimNormalization normalization = SelfSimNormalization::UnorderedPairs);

/// Word keys occurring in at least `min_sentences` distinct sentences, in
/// lexicographic order; when more than `max_words` qualify, a seeded sample of
/// `max_words` of them (still returned sorted).
std::vector<std::string> select_words(const EmbeddingStore& store, Index min_sentences, Index max_words,
                                      std::uint64_t seed);

}  // namespace posclip
