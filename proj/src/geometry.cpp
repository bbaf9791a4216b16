#include "posclip/geometry.hpp"

#include <map>
#include <set>

#include "posclip/random.hpp"

namespace posclip {

std::vector<std::pair<std::size_t, std::size_t>> sample_token_pairs(const EmbeddingStore& store, Index n_pairs,
                                                                    std::uint64_t seed) {
  const auto& sentences = store.sentences();
  const auto needed = static_cast<std::size_t>(2 * n_pairs);
  if (n_pairs < 1 || sentences.size() < needed) {
    throw Error(ErrorKind::InsufficientSentences, "anisotropy with " + std::to_string(n_pairs) + " pairs needs " +
                                                      std::to_string(needed) + " sentences, store has " +
                                                      std::to_string(sentences.size()));
  }
  Rng rng(seed);
  std::vector<std::size_t> order(sentences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  // partial Fisher-Yates: the first `needed` slots become a uniform sample without replacement
  for (std::size_t i = 0; i < needed; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(order.size() - i));
    std::swap(order[i], order[j]);
  }
  auto pick_token = [&](std::size_t sentence) {
    const auto& tokens = sentences[sentence].tokens;
    return tokens[static_cast<std::size_t>(rng.uniform_index(tokens.size()))];
  };
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(static_cast<std::size_t>(n_pairs));
  for (std::size_t p = 0; p < static_cast<std::size_t>(n_pairs); ++p) {
    const auto first = pick_token(order[2 * p]);
    const auto second = pick_token(order[2 * p + 1]);
    pairs.emplace_back(first, second);
  }
  return pairs;
}

AnisotropyEstimate estimate_anisotropy(const EmbeddingStore& store, Index layer, Index n_pairs, std::uint64_t seed) {
  const auto pairs = sample_token_pairs(store, n_pairs, seed);
  double total = 0.0;
  for (const auto& [a, b] : pairs) {
    total += cosine(store.vector(layer, static_cast<Index>(a)), store.vector(layer, static_cast<Index>(b)));
  }
  return AnisotropyEstimate{layer, total / static_cast<double>(pairs.size()), n_pairs, seed};
}

double self_similarity(const EmbeddingStore& store, std::string_view word_key, Index layer,
                       SelfSimNormalization normalization) {
  const auto occurrences = occurrences_of_word(store, word_key);
  const auto n = occurrences.size();
  if (n < 2) {
    throw Error(ErrorKind::TooFewOccurrences,
                "word '" + std::string(word_key) + "' has " + std::to_string(n) + " occurrence(s), need >= 2");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto vi = store.vector(layer, static_cast<Index>(occurrences[i].token_index));
    for (std::size_t j = i + 1; j < n; ++j) {
      sum += cosine(vi, store.vector(layer, static_cast<Index>(occurrences[j].token_index)));
    }
  }
  const double ordered_pairs = static_cast<double>(n) * static_cast<double>(n - 1);
  return normalization == SelfSimNormalization::UnorderedPairs ? sum / (ordered_pairs / 2.0) : sum / ordered_pairs;
}

double adjusted_self_similarity(double raw, Index raw_layer, const AnisotropyEstimate& aniso) {
  if (raw_layer != aniso.layer) {
    throw Error(ErrorKind::LayerMismatch, "self-similarity from layer " + std::to_string(raw_layer) +
                                              " adjusted by anisotropy of layer " + std::to_string(aniso.layer));
  }
  return raw - aniso.mean_cos;
}

SelfSimResult self_similarity_result(const EmbeddingStore& store, std::string_view word_key,
                                     const AnisotropyEstimate& aniso, SelfSimNormalization normalization) {
  SelfSimResult result;
  result.word_key = fold_case(word_key);
  result.layer = aniso.layer;
  result.raw = self_similarity(store, word_key, aniso.layer, normalization);
  result.adjusted = adjusted_self_similarity(result.raw, aniso.layer, aniso);
  result.n_occurrences = static_cast<Index>(occurrences_of_word(store, word_key).size());
  return result;
}

std::vector<std::string> select_words(const EmbeddingStore& store, Index min_sentences, Index max_words,
                                      std::uint64_t seed) {
  std::map<std::string, std::set<std::string>> sentences_of;
  for (const auto& token : store.meta()) sentences_of[fold_case(token.word_key)].insert(token.sentence_id);

  std::vector<std::string> eligible;
  for (const auto& [word, ids] : sentences_of) {
    if (static_cast<Index>(ids.size()) >= min_sentences) eligible.push_back(word);
  }
  if (static_cast<Index>(eligible.size()) > max_words) {
    Rng rng(seed);
    rng.shuffle(std::span<std::string>(eligible));
    eligible.resize(static_cast<std::size_t>(std::max<Index>(max_words, 0)));
    std::sort(eligible.begin(), eligible.end());
  }
  return eligible;
}

}  // namespace posclip
