#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <gtest/gtest.h>

#include "posclip/error.hpp"
#include "posclip/store.hpp"

namespace posclip::testing {

/// Sentences "s0", "s1", ... with the given lengths; word keys come from
/// `word_of(sentence, position)` (default "w<sentence>_<position>").
inline std::vector<TokenMeta> make_meta(
    const std::vector<std::size_t>& lengths,
    const std::function<std::string(std::size_t, std::size_t)>& word_of = {}) {
  std::vector<TokenMeta> meta;
  std::size_t index = 0;
  for (std::size_t s = 0; s < lengths.size(); ++s) {
    for (std::size_t p = 0; p < lengths[s]; ++p) {
      const auto word = word_of ? word_of(s, p) : "w" + std::to_string(s) + "_" + std::to_string(p);
      meta.push_back({index++, "s" + std::to_string(s), p, word, word});
    }
  }
  return meta;
}

/// Store whose element [l][t][d] is `value(l, t, d)`.
inline EmbeddingStore make_store(std::uint32_t layers, const std::vector<TokenMeta>& meta, std::uint32_t dim,
                                 const std::function<float(std::size_t, std::size_t, std::size_t)>& value) {
  const auto tokens = static_cast<std::uint32_t>(meta.size());
  std::vector<float> data;
  data.reserve(std::size_t{layers} * tokens * dim);
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t t = 0; t < tokens; ++t) {
      for (std::size_t d = 0; d < dim; ++d) data.push_back(value(l, t, d));
    }
  }
  return EmbeddingStore(layers, tokens, dim, std::move(data), meta);
}

/// i.i.d. standard normal entries with `offset` added at `planted_dim` (skipped
/// when planted_dim < 0). Every layer holds an independent draw.
inline EmbeddingStore gaussian_store(std::uint32_t layers, const std::vector<TokenMeta>& meta, std::uint32_t dim,
                                     int planted_dim, float offset, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  std::normal_distribution<float> normal(0.0F, 1.0F);
  return make_store(layers, meta, dim, [&](std::size_t, std::size_t, std::size_t d) {
    const float v = normal(engine);
    return static_cast<int>(d) == planted_dim ? v + offset : v;
  });
}

/// Vector = one-hot(position) in `dim` dims, optionally with small noise.
inline EmbeddingStore onehot_position_store(std::size_t n_sentences, std::size_t length, std::uint32_t dim) {
  const auto meta = make_meta(std::vector<std::size_t>(n_sentences, length));
  return make_store(2, meta, dim, [&](std::size_t, std::size_t t, std::size_t d) {
    return d == meta[t].position ? 1.0F : 0.0F;
  });
}

/// Kind of the posclip::Error thrown by `fn`; records a test failure if none is thrown.
template <typename Fn>
ErrorKind error_kind(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected posclip::Error";
  return ErrorKind::Io;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("posclip_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace posclip::testing
