#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace posclip {

using Index = Eigen::Index;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXf>;
using RowMajorMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstLayerMap = Eigen::Map<const RowMajorMatrixXf>;

inline constexpr std::array<char, 4> kStoreMagic{'E', 'M', 'B', '1'};
inline constexpr std::uint32_t kStoreVersion = 1;
inline constexpr std::size_t kHeaderBytes = 24;

struct StoreHeader {
  std::array<char, 4> magic = kStoreMagic;
  std::uint32_t version = kStoreVersion;
  std::uint32_t n_layers = 0;  // includes layer 0, the input embeddings
  std::uint32_t n_tokens = 0;
  std::uint32_t dim = 0;
  std::uint32_t float_width = 4;

  [[nodiscard]] std::uint64_t payload_bytes() const {
    return std::uint64_t{n_layers} * n_tokens * dim * float_width;
  }
  friend bool operator==(const StoreHeader&, const StoreHeader&) = default;
};

struct TokenMeta {
  std::size_t token_index = 0;
  std::string sentence_id;
  std::size_t position = 0;
  std::string surface;
  std::string word_key;

  friend bool operator==(const TokenMeta&, const TokenMeta&) = default;
};

/// Tokens of one sentence, ordered by position.
struct Sentence {
  std::string id;
  std::vector<std::size_t> tokens;
};

struct Occurrence {
  std::string sentence_id;
  std::size_t token_index;

  friend bool operator==(const Occurrence&, const Occurrence&) = default;
};

/// Immutable layer-major [layers x tokens x dim] float32 tensor with per-token
/// metadata. Construction validates every invariant of the dump format; once
/// built, nothing hands out mutable access to the tensor.
class EmbeddingStore {
 public:
  EmbeddingStore(std::uint32_t n_layers, std::uint32_t n_tokens, std::uint32_t dim,
                 std::vector<float> data, std::vector<TokenMeta> meta);

  [[nodiscard]] Index n_layers() const { return header_.n_layers; }
  [[nodiscard]] Index n_tokens() const { return header_.n_tokens; }
  [[nodiscard]] Index dim() const { return header_.dim; }
  [[nodiscard]] const StoreHeader& header() const { return header_; }

  /// The D floats at [layer][token]. Throws IndexOutOfRange.
  [[nodiscard]] ConstVectorMap vector(Index layer, Index token) const;
  /// T x D view of one layer. Throws IndexOutOfRange.
  [[nodiscard]] ConstLayerMap layer(Index layer) const;

  [[nodiscard]] std::span<const float> data() const { return data_; }
  [[nodiscard]] const std::vector<TokenMeta>& meta() const { return meta_; }
  [[nodiscard]] const std::vector<Sentence>& sentences() const { return sentences_; }
  /// nullptr when the id is unknown.
  [[nodiscard]] const Sentence* find_sentence(std::string_view id) const;
  /// Token indices (ascending) whose case-folded word_key equals `folded_key`;
  /// nullptr when absent.
  [[nodiscard]] const std::vector<std::size_t>* find_word(std::string_view folded_key) const;

  /// Copy of this store with a replaced tensor of the same shape.
  [[nodiscard]] EmbeddingStore with_data(std::vector<float> data) const;

 private:
  StoreHeader header_;
  std::vector<float> data_;
  std::vector<TokenMeta> meta_;
  std::vector<Sentence> sentences_;
  std::unordered_map<std::string, std::size_t> sentence_lookup_;
  std::unordered_map<std::string, std::vector<std::size_t>> word_lookup_;
};

/// A named length-D parameter vector (positional embedding row, LayerNorm
/// gain or bias, probe weight row).
struct ParamVector {
  std::string name;
  Eigen::VectorXf values;
};

/// Decodes and validates the 24-byte header against the full file contents.
StoreHeader parse_header(std::span<const std::byte> file_bytes);

EmbeddingStore load_store(const std::filesystem::path& tensor_path,
                          const std::filesystem::path& meta_path);
void write_store(const EmbeddingStore& store, const std::filesystem::path& tensor_path,
                 const std::filesystem::path& meta_path);

/// EMB1 bytes for the store's tensor (header + little-endian payload).
std::vector<std::byte> encode_tensor(const EmbeddingStore& store);
void write_tensor(const EmbeddingStore& store, const std::filesystem::path& tensor_path);

std::vector<TokenMeta> parse_meta(std::string_view jsonl);
std::string format_meta(std::span<const TokenMeta> meta);

inline ConstVectorMap get_vector(const EmbeddingStore& store, Index layer, Index token) {
  return store.vector(layer, token);
}

/// ASCII case folding; bytes outside ASCII pass through unchanged.
std::string fold_case(std::string_view text);

/// Tokens whose word_key matches the case-folded query, ordered by token index.
std::vector<Occurrence> occurrences_of_word(const EmbeddingStore& store, std::string_view word_key);

std::vector<ParamVector> parse_params(std::string_view jsonl);
std::vector<ParamVector> load_params(const std::filesystem::path& path);
std::string format_params(std::span<const ParamVector> params);

std::string read_file(const std::filesystem::path& path);

}  // namespace posclip
