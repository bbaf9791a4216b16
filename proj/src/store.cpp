#include "posclip/store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "posclip/error.hpp"

namespace posclip {

namespace {

using nlohmann::json;

std::uint32_t read_u32_le(std::span<const std::byte> bytes, std::size_t offset) {
  std::uint32_t value = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    value |= std::uint32_t{std::to_integer<std::uint8_t>(bytes[offset + i])} << (8 * i);
  }
  return value;
}

void append_u32_le(std::vector<std::byte>& out, std::uint32_t value) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((value >> (8 * i)) & 0xFFU));
}

std::string sentence_id_from_json(const json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_integer()) return std::to_string(value.get<std::int64_t>());
  throw Error(ErrorKind::MalformedMeta, "sentence_id must be a string or integer");
}

}  // namespace

EmbeddingStore::EmbeddingStore(std::uint32_t n_layers, std::uint32_t n_tokens, std::uint32_t dim,
                               std::vector<float> data, std::vector<TokenMeta> meta)
    : data_(std::move(data)), meta_(std::move(meta)) {
  header_.n_layers = n_layers;
  header_.n_tokens = n_tokens;
  header_.dim = dim;
  if (n_layers == 0 || n_tokens == 0 || dim == 0) {
    throw Error(ErrorKind::SizeMismatch, "store dimensions must all be >= 1");
  }
  if (data_.size() != std::uint64_t{n_layers} * n_tokens * dim) {
    throw Error(ErrorKind::SizeMismatch, "tensor has " + std::to_string(data_.size()) +
                                             " floats, header implies L*T*D = " +
                                             std::to_string(std::uint64_t{n_layers} * n_tokens * dim));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      const std::size_t per_layer = std::size_t{n_tokens} * dim;
      throw Error(ErrorKind::NonFiniteValue, "non-finite value at layer " + std::to_string(i / per_layer) +
                                                 ", token " + std::to_string((i % per_layer) / dim) +
                                                 ", dim " + std::to_string(i % dim));
    }
  }
  if (meta_.size() != n_tokens) {
    throw Error(ErrorKind::MetaCountMismatch, "meta has " + std::to_string(meta_.size()) +
                                                  " records, tensor has T = " + std::to_string(n_tokens));
  }

  std::sort(meta_.begin(), meta_.end(),
            [](const TokenMeta& a, const TokenMeta& b) { return a.token_index < b.token_index; });
  for (std::size_t i = 0; i < meta_.size(); ++i) {
    if (meta_[i].token_index != i) {
      throw Error(ErrorKind::MalformedMeta, "token_index values must be dense 0..T-1; expected " +
                                                std::to_string(i) + ", found " +
                                                std::to_string(meta_[i].token_index));
    }
    if (meta_[i].word_key.empty()) {
      throw Error(ErrorKind::MalformedMeta, "empty word_key for token " + std::to_string(i));
    }
    auto [it, inserted] = sentence_lookup_.try_emplace(meta_[i].sentence_id, sentences_.size());
    if (inserted) sentences_.push_back(Sentence{meta_[i].sentence_id, {}});
    sentences_[it->second].tokens.push_back(i);
    word_lookup_[fold_case(meta_[i].word_key)].push_back(i);
  }

  for (auto& sentence : sentences_) {
    std::sort(sentence.tokens.begin(), sentence.tokens.end(),
              [this](std::size_t a, std::size_t b) { return meta_[a].position < meta_[b].position; });
    for (std::size_t p = 0; p < sentence.tokens.size(); ++p) {
      if (meta_[sentence.tokens[p]].position != p) {
        throw Error(ErrorKind::MalformedMeta, "sentence '" + sentence.id +
                                                  "' positions are not dense 0..len-1 (missing or duplicate position " +
                                                  std::to_string(p) + ")");
      }
    }
  }
}

ConstVectorMap EmbeddingStore::vector(Index layer, Index token) const {
  if (layer < 0 || layer >= n_layers() || token < 0 || token >= n_tokens()) {
    throw Error(ErrorKind::IndexOutOfRange, "vector(" + std::to_string(layer) + ", " + std::to_string(token) +
                                                ") outside [" + std::to_string(n_layers()) + " x " +
                                                std::to_string(n_tokens()) + "]");
  }
  const auto offset = (static_cast<std::size_t>(layer) * header_.n_tokens + static_cast<std::size_t>(token)) *
                      header_.dim;
  return ConstVectorMap(data_.data() + offset, dim());
}

ConstLayerMap EmbeddingStore::layer(Index layer) const {
  if (layer < 0 || layer >= n_layers()) {
    throw Error(ErrorKind::IndexOutOfRange,
                "layer " + std::to_string(layer) + " outside [0, " + std::to_string(n_layers()) + ")");
  }
  const auto offset = static_cast<std::size_t>(layer) * header_.n_tokens * header_.dim;
  return ConstLayerMap(data_.data() + offset, n_tokens(), dim());
}

const Sentence* EmbeddingStore::find_sentence(std::string_view id) const {
  auto it = sentence_lookup_.find(std::string(id));
  return it == sentence_lookup_.end() ? nullptr : &sentences_[it->second];
}

const std::vector<std::size_t>* EmbeddingStore::find_word(std::string_view folded_key) const {
  auto it = word_lookup_.find(std::string(folded_key));
  return it == word_lookup_.end() ? nullptr : &it->second;
}

EmbeddingStore EmbeddingStore::with_data(std::vector<float> data) const {
  return EmbeddingStore(header_.n_layers, header_.n_tokens, header_.dim, std::move(data), meta_);
}

StoreHeader parse_header(std::span<const std::byte> file_bytes) {
  if (file_bytes.size() < kHeaderBytes) {
    throw Error(ErrorKind::SizeMismatch, "file has " + std::to_string(file_bytes.size()) +
                                             " bytes, header needs " + std::to_string(kHeaderBytes));
  }
  StoreHeader header;
  for (std::size_t i = 0; i < 4; ++i) header.magic[i] = static_cast<char>(file_bytes[i]);
  if (header.magic != kStoreMagic) {
    throw Error(ErrorKind::BadMagic, "expected magic \"EMB1\", found \"" +
                                         std::string(header.magic.begin(), header.magic.end()) + "\"");
  }
  header.version = read_u32_le(file_bytes, 4);
  header.n_layers = read_u32_le(file_bytes, 8);
  header.n_tokens = read_u32_le(file_bytes, 12);
  header.dim = read_u32_le(file_bytes, 16);
  header.float_width = read_u32_le(file_bytes, 20);
  if (header.version != kStoreVersion) {
    throw Error(ErrorKind::UnsupportedVersion, "version " + std::to_string(header.version));
  }
  if (header.float_width != 4) {
    throw Error(ErrorKind::UnsupportedVersion, "float_width " + std::to_string(header.float_width));
  }
  if (header.n_layers == 0 || header.n_tokens == 0 || header.dim == 0) {
    throw Error(ErrorKind::SizeMismatch, "L, T and D must all be >= 1");
  }
  const std::uint64_t lt = std::uint64_t{header.n_layers} * header.n_tokens;
  if (lt > std::numeric_limits<std::uint64_t>::max() / (std::uint64_t{header.dim} * 4)) {
    throw Error(ErrorKind::SizeMismatch, "declared payload overflows");
  }
  const std::uint64_t body = file_bytes.size() - kHeaderBytes;
  if (header.payload_bytes() != body) {
    throw Error(ErrorKind::SizeMismatch, "header declares " + std::to_string(header.payload_bytes()) +
                                             " payload bytes, file body has " + std::to_string(body));
  }
  return header;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

std::vector<TokenMeta> parse_meta(std::string_view jsonl) {
  std::vector<TokenMeta> meta;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= jsonl.size()) {
    auto end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    auto line = jsonl.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto record = json::parse(line);
      TokenMeta token;
      token.token_index = record.at("token_index").get<std::size_t>();
      token.sentence_id = sentence_id_from_json(record.at("sentence_id"));
      token.position = record.at("position").get<std::size_t>();
      token.surface = record.at("surface").get<std::string>();
      token.word_key = record.at("word_key").get<std::string>();
      meta.push_back(std::move(token));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::MalformedMeta, "meta line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return meta;
}

std::string format_meta(std::span<const TokenMeta> meta) {
  std::string out;
  for (const auto& token : meta) {
    json record = json::object();
    record["token_index"] = token.token_index;
    record["sentence_id"] = token.sentence_id;
    record["position"] = token.position;
    record["surface"] = token.surface;
    record["word_key"] = token.word_key;
    out += record.dump();
    out += '\n';
  }
  return out;
}

std::vector<std::byte> encode_tensor(const EmbeddingStore& store) {
  std::vector<std::byte> out;
  out.reserve(kHeaderBytes + store.data().size() * 4);
  for (char c : kStoreMagic) out.push_back(static_cast<std::byte>(c));
  const auto& header = store.header();
  append_u32_le(out, header.version);
  append_u32_le(out, header.n_layers);
  append_u32_le(out, header.n_tokens);
  append_u32_le(out, header.dim);
  append_u32_le(out, header.float_width);
  for (float value : store.data()) append_u32_le(out, std::bit_cast<std::uint32_t>(value));
  return out;
}

void write_tensor(const EmbeddingStore& store, const std::filesystem::path& tensor_path) {
  const auto bytes = encode_tensor(store);
  std::ofstream out(tensor_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + tensor_path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_store(const EmbeddingStore& store, const std::filesystem::path& tensor_path,
                 const std::filesystem::path& meta_path) {
  write_tensor(store, tensor_path);
  std::ofstream out(meta_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + meta_path.string());
  out << format_meta(store.meta());
}

EmbeddingStore load_store(const std::filesystem::path& tensor_path, const std::filesystem::path& meta_path) {
  const auto raw = read_file(tensor_path);
  const std::span<const std::byte> bytes(reinterpret_cast<const std::byte*>(raw.data()), raw.size());
  const auto header = parse_header(bytes);

  std::vector<float> data(static_cast<std::size_t>(header.payload_bytes() / 4));
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = std::bit_cast<float>(read_u32_le(bytes, kHeaderBytes + 4 * i));
  }
  return EmbeddingStore(header.n_layers, header.n_tokens, header.dim, std::move(data),
                        parse_meta(read_file(meta_path)));
}

std::string fold_case(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
  });
  return out;
}

std::vector<Occurrence> occurrences_of_word(const EmbeddingStore& store, std::string_view word_key) {
  std::vector<Occurrence> found;
  if (const auto* tokens = store.find_word(fold_case(word_key))) {
    found.reserve(tokens->size());
    for (auto t : *tokens) found.push_back({store.meta()[t].sentence_id, t});
  }
  return found;
}

std::vector<ParamVector> parse_params(std::string_view jsonl) {
  std::vector<ParamVector> params;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= jsonl.size()) {
    auto end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    auto line = jsonl.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto record = json::parse(line);
      if (!record.contains("values")) continue;  // header/config lines
      const auto values = record.at("values").get<std::vector<float>>();
      ParamVector param{record.at("name").get<std::string>(),
                        Eigen::Map<const Eigen::VectorXf>(values.data(), static_cast<Index>(values.size()))};
      if (!param.values.allFinite()) {
        throw Error(ErrorKind::NonFiniteValue, "param '" + param.name + "' has non-finite values");
      }
      params.push_back(std::move(param));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::MalformedInput, "param line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return params;
}

std::vector<ParamVector> load_params(const std::filesystem::path& path) { return parse_params(read_file(path)); }

std::string format_params(std::span<const ParamVector> params) {
  std::string out;
  for (const auto& param : params) {
    json record = json::object();
    record["name"] = param.name;
    record["values"] = std::vector<float>(param.values.data(), param.values.data() + param.values.size());
    out += record.dump();
    out += '\n';
  }
  return out;
}

}  // namespace posclip
