#include "posclip/clip.hpp"

#include <map>
#include <utility>

#include <json.hpp>

namespace posclip {

using nlohmann::json;

void validate_clip_spec(const ClipSpec& spec, Index n_layers, Index dim) {
  for (std::size_t i = 0; i < spec.entries.size(); ++i) {
    const auto& entry = spec.entries[i];
    const auto where = "clip entry " + std::to_string(i) + ": ";
    if (entry.first_layer < 0 || entry.first_layer > entry.last_layer || entry.last_layer >= n_layers) {
      throw Error(ErrorKind::SpecOutOfRange, where + "layer range [" + std::to_string(entry.first_layer) + ", " +
                                                 std::to_string(entry.last_layer) + "] invalid for " +
                                                 std::to_string(n_layers) + " layers");
    }
    if (entry.dims.empty()) throw Error(ErrorKind::SpecOutOfRange, where + "empty dim set");
    if (*entry.dims.begin() < 0 || *entry.dims.rbegin() >= dim) {
      throw Error(ErrorKind::SpecOutOfRange, where + "dims must lie in [0, " + std::to_string(dim) + ")");
    }
  }
}

EmbeddingStore clip_store(const EmbeddingStore& store, const ClipSpec& spec) {
  validate_clip_spec(spec, store.n_layers(), store.dim());
  std::vector<float> data(store.data().begin(), store.data().end());
  const auto tokens = static_cast<std::size_t>(store.n_tokens());
  const auto dim = static_cast<std::size_t>(store.dim());
  for (const auto& entry : spec.entries) {
    for (Index l = entry.first_layer; l <= entry.last_layer; ++l) {
      Eigen::Map<RowMajorMatrixXf> values(data.data() + static_cast<std::size_t>(l) * tokens * dim,
                                          store.n_tokens(), store.dim());
      for (const Index d : entry.dims) values.col(d).setZero();
    }
  }
  return store.with_data(std::move(data));
}

ClipSpec clip_spec_from_report(const OutlierReport& report) {
  // (first, last) -> dims, ordered so the output is deterministic
  std::map<std::pair<Index, Index>, std::set<Index>> runs;
  for (const auto& outlier : report.outlier_dims) {
    const auto& layers = outlier.layers;
    std::size_t start = 0;
    for (std::size_t i = 1; i <= layers.size(); ++i) {
      if (i == layers.size() || layers[i] != layers[i - 1] + 1) {
        runs[{layers[start], layers[i - 1]}].insert(outlier.dim);
        start = i;
      }
    }
  }
  ClipSpec spec;
  for (auto& [range, dims] : runs) spec.entries.push_back({range.first, range.second, std::move(dims)});
  return spec;
}

ClipSpec parse_clip_spec(std::string_view json_text) {
  ClipSpec spec;
  try {
    const auto doc = json::parse(json_text);
    if (!doc.is_array()) throw Error(ErrorKind::MalformedInput, "clip spec must be a JSON array");
    for (const auto& item : doc) {
      const auto layers = item.at("layers").get<std::vector<Index>>();
      if (layers.size() != 2) throw Error(ErrorKind::MalformedInput, "clip spec \"layers\" must be [lo, hi]");
      const auto dims = item.at("dims").get<std::vector<Index>>();
      spec.entries.push_back({layers[0], layers[1], std::set<Index>(dims.begin(), dims.end())});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, std::string("clip spec: ") + e.what());
  }
  return spec;
}

std::string format_clip_spec(const ClipSpec& spec) {
  json doc = json::array();
  for (const auto& entry : spec.entries) {
    json item = json::object();
    item["layers"] = {entry.first_layer, entry.last_layer};
    item["dims"] = std::vector<Index>(entry.dims.begin(), entry.dims.end());
    doc.push_back(std::move(item));
  }
  return doc.dump(2) + "\n";
}

}  // namespace posclip
