#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "posclip/error.hpp"
#include "posclip/outlier.hpp"
#include "posclip/store.hpp"

namespace posclip {

/// Zero `dims` in every layer from `first_layer` to `last_layer` inclusive.
/// Layer indices are the store's: 0 is the input-embedding layer.
struct ClipEntry {
  Index first_layer = 0;
  Index last_layer = 0;
  std::set<Index> dims;
  friend bool operator==(const ClipEntry&, const ClipEntry&) = default;
};

struct ClipSpec {
  std::vector<ClipEntry> entries;
  friend bool operator==(const ClipSpec&, const ClipSpec&) = default;
};

/// Copy of `v` with `dims` set to exactly zero; other elements untouched.
template <typename Derived>
typename Derived::PlainObject clip_vector(const Eigen::MatrixBase<Derived>& v, const std::set<Index>& dims) {
  typename Derived::PlainObject out = v;
  for (const Index d : dims) {
    if (d < 0 || d >= out.size()) {
      throw Error(ErrorKind::IndexOutOfRange,
                  "clip dim " + std::to_string(d) + " outside vector of length " + std::to_string(out.size()));
    }
    out[d] = 0;
  }
  return out;
}

/// Throws SpecOutOfRange unless 0 <= lo <= hi < L, dims nonempty and < D.
void validate_clip_spec(const ClipSpec& spec, Index n_layers, Index dim);

/// New store with each entry's dims zeroed over its layer range.
EmbeddingStore clip_store(const EmbeddingStore& store, const ClipSpec& spec);

/// One entry per maximal run of consecutive layers flagged for each outlier
/// dim; dims sharing an identical run are merged into a single entry.
ClipSpec clip_spec_from_report(const OutlierReport& report);

ClipSpec parse_clip_spec(std::string_view json_text);
std::string format_clip_spec(const ClipSpec& spec);

}  // namespace posclip
