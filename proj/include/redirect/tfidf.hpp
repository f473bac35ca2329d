#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "redirect/segmentation.hpp"

namespace redirect {

/// Sparse unit-length vector, entries sorted by term index.
using SparseVector = std::vector<std::pair<std::uint32_t, double>>;

double dot(const SparseVector& a, const SparseVector& b);

/// TF-IDF text embedder fitted on a document collection (one document per
/// utterance). idf(t) = ln((1 + N) / (1 + df(t))) + 1, so every term has a
/// positive weight; unseen terms are ignored. Embeddings are L2-normalized;
/// text with no known terms embeds to the empty vector.
class TfIdfEmbedder {
 public:
  TfIdfEmbedder() = default;
  explicit TfIdfEmbedder(const std::vector<std::string>& documents);
  static TfIdfEmbedder fit(const SegmentedCorpus& corpus);

  SparseVector embed(std::string_view text) const;
  std::size_t vocabulary_size() const { return idf_.size(); }

 private:
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<double> idf_;
};

}  // namespace redirect
