#include "redirect/tfidf.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "redirect/text.hpp"

namespace redirect {

double dot(const SparseVector& a, const SparseVector& b) {
  double sum = 0.0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (i->first < j->first) {
      ++i;
    } else if (j->first < i->first) {
      ++j;
    } else {
      sum += i->second * j->second;
      ++i;
      ++j;
    }
  }
  return sum;
}

TfIdfEmbedder::TfIdfEmbedder(const std::vector<std::string>& documents) {
  std::map<std::string, std::size_t> df;
  for (const auto& doc : documents) {
    const auto tokens = tokenize(doc, Punctuation::drop);
    for (const auto& t : std::set<std::string>(tokens.begin(), tokens.end())) ++df[t];
  }
  const double n = static_cast<double>(documents.size());
  idf_.reserve(df.size());
  for (const auto& [term, count] : df) {
    index_.emplace(term, static_cast<std::uint32_t>(idf_.size()));
    idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
  }
}

TfIdfEmbedder TfIdfEmbedder::fit(const SegmentedCorpus& corpus) {
  std::vector<std::string> documents;
  for (const auto& conv : corpus.conversations)
    for (const auto& s : conv.sessions)
      for (const auto& u : s.utterances) documents.push_back(u.text);
  return TfIdfEmbedder(documents);
}

SparseVector TfIdfEmbedder::embed(std::string_view text) const {
  std::map<std::uint32_t, double> tf;
  for (const auto& t : tokenize(text, Punctuation::drop)) {
    auto it = index_.find(t);
    if (it != index_.end()) tf[it->second] += 1.0;
  }
  SparseVector v;
  v.reserve(tf.size());
  double norm = 0.0;
  for (const auto& [idx, count] : tf) {
    const double w = count * idf_[idx];
    v.emplace_back(idx, w);
    norm += w * w;
  }
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (auto& e : v) e.second /= norm;
  }
  return v;
}

}  // namespace redirect
