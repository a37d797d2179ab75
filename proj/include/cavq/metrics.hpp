#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cavq {

/// Fraction of positions where prediction and label agree.
double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);

/// Lowercase plus whitespace split.
std::vector<std::string> tokenize(std::string_view text);

using Ngram = std::vector<std::string>;

enum class NgramWeighting { RawCounts, TfIdf };

/// Document frequencies of n-grams over a reference corpus, for TF-IDF mode.
struct CorpusStats {
  std::size_t documents = 0;
  std::map<Ngram, std::size_t> document_frequency;

  /// Each reference set counts as one document.
  static CorpusStats from_references(std::span<const std::vector<std::string>> references, std::size_t max_n = 4);
};

/// n-gram weights for orders 1..max_n; index 0 holds unigrams.
struct NgramProfile {
  std::vector<std::map<Ngram, double>> orders;
};

NgramProfile ngram_profile(std::string_view text, std::size_t max_n = 4,
                           NgramWeighting weighting = NgramWeighting::RawCounts,
                           const CorpusStats* corpus = nullptr);

struct CiderConfig {
  std::size_t max_n = 4;
  std::vector<double> weights = {0.25, 0.25, 0.25, 0.25};
  NgramWeighting weighting = NgramWeighting::RawCounts;

  void validate() const;
};

/// Sum over orders of w_n * g_n(c, r) / sqrt(g_n(c, c) * g_n(r, r)) for one
/// candidate and one reference. A term whose self-product is zero is 0.
double cider_pair(const NgramProfile& candidate, const NgramProfile& reference, const CiderConfig& config);

/// Corpus CIDEr: mean over samples, where a sample with several references
/// scores the mean of its per-reference values.
double cider(std::span<const std::string> candidates, std::span<const std::vector<std::string>> references,
             const CiderConfig& config = {});

/// Splits a reference line on tabs into alternatives.
std::vector<std::string> split_references(std::string_view line);

}  // namespace cavq
