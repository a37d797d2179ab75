#include "cavq/metrics.hpp"

#include <cctype>
#include <cmath>
#include <set>

#include "cavq/errors.hpp"

namespace cavq {

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
  if (predictions.size() != labels.size()) {
    throw ContractError("accuracy: " + std::to_string(predictions.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
  }
  if (predictions.empty()) throw ContractError("accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isspace(uc)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      // ASCII lowercase only; multibyte UTF-8 sequences pass through unchanged.
      current.push_back(uc < 0x80 ? static_cast<char>(std::tolower(uc)) : ch);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

namespace {

std::vector<std::map<Ngram, double>> count_ngrams(const std::vector<std::string>& tokens, std::size_t max_n) {
  std::vector<std::map<Ngram, double>> orders(max_n);
  for (std::size_t n = 1; n <= max_n; ++n) {
    if (tokens.size() < n) break;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      orders[n - 1][Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                          tokens.begin() + static_cast<std::ptrdiff_t>(i + n))] += 1.0;
    }
  }
  return orders;
}

double dot(const std::map<Ngram, double>& a, const std::map<Ngram, double>& b) {
  const auto& small = a.size() <= b.size() ? a : b;
  const auto& large = a.size() <= b.size() ? b : a;
  double s = 0.0;
  for (const auto& [gram, w] : small) {
    if (auto it = large.find(gram); it != large.end()) s += w * it->second;
  }
  return s;
}

}  // namespace

CorpusStats CorpusStats::from_references(std::span<const std::vector<std::string>> references, std::size_t max_n) {
  CorpusStats stats;
  stats.documents = references.size();
  for (const auto& ref_set : references) {
    std::set<Ngram> seen;
    for (const auto& ref : ref_set) {
      for (const auto& order : count_ngrams(tokenize(ref), max_n)) {
        for (const auto& entry : order) seen.insert(entry.first);
      }
    }
    for (const auto& gram : seen) ++stats.document_frequency[gram];
  }
  return stats;
}

NgramProfile ngram_profile(std::string_view text, std::size_t max_n, NgramWeighting weighting,
                           const CorpusStats* corpus) {
  NgramProfile profile;
  profile.orders = count_ngrams(tokenize(text), max_n);
  if (weighting == NgramWeighting::TfIdf) {
    if (corpus == nullptr || corpus->documents == 0) {
      throw ContractError("ngram_profile: TF-IDF weighting needs corpus statistics");
    }
    const double docs = static_cast<double>(corpus->documents);
    for (auto& order : profile.orders) {
      for (auto& [gram, w] : order) {
        auto it = corpus->document_frequency.find(gram);
        const double df = it == corpus->document_frequency.end() ? 1.0 : static_cast<double>(it->second);
        w *= std::log(docs / std::max(df, 1.0));
      }
    }
  }
  return profile;
}

void CiderConfig::validate() const {
  if (max_n == 0) throw ContractError("cider: max_n must be positive");
  if (weights.size() != max_n) throw ContractError("cider: need one weight per n-gram order");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ContractError("cider: weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ContractError("cider: weights must sum to 1");
}

double cider_pair(const NgramProfile& candidate, const NgramProfile& reference, const CiderConfig& config) {
  double score = 0.0;
  for (std::size_t n = 0; n < config.max_n; ++n) {
    static const std::map<Ngram, double> kEmpty;
    const auto& c = n < candidate.orders.size() ? candidate.orders[n] : kEmpty;
    const auto& r = n < reference.orders.size() ? reference.orders[n] : kEmpty;
    const double cc = dot(c, c);
    const double rr = dot(r, r);
    if (cc == 0.0 || rr == 0.0) continue;
    score += config.weights[n] * dot(c, r) / std::sqrt(cc * rr);
  }
  return score;
}

double cider(std::span<const std::string> candidates, std::span<const std::vector<std::string>> references,
             const CiderConfig& config) {
  config.validate();
  if (candidates.size() != references.size()) {
    throw ContractError("cider: " + std::to_string(candidates.size()) + " candidates vs " +
                        std::to_string(references.size()) + " reference sets");
  }
  if (candidates.empty()) throw ContractError("cider: empty input");

  CorpusStats stats;
  const CorpusStats* corpus = nullptr;
  if (config.weighting == NgramWeighting::TfIdf) {
    stats = CorpusStats::from_references(references, config.max_n);
    corpus = &stats;
  }

  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (references[i].empty()) throw ContractError("cider: sample " + std::to_string(i) + " has no references");
    const NgramProfile cand = ngram_profile(candidates[i], config.max_n, config.weighting, corpus);
    double sample = 0.0;
    for (const auto& ref : references[i]) {
      sample += cider_pair(cand, ngram_profile(ref, config.max_n, config.weighting, corpus), config);
    }
    total += sample / static_cast<double>(references[i].size());
  }
  return total / static_cast<double>(candidates.size());
}

std::vector<std::string> split_references(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.emplace_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

}  // namespace cavq
