#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "debias/common.hpp"
#include "debias/corpus.hpp"
#include "debias/rng.hpp"

namespace debias {

// Generator for corpora whose seed-matching noise is feature-dependent in the
// same way as real seed matching: a mislabeled document is one of class y that
// happens to mention a seed word of another class.
struct SyntheticConfig {
  std::size_t num_docs = 2000;
  std::size_t num_classes = 4;
  double noise_rate = 0.25;          // among seed-matched documents
  double unmatched_fraction = 0.2;   // documents with no seed at all
  std::size_t seeds_per_class = 10;
  std::size_t indicative_vocab = 3;     // per class
  std::size_t background_vocab = 3000;  // shared by all classes
  std::size_t min_length = 8;
  std::size_t max_length = 30;
  double indicative_share = 0.4;  // fraction of non-seed tokens drawn from the class vocabulary
  std::size_t max_seed_occurrences = 3;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_classes < 2) throw ValidationError("synthetic corpus needs >= 2 classes");
    if (num_docs < num_classes) throw ValidationError("too few documents");
    if (!(noise_rate >= 0 && noise_rate < 1)) throw ValidationError("noise rate in [0, 1)");
    if (!(unmatched_fraction >= 0 && unmatched_fraction < 1))
      throw ValidationError("unmatched fraction in [0, 1)");
    if (seeds_per_class == 0 || indicative_vocab == 0 || background_vocab == 0)
      throw ValidationError("vocabularies must be non-empty");
    if (min_length == 0 || max_length < min_length) throw ValidationError("bad length range");
    if (max_seed_occurrences == 0) throw ValidationError("max seed occurrences must be >= 1");
  }
};

struct SyntheticCorpus {
  std::shared_ptr<const Corpus> corpus;
  SeedLexicon lexicon;
};

namespace detail {

// Zipf(1) sampler over [0, n) by inverse CDF.
class Zipf {
 public:
  explicit Zipf(std::size_t n) : cdf_(n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += 1.0 / double(i + 1);
      cdf_[i] = acc;
    }
    for (auto& c : cdf_) c /= acc;
  }
  std::size_t draw(Rng& rng) const {
    double u = rng.uniform();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(std::size_t(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

inline std::string class_name(std::size_t c) { return "topic" + std::to_string(c); }

}  // namespace detail

inline SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& cfg) {
  cfg.validate();
  const std::size_t k = cfg.num_classes;
  Rng rng(child_seed(cfg.seed, "synthetic-corpus"));

  std::vector<std::pair<std::string, std::vector<std::string>>> seed_lists;
  std::vector<std::vector<std::string>> seeds(k);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t s = 0; s < cfg.seeds_per_class; ++s)
      seeds[c].push_back("seed" + std::to_string(c) + "x" + std::to_string(s));
    seed_lists.emplace_back(detail::class_name(c), seeds[c]);
  }

  // Gold classes are balanced, then shuffled.
  std::vector<std::size_t> gold(cfg.num_docs);
  for (std::size_t i = 0; i < gold.size(); ++i) gold[i] = i % k;
  rng.shuffle(gold);

  // Exact counts: which documents carry no seed, and which carry a seed of a
  // wrong class. Chosen per gold class so every class has the same noise.
  enum class Kind { clean, noisy, unmatched };
  std::vector<Kind> kind(cfg.num_docs, Kind::clean);
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < gold.size(); ++i)
      if (gold[i] == c) members.push_back(i);
    rng.shuffle(members);
    auto n_unmatched = std::size_t(std::llround(cfg.unmatched_fraction * double(members.size())));
    auto n_matched = members.size() - n_unmatched;
    auto n_noisy = std::size_t(std::llround(cfg.noise_rate * double(n_matched)));
    for (std::size_t j = 0; j < members.size(); ++j) {
      if (j < n_unmatched) kind[members[j]] = Kind::unmatched;
      else if (j < n_unmatched + n_noisy) kind[members[j]] = Kind::noisy;
    }
  }

  detail::Zipf indicative(cfg.indicative_vocab), background(cfg.background_vocab);
  ClassSet classes;
  for (std::size_t c = 0; c < k; ++c) classes.add(detail::class_name(c));

  std::vector<Document> docs;
  docs.reserve(cfg.num_docs);
  for (std::size_t i = 0; i < cfg.num_docs; ++i) {
    const std::size_t y = gold[i];
    const std::size_t len =
        cfg.min_length + std::size_t(rng.below(cfg.max_length - cfg.min_length + 1));
    std::vector<std::string> words;
    words.reserve(len + cfg.max_seed_occurrences);
    for (std::size_t w = 0; w < len; ++w) {
      if (rng.bernoulli(cfg.indicative_share)) {
        words.push_back("w" + std::to_string(y) + "v" + std::to_string(indicative.draw(rng)));
      } else {
        words.push_back("bg" + std::to_string(background.draw(rng)));
      }
    }
    if (kind[i] != Kind::unmatched) {
      std::size_t seed_class = y;
      if (kind[i] == Kind::noisy) {
        seed_class = (y + 1 + std::size_t(rng.below(k - 1))) % k;
      }
      const auto& word = seeds[seed_class][rng.below(seeds[seed_class].size())];
      const std::size_t occurrences = 1 + std::size_t(rng.below(cfg.max_seed_occurrences));
      for (std::size_t o = 0; o < occurrences; ++o) {
        auto pos = rng.below(words.size() + 1);
        words.insert(words.begin() + std::ptrdiff_t(pos), word);
      }
    }
    char id[32];
    std::snprintf(id, sizeof id, "doc%06zu", i);
    docs.push_back(Document::make(id, join_tokens(words), ClassId(y)));
  }
  return {std::make_shared<const Corpus>(std::move(docs), std::move(classes)),
          SeedLexicon::from_lists(seed_lists)};
}

}  // namespace debias
