#pragma once

#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "debias/common.hpp"
#include "debias/corpus.hpp"
#include "debias/csv.hpp"
#include "debias/rng.hpp"

namespace debias {

enum class Provenance { seed_match, synthesized, self_train };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::seed_match: return "seed-match";
    case Provenance::synthesized: return "synthesized";
    case Provenance::self_train: return "self-train";
  }
  return "?";
}

inline Provenance parse_provenance(const std::string& s) {
  if (s == "seed-match") return Provenance::seed_match;
  if (s == "synthesized") return Provenance::synthesized;
  if (s == "self-train") return Provenance::self_train;
  throw ValidationError("unknown provenance '" + s + "'");
}

struct PseudoLabel {
  std::size_t doc;  // index into the source corpus
  ClassId label;
  Provenance provenance;
};

// Pseudo-labels over a corpus. Every corpus document is either an entry or
// unmatched, never both.
class PseudoLabeledDataset {
 public:
  PseudoLabeledDataset() = default;
  PseudoLabeledDataset(std::shared_ptr<const Corpus> corpus,
                       std::vector<PseudoLabel> entries)
      : corpus_(std::move(corpus)), entries_(std::move(entries)) {
    if (!corpus_) throw std::invalid_argument("dataset needs a corpus");
    std::vector<char> used(corpus_->size(), 0);
    const auto k = ClassId(corpus_->classes().size());
    for (const auto& e : entries_) {
      if (e.doc >= corpus_->size()) {
        throw ValidationError("pseudo-label refers to a document outside the corpus");
      }
      if (used[e.doc]) {
        throw ValidationError("document '" + (*corpus_)[e.doc].id +
                              "' pseudo-labeled twice");
      }
      if (e.label < 0 || e.label >= k) {
        throw ValidationError("pseudo-label out of range for '" +
                              (*corpus_)[e.doc].id + "'");
      }
      used[e.doc] = 1;
    }
    for (std::size_t i = 0; i < used.size(); ++i)
      if (!used[i]) unmatched_.push_back(i);
  }

  const Corpus& corpus() const { return *corpus_; }
  const std::shared_ptr<const Corpus>& corpus_ptr() const { return corpus_; }
  const std::vector<PseudoLabel>& entries() const { return entries_; }
  const std::vector<std::size_t>& unmatched() const { return unmatched_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const Document& document(const PseudoLabel& e) const { return (*corpus_)[e.doc]; }

 private:
  std::shared_ptr<const Corpus> corpus_;
  std::vector<PseudoLabel> entries_;
  std::vector<std::size_t> unmatched_;
};

// Corpus class id for each lexicon class.
inline std::vector<ClassId> map_lexicon_classes(const SeedLexicon& lexicon,
                                                const ClassSet& classes) {
  std::vector<ClassId> to_corpus;
  for (const auto& name : lexicon.classes().names()) {
    auto id = classes.find(name);
    if (!id) {
      throw ValidationError("seed lexicon class '" + name +
                            "' is not a corpus class");
    }
    to_corpus.push_back(*id);
  }
  return to_corpus;
}

// Per-class seed occurrence counts (with multiplicity), indexed by corpus
// class id.
inline std::vector<std::size_t> seed_counts(const std::vector<std::string>& tokens,
                                            const SeedLexicon& lexicon,
                                            const std::vector<ClassId>& to_corpus,
                                            std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& t : tokens) {
    if (auto owner = lexicon.owner(t)) ++counts[to_corpus[*owner]];
  }
  return counts;
}

/// Assigns each document the class whose seeds occur most often in it.
/// Documents with no seed occurrence, or with a tie for the maximum count,
/// are left unmatched.
inline PseudoLabeledDataset seed_match(std::shared_ptr<const Corpus> corpus,
                                       const SeedLexicon& lexicon) {
  const auto to_corpus = map_lexicon_classes(lexicon, corpus->classes());
  const std::size_t k = corpus->classes().size();
  std::vector<PseudoLabel> entries;
  for (std::size_t i = 0; i < corpus->size(); ++i) {
    auto counts = seed_counts((*corpus)[i].tokens, lexicon, to_corpus, k);
    std::size_t best = 0;
    ClassId arg = -1;
    bool tie = false;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > best) {
        best = counts[c];
        arg = ClassId(c);
        tie = false;
      } else if (counts[c] == best && best > 0) {
        tie = true;
      }
    }
    if (arg >= 0 && !tie) entries.push_back({i, arg, Provenance::seed_match});
  }
  return PseudoLabeledDataset(std::move(corpus), std::move(entries));
}

struct NoiseTransitionMatrix {
  std::vector<std::string> classes;
  // counts[gold][pseudo]
  std::vector<std::vector<std::size_t>> counts;

  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& row : counts)
      for (auto c : row) t += c;
    return t;
  }

  std::size_t off_diagonal() const {
    std::size_t t = 0;
    for (std::size_t y = 0; y < counts.size(); ++y)
      for (std::size_t p = 0; p < counts[y].size(); ++p)
        if (y != p) t += counts[y][p];
    return t;
  }

  double overall_noise_rate() const {
    auto t = total();
    return t ? double(off_diagonal()) / double(t) : 0.0;
  }

  // Row-normalized; a gold class with no entries gets an all-zero row.
  std::vector<std::vector<double>> rates() const {
    std::vector<std::vector<double>> r(counts.size());
    for (std::size_t y = 0; y < counts.size(); ++y) {
      std::size_t row = 0;
      for (auto c : counts[y]) row += c;
      r[y].resize(counts[y].size(), 0.0);
      if (row == 0) continue;
      for (std::size_t p = 0; p < counts[y].size(); ++p)
        r[y][p] = double(counts[y][p]) / double(row);
    }
    return r;
  }

  // Fraction of gold-y entries whose pseudo-label differs from y.
  double class_noise_rate(std::size_t y) const {
    std::size_t row = 0;
    for (auto c : counts[y]) row += c;
    return row ? double(row - counts[y][y]) / double(row) : 0.0;
  }

  bool operator==(const NoiseTransitionMatrix& o) const {
    return classes == o.classes && counts == o.counts;
  }
};

inline NoiseTransitionMatrix noise_stats(const PseudoLabeledDataset& dataset) {
  const auto& corpus = dataset.corpus();
  const std::size_t k = corpus.classes().size();
  NoiseTransitionMatrix m{corpus.classes().names(),
                          std::vector<std::vector<std::size_t>>(
                              k, std::vector<std::size_t>(k, 0))};
  std::vector<std::string> missing;
  for (const auto& e : dataset.entries()) {
    const auto& d = dataset.document(e);
    if (!d.gold) {
      missing.push_back(d.id);
      continue;
    }
    ++m.counts[*d.gold][e.label];
  }
  if (!missing.empty()) {
    std::string msg = "entries without gold label:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ... (" + std::to_string(missing.size()) + " total)";
    throw ValidationError(msg);
  }
  return m;
}

/// Feature-independent noise with the same transition matrix: inside each gold
/// class the pseudo-labels are shuffled across that class's documents, so the
/// per-(gold, pseudo) counts are preserved exactly while the assignment no
/// longer depends on document content.
inline PseudoLabeledDataset synthesize_flip_noise(const PseudoLabeledDataset& dataset,
                                                  std::uint64_t rng_seed) {
  const auto& corpus = dataset.corpus();
  const std::size_t k = corpus.classes().size();
  std::vector<std::vector<std::size_t>> slots(k);  // entry positions by gold class
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& d = dataset.document(dataset.entries()[i]);
    if (!d.gold) {
      throw ValidationError("flip-noise synthesis needs gold labels; '" + d.id +
                            "' has none");
    }
    slots[*d.gold].push_back(i);
  }
  Rng rng(rng_seed);
  std::vector<PseudoLabel> out = dataset.entries();
  for (std::size_t y = 0; y < k; ++y) {
    std::vector<ClassId> labels;
    labels.reserve(slots[y].size());
    for (auto i : slots[y]) labels.push_back(dataset.entries()[i].label);
    rng.shuffle(labels);
    for (std::size_t j = 0; j < slots[y].size(); ++j) {
      out[slots[y][j]].label = labels[j];
      out[slots[y][j]].provenance = Provenance::synthesized;
    }
  }
  return PseudoLabeledDataset(dataset.corpus_ptr(), std::move(out));
}

// ---- file formats ----

inline void write_pseudo_labels(const PseudoLabeledDataset& dataset, std::ostream& out) {
  for (const auto& e : dataset.entries()) {
    nlohmann::ordered_json rec;
    rec["id"] = dataset.document(e).id;
    rec["pseudo_label"] = dataset.corpus().classes().name(e.label);
    rec["provenance"] = to_string(e.provenance);
    out << rec.dump() << '\n';
  }
}

inline PseudoLabeledDataset read_pseudo_labels(std::shared_ptr<const Corpus> corpus,
                                               std::istream& in) {
  std::vector<PseudoLabel> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto rec = nlohmann::json::parse(line);
      auto id = rec.at("id").get<std::string>();
      auto label = rec.at("pseudo_label").get<std::string>();
      auto prov = rec.contains("provenance")
                      ? parse_provenance(rec["provenance"].get<std::string>())
                      : Provenance::seed_match;
      entries.push_back({corpus->index_of(id), corpus->classes().id(label), prov});
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("pseudo-labels line " + std::to_string(lineno) + ": " +
                            e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("pseudo-labels line " + std::to_string(lineno) + ": " +
                            e.what());
    }
  }
  return PseudoLabeledDataset(std::move(corpus), std::move(entries));
}

inline PseudoLabeledDataset read_pseudo_labels(std::shared_ptr<const Corpus> corpus,
                                               const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open pseudo-label file '" + path + "'");
  return read_pseudo_labels(std::move(corpus), in);
}

inline void write_matrix_counts_csv(const NoiseTransitionMatrix& m, std::ostream& out) {
  std::vector<std::string> header{"gold\\pseudo"};
  header.insert(header.end(), m.classes.begin(), m.classes.end());
  csv::write_row(out, header);
  for (std::size_t y = 0; y < m.counts.size(); ++y) {
    std::vector<std::string> row{m.classes[y]};
    for (auto c : m.counts[y]) row.push_back(std::to_string(c));
    csv::write_row(out, row);
  }
}

inline void write_matrix_rates_csv(const NoiseTransitionMatrix& m, std::ostream& out) {
  std::vector<std::string> header{"gold\\pseudo"};
  header.insert(header.end(), m.classes.begin(), m.classes.end());
  csv::write_row(out, header);
  auto r = m.rates();
  for (std::size_t y = 0; y < r.size(); ++y) {
    std::vector<std::string> row{m.classes[y]};
    for (auto v : r[y]) row.push_back(format_rate(v));
    csv::write_row(out, row);
  }
}

}  // namespace debias
