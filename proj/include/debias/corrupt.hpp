#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "debias/common.hpp"
#include "debias/corpus.hpp"
#include "debias/rng.hpp"
#include "debias/weaklabel.hpp"

namespace debias {

enum class CorruptionKind { none, seed_deletion, random_deletion };

inline const char* to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::none: return "none";
    case CorruptionKind::seed_deletion: return "seed-deletion";
    case CorruptionKind::random_deletion: return "random-deletion";
  }
  return "?";
}

inline CorruptionKind parse_corruption_kind(const std::string& s) {
  if (s == "none") return CorruptionKind::none;
  if (s == "seed-deletion") return CorruptionKind::seed_deletion;
  if (s == "random-deletion") return CorruptionKind::random_deletion;
  throw ValidationError("unknown corruption kind '" + s +
                        "' (expected none|seed-deletion|random-deletion)");
}

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::none;
  double deletion_ratio = 0.9;  // random deletion only
  std::uint64_t rng_seed = 0;
  bool resample_per_epoch = false;

  void validate() const {
    if (!(deletion_ratio >= 0.0 && deletion_ratio <= 1.0)) {
      throw ValidationError("deletion ratio must lie in [0, 1], got " +
                            std::to_string(deletion_ratio));
    }
  }
};

struct CorruptedDocument {
  std::size_t doc = 0;
  std::string source_id;
  std::vector<std::string> tokens;
  std::vector<std::size_t> deleted;  // ascending positions in the source
};

namespace detail {

inline CorruptedDocument keep_except(std::size_t doc_index, const Document& doc,
                                     std::vector<std::size_t> deleted) {
  CorruptedDocument out{doc_index, doc.id, {}, std::move(deleted)};
  out.tokens.reserve(doc.tokens.size() - out.deleted.size());
  std::size_t next = 0;
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    if (next < out.deleted.size() && out.deleted[next] == i) {
      ++next;
      continue;
    }
    out.tokens.push_back(doc.tokens[i]);
  }
  return out;
}

}  // namespace detail

/// Removes every occurrence of the given seed words; other tokens, including
/// seeds of other classes, stay in order.
inline CorruptedDocument seed_delete(const Document& doc,
                                     const std::set<std::string>& seeds,
                                     std::size_t doc_index = 0) {
  std::vector<std::size_t> deleted;
  for (std::size_t i = 0; i < doc.tokens.size(); ++i)
    if (seeds.count(doc.tokens[i])) deleted.push_back(i);
  return detail::keep_except(doc_index, doc, std::move(deleted));
}

inline CorruptedDocument seed_delete(const Document& doc, ClassId pseudo_label,
                                     const SeedLexicon& lexicon,
                                     const ClassSet& classes,
                                     std::size_t doc_index = 0) {
  return seed_delete(doc, lexicon.seeds_for(classes.name(pseudo_label)), doc_index);
}

// Number of positions random deletion removes from an n-token document:
// ceil(p * n), capped so that one token survives.
inline std::size_t random_deletion_count(std::size_t n, double p) {
  if (n == 0) return 0;
  // The small offset keeps products such as 0.7 * 10 = 7.000000000000001 from
  // rounding up to the next integer.
  double raw = std::ceil(p * double(n) - 1e-9);
  std::size_t m = raw <= 0.0 ? 0 : static_cast<std::size_t>(raw);
  return std::min(m, n - 1);
}

// RNG stream for one document's deletion mask; depends only on the corruption
// seed, the document id and the epoch, never on document order.
inline std::uint64_t document_stream(std::uint64_t seed, const std::string& id,
                                     std::uint64_t epoch) {
  return child_seed(child_seed(seed, id), epoch);
}

inline CorruptedDocument random_delete(const Document& doc, const CorruptionSpec& spec,
                                       std::size_t doc_index = 0,
                                       std::uint64_t epoch = 0) {
  spec.validate();
  const std::size_t n = doc.tokens.size();
  if (n == 0) return {doc_index, doc.id, {}, {}};
  const std::size_t m = random_deletion_count(n, spec.deletion_ratio);
  Rng rng(document_stream(spec.rng_seed, doc.id, epoch));
  return detail::keep_except(doc_index, doc, rng.sample_without_replacement(n, m));
}

struct CorruptedEntry {
  CorruptedDocument doc;
  ClassId pseudo_label;
  Provenance provenance;
};

using CorruptedDataset = std::vector<CorruptedEntry>;

// Corrupts one pseudo-labeled entry. Seed deletion only touches labels that a
// seed rule produced; self-training labels pass through unchanged.
inline CorruptedDocument corrupt_entry(const PseudoLabeledDataset& dataset,
                                       const PseudoLabel& e,
                                       const SeedLexicon* lexicon,
                                       const CorruptionSpec& spec,
                                       std::uint64_t epoch = 0) {
  const Document& doc = dataset.document(e);
  switch (spec.kind) {
    case CorruptionKind::seed_deletion:
      if (e.provenance != Provenance::self_train) {
        return seed_delete(doc, e.label, *lexicon, dataset.corpus().classes(), e.doc);
      }
      break;
    case CorruptionKind::random_deletion:
      return random_delete(doc, spec, e.doc, epoch);
    case CorruptionKind::none:
      break;
  }
  return {e.doc, doc.id, doc.tokens, {}};
}

inline CorruptedDataset corrupt_dataset(const PseudoLabeledDataset& dataset,
                                        const SeedLexicon* lexicon,
                                        const CorruptionSpec& spec,
                                        std::uint64_t epoch = 0) {
  spec.validate();
  if (spec.kind == CorruptionKind::seed_deletion && lexicon == nullptr) {
    throw ValidationError("seed deletion requires a seed lexicon");
  }
  CorruptedDataset out;
  out.reserve(dataset.size());
  for (const auto& e : dataset.entries()) {
    out.push_back({corrupt_entry(dataset, e, lexicon, spec, epoch), e.label, e.provenance});
  }
  return out;
}

inline void write_corrupted_jsonl(const CorruptedDataset& data, const ClassSet& classes,
                                  std::ostream& out) {
  for (const auto& e : data) {
    nlohmann::ordered_json rec;
    rec["id"] = e.doc.source_id;
    rec["tokens"] = e.doc.tokens;
    rec["pseudo_label"] = classes.name(e.pseudo_label);
    out << rec.dump() << '\n';
  }
}

}  // namespace debias
