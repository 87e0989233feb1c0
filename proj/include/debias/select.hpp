#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "debias/common.hpp"
#include "debias/csv.hpp"
#include "debias/model.hpp"
#include "debias/weaklabel.hpp"

namespace debias {

// Nearest integer to fraction * n (halves round up), at least 1 when n > 0.
inline std::size_t selection_count(std::size_t n, double fraction) {
  if (n == 0) return 0;
  // The offset keeps exact halves such as 0.15 * 10 from rounding down.
  auto k = static_cast<std::size_t>(std::floor(fraction * double(n) + 0.5 + 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

struct SelectionReport {
  double fraction = 0.0;
  std::vector<std::size_t> selected;    // entry positions, most confident first
  std::vector<std::string> selected_ids;
  std::vector<std::size_t> unselected;  // entry positions, dataset order
  std::optional<double> noise_rate;     // when every selected doc has gold
  std::vector<std::size_t> per_class;   // selected count by pseudo-label

  nlohmann::ordered_json to_json(const ClassSet& classes) const {
    nlohmann::ordered_json j;
    j["fraction"] = fraction;
    j["selected_count"] = selected.size();
    j["unselected_count"] = unselected.size();
    j["noise_rate"] = noise_rate ? nlohmann::ordered_json(*noise_rate) : nullptr;
    nlohmann::ordered_json per = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < per_class.size(); ++c)
      per[classes.name(ClassId(c))] = per_class[c];
    j["per_class_selected"] = std::move(per);
    j["selected_ids"] = selected_ids;
    return j;
  }
};

// Entry positions sorted by confidence at the pseudo-label, descending; equal
// confidences fall back to ascending document id. Compared in log space so
// posteriors that round to 1.0 still order correctly.
inline std::vector<std::size_t> confidence_ranking(const PseudoLabeledDataset& dataset,
                                                   const std::vector<ConfidenceScore>& scores) {
  std::unordered_map<std::string_view, double> by_id;
  by_id.reserve(scores.size());
  for (const auto& s : scores) by_id[s.id] = s.log_probability;
  std::vector<std::pair<double, std::size_t>> keyed;
  keyed.reserve(dataset.size());
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& id = dataset.document(dataset.entries()[i]).id;
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      missing.push_back(id);
      continue;
    }
    keyed.emplace_back(it->second, i);
  }
  if (!missing.empty()) {
    std::string msg = "no confidence score for:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    throw ValidationError(msg);
  }
  std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return dataset.document(dataset.entries()[a.second]).id <
           dataset.document(dataset.entries()[b.second]).id;
  });
  std::vector<std::size_t> order;
  order.reserve(keyed.size());
  for (const auto& [_, i] : keyed) order.push_back(i);
  return order;
}

namespace detail {

inline SelectionReport report_from_order(const PseudoLabeledDataset& dataset,
                                         const std::vector<std::size_t>& order,
                                         std::size_t count, double fraction) {
  SelectionReport r;
  r.fraction = fraction;
  r.per_class.assign(dataset.corpus().classes().size(), 0);
  std::vector<char> taken(dataset.size(), 0);
  std::size_t wrong = 0;
  bool all_gold = true;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& e = dataset.entries()[order[i]];
    const auto& d = dataset.document(e);
    r.selected.push_back(order[i]);
    r.selected_ids.push_back(d.id);
    ++r.per_class[e.label];
    taken[order[i]] = 1;
    if (!d.gold) all_gold = false;
    else if (*d.gold != e.label) ++wrong;
  }
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (!taken[i]) r.unselected.push_back(i);
  if (all_gold && count > 0) r.noise_rate = double(wrong) / double(count);
  return r;
}

}  // namespace detail

inline SelectionReport select_top(const PseudoLabeledDataset& dataset,
                                  const std::vector<ConfidenceScore>& scores,
                                  double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ValidationError("selection fraction must lie in (0, 1]");
  auto order = confidence_ranking(dataset, scores);
  return detail::report_from_order(dataset, order, selection_count(dataset.size(), fraction),
                                   fraction);
}

// Diagnostic upper bound: keeps exactly the entries whose pseudo-label is
// correct. Needs gold labels.
inline SelectionReport select_oracle(const PseudoLabeledDataset& dataset) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& e = dataset.entries()[i];
    const auto& d = dataset.document(e);
    if (!d.gold) throw ValidationError("oracle selection needs gold labels; '" + d.id + "' has none");
    if (*d.gold == e.label) order.push_back(i);
  }
  std::size_t n = order.size();
  double fraction = dataset.empty() ? 0.0 : double(n) / double(dataset.size());
  return detail::report_from_order(dataset, order, n, fraction);
}

/// Noise rate among the top-`f` most confident entries for each fraction.
inline std::vector<std::pair<double, double>> noise_curve(
    const PseudoLabeledDataset& dataset, const std::vector<ConfidenceScore>& scores,
    const std::vector<double>& fractions) {
  if (fractions.empty()) throw ValidationError("noise curve needs at least one fraction");
  for (const auto& e : dataset.entries())
    if (!dataset.document(e).gold)
      throw ValidationError("noise curve needs gold labels; '" + dataset.document(e).id +
                            "' has none");
  auto order = confidence_ranking(dataset, scores);
  std::vector<std::pair<double, double>> curve;
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ValidationError("fractions must lie in (0, 1]");
    auto r = detail::report_from_order(dataset, order, selection_count(dataset.size(), f), f);
    curve.emplace_back(f, r.noise_rate.value_or(0.0));
  }
  return curve;
}

inline void write_curve_csv(const std::vector<std::pair<double, double>>& curve,
                            std::ostream& out) {
  csv::write_row(out, {"fraction", "noise_rate"});
  for (const auto& [f, r] : curve) csv::write_row(out, {format_rate(f), format_rate(r)});
}

// The subset of `dataset` at the given entry positions.
inline PseudoLabeledDataset subset(const PseudoLabeledDataset& dataset,
                                   const std::vector<std::size_t>& positions) {
  std::vector<PseudoLabel> entries;
  entries.reserve(positions.size());
  for (auto i : positions) entries.push_back(dataset.entries()[i]);
  return PseudoLabeledDataset(dataset.corpus_ptr(), std::move(entries));
}

/// Confidence at the pseudo-label for every entry of `dataset`.
inline std::vector<ConfidenceScore> confidence_scores(
    const LinearTextClassifier& model, const PseudoLabeledDataset& dataset,
    EvaluateOn evaluate_on = EvaluateOn::original, const CorruptionSpec* spec = nullptr,
    const SeedLexicon* lexicon = nullptr) {
  std::vector<ConfidenceScore> out;
  out.reserve(dataset.size());
  for (const auto& e : dataset.entries()) {
    out.push_back(predict_proba(model, dataset.document(e), e.label, evaluate_on, spec,
                                lexicon, &dataset.corpus().classes()));
  }
  return out;
}

}  // namespace debias
