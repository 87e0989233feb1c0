#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "debias/analysis.hpp"
#include "debias/common.hpp"
#include "debias/corpus.hpp"
#include "debias/corrupt.hpp"
#include "debias/csv.hpp"
#include "debias/model.hpp"
#include "debias/rng.hpp"
#include "debias/select.hpp"
#include "debias/weaklabel.hpp"

namespace debias {

enum class SelectionMode { confidence, oracle, all };

inline const char* to_string(SelectionMode m) {
  switch (m) {
    case SelectionMode::confidence: return "confidence";
    case SelectionMode::oracle: return "oracle";
    case SelectionMode::all: return "all";
  }
  return "?";
}

inline SelectionMode parse_selection_mode(const std::string& s) {
  if (s == "confidence") return SelectionMode::confidence;
  if (s == "oracle") return SelectionMode::oracle;
  if (s == "all") return SelectionMode::all;
  throw ValidationError("selection mode must be confidence|oracle|all, got '" + s + "'");
}

struct SelfTrainConfig {
  int iterations = 5;
  double tau = 0.1;  // fraction of the unlabeled pool merged per iteration
  double selection_fraction = 0.5;
  SelectionMode selection = SelectionMode::confidence;
  CorruptionSpec corruption{CorruptionKind::random_deletion, 0.9, 0, false};
  TrainConfig train;
  EvaluateOn evaluate_on = EvaluateOn::original;
  std::uint64_t seed = 0;
  unsigned threads = 0;  // pool scoring; 0 = hardware concurrency

  void validate() const {
    if (iterations < 0) throw ValidationError("iterations must be >= 0");
    if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("tau must lie in [0, 1]");
    if (!(selection_fraction > 0.0 && selection_fraction <= 1.0))
      throw ValidationError("selection fraction must lie in (0, 1]");
    corruption.validate();
    train.validate();
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["iterations"] = iterations;
    j["tau"] = tau;
    j["selection_fraction"] = selection_fraction;
    j["selection"] = to_string(selection);
    j["corruption"] = {{"kind", to_string(corruption.kind)},
                       {"deletion_ratio", corruption.deletion_ratio},
                       {"resample_per_epoch", corruption.resample_per_epoch}};
    j["train"] = {{"epochs", train.epochs},
                  {"learning_rate", train.learning_rate},
                  {"batch_size", train.batch_size},
                  {"dim", train.dim}};
    j["evaluate_on"] = to_string(evaluate_on);
    j["seed"] = seed;
    return j;
  }
};

struct IterationRecord {
  int iteration = 0;  // 0 = model trained on the selected pseudo-labels
  std::size_t train_size = 0;
  std::size_t merged = 0;
  std::size_t pool_size = 0;  // unlabeled documents left after merging
  std::optional<double> merged_noise_rate;
  std::optional<MetricsRecord> metrics;
  std::uint64_t checksum = 0;
};

struct RunLedger {
  nlohmann::ordered_json config;
  std::size_t corpus_size = 0;
  std::size_t matched = 0;
  std::optional<double> overall_noise_rate;
  std::size_t selected = 0;
  std::optional<double> selection_noise_rate;
  std::vector<IterationRecord> records;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["config"] = config;
    j["corpus_size"] = corpus_size;
    j["matched"] = matched;
    j["overall_noise_rate"] =
        overall_noise_rate ? nlohmann::ordered_json(*overall_noise_rate) : nullptr;
    j["selected"] = selected;
    j["selection_noise_rate"] =
        selection_noise_rate ? nlohmann::ordered_json(*selection_noise_rate) : nullptr;
    auto recs = nlohmann::ordered_json::array();
    for (const auto& r : records) {
      nlohmann::ordered_json o;
      o["iteration"] = r.iteration;
      o["train_size"] = r.train_size;
      o["merged"] = r.merged;
      o["pool_size"] = r.pool_size;
      o["merged_noise_rate"] =
          r.merged_noise_rate ? nlohmann::ordered_json(*r.merged_noise_rate) : nullptr;
      o["metrics"] = r.metrics ? r.metrics->to_json() : nlohmann::ordered_json(nullptr);
      o["model_checksum"] = hex64(r.checksum);
      recs.push_back(std::move(o));
    }
    j["iterations"] = std::move(recs);
    return j;
  }

  void write_csv(std::ostream& out) const {
    csv::write_row(out, {"iteration", "train_size", "merged", "pool_size", "micro_f1",
                         "macro_f1", "model_checksum"});
    for (const auto& r : records) {
      csv::write_row(out, {std::to_string(r.iteration), std::to_string(r.train_size),
                           std::to_string(r.merged), std::to_string(r.pool_size),
                           r.metrics ? format_rate(r.metrics->micro_f1) : "",
                           r.metrics ? format_rate(r.metrics->macro_f1) : "",
                           hex64(r.checksum)});
    }
  }
};

struct PipelineResult {
  LinearTextClassifier model;
  RunLedger ledger;
  PseudoLabeledDataset labeled;  // final training set
};

namespace detail {

// Calls fn(i) for i in [0, n) on up to `threads` workers; results must go to
// per-index slots.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = unsigned(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) fn(i);
    });
}

struct PoolPrediction {
  std::size_t doc;
  ClassId label;
  double log_confidence;
};

}  // namespace detail

/// Argmax prediction for every document of `corpus`, on the original text.
/// Equal posteriors resolve to the lowest class id.
inline std::vector<ClassId> predict_labels(const LinearTextClassifier& model,
                                           const Corpus& corpus,
                                           const std::vector<std::size_t>& docs,
                                           unsigned threads = 0) {
  std::vector<ClassId> out(docs.size(), 0);
  detail::parallel_for(docs.size(), threads, [&](std::size_t i) {
    auto p = model.posterior(featurize(corpus[docs[i]].tokens, model.dim()));
    out[i] = ClassId(std::max_element(p.begin(), p.end()) - p.begin());
  });
  return out;
}

/// Micro/macro-F1 of the model's predictions against the gold labels of every
/// labeled document in `corpus`.
inline MetricsRecord evaluate(const LinearTextClassifier& model, const Corpus& corpus,
                              unsigned threads = 0) {
  std::vector<std::size_t> docs;
  std::vector<ClassId> gold;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].gold) {
      docs.push_back(i);
      gold.push_back(*corpus[i].gold);
    }
  }
  if (docs.empty()) throw ValidationError("evaluation needs gold labels");
  return f1_metrics(gold, predict_labels(model, corpus, docs, threads), model.classes());
}

// Number of pool documents merged in one round.
inline std::size_t merge_count(std::size_t pool, double tau) {
  if (pool == 0 || tau <= 0.0) return 0;
  return selection_count(pool, tau);
}

/// Seed-match, corrupt, train the confidence model, keep the most confident
/// pseudo-labels, then grow the labeled set by self-training.
inline PipelineResult run_pipeline(std::shared_ptr<const Corpus> corpus,
                                   const SeedLexicon& lexicon, const SelfTrainConfig& config) {
  config.validate();
  PipelineResult result;
  RunLedger& ledger = result.ledger;
  ledger.config = config.to_json();
  ledger.corpus_size = corpus->size();

  auto matched = seed_match(corpus, lexicon);
  if (matched.empty()) throw ValidationError("no pseudo-labels produced");
  ledger.matched = matched.size();
  const bool gold_everywhere = corpus->fully_labeled();
  const bool any_gold = std::any_of(corpus->documents().begin(), corpus->documents().end(),
                                    [](const Document& d) { return d.gold.has_value(); });
  if (gold_everywhere) ledger.overall_noise_rate = noise_stats(matched).overall_noise_rate();

  CorruptionSpec spec = config.corruption;
  spec.rng_seed = child_seed(config.seed, "corruption");
  auto train_config = [&](std::string_view stage, std::uint64_t index) {
    TrainConfig tc = config.train;
    tc.seed = child_seed(child_seed(config.seed, stage), index);
    return tc;
  };

  // Selection.
  SelectionReport report;
  switch (config.selection) {
    case SelectionMode::confidence: {
      auto confidence_model =
          train_on_dataset(matched, &lexicon, spec, train_config("confidence", 0));
      auto scores = confidence_scores(confidence_model, matched, config.evaluate_on, &spec,
                                      &lexicon);
      report = select_top(matched, scores, config.selection_fraction);
      break;
    }
    case SelectionMode::oracle:
      report = select_oracle(matched);
      break;
    case SelectionMode::all: {
      std::vector<std::size_t> order(matched.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      report = detail::report_from_order(matched, order, order.size(), 1.0);
      break;
    }
  }
  ledger.selected = report.selected.size();
  ledger.selection_noise_rate = report.noise_rate;

  std::vector<PseudoLabel> labeled;
  std::vector<char> is_labeled(corpus->size(), 0);
  for (auto pos : report.selected) {
    labeled.push_back(matched.entries()[pos]);
    is_labeled[matched.entries()[pos].doc] = 1;
  }
  std::sort(labeled.begin(), labeled.end(),
            [](const PseudoLabel& a, const PseudoLabel& b) { return a.doc < b.doc; });

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < corpus->size(); ++i)
    if (!is_labeled[i]) pool.push_back(i);

  auto train_round = [&](int round) {
    PseudoLabeledDataset ds(corpus, labeled);
    return train_on_dataset(ds, &lexicon, spec, train_config("self-train", std::uint64_t(round)));
  };
  auto record = [&](int round, std::size_t merged, std::optional<double> merged_noise) {
    IterationRecord r;
    r.iteration = round;
    r.train_size = labeled.size();
    r.merged = merged;
    r.pool_size = pool.size();
    r.merged_noise_rate = merged_noise;
    if (any_gold) r.metrics = evaluate(result.model, *corpus, config.threads);
    r.checksum = result.model.checksum();
    ledger.records.push_back(std::move(r));
  };

  result.model = train_round(0);
  record(0, 0, std::nullopt);

  for (int round = 1; round <= config.iterations; ++round) {
    const std::size_t take = merge_count(pool.size(), config.tau);
    std::optional<double> merged_noise;
    if (take > 0) {
      std::vector<detail::PoolPrediction> preds(pool.size());
      detail::parallel_for(pool.size(), config.threads, [&](std::size_t i) {
        auto x = featurize((*corpus)[pool[i]].tokens, result.model.dim());
        auto p = result.model.posterior(x);
        auto k = std::size_t(std::max_element(p.begin(), p.end()) - p.begin());
        preds[i] = {pool[i], ClassId(k), result.model.log_posterior(x, k)};
      });
      std::sort(preds.begin(), preds.end(), [&](const auto& a, const auto& b) {
        if (a.log_confidence != b.log_confidence) return a.log_confidence > b.log_confidence;
        return (*corpus)[a.doc].id < (*corpus)[b.doc].id;
      });
      std::size_t wrong = 0;
      bool all_gold = true;
      for (std::size_t i = 0; i < take; ++i) {
        const auto& pr = preds[i];
        labeled.push_back({pr.doc, pr.label, Provenance::self_train});
        is_labeled[pr.doc] = 1;
        const auto& gold = (*corpus)[pr.doc].gold;
        if (!gold) all_gold = false;
        else if (*gold != pr.label) ++wrong;
      }
      if (all_gold) merged_noise = double(wrong) / double(take);
      std::erase_if(pool, [&](std::size_t d) { return is_labeled[d] != 0; });
      std::sort(labeled.begin(), labeled.end(),
                [](const PseudoLabel& a, const PseudoLabel& b) { return a.doc < b.doc; });
    }
    result.model = train_round(round);
    record(round, take, merged_noise);
  }

  result.labeled = PseudoLabeledDataset(corpus, std::move(labeled));
  return result;
}

}  // namespace debias
