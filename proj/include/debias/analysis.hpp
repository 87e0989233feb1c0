#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "debias/common.hpp"
#include "debias/csv.hpp"
#include "debias/rng.hpp"

namespace debias {

// ---------------------------------------------------------------------------
// Seed-deletion rate
//
// A document holds n_s seed words of its pseudo-label and n_c other words that
// indicate its true class. The seed-deletion rate is the probability that
// deletion removes every seed while at least one indicative word survives.

struct RsdQuery {
  int n_s = 0;
  int n_c = 0;
  double p = 0.0;

  void validate() const {
    if (n_s < 0 || n_c < 0) throw ValidationError("word counts must be non-negative");
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("p must lie in [0, 1]");
  }
};

/// Independent per-word deletion with probability p: p^n_s * (1 - p^n_c).
inline double rsd_closed_form(const RsdQuery& q) {
  q.validate();
  return std::pow(q.p, q.n_s) * (1.0 - std::pow(q.p, q.n_c));
}

namespace detail {

constexpr std::uint64_t kTrialsPerChunk = 1u << 13;

// Runs `chunk(c)` for every chunk index and sums the integer results. Each
// chunk owns its RNG stream, so the total does not depend on thread count.
template <class Fn>
std::uint64_t run_chunks(std::uint64_t chunks, unsigned threads, Fn chunk) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = unsigned(std::min<std::uint64_t>(threads, chunks));
  std::vector<std::uint64_t> hits(chunks, 0);
  if (threads <= 1) {
    for (std::uint64_t c = 0; c < chunks; ++c) hits[c] = chunk(c);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::uint64_t c = t; c < chunks; c += threads) hits[c] = chunk(c);
      });
    }
  }
  std::uint64_t total = 0;
  for (auto h : hits) total += h;
  return total;
}

}  // namespace detail

/// Simulates independent deletion over n_s + n_c marked words and returns the
/// fraction of trials meeting the seed-deletion event.
inline double rsd_monte_carlo(const RsdQuery& q, std::uint64_t trials,
                              std::uint64_t rng_seed, unsigned threads = 0) {
  q.validate();
  if (trials == 0) throw ValidationError("trials must be >= 1");
  const std::uint64_t chunks =
      (trials + detail::kTrialsPerChunk - 1) / detail::kTrialsPerChunk;
  auto hits = detail::run_chunks(chunks, threads, [&](std::uint64_t c) {
    Rng rng(child_seed(rng_seed, c));
    const std::uint64_t begin = c * detail::kTrialsPerChunk;
    const std::uint64_t end = std::min(trials, begin + detail::kTrialsPerChunk);
    std::uint64_t h = 0;
    for (std::uint64_t t = begin; t < end; ++t) {
      bool seeds_gone = true;
      for (int s = 0; s < q.n_s; ++s) {
        if (!rng.bernoulli(q.p)) {
          seeds_gone = false;
          break;
        }
      }
      if (!seeds_gone) continue;
      for (int w = 0; w < q.n_c; ++w) {
        if (!rng.bernoulli(q.p)) {
          ++h;
          break;
        }
      }
    }
    return h;
  });
  return double(hits) / double(trials);
}

namespace detail {

inline double log_choose(double n, double k) {
  return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1);
}

// C(n, k) / C(N, m) computed in log space; zero when k is out of range.
inline double choose_ratio(int n, int k, int N, int m) {
  if (k < 0 || k > n) return 0.0;
  return std::exp(log_choose(n, k) - log_choose(N, m));
}

}  // namespace detail

/// The same event under the fixed-count corruption actually used for training:
/// exactly min(ceil(p*n), n-1) of n = n_s + n_c + n_other positions are deleted
/// uniformly without replacement. Exact hypergeometric probability.
inline double rsd_fixed_count_exact(const RsdQuery& q, int n_other);

/// Monte-Carlo counterpart of rsd_fixed_count_exact.
inline double rsd_fixed_count_monte_carlo(const RsdQuery& q, int n_other,
                                          std::uint64_t trials, std::uint64_t rng_seed,
                                          unsigned threads = 0);

struct RsdRow {
  int n_s;
  int n_c;
  double p;
  double rate;
  double fixed_count_rate = -1.0;  // only when requested
};

struct RsdArgmax {
  int n_s;
  int n_c;
  double p;
  double rate;
};

struct RsdTable {
  std::vector<RsdRow> rows;
  std::vector<RsdArgmax> argmax;  // one per n_c, first grid point attaining the max
};

// {0, step, 2*step, ..., 1}; points are i*step so the grid does not drift.
inline std::vector<double> unit_grid(double step) {
  if (!(step > 0.0 && step <= 1.0)) throw ValidationError("grid step must be in (0, 1]");
  const auto n = static_cast<long>(std::llround(1.0 / step));
  if (std::abs(double(n) * step - 1.0) > 1e-9)
    throw ValidationError("grid step must divide 1");
  std::vector<double> g;
  for (long i = 0; i <= n; ++i) g.push_back(i == n ? 1.0 : double(i) * step);
  return g;
}

/// r_SD over every (n_c, p) grid point for a fixed n_s. With n_other >= 0 the
/// fixed-count model is evaluated alongside (exact probability).
inline RsdTable rsd_sweep(int n_s, const std::vector<int>& n_c_list,
                          const std::vector<double>& p_grid, int n_other = -1) {
  if (n_c_list.empty() || p_grid.empty()) throw ValidationError("sweep grids must be non-empty");
  RsdTable table;
  for (int n_c : n_c_list) {
    RsdArgmax best{n_s, n_c, p_grid.front(), -1.0};
    for (double p : p_grid) {
      RsdQuery q{n_s, n_c, p};
      RsdRow row{n_s, n_c, p, rsd_closed_form(q)};
      if (n_other >= 0) row.fixed_count_rate = rsd_fixed_count_exact(q, n_other);
      if (row.rate > best.rate) best = {n_s, n_c, p, row.rate};
      table.rows.push_back(row);
    }
    table.argmax.push_back(best);
  }
  return table;
}

inline void write_rsd_csv(const RsdTable& t, std::ostream& out) {
  bool fixed = !t.rows.empty() && t.rows.front().fixed_count_rate >= 0.0;
  std::vector<std::string> header{"n_s", "n_c", "p", "r_sd"};
  if (fixed) header.push_back("r_sd_fixed_count");
  csv::write_row(out, header);
  for (const auto& r : t.rows) {
    std::vector<std::string> row{std::to_string(r.n_s), std::to_string(r.n_c),
                                 format_rate(r.p), format_rate(r.rate)};
    if (fixed) row.push_back(format_rate(r.fixed_count_rate));
    csv::write_row(out, row);
  }
}

inline void write_rsd_argmax_csv(const RsdTable& t, std::ostream& out) {
  csv::write_row(out, {"n_s", "n_c", "argmax_p", "max_r_sd"});
  for (const auto& a : t.argmax)
    csv::write_row(out, {std::to_string(a.n_s), std::to_string(a.n_c),
                         format_rate(a.p), format_rate(a.rate)});
}

// ---------------------------------------------------------------------------
// Classification metrics

struct ClassMetrics {
  std::size_t tp = 0, fp = 0, fn = 0, support = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct MetricsRecord {
  std::vector<std::string> classes;
  std::vector<std::vector<std::size_t>> confusion;  // [gold][predicted]
  std::vector<ClassMetrics> per_class;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::vector<std::string> excluded_from_macro;  // classes absent from gold
  std::vector<std::string> warnings;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["micro_f1"] = micro_f1;
    j["macro_f1"] = macro_f1;
    j["accuracy"] = accuracy;
    auto per = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < classes.size(); ++c) {
      const auto& m = per_class[c];
      per.push_back({{"class", classes[c]},
                     {"precision", m.precision},
                     {"recall", m.recall},
                     {"f1", m.f1},
                     {"support", m.support}});
    }
    j["per_class"] = std::move(per);
    j["confusion"] = confusion;
    j["excluded_from_macro"] = excluded_from_macro;
    j["warnings"] = warnings;
    return j;
  }
};

/// Per-class precision/recall/F1, micro-F1 from pooled counts and macro-F1 as
/// the unweighted mean over classes that occur in `gold`. A 0/0 ratio is
/// reported as 0 and noted in `warnings`.
inline MetricsRecord f1_metrics(const std::vector<ClassId>& gold,
                                const std::vector<ClassId>& predicted,
                                const std::vector<std::string>& classes) {
  if (gold.size() != predicted.size()) {
    throw ValidationError("gold and predicted lengths differ (" +
                          std::to_string(gold.size()) + " vs " +
                          std::to_string(predicted.size()) + ")");
  }
  const std::size_t k = classes.size();
  MetricsRecord r;
  r.classes = classes;
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));
  r.per_class.resize(k);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || std::size_t(gold[i]) >= k || predicted[i] < 0 ||
        std::size_t(predicted[i]) >= k)
      throw ValidationError("label out of range at position " + std::to_string(i));
    ++r.confusion[gold[i]][predicted[i]];
  }
  std::size_t tp_all = 0, fp_all = 0, fn_all = 0;
  double macro_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    auto& m = r.per_class[c];
    m.tp = r.confusion[c][c];
    for (std::size_t o = 0; o < k; ++o) {
      if (o == c) continue;
      m.fn += r.confusion[c][o];
      m.fp += r.confusion[o][c];
    }
    m.support = m.tp + m.fn;
    if (m.tp + m.fp > 0) {
      m.precision = double(m.tp) / double(m.tp + m.fp);
    } else if (m.support > 0) {
      r.warnings.push_back("class '" + classes[c] + "' never predicted: precision 0/0 -> 0");
    }
    if (m.support > 0) m.recall = double(m.tp) / double(m.support);
    if (m.precision + m.recall > 0)
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    tp_all += m.tp;
    fp_all += m.fp;
    fn_all += m.fn;
    if (m.support > 0) {
      macro_sum += m.f1;
      ++present;
    } else {
      r.excluded_from_macro.push_back(classes[c]);
    }
  }
  if (!r.excluded_from_macro.empty())
    r.warnings.push_back("classes absent from gold excluded from macro-F1");
  if (present == 1) r.warnings.push_back("gold labels cover a single class");
  double micro_p = tp_all + fp_all ? double(tp_all) / double(tp_all + fp_all) : 0.0;
  double micro_r = tp_all + fn_all ? double(tp_all) / double(tp_all + fn_all) : 0.0;
  r.micro_f1 = micro_p + micro_r > 0 ? 2 * micro_p * micro_r / (micro_p + micro_r) : 0.0;
  r.macro_f1 = present ? macro_sum / double(present) : 0.0;
  r.accuracy = gold.empty() ? 0.0 : double(tp_all) / double(gold.size());
  if (gold.empty()) r.warnings.push_back("no instances");
  return r;
}

// ---- fixed-count model definitions ----

inline double rsd_fixed_count_exact(const RsdQuery& q, int n_other) {
  q.validate();
  if (n_other < 0) throw ValidationError("n_other must be non-negative");
  const int n = q.n_s + q.n_c + n_other;
  if (n == 0) return 0.0;
  std::size_t m_raw = std::size_t(std::max(0.0, std::ceil(q.p * n - 1e-9)));
  const int m = int(std::min<std::size_t>(m_raw, std::size_t(n - 1)));
  // P(all seeds deleted) - P(all seeds and all indicative words deleted)
  double all_seeds = detail::choose_ratio(n - q.n_s, m - q.n_s, n, m);
  double all_both = detail::choose_ratio(n - q.n_s - q.n_c, m - q.n_s - q.n_c, n, m);
  return std::max(0.0, all_seeds - all_both);
}

inline double rsd_fixed_count_monte_carlo(const RsdQuery& q, int n_other,
                                          std::uint64_t trials, std::uint64_t rng_seed,
                                          unsigned threads) {
  q.validate();
  if (trials == 0) throw ValidationError("trials must be >= 1");
  const int n = q.n_s + q.n_c + n_other;
  if (n == 0) return 0.0;
  std::size_t m_raw = std::size_t(std::max(0.0, std::ceil(q.p * n - 1e-9)));
  const std::size_t m = std::min<std::size_t>(m_raw, std::size_t(n - 1));
  const std::uint64_t chunks =
      (trials + detail::kTrialsPerChunk - 1) / detail::kTrialsPerChunk;
  auto hits = detail::run_chunks(chunks, threads, [&](std::uint64_t c) {
    Rng rng(child_seed(rng_seed, c));
    const std::uint64_t begin = c * detail::kTrialsPerChunk;
    const std::uint64_t end = std::min(trials, begin + detail::kTrialsPerChunk);
    std::uint64_t h = 0;
    for (std::uint64_t t = begin; t < end; ++t) {
      // positions [0, n_s) are seeds, [n_s, n_s + n_c) indicative words
      auto del = rng.sample_without_replacement(std::size_t(n), m);
      std::size_t seeds_deleted = 0, indicative_deleted = 0;
      for (auto i : del) {
        if (i < std::size_t(q.n_s)) ++seeds_deleted;
        else if (i < std::size_t(q.n_s + q.n_c)) ++indicative_deleted;
      }
      if (seeds_deleted == std::size_t(q.n_s) && indicative_deleted < std::size_t(q.n_c)) ++h;
    }
    return h;
  });
  return double(hits) / double(trials);
}

}  // namespace debias
