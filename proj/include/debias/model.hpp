#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "debias/common.hpp"
#include "debias/corpus.hpp"
#include "debias/corrupt.hpp"
#include "debias/rng.hpp"

namespace debias {

// Sparse L2-normalized term-count vector over a hashed index space.
struct FeatureVector {
  std::vector<std::pair<std::uint32_t, double>> entries;  // strictly increasing index

  bool empty() const { return entries.empty(); }
};

inline bool is_power_of_two(std::uint64_t v) { return v && !(v & (v - 1)); }

inline std::uint32_t hash_token(std::string_view token, std::uint32_t dim) {
  return static_cast<std::uint32_t>(splitmix64(fnv1a64(token)) & (dim - 1));
}

inline FeatureVector featurize(const std::vector<std::string>& tokens, std::uint32_t dim) {
  if (!is_power_of_two(dim)) {
    throw ValidationError("feature dimension must be a power of two, got " +
                          std::to_string(dim));
  }
  std::vector<std::uint32_t> idx;
  idx.reserve(tokens.size());
  for (const auto& t : tokens) idx.push_back(hash_token(t, dim));
  std::sort(idx.begin(), idx.end());
  FeatureVector fv;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && idx[j] == idx[i]) ++j;
    fv.entries.emplace_back(idx[i], double(j - i));
    i = j;
  }
  double norm = 0.0;
  for (const auto& [_, v] : fv.entries) norm += v * v;
  norm = std::sqrt(norm);
  for (auto& [_, v] : fv.entries) v /= norm;
  return fv;
}

struct TrainConfig {
  int epochs = 4;
  double learning_rate = 10.0;  // step t uses learning_rate / sqrt(t)
  int batch_size = 32;
  std::uint64_t seed = 0;
  std::uint32_t dim = 1u << 18;

  void validate() const {
    if (epochs < 0) throw ValidationError("epochs must be >= 0");
    if (batch_size < 1) throw ValidationError("batch size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw ValidationError("learning rate must be positive");
    if (!is_power_of_two(dim)) throw ValidationError("dim must be a power of two");
  }
};

struct Example {
  FeatureVector x;
  ClassId y;
};

struct ConfidenceScore {
  std::string id;
  ClassId label = 0;
  double probability = 0.0;  // posterior at `label`
  double log_probability = 0.0;  // same ordering as `probability`, without saturating at 1
  std::vector<double> posterior;
};

enum class EvaluateOn { original, corrupted };

inline EvaluateOn parse_evaluate_on(const std::string& s) {
  if (s == "original") return EvaluateOn::original;
  if (s == "corrupted") return EvaluateOn::corrupted;
  throw ValidationError("evaluate-on must be original|corrupted, got '" + s + "'");
}

inline const char* to_string(EvaluateOn e) {
  return e == EvaluateOn::original ? "original" : "corrupted";
}

class LinearTextClassifier {
 public:
  static constexpr int kFormatVersion = 1;

  LinearTextClassifier() = default;
  LinearTextClassifier(std::vector<std::string> classes, TrainConfig config)
      : classes_(std::move(classes)),
        config_(config),
        weights_(classes_.size() * std::size_t(config.dim), 0.0),
        bias_(classes_.size(), 0.0) {
    config_.validate();
    if (classes_.empty()) throw ValidationError("classifier needs at least one class");
  }

  std::size_t num_classes() const { return classes_.size(); }
  std::uint32_t dim() const { return config_.dim; }
  const std::vector<std::string>& classes() const { return classes_; }
  const TrainConfig& config() const { return config_; }
  bool trained() const { return trained_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const std::vector<double>& loss_trace() const { return loss_trace_; }

  double& weight(std::size_t k, std::uint32_t j) { return weights_[k * config_.dim + j]; }
  double weight(std::size_t k, std::uint32_t j) const {
    return weights_[k * config_.dim + j];
  }
  double& bias(std::size_t k) { return bias_[k]; }
  double bias(std::size_t k) const { return bias_[k]; }

  // Uniform init in [-scale, scale], either everywhere or only on the features
  // active in `touch`. Used by gradient checks; training starts from zero.
  void randomize(Rng& rng, double scale, std::span<const Example> touch = {}) {
    auto draw = [&] { return (2.0 * rng.uniform() - 1.0) * scale; };
    for (auto& b : bias_) b = draw();
    if (touch.empty()) {
      for (auto& w : weights_) w = draw();
      return;
    }
    for (const auto& ex : touch)
      for (const auto& [j, _] : ex.x.entries)
        for (std::size_t k = 0; k < num_classes(); ++k) weight(k, j) = draw();
  }

  std::vector<double> logits(const FeatureVector& x) const {
    std::vector<double> z(bias_);
    for (std::size_t k = 0; k < num_classes(); ++k) {
      const double* row = &weights_[k * config_.dim];
      double s = 0.0;
      for (const auto& [j, v] : x.entries) s += row[j] * v;
      z[k] += s;
    }
    return z;
  }

  std::vector<double> posterior(const FeatureVector& x) const {
    auto z = logits(x);
    double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto& v : z) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (auto& v : z) v /= sum;
    return z;
  }

  // log P(k | x), accurate when P(k | x) rounds to 1.
  double log_posterior(const FeatureVector& x, std::size_t k) const {
    auto z = logits(x);
    const double zk = z[k];
    double rest = 0.0;
    bool top = true;
    for (std::size_t j = 0; j < z.size(); ++j) {
      if (j == k) continue;
      if (z[j] > zk) top = false;
    }
    if (top) {
      for (std::size_t j = 0; j < z.size(); ++j)
        if (j != k) rest += std::exp(z[j] - zk);
      return -std::log1p(rest);
    }
    double mx = *std::max_element(z.begin(), z.end());
    for (auto v : z) rest += std::exp(v - mx);
    return zk - mx - std::log(rest);
  }

  // Mean cross-entropy of `batch` under the current parameters.
  double loss(std::span<const Example> batch) const {
    if (batch.empty()) return 0.0;
    double total = 0.0;
    for (const auto& ex : batch) {
      auto z = logits(ex.x);
      double mx = *std::max_element(z.begin(), z.end());
      double lse = 0.0;
      for (auto v : z) lse += std::exp(v - mx);
      total += mx + std::log(lse) - z[ex.y];
    }
    return total / double(batch.size());
  }

  // One mini-batch gradient step on the mean cross-entropy.
  void sgd_step(std::span<const Example* const> batch, double lr) {
    const double scale = lr / double(batch.size());
    std::vector<std::vector<double>> residual;
    residual.reserve(batch.size());
    for (const Example* ex : batch) {
      auto p = posterior(ex->x);
      p[ex->y] -= 1.0;
      residual.push_back(std::move(p));
    }
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& r = residual[b];
      for (std::size_t k = 0; k < num_classes(); ++k) {
        bias_[k] -= scale * r[k];
        double* row = &weights_[k * config_.dim];
        for (const auto& [j, v] : batch[b]->x.entries) row[j] -= scale * r[k] * v;
      }
    }
    for (std::size_t b = 0; b < batch.size(); ++b)
      for (const auto& [j, _] : batch[b]->x.entries)
        for (std::size_t k = 0; k < num_classes(); ++k)
          if (!std::isfinite(weight(k, j)))
            throw std::runtime_error("non-finite weight after SGD update");
    for (auto b : bias_)
      if (!std::isfinite(b)) throw std::runtime_error("non-finite bias after SGD update");
  }

  std::uint64_t checksum() const {
    std::uint64_t h = fnv1a64("debias-linear");
    auto mix = [&](const void* p, std::size_t n) {
      h = fnv1a64(std::string_view(static_cast<const char*>(p), n), h);
    };
    std::uint64_t dims[2] = {num_classes(), config_.dim};
    mix(dims, sizeof dims);
    mix(bias_.data(), bias_.size() * sizeof(double));
    mix(weights_.data(), weights_.size() * sizeof(double));
    return h;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["format"] = "debias-linear-model";
    j["version"] = kFormatVersion;
    j["dim"] = config_.dim;
    j["num_classes"] = num_classes();
    j["classes"] = classes_;
    j["config"] = {{"epochs", config_.epochs},
                   {"learning_rate", config_.learning_rate},
                   {"batch_size", config_.batch_size},
                   {"seed", config_.seed}};
    j["trained"] = trained_;
    j["warnings"] = warnings_;
    j["loss_trace"] = loss_trace_;
    j["bias"] = bias_;
    auto sparse = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < num_classes(); ++k)
      for (std::uint32_t d = 0; d < config_.dim; ++d)
        if (double w = weight(k, d); w != 0.0)
          sparse.push_back(nlohmann::ordered_json::array({k, d, w}));
    j["weights"] = std::move(sparse);
    return j;
  }

  static LinearTextClassifier from_json(const nlohmann::json& j) {
    try {
      if (j.at("format") != "debias-linear-model")
        throw ValidationError("not a debias model dump");
      if (j.at("version").get<int>() != kFormatVersion)
        throw ValidationError("unsupported model version " + j.at("version").dump());
      TrainConfig cfg;
      cfg.dim = j.at("dim").get<std::uint32_t>();
      const auto& c = j.at("config");
      cfg.epochs = c.at("epochs").get<int>();
      cfg.learning_rate = c.at("learning_rate").get<double>();
      cfg.batch_size = c.at("batch_size").get<int>();
      cfg.seed = c.at("seed").get<std::uint64_t>();
      LinearTextClassifier m(j.at("classes").get<std::vector<std::string>>(), cfg);
      m.trained_ = j.at("trained").get<bool>();
      m.warnings_ = j.at("warnings").get<std::vector<std::string>>();
      m.loss_trace_ = j.at("loss_trace").get<std::vector<double>>();
      m.bias_ = j.at("bias").get<std::vector<double>>();
      if (m.bias_.size() != m.num_classes()) throw ValidationError("bias size mismatch");
      for (const auto& t : j.at("weights")) {
        auto k = t.at(0).get<std::size_t>();
        auto d = t.at(1).get<std::uint32_t>();
        if (k >= m.num_classes() || d >= cfg.dim)
          throw ValidationError("weight index out of range");
        m.weight(k, d) = t.at(2).get<double>();
      }
      return m;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("malformed model dump: ") + e.what());
    }
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write model '" + path + "'");
    out << to_json().dump() << '\n';
  }

  static LinearTextClassifier load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open model '" + path + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(path + ": " + e.what());
    }
    return from_json(j);
  }

 private:
  template <class Source>
  friend LinearTextClassifier train_from(const Source&, std::vector<std::string>,
                                         const TrainConfig&);

  std::vector<std::string> classes_;
  TrainConfig config_;
  std::vector<double> weights_;  // row-major K x dim
  std::vector<double> bias_;
  bool trained_ = false;
  std::vector<std::string> warnings_;
  std::vector<double> loss_trace_;
};

// A training source yields, per epoch, the examples to train on. Corruption
// that is resampled every epoch plugs in here.
template <class Source>
concept ExampleSource = requires(const Source& s, int epoch) {
  { s.size() } -> std::convertible_to<std::size_t>;
  { s.examples(epoch) } -> std::convertible_to<std::span<const Example>>;
};

struct StaticExamples {
  std::span<const Example> data;
  std::size_t size() const { return data.size(); }
  std::span<const Example> examples(int) const { return data; }
};

/// Mini-batch SGD on mean cross-entropy from zero initialization. The batch
/// order of each epoch is a shuffle seeded from (config.seed, epoch), so
/// identical inputs give bit-identical parameters.
template <class Source>
LinearTextClassifier train_from(const Source& source, std::vector<std::string> classes,
                                const TrainConfig& config) {
  static_assert(ExampleSource<Source>);
  config.validate();
  if (source.size() == 0) throw ValidationError("cannot train on an empty dataset");
  LinearTextClassifier model(std::move(classes), config);
  const std::size_t k = model.num_classes();

  {
    auto first = source.examples(0);
    std::vector<std::size_t> per_class(k, 0);
    for (const auto& ex : first) {
      if (ex.y < 0 || std::size_t(ex.y) >= k)
        throw ValidationError("training label out of range");
      ++per_class[ex.y];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (per_class[c] == 0)
        model.warnings_.push_back("class '" + model.classes_[c] +
                                  "' has no training examples");
  }

  std::vector<std::size_t> order(source.size());
  std::vector<const Example*> batch;
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    auto data = source.examples(epoch);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(child_seed(config.seed, std::uint64_t(epoch)));
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      std::size_t end = std::min(order.size(), start + std::size_t(config.batch_size));
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);
      ++step;
      model.sgd_step(batch, config.learning_rate / std::sqrt(double(step)));
    }
    model.loss_trace_.push_back(model.loss(data));
  }
  model.trained_ = true;
  return model;
}

inline LinearTextClassifier train(std::span<const Example> examples,
                                  std::vector<std::string> classes,
                                  const TrainConfig& config) {
  return train_from(StaticExamples{examples}, std::move(classes), config);
}

/// Max relative error between the analytic cross-entropy gradient and central
/// finite differences (step 1e-5), over every bias and a sample of at least
/// `min_params` weights. Sampled weights favour features active in the batch,
/// where the gradient is nonzero.
inline double gradient_check(const LinearTextClassifier& model,
                             std::span<const Example> batch, std::uint64_t seed = 0,
                             std::size_t min_params = 50) {
  const std::size_t k = model.num_classes();
  const double n = double(std::max<std::size_t>(batch.size(), 1));

  // analytic
  std::vector<double> grad_bias(k, 0.0);
  std::vector<std::pair<std::size_t, std::uint32_t>> params;
  std::vector<std::uint32_t> active;
  for (const auto& ex : batch)
    for (const auto& [j, _] : ex.x.entries) active.push_back(j);
  std::sort(active.begin(), active.end());
  active.erase(std::unique(active.begin(), active.end()), active.end());

  Rng rng(seed);
  for (std::uint32_t j : active)
    for (std::size_t c = 0; c < k; ++c) params.emplace_back(c, j);
  rng.shuffle(params);
  if (params.size() > min_params) params.resize(min_params);
  while (params.size() < min_params) {
    params.emplace_back(rng.below(k), std::uint32_t(rng.below(model.dim())));
  }

  auto analytic_weight = [&](std::size_t c, std::uint32_t j) {
    double g = 0.0;
    for (const auto& ex : batch) {
      auto p = model.posterior(ex.x);
      double r = p[c] - (ex.y == ClassId(c) ? 1.0 : 0.0);
      for (const auto& [jj, v] : ex.x.entries)
        if (jj == j) g += r * v;
    }
    return g / n;
  };
  for (const auto& ex : batch) {
    auto p = model.posterior(ex.x);
    for (std::size_t c = 0; c < k; ++c)
      grad_bias[c] += (p[c] - (ex.y == ClassId(c) ? 1.0 : 0.0)) / n;
  }

  constexpr double h = 1e-5;
  LinearTextClassifier probe = model;
  auto rel = [](double a, double b) {
    double denom = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / denom;
  };
  double worst = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double orig = probe.bias(c);
    probe.bias(c) = orig + h;
    double up = probe.loss(batch);
    probe.bias(c) = orig - h;
    double down = probe.loss(batch);
    probe.bias(c) = orig;
    worst = std::max(worst, rel(grad_bias[c], (up - down) / (2 * h)));
  }
  for (const auto& [c, j] : params) {
    double orig = probe.weight(c, j);
    probe.weight(c, j) = orig + h;
    double up = probe.loss(batch);
    probe.weight(c, j) = orig - h;
    double down = probe.loss(batch);
    probe.weight(c, j) = orig;
    worst = std::max(worst, rel(analytic_weight(c, j), (up - down) / (2 * h)));
  }
  return worst;
}

// Training examples drawn from a pseudo-labeled dataset under a corruption.
// With resample_per_epoch the deletion masks are redrawn for every epoch.
class CorruptedExamples {
 public:
  CorruptedExamples(const PseudoLabeledDataset& dataset, const SeedLexicon* lexicon,
                    const CorruptionSpec& spec, std::uint32_t dim)
      : dataset_(dataset), lexicon_(lexicon), spec_(spec), dim_(dim) {
    spec_.validate();
    if (spec_.kind == CorruptionKind::seed_deletion && lexicon_ == nullptr)
      throw ValidationError("seed deletion requires a seed lexicon");
    build(0);
  }

  std::size_t size() const { return dataset_.size(); }

  std::span<const Example> examples(int epoch) const {
    if (spec_.resample_per_epoch && spec_.kind == CorruptionKind::random_deletion &&
        epoch != cached_epoch_)
      build(epoch);
    return cache_;
  }

 private:
  void build(int epoch) const {
    cache_.clear();
    cache_.reserve(dataset_.size());
    for (const auto& e : dataset_.entries()) {
      auto doc = corrupt_entry(dataset_, e, lexicon_, spec_, std::uint64_t(epoch));
      cache_.push_back({featurize(doc.tokens, dim_), e.label});
    }
    cached_epoch_ = epoch;
  }

  const PseudoLabeledDataset& dataset_;
  const SeedLexicon* lexicon_;
  CorruptionSpec spec_;
  std::uint32_t dim_;
  mutable std::vector<Example> cache_;
  mutable int cached_epoch_ = -1;
};

/// Trains on (corrupted document, pseudo-label) pairs of `dataset`.
inline LinearTextClassifier train_on_dataset(const PseudoLabeledDataset& dataset,
                                             const SeedLexicon* lexicon,
                                             const CorruptionSpec& spec,
                                             const TrainConfig& config) {
  if (dataset.empty()) throw ValidationError("cannot train on an empty dataset");
  CorruptedExamples source(dataset, lexicon, spec, config.dim);
  return train_from(source, dataset.corpus().classes().names(), config);
}

/// Posterior for `doc`, read at `pseudo_label`. With EvaluateOn::corrupted the
/// document is first transformed by `spec` (seed deletion needs `lexicon`).
inline ConfidenceScore predict_proba(const LinearTextClassifier& model,
                                     const Document& doc, ClassId pseudo_label,
                                     EvaluateOn evaluate_on = EvaluateOn::original,
                                     const CorruptionSpec* spec = nullptr,
                                     const SeedLexicon* lexicon = nullptr,
                                     const ClassSet* classes = nullptr) {
  if (!model.trained()) throw ValidationError("model has not been trained");
  if (pseudo_label < 0 || std::size_t(pseudo_label) >= model.num_classes())
    throw ValidationError("pseudo-label out of range");
  FeatureVector x;
  if (evaluate_on == EvaluateOn::corrupted && spec != nullptr &&
      spec->kind != CorruptionKind::none) {
    std::vector<std::string> tokens;
    if (spec->kind == CorruptionKind::seed_deletion) {
      if (!lexicon || !classes)
        throw ValidationError("seed-deletion evaluation needs a lexicon");
      tokens = seed_delete(doc, pseudo_label, *lexicon, *classes).tokens;
    } else {
      tokens = random_delete(doc, *spec).tokens;
    }
    x = featurize(tokens, model.dim());
  } else {
    x = featurize(doc.tokens, model.dim());
  }
  ConfidenceScore s{doc.id, pseudo_label, 0.0, 0.0, model.posterior(x)};
  s.probability = s.posterior[pseudo_label];
  s.log_probability = model.log_posterior(x, std::size_t(pseudo_label));
  return s;
}

}  // namespace debias
