#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "debias/debias.hpp"

namespace debias::cli {

namespace fs = std::filesystem;

struct Options {
  // global
  std::uint64_t seed = 0;
  std::string out = "debias-out";
  unsigned threads = 0;

  // inputs
  std::string corpus;
  std::string seeds;
  std::string labels;
  std::string format = "auto";
  std::string model;

  // corruption
  std::string kind = "random-deletion";
  double p = 0.9;
  bool resample = false;
  std::uint64_t epoch = 0;

  // training
  int epochs = 4;
  double lr = 10.0;
  int batch = 32;
  std::uint32_t dim = 1u << 18;
  std::string evaluate_on = "original";

  // selection / self-training
  double fraction = 0.5;
  std::string selection = "confidence";
  int iterations = 5;
  double tau = 0.1;

  // analyze
  std::string sweep;
  int n_s = 1;
  std::vector<int> n_c{1, 5, 10, 20, 50};
  double step = 0.01;
  int n_other = -1;
  std::uint64_t mc_trials = 0;
  std::vector<double> fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<double> ratios{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

  // synth-corpus
  SyntheticConfig synthetic;
};

struct Inputs {
  std::shared_ptr<const Corpus> corpus;
  std::optional<SeedLexicon> lexicon;
};

class Command {
 public:
  Command(const Options& o, std::ostream& out) : o_(o), out_(out) {}

  void label() {
    auto in = load_inputs(true);
    auto ds = seed_match(in.corpus, *in.lexicon);
    write_file("pseudo_labels.jsonl", [&](std::ostream& f) { write_pseudo_labels(ds, f); });
    nlohmann::ordered_json summary;
    summary["documents"] = in.corpus->size();
    summary["matched"] = ds.size();
    summary["unmatched"] = ds.unmatched().size();
    out_ << "documents: " << in.corpus->size() << "\nmatched: " << ds.size()
         << "\nunmatched: " << ds.unmatched().size() << '\n';
    if (all_gold(ds)) {
      auto m = noise_stats(ds);
      write_file("noise_matrix_counts.csv", [&](std::ostream& f) { write_matrix_counts_csv(m, f); });
      write_file("noise_matrix_rates.csv", [&](std::ostream& f) { write_matrix_rates_csv(m, f); });
      summary["overall_noise_rate"] = m.overall_noise_rate();
      nlohmann::ordered_json per;
      for (std::size_t c = 0; c < m.classes.size(); ++c)
        per[m.classes[c]] = m.class_noise_rate(c);
      summary["class_noise_rate"] = std::move(per);
      out_ << "noise rate: " << percent(m.overall_noise_rate()) << '\n';
    } else {
      summary["overall_noise_rate"] = nullptr;
      out_ << "notice: gold labels missing; transition matrix skipped\n";
    }
    write_json("label_summary.json", summary);
  }

  void corrupt() {
    auto in = load_inputs(false);
    auto ds = dataset(in);
    auto spec = corruption();
    auto data = corrupt_dataset(ds, in.lexicon ? &*in.lexicon : nullptr, spec, o_.epoch);
    write_file("corrupted.jsonl",
               [&](std::ostream& f) { write_corrupted_jsonl(data, in.corpus->classes(), f); });
    std::size_t before = 0, after = 0;
    for (const auto& e : data) {
      before += ds.corpus()[e.doc.doc].tokens.size();
      after += e.doc.tokens.size();
    }
    out_ << "entries: " << data.size() << "\ntokens kept: " << after << " of " << before << '\n';
  }

  void train() {
    auto in = load_inputs(false);
    auto ds = dataset(in);
    auto model = train_confidence(in, ds);
    model.save(path("model.json"));
    nlohmann::ordered_json s;
    s["train_size"] = ds.size();
    s["model_checksum"] = hex64(model.checksum());
    s["loss_trace"] = model.loss_trace();
    s["warnings"] = model.warnings();
    write_json("train_summary.json", s);
    for (const auto& w : model.warnings()) out_ << "warning: " << w << '\n';
    out_ << "model: " << path("model.json") << " (" << hex64(model.checksum()) << ")\n";
  }

  void select() {
    auto in = load_inputs(false);
    auto ds = dataset(in);
    SelectionReport report;
    if (parse_selection_mode(o_.selection) == SelectionMode::oracle) {
      report = select_oracle(ds);
    } else {
      auto model = o_.model.empty() ? train_confidence(in, ds) : LinearTextClassifier::load(o_.model);
      if (model.classes() != in.corpus->classes().names())
        throw ValidationError("model classes do not match the corpus classes");
      auto spec = corruption();
      auto scores = confidence_scores(model, ds, parse_evaluate_on(o_.evaluate_on), &spec,
                                      in.lexicon ? &*in.lexicon : nullptr);
      write_file("scores.csv", [&](std::ostream& f) {
        csv::write_row(f, {"id", "pseudo_label", "confidence"});
        for (const auto& s : scores)
          csv::write_row(f, {s.id, in.corpus->classes().name(s.label), format_rate(s.probability)});
      });
      report = select_top(ds, scores, o_.fraction);
    }
    write_json("selection.json", report.to_json(in.corpus->classes()));
    auto kept = subset(ds, report.selected);
    write_file("selected_pseudo_labels.jsonl", [&](std::ostream& f) { write_pseudo_labels(kept, f); });
    out_ << "selected: " << report.selected.size() << " of " << ds.size() << '\n';
    if (report.noise_rate) out_ << "noise rate in selection: " << percent(*report.noise_rate) << '\n';
  }

  void run() {
    auto in = load_inputs(true);
    SelfTrainConfig cfg;
    cfg.iterations = o_.iterations;
    cfg.tau = o_.tau;
    cfg.selection_fraction = o_.fraction;
    cfg.selection = parse_selection_mode(o_.selection);
    cfg.corruption = corruption();
    cfg.train = train_config();
    cfg.evaluate_on = parse_evaluate_on(o_.evaluate_on);
    cfg.seed = o_.seed;
    cfg.threads = o_.threads;
    auto result = run_pipeline(in.corpus, *in.lexicon, cfg);
    write_json("ledger.json", result.ledger.to_json());
    write_file("metrics.csv", [&](std::ostream& f) { result.ledger.write_csv(f); });
    result.model.save(path("model.json"));
    write_file("labeled.jsonl", [&](std::ostream& f) { write_pseudo_labels(result.labeled, f); });
    const auto& l = result.ledger;
    out_ << "matched: " << l.matched << "\nselected: " << l.selected << '\n';
    if (l.selection_noise_rate) out_ << "noise rate in selection: " << percent(*l.selection_noise_rate) << '\n';
    for (const auto& r : l.records) {
      out_ << "iteration " << r.iteration << ": train " << r.train_size << ", merged " << r.merged;
      if (r.metrics)
        out_ << ", micro-F1 " << format_rate(r.metrics->micro_f1) << ", macro-F1 "
             << format_rate(r.metrics->macro_f1);
      out_ << '\n';
    }
  }

  void analyze() {
    if (o_.sweep == "rsd") {
      auto table = rsd_sweep(o_.n_s, o_.n_c, unit_grid(o_.step), o_.n_other);
      write_file("rsd.csv", [&](std::ostream& f) { write_rsd_csv(table, f); });
      write_file("rsd_argmax.csv", [&](std::ostream& f) { write_rsd_argmax_csv(table, f); });
      if (o_.mc_trials > 0) {
        write_file("rsd_monte_carlo.csv", [&](std::ostream& f) {
          csv::write_row(f, {"n_s", "n_c", "p", "r_sd", "r_sd_monte_carlo"});
          std::uint64_t i = 0;
          for (const auto& r : table.rows) {
            double mc = rsd_monte_carlo({r.n_s, r.n_c, r.p}, o_.mc_trials,
                                        child_seed(child_seed(o_.seed, "rsd"), i++), o_.threads);
            csv::write_row(f, {std::to_string(r.n_s), std::to_string(r.n_c), format_rate(r.p),
                               format_rate(r.rate), format_rate(mc)});
          }
        });
      }
      for (const auto& a : table.argmax)
        out_ << "n_c=" << a.n_c << ": argmax p=" << format_rate(a.p) << " r_sd="
             << format_rate(a.rate) << '\n';
    } else if (o_.sweep == "noise-curve") {
      auto in = load_inputs(false);
      auto ds = dataset(in);
      auto model = train_confidence(in, ds);
      auto spec = corruption();
      auto scores = confidence_scores(model, ds, parse_evaluate_on(o_.evaluate_on), &spec,
                                      in.lexicon ? &*in.lexicon : nullptr);
      auto curve = noise_curve(ds, scores, o_.fractions);
      write_file("noise_curve.csv", [&](std::ostream& f) { write_curve_csv(curve, f); });
      for (const auto& [f, r] : curve) out_ << format_rate(f) << ' ' << format_rate(r) << '\n';
    } else if (o_.sweep == "deletion-ratio") {
      auto in = load_inputs(false);
      auto ds = dataset(in);
      std::vector<std::pair<double, double>> rows;
      for (double ratio : o_.ratios) {
        CorruptionSpec spec{CorruptionKind::random_deletion, ratio,
                            child_seed(o_.seed, "corruption"), o_.resample};
        auto model = train_on_dataset(ds, nullptr, spec, train_config());
        auto scores = confidence_scores(model, ds, parse_evaluate_on(o_.evaluate_on), &spec);
        auto report = select_top(ds, scores, o_.fraction);
        if (!report.noise_rate) throw ValidationError("deletion-ratio sweep needs gold labels");
        rows.emplace_back(ratio, *report.noise_rate);
        out_ << "p=" << format_rate(ratio) << " noise=" << format_rate(*report.noise_rate) << '\n';
      }
      write_file("deletion_ratio.csv", [&](std::ostream& f) {
        csv::write_row(f, {"deletion_ratio", "noise_rate"});
        for (const auto& [p, r] : rows) csv::write_row(f, {format_rate(p), format_rate(r)});
      });
    } else {
      throw ValidationError("unknown sweep '" + o_.sweep + "' (expected rsd|noise-curve|deletion-ratio)");
    }
  }

  void synth_noise() {
    auto in = load_inputs(false);
    auto ds = dataset(in);
    if (!all_gold(ds)) throw ValidationError("flip-noise synthesis needs gold labels");
    auto flipped = synthesize_flip_noise(ds, child_seed(o_.seed, "flip-noise"));
    write_file("flip_pseudo_labels.jsonl", [&](std::ostream& f) { write_pseudo_labels(flipped, f); });
    auto before = noise_stats(ds), after = noise_stats(flipped);
    write_file("flip_matrix_counts.csv", [&](std::ostream& f) { write_matrix_counts_csv(after, f); });
    out_ << "noise rate: " << percent(after.overall_noise_rate())
         << (before == after ? " (matrix preserved)" : " (MATRIX CHANGED)") << '\n';
  }

  void synth_corpus() {
    auto syn = make_synthetic_corpus(o_.synthetic);
    fs::create_directories(o_.out);
    save_corpus(*syn.corpus, path("corpus.jsonl"), CorpusFormat::jsonl);
    write_json("seeds.json", syn.lexicon.to_json());
    out_ << "documents: " << syn.corpus->size() << "\ncorpus: " << path("corpus.jsonl")
         << "\nseeds: " << path("seeds.json") << '\n';
  }

 private:
  std::string path(const std::string& name) const { return (fs::path(o_.out) / name).string(); }

  template <class Fn>
  void write_file(const std::string& name, Fn fn) const {
    fs::create_directories(o_.out);
    std::ofstream f(path(name), std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path(name) + "'");
    fn(f);
    if (!f) throw std::runtime_error("write failed for '" + path(name) + "'");
  }

  void write_json(const std::string& name, const nlohmann::ordered_json& j) const {
    write_file(name, [&](std::ostream& f) { f << j.dump(2) << '\n'; });
  }

  static std::string percent(double r) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * r);
    return buf;
  }

  static bool all_gold(const PseudoLabeledDataset& ds) {
    for (const auto& e : ds.entries())
      if (!ds.document(e).gold) return false;
    return true;
  }

  // Classes come from the seed lexicon when one is given; corpus labels must
  // then belong to it.
  Inputs load_inputs(bool need_seeds) const {
    if (o_.corpus.empty()) throw ValidationError("--corpus is required");
    if (need_seeds && o_.seeds.empty()) throw ValidationError("--seeds is required");
    Inputs in;
    LoadOptions opts;
    if (!o_.seeds.empty()) {
      in.lexicon = load_seed_lexicon(o_.seeds);
      opts.classes = in.lexicon->classes();
      opts.allow_new_classes = false;
    }
    auto fmt = o_.format == "auto" ? format_from_path(o_.corpus) : parse_format(o_.format);
    in.corpus = std::make_shared<const Corpus>(load_corpus(o_.corpus, fmt, opts));
    return in;
  }

  PseudoLabeledDataset dataset(const Inputs& in) const {
    if (!o_.labels.empty()) return read_pseudo_labels(in.corpus, o_.labels);
    if (!in.lexicon) throw ValidationError("need --labels or --seeds");
    return seed_match(in.corpus, *in.lexicon);
  }

  CorruptionSpec corruption() const {
    CorruptionSpec s{parse_corruption_kind(o_.kind), o_.p, child_seed(o_.seed, "corruption"),
                     o_.resample};
    s.validate();
    return s;
  }

  TrainConfig train_config() const {
    TrainConfig tc{o_.epochs, o_.lr, o_.batch, child_seed(child_seed(o_.seed, "confidence"), 0),
                   o_.dim};
    tc.validate();
    return tc;
  }

  LinearTextClassifier train_confidence(const Inputs& in, const PseudoLabeledDataset& ds) const {
    auto spec = corruption();
    if (spec.kind == CorruptionKind::seed_deletion && !in.lexicon)
      throw ValidationError("seed deletion needs --seeds");
    return train_on_dataset(ds, in.lexicon ? &*in.lexicon : nullptr, spec, train_config());
  }

  const Options& o_;
  std::ostream& out_;
};

inline void add_inputs(CLI::App* sub, Options& o, bool seeds_required) {
  sub->add_option("--corpus", o.corpus, "Corpus file (.jsonl or .csv)")
      ->required()
      ->check(CLI::ExistingFile);
  auto* s = sub->add_option("--seeds", o.seeds, "Seed lexicon JSON")->check(CLI::ExistingFile);
  if (seeds_required) s->required();
  sub->add_option("--format", o.format, "Corpus format")
      ->check(CLI::IsMember({"auto", "jsonl", "csv"}))
      ->capture_default_str();
}

inline void add_labels(CLI::App* sub, Options& o) {
  sub->add_option("--labels", o.labels, "Pseudo-label JSONL (default: seed-match with --seeds)")
      ->check(CLI::ExistingFile);
}

inline void add_corruption(CLI::App* sub, Options& o) {
  sub->add_option("--kind", o.kind, "Corruption applied at training time")
      ->check(CLI::IsMember({"none", "seed-deletion", "random-deletion"}))
      ->capture_default_str();
  sub->add_option("--p", o.p, "Random deletion ratio")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  sub->add_flag("--resample", o.resample, "Draw a fresh deletion mask every epoch");
}

inline void add_training(CLI::App* sub, Options& o) {
  sub->add_option("--epochs", o.epochs)->check(CLI::NonNegativeNumber)->capture_default_str();
  sub->add_option("--lr", o.lr, "Base learning rate (decays as 1/sqrt(step))")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--batch", o.batch)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--dim", o.dim, "Hashed feature dimension (power of two)")->capture_default_str();
  sub->add_option("--evaluate-on", o.evaluate_on, "Text the confidence is read from")
      ->check(CLI::IsMember({"original", "corrupted"}))
      ->capture_default_str();
}

/// Runs the command line; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  Options o;
  CLI::App app{"Seed-matching weak supervision with debiased pseudo-label selection", "debias"};
  app.set_config("--config", "", "TOML/INI file; command-line flags take precedence");
  app.require_subcommand(1);
  app.add_option("--seed", o.seed, "Root RNG seed")->capture_default_str();
  app.add_option("--out", o.out, "Output directory")->envname("DEBIAS_OUT")->capture_default_str();
  app.add_option("--threads", o.threads, "Worker threads (0 = all cores)")->capture_default_str();

  auto* label = app.add_subcommand("label", "Seed-match pseudo-labels and noise statistics");
  add_inputs(label, o, true);

  auto* corrupt = app.add_subcommand("corrupt", "Write the corrupted training view");
  add_inputs(corrupt, o, false);
  add_labels(corrupt, o);
  add_corruption(corrupt, o);
  corrupt->add_option("--epoch", o.epoch, "Epoch index for the deletion stream")->capture_default_str();

  auto* train = app.add_subcommand("train", "Train a confidence model");
  add_inputs(train, o, false);
  add_labels(train, o);
  add_corruption(train, o);
  add_training(train, o);

  auto* select = app.add_subcommand("select", "Keep the most confident pseudo-labels");
  add_inputs(select, o, false);
  add_labels(select, o);
  add_corruption(select, o);
  add_training(select, o);
  select->add_option("--model", o.model, "Trained model (default: train one)")->check(CLI::ExistingFile);
  select->add_option("--fraction", o.fraction)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  select->add_option("--mode", o.selection)
      ->check(CLI::IsMember({"confidence", "oracle"}))
      ->capture_default_str();

  auto* runc = app.add_subcommand("run", "Full pipeline with self-training");
  add_inputs(runc, o, true);
  add_corruption(runc, o);
  add_training(runc, o);
  runc->add_option("--fraction", o.fraction)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  runc->add_option("--selection", o.selection)
      ->check(CLI::IsMember({"confidence", "oracle", "all"}))
      ->capture_default_str();
  runc->add_option("--iterations", o.iterations)->check(CLI::NonNegativeNumber)->capture_default_str();
  runc->add_option("--tau", o.tau, "Fraction of the unlabeled pool merged per iteration")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();

  auto* analyze = app.add_subcommand("analyze", "Sweeps: rsd, noise-curve, deletion-ratio");
  analyze->add_option("--sweep", o.sweep)->required();
  analyze->add_option("--corpus", o.corpus)->check(CLI::ExistingFile);
  analyze->add_option("--seeds", o.seeds)->check(CLI::ExistingFile);
  analyze->add_option("--format", o.format)->capture_default_str();
  add_labels(analyze, o);
  add_corruption(analyze, o);
  add_training(analyze, o);
  analyze->add_option("--fraction", o.fraction)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  analyze->add_option("--fractions", o.fractions)->capture_default_str();
  analyze->add_option("--ratios", o.ratios)->capture_default_str();
  analyze->add_option("--ns", o.n_s, "Seed words in the document")->capture_default_str();
  analyze->add_option("--nc", o.n_c, "Class-indicative word counts")->capture_default_str();
  analyze->add_option("--step", o.step, "Grid step for p")->capture_default_str();
  analyze->add_option("--n-other", o.n_other, "Other words, for the fixed-count table (-1 = off)")
      ->capture_default_str();
  analyze->add_option("--mc-trials", o.mc_trials, "Monte-Carlo trials per grid point (0 = off)")
      ->capture_default_str();

  auto* synth = app.add_subcommand("synth-noise", "Random-flip labels with the same transition matrix");
  add_inputs(synth, o, false);
  add_labels(synth, o);

  auto* gen = app.add_subcommand("synth-corpus", "Generate a synthetic corpus and seed lexicon");
  auto& s = o.synthetic;
  gen->add_option("--docs", s.num_docs)->capture_default_str();
  gen->add_option("--classes", s.num_classes)->capture_default_str();
  gen->add_option("--noise", s.noise_rate)->capture_default_str();
  gen->add_option("--unmatched", s.unmatched_fraction)->capture_default_str();
  gen->add_option("--seeds-per-class", s.seeds_per_class)->capture_default_str();
  gen->add_option("--indicative-vocab", s.indicative_vocab)->capture_default_str();
  gen->add_option("--background-vocab", s.background_vocab)->capture_default_str();
  gen->add_option("--min-length", s.min_length)->capture_default_str();
  gen->add_option("--max-length", s.max_length)->capture_default_str();
  gen->add_option("--indicative-share", s.indicative_share)->capture_default_str();
  gen->add_option("--max-seed-occurrences", s.max_seed_occurrences)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }
  s.seed = o.seed;

  try {
    fs::create_directories(o.out);
    auto* sub = app.get_subcommands().front();
    {
      // Global keys plus the chosen subcommand's section.
      std::ofstream echo(fs::path(o.out) / (sub->get_name() + ".config.toml"), std::ios::binary);
      std::istringstream all(app.config_to_str(true, false));
      const std::string prefix = sub->get_name() + ".";
      for (std::string line; std::getline(all, line);) {
        auto key = line.substr(0, line.find('='));
        if (key.find('.') == std::string::npos || line.rfind(prefix, 0) == 0) echo << line << '\n';
      }
    }
    Command cmd(o, out);
    const auto& name = sub->get_name();
    if (name == "label") cmd.label();
    else if (name == "corrupt") cmd.corrupt();
    else if (name == "train") cmd.train();
    else if (name == "select") cmd.select();
    else if (name == "run") cmd.run();
    else if (name == "analyze") cmd.analyze();
    else if (name == "synth-noise") cmd.synth_noise();
    else if (name == "synth-corpus") cmd.synth_corpus();
    return 0;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace debias::cli
