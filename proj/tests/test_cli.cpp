#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "debias_cli.hpp"
#include "fixtures.hpp"

namespace {

const std::string kDemo = DEBIAS_DEMO_DIR;
const std::string kCorpus = kDemo + "/corpus.jsonl";
const std::string kSeeds = kDemo + "/seeds.json";

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "debias");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = debias::cli::run(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

}  // namespace

TEST(Cli, LabelWritesStatistics) {
  fixtures::TempDir d("label");
  auto r = cli({"--out", d.path.string(), "label", "--corpus", kCorpus, "--seeds", kSeeds});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("noise rate: 13.73%"), std::string::npos) << r.out;
  EXPECT_EQ(lines(d.file("pseudo_labels.jsonl")).size(), 51u);
  auto counts = lines(d.file("noise_matrix_counts.csv"));
  ASSERT_EQ(counts.size(), 3u);
  EXPECT_EQ(counts[0], "gold\\pseudo,computer,sports");
  auto summary = nlohmann::json::parse(slurp(d.file("label_summary.json")));
  EXPECT_EQ(summary["matched"], 51);
  EXPECT_NEAR(summary["overall_noise_rate"].get<double>(), 7.0 / 51.0, 1e-12);
  EXPECT_TRUE(std::filesystem::exists(d.file("noise_matrix_rates.csv")));
  EXPECT_TRUE(std::filesystem::exists(d.file("label.config.toml")));
}

TEST(Cli, LabelWithoutGoldSkipsMatrix) {
  fixtures::TempDir d("nogold");
  write(d.file("c.jsonl"), "{\"id\":\"a\",\"text\":\"mac stuff\"}\n{\"id\":\"b\",\"text\":\"hockey\"}\n");
  auto r = cli({"--out", d.path.string(), "label", "--corpus", d.file("c.jsonl"), "--seeds", kSeeds});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("notice"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(d.file("noise_matrix_counts.csv")));
}

TEST(Cli, InputErrorsExitTwo) {
  fixtures::TempDir d("errors");
  EXPECT_EQ(cli({"--out", d.path.string(), "label", "--corpus", d.file("missing.jsonl"), "--seeds",
                 kSeeds}).code, 2);
  write(d.file("bad.jsonl"), "{\"id\":\"a\",\"text\":\"x\",\"label\":\"politics\"}\n");
  auto r = cli({"--out", d.path.string(), "label", "--corpus", d.file("bad.jsonl"), "--seeds", kSeeds});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error"), std::string::npos);
  EXPECT_EQ(cli({"--out", d.path.string(), "label", "--corpus", kCorpus}).code, 2);
  EXPECT_EQ(cli({"--out", d.path.string(), "bogus"}).code, 2);
  EXPECT_EQ(cli({"--out", d.path.string(), "corrupt", "--corpus", kCorpus, "--seeds", kSeeds,
                 "--p", "1.5"}).code, 2);
}

TEST(Cli, CorruptSeedDeletionNeedsSeeds) {
  fixtures::TempDir d("corrupt-sd");
  cli({"--out", d.path.string(), "label", "--corpus", kCorpus, "--seeds", kSeeds});
  auto r = cli({"--out", d.path.string(), "corrupt", "--corpus", kCorpus, "--labels",
                d.file("pseudo_labels.jsonl"), "--kind", "seed-deletion"});
  EXPECT_EQ(r.code, 2);
}

TEST(Cli, CorruptNoneKeepsTokens) {
  fixtures::TempDir d("corrupt-none");
  ASSERT_EQ(cli({"--out", d.path.string(), "corrupt", "--corpus", kCorpus, "--seeds", kSeeds,
                 "--kind", "none"}).code, 0);
  auto corpus = debias::load_corpus(kCorpus, debias::CorpusFormat::jsonl);
  for (const auto& l : lines(d.file("corrupted.jsonl"))) {
    auto j = nlohmann::json::parse(l);
    auto pos = corpus.find(j["id"].get<std::string>());
    ASSERT_TRUE(pos.has_value());
    EXPECT_EQ(j["tokens"].get<std::vector<std::string>>(), corpus[*pos].tokens);
  }
}

TEST(Cli, CorruptRandomDeletionCounts) {
  fixtures::TempDir d("corrupt-rd");
  ASSERT_EQ(cli({"--out", d.path.string(), "--seed", "4", "corrupt", "--corpus", kCorpus, "--seeds",
                 kSeeds, "--p", "0.9"}).code, 0);
  auto corpus = debias::load_corpus(kCorpus, debias::CorpusFormat::jsonl);
  for (const auto& l : lines(d.file("corrupted.jsonl"))) {
    auto j = nlohmann::json::parse(l);
    auto n = corpus[*corpus.find(j["id"].get<std::string>())].tokens.size();
    EXPECT_EQ(j["tokens"].size(), n - debias::random_deletion_count(n, 0.9));
  }
}

TEST(Cli, TrainThenSelectWithSavedModel) {
  fixtures::TempDir d("train");
  ASSERT_EQ(cli({"--out", d.path.string(), "train", "--corpus", kCorpus, "--seeds", kSeeds,
                 "--dim", "4096", "--epochs", "10"}).code, 0);
  auto model = debias::LinearTextClassifier::load(d.file("model.json"));
  EXPECT_EQ(model.dim(), 4096u);
  auto summary = nlohmann::json::parse(slurp(d.file("train_summary.json")));
  EXPECT_EQ(summary["train_size"], 51);
  EXPECT_EQ(summary["loss_trace"].size(), 10u);

  auto r = cli({"--out", d.path.string(), "select", "--corpus", kCorpus, "--seeds", kSeeds,
                "--model", d.file("model.json"), "--fraction", "0.5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(d.file("scores.csv")).size(), 52u);
  EXPECT_EQ(lines(d.file("selected_pseudo_labels.jsonl")).size(), 26u);
  auto sel = nlohmann::json::parse(slurp(d.file("selection.json")));
  EXPECT_TRUE(sel.contains("noise_rate"));
}

TEST(Cli, OracleSelectionIsClean) {
  fixtures::TempDir d("oracle");
  ASSERT_EQ(cli({"--out", d.path.string(), "select", "--corpus", kCorpus, "--seeds", kSeeds,
                 "--mode", "oracle"}).code, 0);
  EXPECT_EQ(lines(d.file("selected_pseudo_labels.jsonl")).size(), 44u);
  EXPECT_EQ(nlohmann::json::parse(slurp(d.file("selection.json")))["noise_rate"], 0.0);
}

TEST(Cli, RunZeroIterations) {
  fixtures::TempDir d("run0");
  ASSERT_EQ(cli({"--out", d.path.string(), "run", "--corpus", kCorpus, "--seeds", kSeeds,
                 "--iterations", "0", "--dim", "4096"}).code, 0);
  auto ledger = nlohmann::json::parse(slurp(d.file("ledger.json")));
  EXPECT_EQ(ledger["iterations"].size(), 1u);
  EXPECT_EQ(lines(d.file("metrics.csv")).size(), 2u);
}

TEST(Cli, RunIsReproducible) {
  fixtures::TempDir a("runa"), b("runb");
  for (auto* d : {&a, &b}) {
    ASSERT_EQ(cli({"--out", d->path.string(), "--seed", "11", "--threads", d == &a ? "1" : "3",
                   "run", "--corpus", kCorpus, "--seeds", kSeeds, "--iterations", "2",
                   "--dim", "4096"}).code, 0);
  }
  for (auto f : {"ledger.json", "model.json", "metrics.csv", "labeled.jsonl"})
    EXPECT_EQ(slurp(a.file(f)), slurp(b.file(f))) << f;
}

TEST(Cli, ConfigFileWithFlagOverride) {
  fixtures::TempDir d("config");
  write(d.file("c.toml"), "seed = 5\n[run]\ncorpus = \"" + kCorpus + "\"\nseeds = \"" + kSeeds +
                              "\"\niterations = 3\ntau = 0.2\ndim = 4096\n");
  auto r = cli({"--config", d.file("c.toml"), "--out", d.path.string(), "run", "--iterations", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto ledger = nlohmann::json::parse(slurp(d.file("ledger.json")));
  EXPECT_EQ(ledger["config"]["iterations"], 1);
  EXPECT_EQ(ledger["config"]["tau"], 0.2);
  EXPECT_EQ(ledger["config"]["seed"], 5);
  auto echo = slurp(d.file("run.config.toml"));
  EXPECT_NE(echo.find("run.iterations=1"), std::string::npos) << echo;
  EXPECT_EQ(echo.find("label."), std::string::npos);
}

TEST(Cli, OutputDirectoryFromEnvironment) {
  fixtures::TempDir d("env");
  ::setenv("DEBIAS_OUT", d.path.string().c_str(), 1);
  auto r = cli({"label", "--corpus", kCorpus, "--seeds", kSeeds});
  ::unsetenv("DEBIAS_OUT");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(d.file("pseudo_labels.jsonl")));
}

TEST(Cli, AnalyzeRsd) {
  fixtures::TempDir d("rsd");
  auto r = cli({"--out", d.path.string(), "analyze", "--sweep", "rsd", "--nc", "10",
                "--step", "0.01", "--mc-trials", "2000"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("n_c=10: argmax p=0.790000"), std::string::npos) << r.out;
  EXPECT_EQ(lines(d.file("rsd.csv")).size(), 102u);
  EXPECT_EQ(lines(d.file("rsd_monte_carlo.csv")).size(), 102u);
  EXPECT_EQ(lines(d.file("rsd_argmax.csv")).size(), 2u);
}

TEST(Cli, AnalyzeNoiseCurveEndsAtOverallRate) {
  fixtures::TempDir d("curve");
  ASSERT_EQ(cli({"--out", d.path.string(), "analyze", "--sweep", "noise-curve", "--corpus",
                 kCorpus, "--seeds", kSeeds, "--dim", "4096"}).code, 0);
  auto rows = lines(d.file("noise_curve.csv"));
  ASSERT_EQ(rows.size(), 11u);
  EXPECT_EQ(rows.back(), "1.000000," + debias::format_rate(7.0 / 51.0));
}

TEST(Cli, AnalyzeDeletionRatio) {
  fixtures::TempDir d("ratio");
  ASSERT_EQ(cli({"--out", d.path.string(), "analyze", "--sweep", "deletion-ratio", "--corpus",
                 kCorpus, "--seeds", kSeeds, "--dim", "4096", "--ratios", "0", "0.5", "0.9"}).code, 0);
  auto rows = lines(d.file("deletion_ratio.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], "deletion_ratio,noise_rate");
  EXPECT_EQ(rows[3].rfind("0.900000,", 0), 0u);
}

TEST(Cli, AnalyzeUnknownSweepExitsTwo) {
  fixtures::TempDir d("sweep");
  EXPECT_EQ(cli({"--out", d.path.string(), "analyze", "--sweep", "entropy"}).code, 2);
}

TEST(Cli, SynthNoisePreservesMatrix) {
  fixtures::TempDir d("flip");
  auto r = cli({"--out", d.path.string(), "synth-noise", "--corpus", kCorpus, "--seeds", kSeeds});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("noise rate: 13.73% (matrix preserved)"), std::string::npos) << r.out;
  EXPECT_EQ(lines(d.file("flip_pseudo_labels.jsonl")).size(), 51u);
}

TEST(Cli, SynthCorpusRoundTrips) {
  fixtures::TempDir d("synth");
  ASSERT_EQ(cli({"--out", d.path.string(), "synth-corpus", "--docs", "200", "--noise", "0.2"}).code, 0);
  auto r = cli({"--out", d.path.string(), "label", "--corpus", d.file("corpus.jsonl"), "--seeds",
                d.file("seeds.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("noise rate: 20.00%"), std::string::npos) << r.out;
}

TEST(Cli, BinaryExitCodes) {
  const char* exe = std::getenv("DEBIAS_CLI");
  if (exe == nullptr) GTEST_SKIP() << "DEBIAS_CLI not set";
  fixtures::TempDir d("bin");
  auto quiet = " > /dev/null 2>&1";
  auto status = [&](const std::string& args) {
    int s = std::system((std::string(exe) + " --out " + d.path.string() + " " + args + quiet).c_str());
    return WEXITSTATUS(s);
  };
  EXPECT_EQ(status("label --corpus " + kCorpus + " --seeds " + kSeeds), 0);
  EXPECT_EQ(status("label --corpus " + d.file("none.jsonl") + " --seeds " + kSeeds), 2);
  EXPECT_EQ(status("analyze --sweep nope"), 2);
  EXPECT_EQ(status("--help"), 0);
}
