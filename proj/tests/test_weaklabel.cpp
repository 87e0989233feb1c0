#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <sstream>

#include "fixtures.hpp"

using namespace debias;

namespace {

std::shared_ptr<const Corpus> four_docs() {
  // gold [A,A,B,B]; with the lexicon below the pseudo-labels are [A,B,B,B].
  return fixtures::corpus({{"d1", "alpha text", "A"},
                           {"d2", "beta text", "A"},
                           {"d3", "beta more", "B"},
                           {"d4", "beta again", "B"}});
}

SeedLexicon ab() { return SeedLexicon::from_lists({{"A", {"alpha"}}, {"B", {"beta"}}}); }

std::vector<std::string> labels_of(const PseudoLabeledDataset& ds) {
  std::vector<std::string> out;
  for (const auto& e : ds.entries()) out.push_back(ds.corpus().classes().name(e.label));
  return out;
}

// Strict-maximum class by direct counting, or empty on a tie / no match.
std::optional<std::string> oracle_match(const std::vector<std::string>& tokens,
                                        const std::map<std::string, std::vector<std::string>>& seeds) {
  std::map<std::string, int> count;
  for (const auto& [cls, words] : seeds)
    for (const auto& t : tokens)
      if (std::find(words.begin(), words.end(), t) != words.end()) ++count[cls];
  int best = 0;
  std::optional<std::string> arg;
  bool tie = false;
  for (const auto& [cls, n] : count) {
    if (n > best) best = n, arg = cls, tie = false;
    else if (n == best && n > 0) tie = true;
  }
  if (tie) return std::nullopt;
  return arg;
}

}  // namespace

TEST(SeedMatch, Examples) {
  auto c = fixtures::corpus({{"a", "Re: MAC serial ports", ""},
                             {"b", "mac hockey", ""},
                             {"c", "hockey hockey mac", ""},
                             {"d", "nothing here", ""}},
                            {"Computer", "Sports"});
  auto ds = seed_match(c, fixtures::computer_sports());
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(labels_of(ds), (std::vector<std::string>{"Computer", "Sports"}));
  EXPECT_EQ(ds.document(ds.entries()[0]).id, "a");
  EXPECT_EQ(ds.document(ds.entries()[1]).id, "c");
  EXPECT_EQ(ds.unmatched(), (std::vector<std::size_t>{1, 3}));
  for (const auto& e : ds.entries()) EXPECT_EQ(e.provenance, Provenance::seed_match);
}

TEST(SeedMatch, AgreesWithBruteForceOracle) {
  std::map<std::string, std::vector<std::string>> seeds{
      {"A", {"s0", "s1"}}, {"B", {"s2"}}, {"C", {"s3", "s4", "s5"}}};
  auto lex = SeedLexicon::from_lists({seeds.begin(), seeds.end()});
  Rng rng(3);
  std::vector<fixtures::Row> rows;
  for (int i = 0; i < 2000; ++i) {
    std::string text;
    auto n = rng.below(8);
    for (std::uint64_t j = 0; j < n; ++j)
      text += (rng.bernoulli(0.5) ? "s" + std::to_string(rng.below(6)) : "w") + " ";
    rows.emplace_back("doc" + std::to_string(i), text, "");
  }
  auto c = fixtures::corpus(rows, {"A", "B", "C"});
  auto ds = seed_match(c, lex);
  std::map<std::size_t, std::string> got;
  for (const auto& e : ds.entries()) got[e.doc] = c->classes().name(e.label);
  for (std::size_t i = 0; i < c->size(); ++i) {
    auto want = oracle_match((*c)[i].tokens, seeds);
    auto it = got.find(i);
    if (want) {
      ASSERT_NE(it, got.end()) << (*c)[i].raw_text;
      EXPECT_EQ(it->second, *want) << (*c)[i].raw_text;
    } else {
      EXPECT_EQ(it, got.end()) << (*c)[i].raw_text;
    }
  }
  EXPECT_EQ(ds.size() + ds.unmatched().size(), c->size());
}

TEST(SeedMatch, IndependentOfDocumentOrder) {
  auto syn = make_synthetic_corpus({.num_docs = 400, .seed = 5});
  auto ds = seed_match(syn.corpus, syn.lexicon);
  std::vector<Document> docs = syn.corpus->documents();
  std::reverse(docs.begin(), docs.end());
  auto rev = std::make_shared<const Corpus>(std::move(docs), syn.corpus->classes());
  auto ds2 = seed_match(rev, syn.lexicon);
  std::map<std::string, ClassId> a, b;
  for (const auto& e : ds.entries()) a[ds.document(e).id] = e.label;
  for (const auto& e : ds2.entries()) b[ds2.document(e).id] = e.label;
  EXPECT_EQ(a, b);
}

TEST(SeedMatch, LexiconClassMustExist) {
  auto c = fixtures::corpus({{"a", "mac", "Computer"}});
  EXPECT_THROW(seed_match(c, fixtures::computer_sports()), ValidationError);
}

TEST(Dataset, RejectsDuplicatesAndBadLabels) {
  auto c = four_docs();
  EXPECT_THROW(PseudoLabeledDataset(c, {{0, 0, Provenance::seed_match}, {0, 1, Provenance::seed_match}}),
               ValidationError);
  EXPECT_THROW(PseudoLabeledDataset(c, {{9, 0, Provenance::seed_match}}), ValidationError);
  EXPECT_THROW(PseudoLabeledDataset(c, {{0, 5, Provenance::seed_match}}), ValidationError);
}

TEST(NoiseStats, FourDocExample) {
  auto ds = seed_match(four_docs(), ab());
  auto m = noise_stats(ds);
  EXPECT_EQ(m.counts, (std::vector<std::vector<std::size_t>>{{1, 1}, {0, 2}}));
  EXPECT_DOUBLE_EQ(m.overall_noise_rate(), 0.25);
  EXPECT_DOUBLE_EQ(m.class_noise_rate(0), 0.5);
  EXPECT_DOUBLE_EQ(m.class_noise_rate(1), 0.0);
  EXPECT_DOUBLE_EQ(m.rates()[0][1], 0.5);
}

TEST(NoiseStats, CleanLabelsGiveDiagonal) {
  auto c = fixtures::corpus({{"1", "alpha", "A"}, {"2", "beta", "B"}, {"3", "alpha alpha", "A"}});
  auto m = noise_stats(seed_match(c, ab()));
  EXPECT_EQ(m.off_diagonal(), 0u);
  EXPECT_EQ(m.overall_noise_rate(), 0.0);
}

TEST(NoiseStats, MissingGoldIsAnError) {
  auto c = fixtures::corpus({{"1", "alpha", "A"}, {"2", "beta", ""}}, {"A", "B"});
  try {
    noise_stats(seed_match(c, ab()));
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
}

TEST(NoiseStats, RowSumsEqualPerClassCounts) {
  auto syn = make_synthetic_corpus({});
  auto ds = seed_match(syn.corpus, syn.lexicon);
  auto m = noise_stats(ds);
  std::vector<std::size_t> per_gold(m.classes.size(), 0);
  for (const auto& e : ds.entries()) ++per_gold[*ds.document(e).gold];
  for (std::size_t y = 0; y < per_gold.size(); ++y) {
    std::size_t row = 0;
    for (auto v : m.counts[y]) row += v;
    EXPECT_EQ(row, per_gold[y]);
  }
  EXPECT_NEAR(m.overall_noise_rate(), 0.25, 0.02);
}

TEST(FlipNoise, FourDocCountsPreserved) {
  auto ds = seed_match(four_docs(), ab());
  for (std::uint64_t s = 0; s < 50; ++s) {
    auto f = synthesize_flip_noise(ds, s);
    auto l = labels_of(f);
    EXPECT_EQ(l[2], "B");
    EXPECT_EQ(l[3], "B");
    EXPECT_TRUE((l[0] == "A" && l[1] == "B") || (l[0] == "B" && l[1] == "A"));
    for (const auto& e : f.entries()) EXPECT_EQ(e.provenance, Provenance::synthesized);
  }
}

TEST(FlipNoise, CleanInputUnchanged) {
  auto c = fixtures::corpus({{"1", "alpha", "A"}, {"2", "beta", "B"}, {"3", "alpha", "A"}});
  auto ds = seed_match(c, ab());
  EXPECT_EQ(labels_of(synthesize_flip_noise(ds, 9)), labels_of(ds));
}

TEST(FlipNoise, EachNoisyPositionEquallyLikely) {
  auto ds = seed_match(four_docs(), ab());
  int d1_gets_b = 0, d2_gets_b = 0;
  const int trials = 10000;
  for (int s = 0; s < trials; ++s) {
    auto f = synthesize_flip_noise(ds, std::uint64_t(s));
    d1_gets_b += f.entries()[0].label == 1;
    d2_gets_b += f.entries()[1].label == 1;
  }
  EXPECT_NEAR(double(d1_gets_b) / trials, 0.5, 0.02);
  EXPECT_NEAR(double(d2_gets_b) / trials, 0.5, 0.02);
}

TEST(FlipNoise, MatrixIdenticalForEverySeed) {
  auto syn = make_synthetic_corpus({.num_docs = 600});
  auto ds = seed_match(syn.corpus, syn.lexicon);
  auto m = noise_stats(ds);
  for (std::uint64_t s = 0; s < 200; ++s) EXPECT_EQ(noise_stats(synthesize_flip_noise(ds, s)), m);
}

TEST(FlipNoise, NeedsGold) {
  auto c = fixtures::corpus({{"1", "alpha", ""}}, {"A", "B"});
  EXPECT_THROW(synthesize_flip_noise(seed_match(c, ab()), 0), ValidationError);
}

TEST(PseudoLabelFile, RoundTrip) {
  auto c = four_docs();
  auto ds = synthesize_flip_noise(seed_match(c, ab()), 1);
  std::stringstream buf;
  write_pseudo_labels(ds, buf);
  auto first = buf.str();
  EXPECT_NE(first.find(R"({"id":"d1","pseudo_label":)"), std::string::npos);
  auto back = read_pseudo_labels(c, buf);
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.entries()[i].doc, ds.entries()[i].doc);
    EXPECT_EQ(back.entries()[i].label, ds.entries()[i].label);
    EXPECT_EQ(back.entries()[i].provenance, ds.entries()[i].provenance);
  }
  std::istringstream bad("{\"id\":\"d1\",\"pseudo_label\":\"Nope\"}\n");
  EXPECT_THROW(read_pseudo_labels(c, bad), ValidationError);
}

TEST(MatrixCsv, CountsAndRates) {
  auto m = noise_stats(seed_match(four_docs(), ab()));
  std::ostringstream counts, rates;
  write_matrix_counts_csv(m, counts);
  write_matrix_rates_csv(m, rates);
  EXPECT_EQ(counts.str(), "gold\\pseudo,A,B\nA,1,1\nB,0,2\n");
  EXPECT_EQ(rates.str(), "gold\\pseudo,A,B\nA,0.500000,0.500000\nB,0.000000,1.000000\n");
}
