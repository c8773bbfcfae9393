#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "support.hpp"

using namespace ccs;
using namespace ccs::testing;

namespace {

/// Three tokens, no EOS: every sequence has length max_len.
struct TableModel {
  using State = std::vector<int>;
  State initial_state() const { return {}; }
  std::pair<std::vector<double>, State> step(const State& s, int prev) const {
    State next = s;
    if (!s.empty() || prev != bos()) next.push_back(prev);
    return {dist(next), next};
  }
  static std::vector<double> dist(const State& p) {
    if (p.empty()) return {0.5, 0.4, 0.1};
    if (p.size() == 1) {
      if (p[0] == 0) return {0.34, 0.33, 0.33};
      if (p[0] == 1) return {0.9, 0.05, 0.05};
      return {0.1, 0.1, 0.8};
    }
    if (p[0] == p[1]) return {0.6, 0.2, 0.2};
    return {0.2, 0.2, 0.6};
  }
  int bos() const { return -1; }
  int eos() const { return 99; }
};

struct Scored {
  std::vector<int> seq;
  double logp;
};

std::vector<Scored> enumerate_all(bool skip_repeats) {
  std::vector<Scored> all;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c) {
        std::vector<int> s{a, b, c};
        if (skip_repeats && std::set<int>(s.begin(), s.end()).size() < 3) continue;
        double lp = 0;
        std::vector<int> prefix;
        for (int t : s) {
          lp += std::log(TableModel::dist(prefix)[t]);
          prefix.push_back(t);
        }
        all.push_back({s, lp});
      }
  std::stable_sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.logp > y.logp; });
  return all;
}

/// Random prefix-dependent distributions over V tokens; token V-1 is EOS.
struct RandomModel {
  using State = std::vector<int>;
  std::uint64_t seed;
  std::size_t V;
  double eos_bias;

  State initial_state() const { return {}; }
  std::pair<std::vector<double>, State> step(const State& s, int prev) const {
    State next = s;
    if (prev != bos()) next.push_back(prev);
    std::uint64_t h = seed;
    for (int t : next) h = h * 1000003ULL + static_cast<std::uint64_t>(t) + 1;
    Rng rng(h);
    std::vector<double> p(V);
    double z = 0;
    for (auto& x : p) z += (x = std::exp(rng.uniform(-2, 2)));
    p.back() *= eos_bias;
    z = 0;
    for (double x : p) z += x;
    for (auto& x : p) x /= z;
    return {p, next};
  }
  int bos() const { return -1; }
  int eos() const { return static_cast<int>(V) - 1; }
};

SearchConfig cfg_of(SearchMode mode, std::size_t beam, std::size_t max_len, std::size_t n = 1,
                    double eta = 0.5) {
  SearchConfig c;
  c.mode = mode;
  c.beam_size = beam;
  c.max_len = max_len;
  c.ngram = n;
  c.eta = eta;
  return c;
}

template <typename S>
std::vector<std::vector<int>> token_lists(const SearchResult<S>& r) {
  std::vector<std::vector<int>> out;
  for (const auto& h : r.hypotheses) out.push_back(h.tokens);
  return out;
}

bool has_repeat_ngram(const std::vector<int>& toks, std::size_t n) {
  for (const auto& [g, c] : count_ngrams(toks, n))
    if (c > 1) return true;
  return false;
}

}  // namespace

// ---------------------------------------------------------------------------
// rbs_adjust

TEST(RbsAdjust, Examples) {
  EXPECT_DOUBLE_EQ(rbs_adjust(0.3, 2, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(rbs_adjust(0.9, 1, 0.5), 0.4);
  EXPECT_DOUBLE_EQ(rbs_adjust(0.7, 0, 0.5), 0.7);
  EXPECT_DOUBLE_EQ(rbs_adjust(0.7, 3, 0.0), 0.7);
}

TEST(RbsAdjustProperty, NeverIncreasesAndEqualOnlyWhenInactive) {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double p = rng.uniform(0, 1), eta = i % 10 == 0 ? 0.0 : rng.uniform(0, 1);
    const std::size_t pi = rng.below(4);
    const double a = rbs_adjust(p, pi, eta);
    EXPECT_LE(a, p);
    EXPECT_GE(a, 0.0);
    if (pi == 0 || eta == 0.0) EXPECT_EQ(a, p);
    else if (p > 0) EXPECT_LT(a, p);
  }
}

TEST(SearchConfig, Validation) {
  EXPECT_THROW(cfg_of(SearchMode::Beam, 0, 5).validate(), ConfigError);
  EXPECT_THROW(cfg_of(SearchMode::Rbs, 2, 5, 0).validate(), ConfigError);
  EXPECT_THROW(cfg_of(SearchMode::Rbs, 2, 5, 1, -0.1).validate(), ConfigError);
  EXPECT_THROW(parse_search_mode("nucleus"), ConfigError);
  EXPECT_EQ(parse_search_mode("hard_norepeat"), SearchMode::HardNoRepeat);
  const SearchConfig d;
  EXPECT_EQ(d.beam_size, 5u);
  EXPECT_EQ(d.ngram, 1u);
  EXPECT_EQ(d.eta, 0.5);
}

// ---------------------------------------------------------------------------
// Exhaustive oracle on the 3-token table model

TEST(BeamSearchOracle, TopTwoMatchExhaustiveEnumeration) {
  const auto all = enumerate_all(false);
  ASSERT_EQ(all.size(), 27u);
  auto r = beam_search(TableModel{}, cfg_of(SearchMode::Beam, 2, 3));
  ASSERT_EQ(r.hypotheses.size(), 2u);
  EXPECT_TRUE(r.truncated);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(r.hypotheses[i].tokens, all[i].seq);
    EXPECT_NEAR(r.hypotheses[i].log_prob, all[i].logp, 1e-12);
    EXPECT_NEAR(r.hypotheses[i].score, all[i].logp, 1e-12);
  }
  EXPECT_EQ(all[0].seq, (std::vector<int>{1, 0, 2}));
  // Greedy commits to token 0 first and misses the best sequence.
  auto g = greedy_decode(TableModel{}, cfg_of(SearchMode::Greedy, 1, 3));
  EXPECT_EQ(g.tokens, (std::vector<int>{0, 0, 0}));
  EXPECT_NE(g.tokens, all[0].seq);
}

TEST(BeamSearchOracle, HardNoRepeatExcludesRepeatingSequences) {
  const auto allowed = enumerate_all(true);
  ASSERT_EQ(allowed.size(), 6u);
  auto r = hard_norepeat_search(TableModel{}, cfg_of(SearchMode::Beam, 2, 3));
  ASSERT_EQ(r.hypotheses.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_FALSE(has_repeat_ngram(r.hypotheses[i].tokens, 1));
    EXPECT_EQ(r.hypotheses[i].tokens, allowed[i].seq);
    EXPECT_NEAR(r.hypotheses[i].log_prob, allowed[i].logp, 1e-12);
  }
}

TEST(BeamSearchOracle, WideRbsBeamMatchesAdjustedEnumeration) {
  // Beam 27 never prunes by rank, so it must return every sequence whose
  // adjusted probabilities stay positive, ordered by adjusted score.
  const double eta = 0.1;
  std::vector<Scored> ref;
  for (const auto& s : enumerate_all(false)) {
    double score = 0;
    std::vector<int> prefix;
    for (int t : s.seq) {
      const auto pi = static_cast<std::size_t>(std::count(prefix.begin(), prefix.end(), t));
      const double pa = rbs_adjust(TableModel::dist(prefix)[t], pi, eta);
      score += pa > 0 ? std::log(pa) : -INFINITY;
      prefix.push_back(t);
    }
    if (std::isfinite(score)) ref.push_back({s.seq, score});
  }
  std::stable_sort(ref.begin(), ref.end(), [](const auto& x, const auto& y) { return x.logp > y.logp; });
  auto r = beam_search(TableModel{}, cfg_of(SearchMode::Rbs, 27, 3, 1, eta));
  ASSERT_EQ(r.hypotheses.size(), ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    EXPECT_NEAR(r.hypotheses[i].score, ref[i].logp, 1e-12);
    if (i + 1 < ref.size() && ref[i].logp != ref[i + 1].logp) EXPECT_EQ(r.hypotheses[i].tokens, ref[i].seq);
  }
  const auto it = std::find_if(r.hypotheses.begin(), r.hypotheses.end(),
                               [](const auto& h) { return h.tokens == std::vector<int>{0, 0, 0}; });
  ASSERT_NE(it, r.hypotheses.end());
  EXPECT_NEAR(it->log_prob, std::log(0.5 * 0.34 * 0.6), 1e-12);
  EXPECT_NEAR(it->score, std::log(0.5 * (0.34 - 0.1) * (0.6 - 0.2)), 1e-12);
}

// ---------------------------------------------------------------------------
// Properties on random models

TEST(BeamSearchProperty, BeamOneEqualsGreedy) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    RandomModel m{seed, 7, 0.5};
    auto b = beam_search(m, cfg_of(SearchMode::Beam, 1, 12));
    auto g = greedy_decode(m, cfg_of(SearchMode::Greedy, 1, 12));
    ASSERT_EQ(b.hypotheses.size(), 1u);
    EXPECT_EQ(b.hypotheses[0].tokens, g.tokens) << seed;
    EXPECT_EQ(decode_tokens(m, cfg_of(SearchMode::Greedy, 5, 12)),
              decode_tokens(m, cfg_of(SearchMode::Beam, 1, 12)));
  }
}

TEST(BeamSearchProperty, EtaZeroIsPlainBeam) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    RandomModel m{seed, 6, 0.3};
    for (std::size_t n : {1u, 2u}) {
      auto a = beam_search(m, cfg_of(SearchMode::Rbs, 4, 10, n, 0.0));
      auto b = beam_search(m, cfg_of(SearchMode::Beam, 4, 10, n));
      EXPECT_EQ(token_lists(a), token_lists(b));
      for (std::size_t i = 0; i < a.hypotheses.size(); ++i)
        EXPECT_EQ(a.hypotheses[i].score, b.hypotheses[i].score);
    }
  }
}

TEST(BeamSearchProperty, EtaOneUnigramNeverRepeats) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    RandomModel m{seed, 8, 0.2};
    auto r = beam_search(m, cfg_of(SearchMode::Rbs, 5, 12, 1, 1.0));
    for (const auto& h : r.hypotheses) EXPECT_FALSE(has_repeat_ngram(h.tokens, 1)) << seed;
    auto hard = hard_norepeat_search(m, cfg_of(SearchMode::Beam, 5, 12));
    EXPECT_EQ(token_lists(r), token_lists(hard));
  }
}

TEST(BeamSearchProperty, HardNeverEmitsRepeatedNgram) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    RandomModel m{seed, 4, 0.1};
    for (std::size_t n : {1u, 2u, 3u}) {
      auto r = hard_norepeat_search(m, cfg_of(SearchMode::Beam, 3, 10, n));
      for (const auto& h : r.hypotheses) EXPECT_FALSE(has_repeat_ngram(h.tokens, n));
    }
  }
}

TEST(BeamSearchProperty, BookkeepingRankingAndDeterminism) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    RandomModel m{seed, 6, 0.4};
    const std::size_t n = 1 + seed % 3;
    auto cfg = cfg_of(seed % 2 ? SearchMode::Rbs : SearchMode::Beam, 4, 10, n, 0.3);
    auto r = beam_search(m, cfg);
    auto again = beam_search(m, cfg);
    EXPECT_EQ(token_lists(r), token_lists(again));
    ASSERT_FALSE(r.hypotheses.empty());
    EXPECT_LE(r.hypotheses.size(), 4u);
    for (std::size_t i = 0; i < r.hypotheses.size(); ++i) {
      const auto& h = r.hypotheses[i];
      EXPECT_EQ(h.ngram_counts, count_ngrams(h.tokens, n));
      EXPECT_EQ(h.finished, !h.tokens.empty() && h.tokens.back() == m.eos());
      // Raw log probability recomputed from the model.
      double lp = 0;
      auto st = m.initial_state();
      int prev = m.bos();
      for (int t : h.tokens) {
        auto [p, next] = m.step(st, prev);
        lp += std::log(p[t]);
        st = next;
        prev = t;
      }
      EXPECT_NEAR(h.log_prob, lp, 1e-9);
      EXPECT_LE(h.score, h.log_prob + 1e-12);
      if (i > 0) EXPECT_GE(r.hypotheses[i - 1].ranking_score(true), h.ranking_score(true));
    }
  }
}

TEST(BeamSearch, TruncatedWhenEosIsUnreachable) {
  RandomModel m{3, 5, 0.0};
  bool truncated = false;
  auto toks = decode_tokens(m, cfg_of(SearchMode::Beam, 3, 6), &truncated);
  EXPECT_TRUE(truncated);
  EXPECT_EQ(toks.size(), 6u);
  RandomModel certain{3, 5, 1e9};
  auto one = decode_tokens(certain, cfg_of(SearchMode::Beam, 3, 6), &truncated);
  EXPECT_FALSE(truncated);
  EXPECT_TRUE(one.empty());
}

TEST(BeamSearch, ZeroProbabilityCandidatesArePruned) {
  // After two tokens, the only remaining choices repeat and are zeroed.
  auto r = hard_norepeat_search(TableModel{}, cfg_of(SearchMode::Beam, 5, 4));
  ASSERT_FALSE(r.hypotheses.empty());
  EXPECT_TRUE(r.truncated);
  for (const auto& h : r.hypotheses) EXPECT_EQ(h.tokens.size(), 3u);
}

TEST(CountNgrams, BruteForceReference) {
  auto c = count_ngrams({1, 2, 1, 2, 1}, 2);
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ((c[{1, 2}]), 2u);
  EXPECT_EQ((c[{2, 1}]), 2u);
  EXPECT_TRUE(count_ngrams({1}, 2).empty());
}

// ---------------------------------------------------------------------------
// Search on the neural model

TEST(CcsStepModel, NeverEmitsPadOrBosAndIsDeterministic) {
  auto cfg = toy_config(15);
  CcsModel<float> m(cfg, 9);
  const std::vector<std::vector<int>> art{{4, 5, 6}, {7, 8}};
  for (auto mode : {SearchMode::Greedy, SearchMode::Beam, SearchMode::Rbs, SearchMode::HardNoRepeat}) {
    auto sc = cfg_of(mode, 3, 8);
    auto a = generate_ids(m, art, 1, sc), b = generate_ids(m, art, 1, sc);
    EXPECT_EQ(a, b);
    for (int t : a) {
      EXPECT_NE(t, Vocab::kPad);
      EXPECT_NE(t, Vocab::kBos);
      EXPECT_NE(t, Vocab::kEos);
    }
    if (mode == SearchMode::HardNoRepeat) EXPECT_FALSE(has_repeat_ngram(a, 1));
  }
}
