#pragma once

// Inference-time search over any step model exposing
//
//   State initial_state() const;
//   std::pair<std::vector<double>, State> step(const State&, int prev) const;
//   int bos() const;  int eos() const;
//
// where step() returns a probability for every token id.
//
// Restricted beam search lowers the probability of a candidate w that would
// complete an n-gram already seen pi times in its own hypothesis:
//   p' = p                   if pi == 0
//   p' = max(p - pi*eta, 0)  otherwise
// The adjusted value replaces p in the log-score; p' == 0 prunes the
// candidate. Distributions are not renormalized.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ccs/errors.hpp"

namespace ccs {

enum class SearchMode { Greedy, Beam, Rbs, HardNoRepeat };

inline std::string to_string(SearchMode m) {
  switch (m) {
    case SearchMode::Greedy: return "greedy";
    case SearchMode::Beam: return "beam";
    case SearchMode::Rbs: return "rbs";
    case SearchMode::HardNoRepeat: return "hard";
  }
  return "?";
}

inline SearchMode parse_search_mode(const std::string& s) {
  if (s == "greedy") return SearchMode::Greedy;
  if (s == "beam") return SearchMode::Beam;
  if (s == "rbs") return SearchMode::Rbs;
  if (s == "hard" || s == "hard_norepeat") return SearchMode::HardNoRepeat;
  throw ConfigError("unknown decode mode '" + s + "' (greedy, beam, rbs, hard)");
}

struct SearchConfig {
  std::size_t beam_size = 5;
  std::size_t max_len = 40;
  std::size_t ngram = 1;
  double eta = 0.5;
  SearchMode mode = SearchMode::Rbs;
  bool length_normalize = true;

  void validate() const {
    if (beam_size < 1) throw ConfigError("beam_size must be >= 1");
    if (ngram < 1) throw ConfigError("rbs n-gram order must be >= 1");
    if (!(eta >= 0.0)) throw ConfigError("rbs eta must be >= 0");
    if (max_len < 1) throw ConfigError("max_len must be >= 1");
  }
};

template <typename M>
concept StepModel = requires(const M& m, const typename M::State& s, int tok) {
  { m.initial_state() } -> std::convertible_to<typename M::State>;
  { m.step(s, tok) } -> std::convertible_to<std::pair<std::vector<double>, typename M::State>>;
  { m.bos() } -> std::convertible_to<int>;
  { m.eos() } -> std::convertible_to<int>;
};

/// Eq.-style repetition penalty on one probability.
inline double rbs_adjust(double p, std::size_t pi, double eta) {
  if (pi == 0) return p;
  return std::max(p - static_cast<double>(pi) * eta, 0.0);
}

using NgramCounts = std::map<std::vector<int>, std::size_t>;

/// Counts every n-gram in `tokens` (brute force; used as reference).
inline NgramCounts count_ngrams(const std::vector<int>& tokens, std::size_t n) {
  NgramCounts c;
  if (tokens.size() < n) return c;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++c[std::vector<int>(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return c;
}

template <typename State>
struct Hypothesis {
  std::vector<int> tokens;  // emitted tokens, EOS included when finished
  double log_prob = 0.0;    // sum of raw per-step log probabilities
  double score = 0.0;       // sum of log adjusted probabilities (ranking key)
  State state;
  NgramCounts ngram_counts;
  bool finished = false;

  double ranking_score(bool length_normalize) const {
    if (!length_normalize || tokens.empty()) return score;
    return score / static_cast<double>(tokens.size());
  }

  /// The n-gram that appending `w` would complete; empty if too short.
  std::vector<int> ngram_with(int w, std::size_t n) const {
    if (tokens.size() + 1 < n) return {};
    std::vector<int> g(tokens.end() - static_cast<long>(n - 1), tokens.end());
    g.push_back(w);
    return g;
  }

  std::size_t occurrences(int w, std::size_t n) const {
    auto g = ngram_with(w, n);
    if (g.empty()) return 0;
    auto it = ngram_counts.find(g);
    return it == ngram_counts.end() ? 0 : it->second;
  }

  void append(int w, double p_raw, double p_adj, std::size_t n) {
    auto g = ngram_with(w, n);
    if (!g.empty()) ++ngram_counts[g];
    tokens.push_back(w);
    log_prob += std::log(p_raw);
    score += std::log(p_adj);
  }
};

template <typename State>
struct SearchResult {
  std::vector<Hypothesis<State>> hypotheses;  // best first
  bool truncated = false;  // some returned hypotheses never reached EOS
};

namespace detail {

inline double adjusted_probability(double p, std::size_t pi, const SearchConfig& cfg) {
  switch (cfg.mode) {
    case SearchMode::Rbs: return rbs_adjust(p, pi, cfg.eta);
    case SearchMode::HardNoRepeat: return pi > 0 ? 0.0 : p;
    default: return p;
  }
}

}  // namespace detail

/// Beam search in beam, rbs or hard mode; greedy mode runs with beam 1.
template <StepModel M>
SearchResult<typename M::State> beam_search(const M& model, const SearchConfig& cfg_in) {
  using State = typename M::State;
  SearchConfig cfg = cfg_in;
  cfg.validate();
  if (cfg.mode == SearchMode::Greedy) cfg.beam_size = 1;

  struct Candidate {
    double score;
    std::size_t parent;
    int token;
    double p_raw, p_adj;
  };

  std::vector<Hypothesis<State>> live(1);
  live[0].state = model.initial_state();
  std::vector<Hypothesis<State>> finished;

  for (std::size_t t = 0; t < cfg.max_len && !live.empty(); ++t) {
    std::vector<Candidate> cands;
    std::vector<State> next_states;
    next_states.reserve(live.size());
    for (std::size_t h = 0; h < live.size(); ++h) {
      const int prev = live[h].tokens.empty() ? model.bos() : live[h].tokens.back();
      auto [probs, st] = model.step(live[h].state, prev);
      next_states.push_back(std::move(st));
      for (std::size_t w = 0; w < probs.size(); ++w) {
        const double p = probs[w];
        if (!(p > 0.0)) continue;
        const std::size_t pi = live[h].occurrences(static_cast<int>(w), cfg.ngram);
        const double pa = detail::adjusted_probability(p, pi, cfg);
        if (!(pa > 0.0)) continue;
        cands.push_back({live[h].score + std::log(pa), h, static_cast<int>(w), p, pa});
      }
    }
    // Every extension pruned: keep the current beam as the unfinished result.
    if (cands.empty()) break;
    const std::size_t keep = std::min(cands.size(), cfg.beam_size - finished.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis<State>> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& c = cands[i];
      Hypothesis<State> hyp = live[c.parent];
      hyp.state = next_states[c.parent];
      hyp.append(c.token, c.p_raw, c.p_adj, cfg.ngram);
      if (c.token == model.eos()) {
        hyp.finished = true;
        finished.push_back(std::move(hyp));
      } else {
        next.push_back(std::move(hyp));
      }
    }
    live = std::move(next);
    if (finished.size() >= cfg.beam_size) break;
  }

  SearchResult<State> res;
  res.hypotheses = std::move(finished);
  if (res.hypotheses.size() < cfg.beam_size && !live.empty()) {
    res.truncated = true;
    for (auto& h : live) {
      if (res.hypotheses.size() >= cfg.beam_size) break;
      res.hypotheses.push_back(std::move(h));
    }
  }
  std::stable_sort(res.hypotheses.begin(), res.hypotheses.end(),
                   [&](const auto& a, const auto& b) {
                     return a.ranking_score(cfg.length_normalize) >
                            b.ranking_score(cfg.length_normalize);
                   });
  return res;
}

/// Argmax decoding (ties to the lower id) until EOS or max_len.
template <StepModel M>
Hypothesis<typename M::State> greedy_decode(const M& model, const SearchConfig& cfg) {
  Hypothesis<typename M::State> hyp;
  hyp.state = model.initial_state();
  for (std::size_t t = 0; t < cfg.max_len; ++t) {
    const int prev = hyp.tokens.empty() ? model.bos() : hyp.tokens.back();
    auto [probs, st] = model.step(hyp.state, prev);
    int best = 0;
    for (std::size_t w = 1; w < probs.size(); ++w) {
      if (probs[w] > probs[static_cast<std::size_t>(best)]) best = static_cast<int>(w);
    }
    hyp.state = std::move(st);
    const double p = probs[static_cast<std::size_t>(best)];
    hyp.append(best, p, p, cfg.ngram);
    if (best == model.eos()) {
      hyp.finished = true;
      break;
    }
  }
  return hyp;
}

/// Beam search that forbids any repeated n-gram (probability set to zero).
template <StepModel M>
SearchResult<typename M::State> hard_norepeat_search(const M& model, SearchConfig cfg) {
  cfg.mode = SearchMode::HardNoRepeat;
  return beam_search(model, cfg);
}

/// Dispatch on cfg.mode; returns the best hypothesis' tokens without EOS.
template <StepModel M>
std::vector<int> decode_tokens(const M& model, const SearchConfig& cfg, bool* truncated = nullptr) {
  std::vector<int> toks;
  bool trunc = false;
  if (cfg.mode == SearchMode::Greedy) {
    auto h = greedy_decode(model, cfg);
    toks = h.tokens;
    trunc = !h.finished;
  } else {
    auto r = beam_search(model, cfg);
    if (!r.hypotheses.empty()) {
      toks = r.hypotheses.front().tokens;
      trunc = !r.hypotheses.front().finished;
    }
  }
  if (!toks.empty() && toks.back() == model.eos()) toks.pop_back();
  if (truncated) *truncated = trunc;
  return toks;
}

}  // namespace ccs
