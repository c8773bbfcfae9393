#pragma once

// Corpus metrics over token sequences.
//
// BLEU (corpus level, max_n = 4):
//   clipped n-gram matches m_n and candidate n-gram totals l_n are summed over
//   the corpus; p_1 = m_1 / l_1 and p_n = (m_n + 1) / (l_n + 1) for n > 1;
//   BP = 1 if c > r else exp(1 - r/c) with c, r the total candidate and
//   reference lengths; BLEU = BP * exp(mean_n log p_n), and 0 when m_1 = 0.
// ROUGE-L: per pair R = lcs/|ref|, P = lcs/|cand|,
//   F = (1 + b^2) R P / (R + b^2 P) with b = 1.2; corpus score is the mean F.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ccs/corpus.hpp"
#include "ccs/errors.hpp"
#include "json.hpp"

namespace ccs {

using TokenSeq = std::vector<std::string>;

/// Whitespace-delimited tokens.
inline TokenSeq split_words(const std::string& text) {
  std::istringstream is(text);
  TokenSeq out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

/// Model-level tokens (characters), with whitespace collapsed.
inline TokenSeq char_tokens(const std::string& text) { return tokenize_char(text); }

struct DistinctResult {
  double ratio = 0.0;
  std::size_t unique = 0;
  std::size_t total = 0;
  bool undefined = false;  // no n-grams at all; ratio reported as 0
};

/// Unique n-grams over the whole corpus divided by the total n-gram count.
inline DistinctResult distinct_n(const std::vector<TokenSeq>& texts, std::size_t n) {
  if (n < 1) throw ConfigError("distinct_n needs n >= 1");
  std::set<TokenSeq> seen;
  DistinctResult r;
  for (const auto& t : texts) {
    if (t.size() < n) continue;
    for (std::size_t i = 0; i + n <= t.size(); ++i) {
      seen.insert(TokenSeq(t.begin() + i, t.begin() + i + n));
      ++r.total;
    }
  }
  r.unique = seen.size();
  r.undefined = r.total == 0;
  r.ratio = r.undefined ? 0.0 : static_cast<double>(r.unique) / static_cast<double>(r.total);
  return r;
}

/// Mean over texts of the per-text distinct ratio (texts with no n-grams skipped).
inline double distinct_n_per_text(const std::vector<TokenSeq>& texts, std::size_t n) {
  double acc = 0.0;
  std::size_t k = 0;
  for (const auto& t : texts) {
    auto r = distinct_n({t}, n);
    if (r.undefined) continue;
    acc += r.ratio;
    ++k;
  }
  return k ? acc / static_cast<double>(k) : 0.0;
}

struct RepetitionResult {
  double rate = 0.0;
  std::size_t repeated = 0;
  std::size_t positions = 0;
};

/// Fraction of n-gram positions whose n-gram already occurred earlier in the
/// same text.
inline RepetitionResult repetitive_ngram_rate(const TokenSeq& text, std::size_t n) {
  if (n < 1) throw ConfigError("repetitive_ngram_rate needs n >= 1");
  RepetitionResult r;
  if (text.size() < n) return r;
  std::set<TokenSeq> seen;
  for (std::size_t i = 0; i + n <= text.size(); ++i) {
    TokenSeq g(text.begin() + i, text.begin() + i + n);
    if (!seen.insert(g).second) ++r.repeated;
    ++r.positions;
  }
  r.rate = static_cast<double>(r.repeated) / static_cast<double>(r.positions);
  return r;
}

/// Mean per-text repetition rate; texts shorter than n carry zero weight.
inline double corpus_repetition_rate(const std::vector<TokenSeq>& texts, std::size_t n) {
  double acc = 0.0;
  std::size_t k = 0;
  for (const auto& t : texts) {
    auto r = repetitive_ngram_rate(t, n);
    if (r.positions == 0) continue;
    acc += r.rate;
    ++k;
  }
  return k ? acc / static_cast<double>(k) : 0.0;
}

inline double bleu(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references,
                   std::size_t max_n = 4) {
  if (candidates.size() != references.size()) {
    throw UsageError("bleu: " + std::to_string(candidates.size()) + " candidates vs " +
                     std::to_string(references.size()) + " references");
  }
  std::vector<double> match(max_n + 1, 0.0), total(max_n + 1, 0.0);
  double c_len = 0.0, r_len = 0.0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const auto& c = candidates[k];
    const auto& r = references[k];
    c_len += static_cast<double>(c.size());
    r_len += static_cast<double>(r.size());
    for (std::size_t n = 1; n <= max_n; ++n) {
      std::map<TokenSeq, std::size_t> rc, cc;
      for (std::size_t i = 0; i + n <= r.size(); ++i) ++rc[TokenSeq(r.begin() + i, r.begin() + i + n)];
      for (std::size_t i = 0; i + n <= c.size(); ++i) ++cc[TokenSeq(c.begin() + i, c.begin() + i + n)];
      for (const auto& [g, cnt] : cc) {
        auto it = rc.find(g);
        if (it != rc.end()) match[n] += static_cast<double>(std::min(cnt, it->second));
        total[n] += static_cast<double>(cnt);
      }
    }
  }
  if (match[1] == 0.0 || c_len == 0.0) return 0.0;
  double log_sum = std::log(match[1] / total[1]);
  for (std::size_t n = 2; n <= max_n; ++n) log_sum += std::log((match[n] + 1.0) / (total[n] + 1.0));
  const double bp = c_len > r_len ? 1.0 : std::exp(1.0 - r_len / c_len);
  return bp * std::exp(log_sum / static_cast<double>(max_n));
}

inline std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

struct RougeL {
  double precision = 0.0, recall = 0.0, f = 0.0;
};

inline RougeL rouge_l_pair(const TokenSeq& cand, const TokenSeq& ref, double beta = 1.2) {
  RougeL r;
  if (cand.empty() || ref.empty()) return r;
  const double lcs = static_cast<double>(lcs_length(cand, ref));
  r.precision = lcs / static_cast<double>(cand.size());
  r.recall = lcs / static_cast<double>(ref.size());
  if (lcs > 0.0) {
    const double b2 = beta * beta;
    r.f = (1.0 + b2) * r.precision * r.recall / (r.recall + b2 * r.precision);
  }
  return r;
}

inline double rouge_l(const std::vector<TokenSeq>& candidates,
                      const std::vector<TokenSeq>& references) {
  if (candidates.size() != references.size()) {
    throw UsageError("rouge_l: " + std::to_string(candidates.size()) + " candidates vs " +
                     std::to_string(references.size()) + " references");
  }
  if (candidates.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    acc += rouge_l_pair(candidates[k], references[k]).f;
  }
  return acc / static_cast<double>(candidates.size());
}

// ---------------------------------------------------------------------------
// Emotion tagger: multinomial naive Bayes with add-one smoothing and a
// uniform label prior. Tokens unseen in training are ignored.

class EmotionTagger {
 public:
  EmotionTagger() = default;

  static EmotionTagger train(const std::vector<TokenSeq>& comments,
                             const std::vector<int>& labels, std::size_t n_labels) {
    if (comments.size() != labels.size()) {
      throw UsageError("train_tagger: comments and labels differ in length");
    }
    EmotionTagger tg;
    tg.n_labels_ = n_labels;
    std::vector<std::map<std::string, double>> counts(n_labels);
    std::vector<double> totals(n_labels, 0.0);
    std::vector<bool> covered(n_labels, false);
    std::set<std::string> vocab;
    for (std::size_t k = 0; k < comments.size(); ++k) {
      const int l = labels[k];
      if (l < 0 || static_cast<std::size_t>(l) >= n_labels) {
        throw DataError("tagger label " + std::to_string(l) + " out of range");
      }
      covered[l] = true;
      for (const auto& tok : comments[k]) {
        counts[l][tok] += 1.0;
        totals[l] += 1.0;
        vocab.insert(tok);
      }
    }
    for (std::size_t l = 0; l < n_labels; ++l) {
      if (!covered[l]) throw DataError("tagger has no training example for label " + std::to_string(l));
    }
    const double V = static_cast<double>(vocab.size());
    for (const auto& tok : vocab) {
      std::vector<double> lp(n_labels);
      for (std::size_t l = 0; l < n_labels; ++l) {
        auto it = counts[l].find(tok);
        const double c = it == counts[l].end() ? 0.0 : it->second;
        lp[l] = std::log((c + 1.0) / (totals[l] + V));
      }
      tg.log_likelihood_[tok] = std::move(lp);
    }
    return tg;
  }

  std::vector<double> scores(const TokenSeq& comment) const {
    std::vector<double> s(n_labels_, 0.0);
    for (const auto& tok : comment) {
      auto it = log_likelihood_.find(tok);
      if (it == log_likelihood_.end()) continue;
      for (std::size_t l = 0; l < n_labels_; ++l) s[l] += it->second[l];
    }
    return s;
  }

  /// Highest-scoring label; ties go to the lower label index.
  int tag(const TokenSeq& comment) const {
    const auto s = scores(comment);
    return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
  }

  std::size_t num_labels() const { return n_labels_; }
  std::size_t vocab_size() const { return log_likelihood_.size(); }

 private:
  std::size_t n_labels_ = 0;
  std::unordered_map<std::string, std::vector<double>> log_likelihood_;
};

/// Trains on a raw corpus using character tokens.
inline EmotionTagger train_tagger(const std::vector<RawExample>& labeled) {
  if (labeled.empty()) throw DataError("train_tagger needs labeled comments");
  std::vector<TokenSeq> toks;
  std::vector<int> labels;
  for (const auto& ex : labeled) {
    toks.push_back(char_tokens(ex.comment));
    labels.push_back(ex.emotion.label);
  }
  return EmotionTagger::train(toks, labels, labeled.front().emotion.num_labels());
}

struct EmotionAccuracy {
  double overall = 0.0;                // fraction of matches
  double macro = 0.0;                  // mean of per-label accuracies over requested labels
  std::vector<double> per_label;       // accuracy per label (0 when never requested)
  std::vector<std::size_t> requested;  // requests per label
};

template <typename Tagger>
EmotionAccuracy emotion_accuracy(const Tagger& tagger, const std::vector<TokenSeq>& generated,
                                 const std::vector<int>& requested, std::size_t n_labels) {
  if (generated.size() != requested.size()) {
    throw UsageError("emotion_accuracy: " + std::to_string(generated.size()) +
                     " comments vs " + std::to_string(requested.size()) + " requested labels");
  }
  EmotionAccuracy acc;
  acc.per_label.assign(n_labels, 0.0);
  acc.requested.assign(n_labels, 0);
  std::vector<std::size_t> hits(n_labels, 0);
  std::size_t total_hits = 0;
  for (std::size_t k = 0; k < generated.size(); ++k) {
    const auto l = static_cast<std::size_t>(requested[k]);
    ++acc.requested.at(l);
    if (tagger.tag(generated[k]) == requested[k]) {
      ++hits[l];
      ++total_hits;
    }
  }
  std::size_t used = 0;
  for (std::size_t l = 0; l < n_labels; ++l) {
    if (acc.requested[l] == 0) continue;
    acc.per_label[l] = static_cast<double>(hits[l]) / static_cast<double>(acc.requested[l]);
    acc.macro += acc.per_label[l];
    ++used;
  }
  if (used) acc.macro /= static_cast<double>(used);
  if (!generated.empty()) acc.overall = static_cast<double>(total_hits) / static_cast<double>(generated.size());
  return acc;
}

// ---------------------------------------------------------------------------

struct MetricReport {
  double bleu = 0.0;
  double rouge_l = 0.0;
  double d1 = 0.0, d2 = 0.0, d3 = 0.0;
  std::map<std::size_t, double> rep;  // n -> repetitive n-gram rate
  double emotion_acc = 0.0;
  std::vector<double> emotion_acc_per_label;
  std::size_t num_texts = 0;
  std::size_t num_tokens = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["bleu"] = bleu;
    j["rouge_l"] = rouge_l;
    j["d1"] = d1;
    j["d2"] = d2;
    j["d3"] = d3;
    nlohmann::ordered_json r;
    for (const auto& [n, v] : rep) r["rep_" + std::to_string(n)] = v;
    j["repetition"] = r;
    j["emotion_acc"] = emotion_acc;
    j["emotion_acc_per_label"] = emotion_acc_per_label;
    j["num_texts"] = num_texts;
    j["num_tokens"] = num_tokens;
    return j;
  }

  static MetricReport from_json(const nlohmann::json& j) {
    MetricReport m;
    m.bleu = j.at("bleu").get<double>();
    m.rouge_l = j.at("rouge_l").get<double>();
    m.d1 = j.at("d1").get<double>();
    m.d2 = j.at("d2").get<double>();
    m.d3 = j.at("d3").get<double>();
    for (const auto& [k, v] : j.at("repetition").items()) {
      m.rep[std::stoul(k.substr(4))] = v.get<double>();
    }
    m.emotion_acc = j.at("emotion_acc").get<double>();
    m.emotion_acc_per_label = j.at("emotion_acc_per_label").get<std::vector<double>>();
    m.num_texts = j.at("num_texts").get<std::size_t>();
    m.num_tokens = j.at("num_tokens").get<std::size_t>();
    return m;
  }

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

/// Computes every metric for aligned generated/reference token sequences.
template <typename Tagger>
MetricReport evaluate(const std::vector<TokenSeq>& generated, const std::vector<TokenSeq>& references,
                      const Tagger& tagger, const std::vector<int>& requested, std::size_t n_labels,
                      const std::vector<std::size_t>& rep_orders = {1, 2, 3, 4}) {
  MetricReport m;
  m.bleu = bleu(generated, references);
  m.rouge_l = rouge_l(generated, references);
  m.d1 = distinct_n(generated, 1).ratio;
  m.d2 = distinct_n(generated, 2).ratio;
  m.d3 = distinct_n(generated, 3).ratio;
  for (auto n : rep_orders) m.rep[n] = corpus_repetition_rate(generated, n);
  auto acc = emotion_accuracy(tagger, generated, requested, n_labels);
  m.emotion_acc = acc.macro;
  m.emotion_acc_per_label = acc.per_label;
  m.num_texts = generated.size();
  for (const auto& g : generated) m.num_tokens += g.size();
  return m;
}

/// Rows of a comparison table grouped as quality | diversity | repetition | emotion.
inline std::string render_table(const std::vector<std::pair<std::string, MetricReport>>& rows) {
  std::set<std::size_t> orders;
  for (const auto& [_, m] : rows)
    for (const auto& [n, v] : m.rep) orders.insert(n);
  std::size_t name_w = 5;
  for (const auto& [name, _] : rows) name_w = std::max(name_w, name.size());
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  auto pct = [](double v) { return v * 100.0; };
  os << std::left << std::setw(static_cast<int>(name_w)) << "Model"
     << " | Quality          | Diversity              | Repetition";
  os << std::string(orders.size() > 1 ? (orders.size() - 1) * 9 : 0, ' ') << " | Emotion\n";
  os << std::setw(static_cast<int>(name_w)) << ""
     << " | BLEU     ROUGE-L | D1     D2     D3      |";
  for (auto n : orders) os << " rep_" << n << "   ";
  os << " | Acc\n";
  for (const auto& [name, m] : rows) {
    os << std::setw(static_cast<int>(name_w)) << name << " | " << std::right << std::setw(6)
       << pct(m.bleu) << "   " << std::setw(7) << pct(m.rouge_l) << " | " << std::setw(6)
       << pct(m.d1) << " " << std::setw(6) << pct(m.d2) << " " << std::setw(6) << pct(m.d3)
       << "  |";
    for (auto n : orders) {
      auto it = m.rep.find(n);
      os << " " << std::setw(6) << (it == m.rep.end() ? 0.0 : pct(it->second)) << "  ";
    }
    os << " | " << std::setw(6) << pct(m.emotion_acc) << std::left << "\n";
  }
  return os.str();
}

}  // namespace ccs
