#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ccs/errors.hpp"
#include "ccs/rng.hpp"
#include "json.hpp"

namespace ccs {

// ---------------------------------------------------------------------------
// Emotion categories

enum class Granularity { Coarse, Fine };

inline const std::vector<std::string>& emotion_labels(Granularity g) {
  static const std::vector<std::string> coarse{"Positive", "Negative"};
  static const std::vector<std::string> fine{"Anger", "Disgust", "Like", "Happiness", "Sadness"};
  return g == Granularity::Coarse ? coarse : fine;
}

inline std::string to_string(Granularity g) { return g == Granularity::Coarse ? "coarse" : "fine"; }

inline Granularity parse_granularity(std::string_view s) {
  std::string l(s);
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "coarse") return Granularity::Coarse;
  if (l == "fine") return Granularity::Fine;
  throw ConfigError("unknown granularity '" + std::string(s) + "' (expected coarse or fine)");
}

struct EmotionCategory {
  Granularity granularity = Granularity::Fine;
  int label = 0;

  std::size_t num_labels() const { return emotion_labels(granularity).size(); }
  const std::string& name() const { return emotion_labels(granularity).at(label); }
  bool valid() const { return label >= 0 && static_cast<std::size_t>(label) < num_labels(); }
  friend bool operator==(const EmotionCategory&, const EmotionCategory&) = default;
};

namespace detail {
inline bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}
}  // namespace detail

inline std::string valid_labels_message(Granularity g) {
  std::string msg;
  for (const auto& l : emotion_labels(g)) msg += (msg.empty() ? "" : ", ") + l;
  return msg;
}

/// Case-insensitive label lookup within one granularity.
inline EmotionCategory parse_emotion(std::string_view name, Granularity g) {
  const auto& labels = emotion_labels(g);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (detail::iequals(labels[i], name)) return {g, static_cast<int>(i)};
  }
  throw DataError("unknown emotion label '" + std::string(name) + "' for " + to_string(g) +
                  " granularity; valid labels: " + valid_labels_message(g));
}

/// Label lookup across both granularities (label names are disjoint).
inline EmotionCategory parse_emotion_any(std::string_view name) {
  for (auto g : {Granularity::Coarse, Granularity::Fine}) {
    const auto& labels = emotion_labels(g);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (detail::iequals(labels[i], name)) return {g, static_cast<int>(i)};
    }
  }
  throw DataError("unknown emotion label '" + std::string(name) + "'; valid labels: " +
                  valid_labels_message(Granularity::Coarse) + ", " +
                  valid_labels_message(Granularity::Fine));
}

// ---------------------------------------------------------------------------
// Tokenization

/// One token per UTF-8 character; any run of whitespace becomes a single " ".
inline std::vector<std::string> tokenize_char(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      out.emplace_back(" ");
      continue;
    }
    std::size_t len = 1;
    if (c >= 0xF0) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    len = std::min(len, text.size() - i);
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kNumReserved = 4;

  Vocab() { reset_reserved(); }

  /// Builds from tokens in id order (ids start after the reserved block).
  static Vocab from_tokens(const std::vector<std::string>& tokens) {
    Vocab v;
    for (const auto& t : tokens) {
      if (v.index_.count(t)) throw DataError("duplicate vocab token '" + t + "'");
      v.index_[t] = static_cast<int>(v.tokens_.size());
      v.tokens_.push_back(t);
    }
    return v;
  }

  std::size_t size() const { return tokens_.size(); }

  int id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }
  bool contains(const std::string& token) const { return index_.count(token) > 0; }

  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  std::vector<int> encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
  }

  /// Concatenates non-reserved tokens; UNK renders as "<unk>".
  std::string decode(const std::vector<int>& ids) const {
    std::string out;
    for (int i : ids) {
      if (i == kUnk) out += "<unk>";
      else if (i >= kNumReserved) out += token(i);
    }
    return out;
  }

  /// Non-reserved tokens in id order.
  std::vector<std::string> content_tokens() const {
    return {tokens_.begin() + kNumReserved, tokens_.end()};
  }

  /// FNV-1a over the token list; identifies the vocab a checkpoint was built with.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& t : tokens_) {
      for (unsigned char c : t) {
        h ^= c;
        h *= 1099511628211ULL;
      }
      h ^= 0xFF;
      h *= 1099511628211ULL;
    }
    return h;
  }

  /// One token per line; line k holds id k + 4.
  void save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write vocab file " + path.string());
    for (std::size_t i = kNumReserved; i < tokens_.size(); ++i) os << tokens_[i] << '\n';
  }

  static Vocab load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot read vocab file " + path.string());
    std::vector<std::string> toks;
    std::string line;
    while (std::getline(is, line)) toks.push_back(line);
    return from_tokens(toks);
  }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  void reset_reserved() {
    tokens_ = {"<pad>", "<unk>", "<bos>", "<eos>"};
    index_.clear();
    for (int i = 0; i < kNumReserved; ++i) index_[tokens_[i]] = i;
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Frequency-ranked vocabulary over all texts (ties broken lexicographically),
/// truncated to max_size including the four reserved ids.
inline Vocab build_vocab_from_texts(const std::vector<std::string>& texts,
                                    std::size_t max_size = 5000) {
  if (texts.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  if (max_size < static_cast<std::size_t>(Vocab::kNumReserved)) {
    throw ConfigError("vocab max_size must be at least 4");
  }
  std::map<std::string, std::size_t> freq;
  for (const auto& t : texts) {
    for (auto& tok : tokenize_char(t)) ++freq[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = std::min(ranked.size(), max_size - Vocab::kNumReserved);
  std::vector<std::string> toks;
  for (std::size_t i = 0; i < keep; ++i) toks.push_back(ranked[i].first);
  return Vocab::from_tokens(toks);
}

// ---------------------------------------------------------------------------
// Examples

inline constexpr std::size_t kMaxSentences = 30;
inline constexpr std::size_t kMaxSentenceTokens = 80;

/// An article/comment pair in text form, as stored in corpus files.
struct RawExample {
  std::vector<std::string> article;
  std::string comment;
  EmotionCategory emotion;
  friend bool operator==(const RawExample&, const RawExample&) = default;
};

/// Token-id form consumed by the model. The comment is wrapped in BOS/EOS.
struct Example {
  std::vector<std::vector<int>> article;
  std::vector<int> comment;
  EmotionCategory emotion;
};

/// Articles and comments counted jointly (shared vocabulary).
inline Vocab build_vocab(const std::vector<RawExample>& examples, std::size_t max_size = 5000) {
  std::vector<std::string> texts;
  for (const auto& e : examples) {
    texts.insert(texts.end(), e.article.begin(), e.article.end());
    texts.push_back(e.comment);
  }
  return build_vocab_from_texts(texts, max_size);
}

inline std::string join_tokens(const std::vector<std::string>& toks) {
  std::string s;
  for (const auto& t : toks) s += t;
  return s;
}

struct TruncationStats {
  std::size_t articles_truncated = 0;
  std::size_t sentences_truncated = 0;
  std::size_t empty_sentences_dropped = 0;
};

/// Applies the 30-sentence / 80-token caps and drops empty sentences.
inline void enforce_caps(RawExample& ex, TruncationStats* stats = nullptr) {
  std::vector<std::string> kept;
  for (auto& s : ex.article) {
    auto toks = tokenize_char(s);
    if (toks.size() == 1 && toks[0] == " ") toks.clear();
    if (toks.empty()) {
      if (stats) ++stats->empty_sentences_dropped;
      continue;
    }
    if (toks.size() > kMaxSentenceTokens) {
      toks.resize(kMaxSentenceTokens);
      s = join_tokens(toks);
      if (stats) ++stats->sentences_truncated;
    }
    kept.push_back(s);
  }
  if (kept.size() > kMaxSentences) {
    kept.resize(kMaxSentences);
    if (stats) ++stats->articles_truncated;
  }
  ex.article = std::move(kept);
}

inline Example encode_example(const RawExample& raw, const Vocab& vocab) {
  Example ex;
  ex.emotion = raw.emotion;
  for (const auto& s : raw.article) {
    auto toks = tokenize_char(s);
    if (toks.size() == 1 && toks[0] == " ") continue;
    auto ids = vocab.encode(toks);
    if (ids.size() > kMaxSentenceTokens) ids.resize(kMaxSentenceTokens);
    if (!ids.empty()) ex.article.push_back(std::move(ids));
    if (ex.article.size() == kMaxSentences) break;
  }
  if (ex.article.empty()) throw DataError("article has no non-empty sentence");
  ex.comment.push_back(Vocab::kBos);
  for (int id : vocab.encode(tokenize_char(raw.comment))) ex.comment.push_back(id);
  ex.comment.push_back(Vocab::kEos);
  return ex;
}

inline std::vector<Example> encode_examples(const std::vector<RawExample>& raws,
                                            const Vocab& vocab) {
  std::vector<Example> out;
  out.reserve(raws.size());
  for (const auto& r : raws) out.push_back(encode_example(r, vocab));
  return out;
}

// ---------------------------------------------------------------------------
// Corpus files: one JSON object per line,
//   {"article": ["sentence", ...], "comment": "text", "emotion": "Label"}

inline nlohmann::ordered_json to_json(const RawExample& ex) {
  nlohmann::ordered_json j;
  j["article"] = ex.article;
  j["comment"] = ex.comment;
  j["emotion"] = ex.emotion.name();
  return j;
}

inline RawExample parse_corpus_line(const std::string& line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError(line_no, "record is not a JSON object");
  for (const char* key : {"article", "comment", "emotion"}) {
    if (!j.contains(key)) throw ParseError(line_no, std::string("missing field \"") + key + "\"");
  }
  if (!j["article"].is_array()) throw ParseError(line_no, "\"article\" must be an array");
  if (!j["comment"].is_string()) throw ParseError(line_no, "\"comment\" must be a string");
  if (!j["emotion"].is_string()) throw ParseError(line_no, "\"emotion\" must be a string");
  RawExample ex;
  for (const auto& s : j["article"]) {
    if (!s.is_string()) throw ParseError(line_no, "article sentences must be strings");
    ex.article.push_back(s.get<std::string>());
  }
  ex.comment = j["comment"].get<std::string>();
  try {
    ex.emotion = parse_emotion_any(j["emotion"].get<std::string>());
  } catch (const DataError& e) {
    throw DataError("line " + std::to_string(line_no) + ": " + e.what());
  }
  return ex;
}

/// Reads a corpus file. Over-long articles and sentences are truncated to the
/// caps and counted in `stats`; empty lines are skipped.
inline std::vector<RawExample> load_corpus(const std::filesystem::path& path,
                                           TruncationStats* stats = nullptr) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open corpus file " + path.string());
  std::vector<RawExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    RawExample ex = parse_corpus_line(line, line_no);
    enforce_caps(ex, stats);
    if (ex.article.empty()) throw ParseError(line_no, "article has no non-empty sentence");
    if (!out.empty() && out.front().emotion.granularity != ex.emotion.granularity) {
      throw DataError("line " + std::to_string(line_no) +
                      ": corpus mixes coarse and fine emotion labels");
    }
    out.push_back(std::move(ex));
  }
  return out;
}

inline void save_corpus(const std::vector<RawExample>& examples,
                        const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write corpus file " + path.string());
  for (const auto& ex : examples) os << to_json(ex).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic emotional corpus
//
// Articles are 3-5 sentences of the form "<ENT> <verb> <obj>[ <obj>]<p>" where
// ENT is drawn from a seeded entity pool (two capitals and a digit) and words
// use a filler alphabet. Exactly one sentence ends in '!' and marks the topic.
// The comment is ENT + verb of the topic sentence, followed by one word from
// the requested emotion's lexicon and a closing mark. Emotion words are
// reduplicated ("qxzqxz") at `reduplication_rate`, so the reference comments
// themselves contain within-comment repetition. Lexicon alphabets are disjoint across emotions and never occur
// in articles.

struct SynthOptions {
  std::size_t entity_pool = 300;
  std::size_t min_sentences = 3;
  std::size_t max_sentences = 5;
  double reduplication_rate = 0.6;
};

namespace synth {

inline constexpr std::string_view kFiller = "aceginorstu";

/// Characters reserved for each label's lexicon.
inline const std::vector<std::string>& lexicon_alphabets(Granularity g) {
  static const std::vector<std::string> coarse{"lwy", "qxz"};
  static const std::vector<std::string> fine{"qxz", "vkj", "lwy", "hpf", "dbm"};
  return g == Granularity::Coarse ? coarse : fine;
}

/// The permutations of a label's alphabet, in lexicographic order.
inline std::vector<std::string> lexicon_words(Granularity g, int label) {
  std::string a = lexicon_alphabets(g).at(label);
  std::sort(a.begin(), a.end());
  std::vector<std::string> words;
  do {
    words.push_back(a);
  } while (std::next_permutation(a.begin(), a.end()));
  return words;
}

inline std::string filler_word(Rng& rng, std::size_t len) {
  std::string w;
  while (w.size() < len) {
    const char c = kFiller[rng.below(kFiller.size())];
    if (w.find(c) == std::string::npos) w += c;
  }
  return w;
}

inline std::vector<std::string> entity_pool(Rng& rng, std::size_t n) {
  std::vector<std::string> pool;
  std::unordered_map<std::string, bool> seen;
  while (pool.size() < n) {
    std::string e;
    e += static_cast<char>('A' + rng.below(26));
    char second;
    do {
      second = static_cast<char>('A' + rng.below(26));
    } while (second == e[0]);
    e += second;
    e += static_cast<char>('0' + rng.below(10));
    if (!seen[e]) {
      seen[e] = true;
      pool.push_back(e);
    }
  }
  return pool;
}

}  // namespace synth

/// Deterministic synthetic corpus; emotions are assigned round-robin.
inline std::vector<RawExample> synth_corpus(Rng& rng, std::size_t n_examples,
                                            Granularity granularity,
                                            const SynthOptions& opt = {}) {
  if (n_examples == 0) throw ConfigError("synth_corpus needs n_examples >= 1");
  const auto pool = synth::entity_pool(rng, std::max<std::size_t>(opt.entity_pool, 8));
  const auto n_labels = emotion_labels(granularity).size();
  std::vector<RawExample> out;
  out.reserve(n_examples);
  for (std::size_t k = 0; k < n_examples; ++k) {
    RawExample ex;
    ex.emotion = {granularity, static_cast<int>(k % n_labels)};
    const std::size_t n_sent =
        opt.min_sentences + rng.below(opt.max_sentences - opt.min_sentences + 1);
    const std::size_t topic = rng.below(n_sent);
    std::vector<std::string> ents;
    while (ents.size() < n_sent) {
      const auto& e = rng.choice(pool);
      if (std::find(ents.begin(), ents.end(), e) == ents.end()) ents.push_back(e);
    }
    std::string topic_entity, topic_verb;
    for (std::size_t s = 0; s < n_sent; ++s) {
      const std::string verb = synth::filler_word(rng, 2);
      std::string sent = ents[s] + " " + verb + " " + synth::filler_word(rng, 3 + rng.below(2));
      if (rng.bernoulli(0.5)) sent += " " + synth::filler_word(rng, 2 + rng.below(3));
      sent += s == topic ? "!" : ".";
      if (s == topic) {
        topic_entity = ents[s];
        topic_verb = verb;
      }
      ex.article.push_back(sent);
    }
    const auto words = synth::lexicon_words(granularity, ex.emotion.label);
    const std::string emo = rng.choice(words);
    ex.comment = topic_entity + topic_verb + emo;
    if (rng.bernoulli(opt.reduplication_rate)) ex.comment += emo;
    ex.comment += rng.bernoulli(0.5) ? "!" : ".";
    out.push_back(std::move(ex));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batching

/// Padded view of a group of examples. Padding uses Vocab::kPad and every
/// padded array has a 0/1 mask of the same shape.
struct Batch {
  std::vector<std::size_t> indices;
  std::vector<std::vector<std::vector<int>>> article;       // [B][S][T]
  std::vector<std::vector<std::vector<int>>> article_mask;  // [B][S][T]
  std::vector<std::vector<int>> sentence_mask;              // [B][S]
  std::vector<std::vector<int>> comment;                    // [B][L]
  std::vector<std::vector<int>> comment_mask;               // [B][L]
  std::vector<EmotionCategory> emotion;
  std::size_t max_sentences = 0, max_tokens = 0, max_comment = 0;

  std::size_t size() const { return indices.size(); }
};

inline Batch make_batch(const std::vector<Example>& examples,
                        const std::vector<std::size_t>& indices) {
  Batch b;
  b.indices = indices;
  for (auto i : indices) {
    const auto& ex = examples.at(i);
    b.max_sentences = std::max(b.max_sentences, ex.article.size());
    for (const auto& s : ex.article) b.max_tokens = std::max(b.max_tokens, s.size());
    b.max_comment = std::max(b.max_comment, ex.comment.size());
  }
  for (auto i : indices) {
    const auto& ex = examples[i];
    std::vector<std::vector<int>> art(b.max_sentences, std::vector<int>(b.max_tokens, Vocab::kPad));
    std::vector<std::vector<int>> mask(b.max_sentences, std::vector<int>(b.max_tokens, 0));
    std::vector<int> smask(b.max_sentences, 0);
    for (std::size_t s = 0; s < ex.article.size(); ++s) {
      smask[s] = 1;
      for (std::size_t t = 0; t < ex.article[s].size(); ++t) {
        art[s][t] = ex.article[s][t];
        mask[s][t] = 1;
      }
    }
    std::vector<int> com(b.max_comment, Vocab::kPad), cmask(b.max_comment, 0);
    for (std::size_t t = 0; t < ex.comment.size(); ++t) {
      com[t] = ex.comment[t];
      cmask[t] = 1;
    }
    b.article.push_back(std::move(art));
    b.article_mask.push_back(std::move(mask));
    b.sentence_mask.push_back(std::move(smask));
    b.comment.push_back(std::move(com));
    b.comment_mask.push_back(std::move(cmask));
    b.emotion.push_back(ex.emotion);
  }
  return b;
}

/// Shuffles with `rng` and splits into consecutive batches (last may be short).
inline std::vector<Batch> make_batches(const std::vector<Example>& examples,
                                       std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<Batch> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const auto end = std::min(order.size(), i + batch_size);
    out.push_back(make_batch(examples, {order.begin() + i, order.begin() + end}));
  }
  return out;
}

/// Recovers one example's article from a padded batch using the masks.
inline std::vector<std::vector<int>> unpad_article(const Batch& b, std::size_t row) {
  std::vector<std::vector<int>> art;
  for (std::size_t s = 0; s < b.max_sentences; ++s) {
    if (!b.sentence_mask[row][s]) continue;
    std::vector<int> sent;
    for (std::size_t t = 0; t < b.max_tokens; ++t) {
      if (b.article_mask[row][s][t]) sent.push_back(b.article[row][s][t]);
    }
    art.push_back(std::move(sent));
  }
  return art;
}

inline std::vector<int> unpad_comment(const Batch& b, std::size_t row) {
  std::vector<int> c;
  for (std::size_t t = 0; t < b.max_comment; ++t) {
    if (b.comment_mask[row][t]) c.push_back(b.comment[row][t]);
  }
  return c;
}

}  // namespace ccs
