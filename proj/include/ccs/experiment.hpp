#pragma once

// Train/evaluate plumbing shared by the ablation command and the acceptance
// suite: a seeded synthetic split, a tagger fitted on the training comments,
// and evaluation with externally requested emotions.

#include <string>
#include <utility>
#include <vector>

#include "ccs/corpus.hpp"
#include "ccs/generate.hpp"
#include "ccs/metrics.hpp"
#include "ccs/trainer.hpp"

namespace ccs {

struct Dataset {
  std::vector<RawExample> train_raw, test_raw;
  Vocab vocab;
  std::vector<Example> train, test;
  EmotionTagger tagger;
  Granularity granularity = Granularity::Fine;
};

/// Builds a dataset from an already loaded or synthesized corpus; the last
/// `n_test` examples are held out.
inline Dataset make_dataset(std::vector<RawExample> corpus, std::size_t n_test) {
  if (corpus.size() <= n_test) throw DataError("held-out size must be smaller than the corpus");
  Dataset d;
  d.granularity = corpus.front().emotion.granularity;
  d.test_raw.assign(corpus.end() - static_cast<long>(n_test), corpus.end());
  corpus.resize(corpus.size() - n_test);
  d.train_raw = std::move(corpus);
  d.vocab = build_vocab(d.train_raw);
  d.train = encode_examples(d.train_raw, d.vocab);
  d.test = encode_examples(d.test_raw, d.vocab);
  d.tagger = train_tagger(d.train_raw);
  return d;
}

inline Dataset synth_dataset(std::uint64_t seed, std::size_t n_total, std::size_t n_test,
                             Granularity g, const SynthOptions& opt = {}) {
  Rng rng(seed);
  return make_dataset(synth_corpus(rng, n_total, g, opt), n_test);
}

/// Requested emotion for the k-th held-out article: labels in rotation,
/// independent of the reference comment.
inline int requested_emotion(std::size_t k, std::size_t n_labels) {
  return static_cast<int>(k % n_labels);
}

struct EvalOutput {
  MetricReport report;
  std::vector<std::string> generated;
  std::vector<int> requested;
  std::size_t truncated = 0;
};

template <typename T>
EvalOutput evaluate_model(const CcsModel<T>& model, const Dataset& data, const SearchConfig& search,
                          const std::vector<std::size_t>& rep_orders = {1, 2, 3, 4}) {
  EvalOutput out;
  std::vector<TokenSeq> gen, ref;
  const auto L = emotion_labels(data.granularity).size();
  for (std::size_t k = 0; k < data.test.size(); ++k) {
    const int emo = requested_emotion(k, L);
    bool trunc = false;
    auto ids = generate_ids(model, data.test[k].article, emo, search, &trunc);
    out.truncated += trunc;
    out.generated.push_back(data.vocab.decode(ids));
    out.requested.push_back(emo);
    gen.push_back(char_tokens(out.generated.back()));
    ref.push_back(char_tokens(data.test_raw[k].comment));
  }
  out.report = evaluate(gen, ref, data.tagger, out.requested, L, rep_orders);
  return out;
}

}  // namespace ccs
