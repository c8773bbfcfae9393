#pragma once

// Hierarchical article encoder: a word-level LSTM run independently over each
// sentence (state reset per sentence, weights shared), then a sentence-level
// LSTM over the last word state of every sentence.

#include <optional>
#include <span>
#include <vector>

#include "ccs/corpus.hpp"
#include "ccs/errors.hpp"
#include "ccs/nn.hpp"
#include "ccs/tensor.hpp"

namespace ccs {

/// Dropout settings for one forward pass. Inference uses the default.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;

  template <typename T>
  Tensor<T> drop(const Tensor<T>& x) const {
    if (!training || dropout == 0.0 || rng == nullptr) return x;
    return ccs::dropout(x, dropout, *rng, true);
  }
};

template <typename T>
struct EncoderParams {
  Tensor<T> embedding;  // [V, d_emb], shared with the decoder
  StackedLstm<T> word;
  StackedLstm<T> sentence;
};

template <typename T>
struct EncodedSentence {
  std::vector<Tensor<T>> word_states;  // top-layer h per unmasked token
  Tensor<T> embedding;                 // last unmasked state
};

template <typename T>
struct EncodedArticle {
  std::vector<std::vector<Tensor<T>>> word_states;  // [S][T_i] of [d_h]
  std::vector<Tensor<T>> sentence_states;           // [S] of [d_h]
  Tensor<T> article_state;                          // last sentence state
  std::vector<std::vector<LstmState<T>>> final_layers;  // sentence LSTM final state per layer

  // Flattened views used by attention and copy.
  Tensor<T> word_matrix;                     // [N_words, d_h]
  Tensor<T> sentence_matrix;                 // [S, d_h]
  std::vector<int> word_ids;                 // token id of each word_matrix row
  std::vector<std::size_t> sentence_offset;  // row range of sentence i: [off[i], off[i+1])
  std::vector<bool> sentence_mask;           // true = attendable

  std::size_t num_sentences() const { return sentence_states.size(); }
  std::size_t num_words() const { return word_ids.size(); }
};

/// Runs the word-level LSTM over one sentence. Positions whose mask entry is
/// 0 are skipped entirely, so trailing padding never changes the result.
template <typename T>
EncodedSentence<T> encode_sentence(std::span<const int> tokens, const EncoderParams<T>& p,
                                   const ForwardContext& ctx = {},
                                   std::span<const int> mask = {}) {
  if (!mask.empty() && mask.size() != tokens.size()) {
    throw DimensionError("sentence mask length " + std::to_string(mask.size()) +
                         " differs from token count " + std::to_string(tokens.size()));
  }
  EncodedSentence<T> out;
  auto state = p.word.zero_state();
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (!mask.empty() && mask[t] == 0) continue;
    auto e = ctx.drop(embedding_row(p.embedding, tokens[t]));
    state = p.word.step(e, state, [&](const Tensor<T>& h) { return ctx.drop(h); });
    out.word_states.push_back(state.back().h);
  }
  if (out.word_states.empty()) throw DataError("cannot encode an empty sentence");
  out.embedding = out.word_states.back();
  return out;
}

template <typename T>
EncodedArticle<T> encode_article(const std::vector<std::vector<int>>& article,
                                 const EncoderParams<T>& p, const ForwardContext& ctx = {}) {
  if (article.empty()) throw DataError("cannot encode an empty article");
  if (article.size() > kMaxSentences) {
    throw DataError("article has " + std::to_string(article.size()) + " sentences (max " +
                    std::to_string(kMaxSentences) + ")");
  }
  EncodedArticle<T> enc;
  auto state = p.sentence.zero_state();
  std::vector<Tensor<T>> all_words;
  enc.sentence_offset.push_back(0);
  for (const auto& sent : article) {
    auto es = encode_sentence<T>(sent, p, ctx);
    state = p.sentence.step(es.embedding, state, [&](const Tensor<T>& h) { return ctx.drop(h); });
    enc.sentence_states.push_back(state.back().h);
    all_words.insert(all_words.end(), es.word_states.begin(), es.word_states.end());
    enc.word_ids.insert(enc.word_ids.end(), sent.begin(), sent.end());
    enc.sentence_offset.push_back(all_words.size());
    enc.word_states.push_back(std::move(es.word_states));
  }
  enc.article_state = enc.sentence_states.back();
  enc.final_layers.push_back(state);
  enc.word_matrix = stack(all_words);
  enc.sentence_matrix = stack(enc.sentence_states);
  enc.sentence_mask.assign(article.size(), true);
  return enc;
}

/// Padded encoding of a whole batch.
template <typename T>
struct BatchEncoding {
  std::vector<EncodedArticle<T>> articles;
  Tensor<T> word_states;      // [B, S, T, d_h], zeros at padding
  Tensor<T> sentence_states;  // [B, S, d_h], zeros at padding
};

template <typename T>
BatchEncoding<T> encode_batch(const Batch& batch, const EncoderParams<T>& p,
                              const ForwardContext& ctx = {}) {
  BatchEncoding<T> out;
  const std::size_t d_h = p.sentence.layers.back().hidden_dim();
  const auto zero = Tensor<T>::zeros({d_h});
  std::vector<Tensor<T>> word_rows, sent_rows;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    out.articles.push_back(encode_article(unpad_article(batch, b), p, ctx));
    const auto& enc = out.articles.back();
    std::size_t s_valid = 0;
    for (std::size_t s = 0; s < batch.max_sentences; ++s) {
      const bool valid = batch.sentence_mask[b][s] != 0;
      sent_rows.push_back(valid ? enc.sentence_states[s_valid] : zero);
      std::size_t t_valid = 0;
      for (std::size_t t = 0; t < batch.max_tokens; ++t) {
        const bool tok = valid && batch.article_mask[b][s][t] != 0;
        word_rows.push_back(tok ? enc.word_states[s_valid][t_valid++] : zero);
      }
      if (valid) ++s_valid;
    }
  }
  out.word_states =
      reshape(stack(word_rows), {batch.size(), batch.max_sentences, batch.max_tokens, d_h});
  out.sentence_states = reshape(stack(sent_rows), {batch.size(), batch.max_sentences, d_h});
  return out;
}

}  // namespace ccs
