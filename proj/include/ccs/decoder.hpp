#pragma once

// One decoding step: emotion fusion into the LSTM input, then either plain
// sentence-level attention or the hierarchical copy head.
//
// Copy head, with s the decoder state and g_i / h_ij sentence / word states:
//   beta_i    = softmax_i(s . W_x g_i)
//   alpha_ij  = softmax_j(s . W_y h_ij)        (within sentence i)
//   gamma_ij  = beta_i * alpha_ij              (sums to 1 over all words)
//   c         = sum gamma_ij h_ij
//   a         = tanh(W_a [c; s] + b_a)
//   P_vocab   = softmax(W_p a)
//   p_gen     = sigmoid(w_a . a + w_s . s + w_e . e_prev + b_ptr)
//   P(w)      = p_gen P_vocab(w) + (1 - p_gen) sum_{ij: w_ij = w} gamma_ij
//
// The bilinear forms are evaluated as rows . (W s); W therefore plays the role
// of the transposed matrix, an equivalent parameterization.

#include <optional>
#include <utility>
#include <vector>

#include "ccs/config.hpp"
#include "ccs/encoder.hpp"
#include "ccs/errors.hpp"
#include "ccs/nn.hpp"
#include "ccs/tensor.hpp"

namespace ccs {

template <typename T>
struct DecoderParams {
  StackedLstm<T> lstm;
  Tensor<T> emotion_table;  // [labels, d_emb]

  // Dynamic fusion gates.
  Tensor<T> gate_emotion_w, gate_emotion_b;  // [d_emb, d_emb + d_h], [d_emb]
  Tensor<T> gate_word_w, gate_word_b;

  // Plain sentence attention (copy off).
  Tensor<T> attn_w;      // [d_h, d_h]
  Tensor<T> attn_out_w;  // [d_h, 2 d_h]
  Tensor<T> attn_out_b;  // [d_h]
  Tensor<T> vocab_w;     // [V, d_h]

  // Hierarchical copy (copy on).
  Tensor<T> copy_sent_w;  // [d_h, d_h]
  Tensor<T> copy_word_w;  // [d_h, d_h]
  Tensor<T> copy_out_w;   // [d_h, 2 d_h]
  Tensor<T> copy_out_b;   // [d_h]
  Tensor<T> copy_vocab_w; // [V, d_h]
  Tensor<T> ptr_a, ptr_s, ptr_e, ptr_b;  // [d_h], [d_h], [d_emb], [1]
};

template <typename T>
struct DecoderState {
  std::vector<LstmState<T>> layers;
  std::size_t step = 0;

  const Tensor<T>& top() const { return layers.back().h; }
};

/// Decoder hidden state starts from the article state; cells start at zero.
template <typename T>
DecoderState<T> initial_decoder_state(const EncodedArticle<T>& enc, std::size_t n_layers) {
  DecoderState<T> st;
  const auto d_h = enc.article_state.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    st.layers.push_back({enc.article_state, Tensor<T>::zeros({d_h})});
  }
  return st;
}

template <typename T>
struct StepOutput {
  Tensor<T> final_dist;  // [V]
  Tensor<T> vocab_dist;  // [V], before mixing with copy mass
  Tensor<T> p_gen;       // [1]; undefined when copy is off
  Tensor<T> gamma;       // [N_words]; undefined when copy is off
  Tensor<T> beta;        // [S] sentence attention (m_t when copy is off)
  Tensor<T> attention;   // a_t
};

/// Test hooks that pin intermediate quantities.
enum class GateOverride { None, Ones, Zeros };

struct StepOverrides {
  GateOverride gates = GateOverride::None;
  std::optional<double> p_gen;
};

/// v + e
template <typename T>
Tensor<T> fuse_simple(const Tensor<T>& emotion, const Tensor<T>& word) {
  if (emotion.shape() != word.shape()) {
    throw DimensionError("fuse_simple: emotion " + shape_str(emotion.shape()) + " vs word " +
                         shape_str(word.shape()));
  }
  return add(emotion, word);
}

/// v * z_e + e * z_w with z = sigmoid(W [v; s_prev] + b).
template <typename T>
Tensor<T> fuse_dynamic(const Tensor<T>& emotion, const Tensor<T>& word, const Tensor<T>& s_prev,
                       const DecoderParams<T>& p, GateOverride ov = GateOverride::None) {
  if (emotion.shape() != word.shape()) {
    throw DimensionError("fuse_dynamic: emotion " + shape_str(emotion.shape()) + " vs word " +
                         shape_str(word.shape()));
  }
  if (p.gate_emotion_w.dim(1) != emotion.size() + s_prev.size()) {
    throw DimensionError("fuse_dynamic: gate weight " + shape_str(p.gate_emotion_w.shape()) +
                         " does not fit [v; s] of size " +
                         std::to_string(emotion.size() + s_prev.size()));
  }
  Tensor<T> z_e, z_w;
  if (ov == GateOverride::None) {
    auto vs = concat<T>({emotion, s_prev});
    z_e = sigmoid(add(matmul(p.gate_emotion_w, vs), p.gate_emotion_b));
    z_w = sigmoid(add(matmul(p.gate_word_w, vs), p.gate_word_b));
  } else {
    const T v = ov == GateOverride::Ones ? T(1) : T(0);
    z_e = z_w = Tensor<T>::filled(emotion.shape(), v);
  }
  return add(mul(emotion, z_e), mul(word, z_w));
}

/// Softmax over the rows of `scores` that are attendable; masked rows get 0.
template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& scores, const std::vector<bool>& mask) {
  std::vector<int> keep;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) keep.push_back(static_cast<int>(i));
  if (keep.empty()) throw DataError("attention over an article whose sentences are all masked");
  if (keep.size() == mask.size()) return softmax(scores);
  return scatter_add(softmax(gather(scores, keep)), keep, mask.size());
}

template <typename T>
struct SentenceAttention {
  Tensor<T> attention;  // a_t
  Tensor<T> weights;    // m_t
};

/// Plain attention over sentence states, producing the attention vector a_t.
template <typename T>
SentenceAttention<T> attend_sentences(const Tensor<T>& s, const EncodedArticle<T>& enc,
                                      const DecoderParams<T>& p) {
  if (enc.sentence_mask.size() != enc.num_sentences()) {
    throw DimensionError("sentence mask does not match sentence count");
  }
  auto scores = matmul(enc.sentence_matrix, matmul(p.attn_w, s));
  auto m = masked_softmax(scores, enc.sentence_mask);
  auto c = matmul(transpose(enc.sentence_matrix), m);
  auto a = tanh(add(matmul(p.attn_out_w, concat<T>({c, s})), p.attn_out_b));
  return {a, m};
}

/// Hierarchical copy head. `ctx` applies dropout to a_t before the vocab
/// projection.
template <typename T>
StepOutput<T> copy_distribution(const Tensor<T>& s, const EncodedArticle<T>& enc,
                                const Tensor<T>& e_prev, const DecoderParams<T>& p,
                                const StepOverrides& ov = {}, const ForwardContext& ctx = {}) {
  const std::size_t n_sent = enc.num_sentences();
  if (enc.sentence_offset.size() != n_sent + 1 || enc.sentence_offset.back() != enc.num_words() ||
      enc.word_matrix.dim(0) != enc.num_words() || enc.sentence_mask.size() != n_sent) {
    throw Error("internal error: encoded article masks and offsets are inconsistent");
  }
  StepOutput<T> out;
  out.beta = masked_softmax(matmul(enc.sentence_matrix, matmul(p.copy_sent_w, s)),
                            enc.sentence_mask);
  auto word_scores = matmul(enc.word_matrix, matmul(p.copy_word_w, s));
  std::vector<Tensor<T>> parts;
  for (std::size_t i = 0; i < n_sent; ++i) {
    auto alpha = softmax(slice(word_scores, enc.sentence_offset[i], enc.sentence_offset[i + 1]));
    parts.push_back(mul(alpha, pick(out.beta, static_cast<int>(i))));
  }
  out.gamma = concat(parts);
  auto c = matmul(transpose(enc.word_matrix), out.gamma);
  out.attention = tanh(add(matmul(p.copy_out_w, concat<T>({c, s})), p.copy_out_b));
  out.vocab_dist = softmax(matmul(p.copy_vocab_w, ctx.drop(out.attention)));
  if (ov.p_gen) {
    out.p_gen = Tensor<T>::scalar(static_cast<T>(*ov.p_gen));
  } else {
    out.p_gen = sigmoid(add(add(add(dot(p.ptr_a, out.attention), dot(p.ptr_s, s)),
                                dot(p.ptr_e, e_prev)),
                            p.ptr_b));
  }
  auto copy_mass = scatter_add(out.gamma, enc.word_ids, out.vocab_dist.size());
  out.final_dist = add(mul(out.vocab_dist, out.p_gen), mul(copy_mass, one_minus(out.p_gen)));
  return out;
}

struct DecoderConfig {
  Fusion fusion = Fusion::Dynamic;
  CopyMode copy = CopyMode::Hierarchical;
};

/// fusion -> LSTM -> output head. Returns the step output and the new state.
template <typename T>
std::pair<StepOutput<T>, DecoderState<T>> decode_step(
    int prev_token, const DecoderState<T>& state, const EncodedArticle<T>& enc, int emotion,
    const Tensor<T>& embedding, const DecoderParams<T>& p, const DecoderConfig& cfg,
    const ForwardContext& ctx = {}, const StepOverrides& ov = {}) {
  if (cfg.fusion != Fusion::None && !p.emotion_table.defined()) {
    throw ConfigError("fusion " + to_string(cfg.fusion) + " requires an emotion embedding");
  }
  if (cfg.fusion == Fusion::Dynamic && !p.gate_emotion_w.defined()) {
    throw ConfigError("dynamic fusion requested but the model has no gate parameters");
  }
  if (cfg.copy == CopyMode::Hierarchical && !p.copy_sent_w.defined()) {
    throw ConfigError("hierarchical copy requested but the model has no copy parameters");
  }
  if (cfg.copy == CopyMode::Off && !p.attn_w.defined()) {
    throw ConfigError("plain attention requested but the model has no attention parameters");
  }
  const auto e_prev = embedding_row(embedding, prev_token);
  Tensor<T> input;
  switch (cfg.fusion) {
    case Fusion::None: input = e_prev; break;
    case Fusion::Simple: input = fuse_simple(embedding_row(p.emotion_table, emotion), e_prev); break;
    case Fusion::Dynamic:
      input = fuse_dynamic(embedding_row(p.emotion_table, emotion), e_prev, state.top(), p, ov.gates);
      break;
  }
  DecoderState<T> next;
  next.layers = p.lstm.step(ctx.drop(input), state.layers,
                            [&](const Tensor<T>& h) { return ctx.drop(h); });
  next.step = state.step + 1;
  const auto& s = next.top();
  StepOutput<T> out;
  if (cfg.copy == CopyMode::Hierarchical) {
    out = copy_distribution(s, enc, e_prev, p, ov, ctx);
  } else {
    auto att = attend_sentences(s, enc, p);
    out.attention = att.attention;
    out.beta = att.weights;
    out.vocab_dist = softmax(matmul(p.vocab_w, ctx.drop(att.attention)));
    out.final_dist = out.vocab_dist;
  }
  return {std::move(out), std::move(next)};
}

}  // namespace ccs
