#pragma once

#include <string>

#include "ccs/config.hpp"
#include "ccs/decoder.hpp"
#include "ccs/encoder.hpp"
#include "ccs/nn.hpp"

namespace ccs {

/// All trainable state of the commenting model. Only the output head selected
/// by `config.copy` and, for dynamic fusion, the gates are allocated.
template <typename T>
struct CcsModel {
  ModelConfig config;
  ParameterSet<T> params;
  Tensor<T> embedding;   // [V, d_emb], shared by encoder, decoder and emotion loss
  EncoderParams<T> encoder;
  DecoderParams<T> decoder;
  Tensor<T> classifier;  // [d_emb, labels], emotion classifier head

  CcsModel(const ModelConfig& cfg, std::uint64_t seed) : config(cfg) {
    cfg.validate();
    Rng rng(seed);
    const double sc = cfg.init_scale;
    const auto V = cfg.vocab_size, E = cfg.d_emb, H = cfg.d_h, L = cfg.num_labels();
    embedding = params.add_uniform("embedding", {V, E}, rng, sc);
    encoder.embedding = embedding;
    encoder.word = StackedLstm<T>::create(params, "enc.word", E, H, cfg.word_layers, rng, sc);
    encoder.sentence =
        StackedLstm<T>::create(params, "enc.sentence", H, H, cfg.sentence_layers, rng, sc);
    auto& d = decoder;
    d.lstm = StackedLstm<T>::create(params, "dec.lstm", E, H, cfg.decoder_layers, rng, sc);
    d.emotion_table = params.add_uniform("dec.emotion", {L, E}, rng, sc);
    if (cfg.fusion == Fusion::Dynamic) {
      d.gate_emotion_w = params.add_uniform("dec.gate_emotion.weight", {E, E + H}, rng, sc);
      d.gate_emotion_b = params.add_uniform("dec.gate_emotion.bias", {E}, rng, sc);
      d.gate_word_w = params.add_uniform("dec.gate_word.weight", {E, E + H}, rng, sc);
      d.gate_word_b = params.add_uniform("dec.gate_word.bias", {E}, rng, sc);
    }
    if (cfg.copy == CopyMode::Off) {
      d.attn_w = params.add_uniform("dec.attn.weight", {H, H}, rng, sc);
      d.attn_out_w = params.add_uniform("dec.attn_out.weight", {H, 2 * H}, rng, sc);
      d.attn_out_b = params.add_uniform("dec.attn_out.bias", {H}, rng, sc);
      d.vocab_w = params.add_uniform("dec.vocab.weight", {V, H}, rng, sc);
    } else {
      d.copy_sent_w = params.add_uniform("dec.copy_sentence.weight", {H, H}, rng, sc);
      d.copy_word_w = params.add_uniform("dec.copy_word.weight", {H, H}, rng, sc);
      d.copy_out_w = params.add_uniform("dec.copy_out.weight", {H, 2 * H}, rng, sc);
      d.copy_out_b = params.add_uniform("dec.copy_out.bias", {H}, rng, sc);
      d.copy_vocab_w = params.add_uniform("dec.copy_vocab.weight", {V, H}, rng, sc);
      d.ptr_a = params.add_uniform("dec.pgen.attention", {H}, rng, sc);
      d.ptr_s = params.add_uniform("dec.pgen.state", {H}, rng, sc);
      d.ptr_e = params.add_uniform("dec.pgen.input", {E}, rng, sc);
      d.ptr_b = params.add_uniform("dec.pgen.bias", {1}, rng, sc);
    }
    classifier = params.add_uniform("emotion_classifier.weight", {E, L}, rng, sc);
  }

  DecoderConfig decoder_config() const { return {config.fusion, config.copy}; }

  /// Closed-form parameter count for a configuration.
  static std::size_t parameter_count(const ModelConfig& c) {
    const auto V = c.vocab_size, E = c.d_emb, H = c.d_h, L = c.num_labels();
    auto stacked = [&](std::size_t d_in, std::size_t layers) {
      std::size_t n = LstmParams<T>::parameter_count(d_in, H);
      return n + (layers - 1) * LstmParams<T>::parameter_count(H, H);
    };
    std::size_t n = V * E;
    n += stacked(E, c.word_layers) + stacked(H, c.sentence_layers) + stacked(E, c.decoder_layers);
    n += L * E;
    if (c.fusion == Fusion::Dynamic) n += 2 * (E * (E + H) + E);
    if (c.copy == CopyMode::Off) {
      n += H * H + H * 2 * H + H + V * H;
    } else {
      n += 2 * H * H + H * 2 * H + H + V * H + H + H + E + 1;
    }
    n += E * L;
    return n;
  }

  EncodedArticle<T> encode(const std::vector<std::vector<int>>& article,
                           const ForwardContext& ctx = {}) const {
    return encode_article(article, encoder, ctx);
  }

  DecoderState<T> start(const EncodedArticle<T>& enc) const {
    return initial_decoder_state(enc, config.decoder_layers);
  }

  std::pair<StepOutput<T>, DecoderState<T>> step(int prev_token, const DecoderState<T>& state,
                                                 const EncodedArticle<T>& enc, int emotion,
                                                 const ForwardContext& ctx = {},
                                                 const StepOverrides& ov = {}) const {
    return decode_step(prev_token, state, enc, emotion, embedding, decoder, decoder_config(),
                       ctx, ov);
  }
};

}  // namespace ccs
