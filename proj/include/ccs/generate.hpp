#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ccs/corpus.hpp"
#include "ccs/model.hpp"
#include "ccs/search.hpp"

namespace ccs {

/// Adapts a trained model and one encoded article to the StepModel interface.
template <typename T>
class CcsStepModel {
 public:
  using State = DecoderState<T>;

  CcsStepModel(const CcsModel<T>& model, const EncodedArticle<T>& enc, int emotion)
      : model_(model), enc_(enc), emotion_(emotion) {}

  State initial_state() const { return model_.start(enc_); }

  std::pair<std::vector<double>, State> step(const State& st, int prev) const {
    NoGradGuard ng;
    auto [out, next] = model_.step(prev, st, enc_, emotion_);
    std::vector<double> probs(out.final_dist.data().begin(), out.final_dist.data().end());
    // Never emit padding or a second BOS.
    probs[Vocab::kPad] = 0.0;
    probs[Vocab::kBos] = 0.0;
    return {std::move(probs), std::move(next)};
  }

  int bos() const { return Vocab::kBos; }
  int eos() const { return Vocab::kEos; }

 private:
  const CcsModel<T>& model_;
  const EncodedArticle<T>& enc_;
  int emotion_;
};

/// Generates one comment token sequence (without BOS/EOS).
template <typename T>
std::vector<int> generate_ids(const CcsModel<T>& model, const std::vector<std::vector<int>>& article,
                              int emotion, const SearchConfig& cfg, bool* truncated = nullptr) {
  EncodedArticle<T> enc;
  {
    NoGradGuard ng;
    enc = model.encode(article);
  }
  CcsStepModel<T> sm(model, enc, emotion);
  return decode_tokens(sm, cfg, truncated);
}

template <typename T>
std::string generate_comment(const CcsModel<T>& model, const Vocab& vocab,
                             const std::vector<std::vector<int>>& article, int emotion,
                             const SearchConfig& cfg) {
  return vocab.decode(generate_ids(model, article, emotion, cfg));
}

}  // namespace ccs
