#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>

#include "ccs/corpus.hpp"
#include "ccs/errors.hpp"

namespace ccs {

/// How the emotion embedding enters the decoder input.
enum class Fusion { None, Simple, Dynamic };

/// Output head: plain sentence attention, or hierarchical copy.
enum class CopyMode { Off, Hierarchical };

inline std::string to_string(Fusion f) {
  switch (f) {
    case Fusion::None: return "none";
    case Fusion::Simple: return "simple";
    case Fusion::Dynamic: return "dynamic";
  }
  return "?";
}

inline std::string to_string(CopyMode c) { return c == CopyMode::Off ? "off" : "hierarchical"; }

inline Fusion parse_fusion(std::string_view s) {
  if (s == "none") return Fusion::None;
  if (s == "simple") return Fusion::Simple;
  if (s == "dynamic") return Fusion::Dynamic;
  throw ConfigError("unknown fusion mode '" + std::string(s) + "' (none, simple, dynamic)");
}

inline CopyMode parse_copy(std::string_view s) {
  if (s == "off") return CopyMode::Off;
  if (s == "hierarchical") return CopyMode::Hierarchical;
  throw ConfigError("unknown copy mode '" + std::string(s) + "' (off, hierarchical)");
}

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_emb = 64;
  std::size_t d_h = 64;
  std::size_t word_layers = 1;
  std::size_t sentence_layers = 1;
  std::size_t decoder_layers = 1;
  Fusion fusion = Fusion::Dynamic;
  CopyMode copy = CopyMode::Hierarchical;
  Granularity granularity = Granularity::Fine;
  double dropout = 0.3;
  double init_scale = 0.08;

  std::size_t num_labels() const { return emotion_labels(granularity).size(); }

  void validate() const {
    if (vocab_size <= static_cast<std::size_t>(Vocab::kNumReserved)) {
      throw ConfigError("vocab_size must exceed the 4 reserved ids");
    }
    if (d_emb == 0 || d_h == 0) throw ConfigError("model dimensions must be positive");
    if (word_layers == 0 || sentence_layers == 0 || decoder_layers == 0) {
      throw ConfigError("layer counts must be positive");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
    if (!(init_scale > 0.0)) throw ConfigError("init_scale must be positive");
  }
};

}  // namespace ccs
