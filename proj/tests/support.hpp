#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ccs/ccs.hpp"

namespace ccs::testing {

using T64 = Tensor<double>;

inline std::vector<double> random_values(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline T64 random_param(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  const auto n = shape_size(shape);
  return T64::parameter(std::move(shape), random_values(rng, n, lo, hi));
}

/// Fixed-weight scalarization so non-scalar outputs can be grad-checked.
inline T64 weighted_sum(const T64& x, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum(mul(x, T64::constant(x.shape(), random_values(rng, x.size()))));
}

template <typename Tn>
double max_abs_diff(std::span<const Tn> a, std::span<const Tn> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

inline double total(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

/// Tiny article: sentences of token ids drawn from [4, vocab).
inline std::vector<std::vector<int>> random_article(Rng& rng, std::size_t vocab, std::size_t sentences,
                                                    std::size_t min_len, std::size_t max_len) {
  std::vector<std::vector<int>> a(sentences);
  for (auto& s : a) {
    const auto len = min_len + rng.below(max_len - min_len + 1);
    for (std::size_t i = 0; i < len; ++i) s.push_back(4 + static_cast<int>(rng.below(vocab - 4)));
  }
  return a;
}

inline ModelConfig toy_config(std::size_t vocab = 12, std::size_t d = 8) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.d_emb = d;
  c.d_h = d;
  c.dropout = 0.0;
  c.init_scale = 0.5;
  return c;
}

}  // namespace ccs::testing
