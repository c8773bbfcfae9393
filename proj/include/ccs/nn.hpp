#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ccs/errors.hpp"
#include "ccs/rng.hpp"
#include "ccs/tensor.hpp"

namespace ccs {

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

/// Ordered registry of trainable tensors. Order is the registration order and
/// is part of the checkpoint and optimizer contract.
template <typename T>
class ParameterSet {
 public:
  /// Registers a parameter drawn uniformly from [-scale, scale].
  Tensor<T> add_uniform(const std::string& name, Shape shape, Rng& rng, double scale) {
    std::vector<T> v(shape_size(shape));
    for (auto& x : v) {
      // Sample as float so float and double models built from one seed agree.
      x = static_cast<T>(static_cast<float>(rng.uniform(-scale, scale)));
    }
    return add(name, Tensor<T>::parameter(std::move(shape), std::move(v)));
  }

  Tensor<T> add_zeros(const std::string& name, Shape shape) {
    const auto n = shape_size(shape);
    return add(name, Tensor<T>::parameter(std::move(shape), std::vector<T>(n, T(0))));
  }

  Tensor<T> add(const std::string& name, Tensor<T> t) {
    for (const auto& p : params_) {
      if (p.name == name) throw ConfigError("duplicate parameter name " + name);
    }
    params_.push_back({name, t});
    return t;
  }

  const Tensor<T>& get(const std::string& name) const {
    for (const auto& p : params_) {
      if (p.name == name) return p.tensor;
    }
    throw IndexError("no parameter named " + name);
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

  std::vector<NamedParameter<T>>& items() { return params_; }
  const std::vector<NamedParameter<T>>& items() const { return params_; }
  std::size_t size() const { return params_.size(); }

  std::vector<Tensor<T>> tensors() const {
    std::vector<Tensor<T>> out;
    for (const auto& p : params_) out.push_back(p.tensor);
    return out;
  }

 private:
  std::vector<NamedParameter<T>> params_;
};

/// Weights of one LSTM layer. Gate rows are stacked as input, forget,
/// candidate, output; the weight acts on [x; h].
template <typename T>
struct LstmParams {
  Tensor<T> weight;  // [4h, d_in + h]
  Tensor<T> bias;    // [4h]

  std::size_t hidden_dim() const { return bias.size() / 4; }
  std::size_t input_dim() const { return weight.dim(1) - hidden_dim(); }

  static LstmParams create(ParameterSet<T>& ps, const std::string& prefix, std::size_t d_in,
                           std::size_t d_h, Rng& rng, double scale) {
    LstmParams p;
    p.weight = ps.add_uniform(prefix + ".weight", {4 * d_h, d_in + d_h}, rng, scale);
    p.bias = ps.add_uniform(prefix + ".bias", {4 * d_h}, rng, scale);
    return p;
  }

  static std::size_t parameter_count(std::size_t d_in, std::size_t d_h) {
    return 4 * d_h * (d_in + d_h) + 4 * d_h;
  }
};

template <typename T>
struct LstmState {
  Tensor<T> h;
  Tensor<T> c;
};

/// One step of a standard LSTM. Returns (h', c') with h' = o * tanh(c').
template <typename T>
LstmState<T> lstm_cell(const Tensor<T>& x, const Tensor<T>& h, const Tensor<T>& c,
                       const LstmParams<T>& p) {
  const std::size_t d_h = p.hidden_dim();
  if (x.rank() != 1 || x.size() != p.input_dim() || h.size() != d_h || c.size() != d_h) {
    throw DimensionError("lstm_cell: x " + shape_str(x.shape()) + ", h " + shape_str(h.shape()) +
                         ", c " + shape_str(c.shape()) + " do not fit weight " +
                         shape_str(p.weight.shape()));
  }
  auto gates = add(matmul(p.weight, concat<T>({x, h})), p.bias);
  auto i = sigmoid(slice(gates, 0, d_h));
  auto f = sigmoid(slice(gates, d_h, 2 * d_h));
  auto g = tanh(slice(gates, 2 * d_h, 3 * d_h));
  auto o = sigmoid(slice(gates, 3 * d_h, 4 * d_h));
  auto c_next = add(mul(f, c), mul(i, g));
  auto h_next = mul(o, tanh(c_next));
  return {h_next, c_next};
}

/// Stack of LSTM layers sharing one step interface.
template <typename T>
struct StackedLstm {
  std::vector<LstmParams<T>> layers;

  static StackedLstm create(ParameterSet<T>& ps, const std::string& prefix, std::size_t d_in,
                            std::size_t d_h, std::size_t n_layers, Rng& rng, double scale) {
    StackedLstm s;
    for (std::size_t l = 0; l < n_layers; ++l) {
      s.layers.push_back(LstmParams<T>::create(ps, prefix + ".l" + std::to_string(l),
                                               l == 0 ? d_in : d_h, d_h, rng, scale));
    }
    return s;
  }

  std::vector<LstmState<T>> zero_state() const {
    std::vector<LstmState<T>> st;
    for (const auto& l : layers) {
      st.push_back({Tensor<T>::zeros({l.hidden_dim()}), Tensor<T>::zeros({l.hidden_dim()})});
    }
    return st;
  }

  /// Advances every layer by one step; `between` is applied to the output of
  /// each non-final layer (dropout hook).
  template <typename Between>
  std::vector<LstmState<T>> step(const Tensor<T>& x, const std::vector<LstmState<T>>& state,
                                 Between&& between) const {
    std::vector<LstmState<T>> next;
    next.reserve(layers.size());
    Tensor<T> in = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      next.push_back(lstm_cell(in, state[l].h, state[l].c, layers[l]));
      in = l + 1 < layers.size() ? between(next.back().h) : next.back().h;
    }
    return next;
  }

  std::vector<LstmState<T>> step(const Tensor<T>& x,
                                 const std::vector<LstmState<T>>& state) const {
    return step(x, state, [](const Tensor<T>& t) { return t; });
  }
};

/// Inverted dropout: kept units are scaled by 1/(1-rate); identity when not
/// training or when rate is zero.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.size());
  for (auto& m : mask) m = rng.bernoulli(rate) ? T(0) : keep_scale;
  return mul(x, Tensor<T>::constant(x.shape(), std::move(mask)));
}

}  // namespace ccs
