#pragma once

// Finite-difference gradient suite over dims-8 toy shapes in double precision:
// every differentiable op, the LSTM cell, dynamic fusion, the copy path and the
// combined training loss.

#include <functional>
#include <string>
#include <vector>

#include "ccs/gradcheck.hpp"
#include "ccs/losses.hpp"
#include "ccs/model.hpp"
#include "ccs/trainer.hpp"

namespace ccs {

struct GradSuiteEntry {
  std::string module;
  std::string name;
  GradCheckResult result;
};

inline constexpr double kGradSuiteTolerance = 1e-3;

namespace detail {

using D = Tensor<double>;

inline D rand_param(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return D::parameter(std::move(shape), std::move(v));
}

/// Fixed random projection to a scalar.
inline D probe(const D& x, std::uint64_t seed = 99) {
  Rng rng(seed);
  std::vector<double> w(x.size());
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  return sum(mul(x, D::constant(x.shape(), std::move(w))));
}

inline ModelConfig suite_config(Fusion f, CopyMode c) {
  ModelConfig m;
  m.vocab_size = 12;
  m.d_emb = m.d_h = 8;
  m.fusion = f;
  m.copy = c;
  m.dropout = 0.0;
  m.init_scale = 0.5;
  return m;
}

}  // namespace detail

/// Runs every check. `inject_fault` adds an op whose backward is deliberately
/// wrong so callers can verify that failures are reported.
inline std::vector<GradSuiteEntry> run_grad_suite(bool inject_fault = false, std::uint64_t seed = 1) {
  using detail::D;
  using detail::probe;
  std::vector<GradSuiteEntry> out;
  Rng rng(seed);

  // Tensor ops.
  {
    const std::size_t m = 3, n = 8, k = 4;
    auto A = detail::rand_param(rng, {m, n}), B = detail::rand_param(rng, {m, n});
    auto M = detail::rand_param(rng, {n, k});
    auto v = detail::rand_param(rng, {n}), w = detail::rand_param(rng, {n});
    auto pos = detail::rand_param(rng, {n}, 0.5, 2.0);
    auto s = detail::rand_param(rng, {1});
    auto table = detail::rand_param(rng, {5, n});
    const std::vector<int> ids{0, 3, 3, 1}, vids{2, 5, 7}, sids{0, 1, 1, 2, 0, 2, 1, 0};
    const std::vector<std::pair<std::string, std::function<D()>>> ops = {
        {"matmul", [&] { return probe(matmul(A, M)); }},
        {"matvec", [&] { return probe(matmul(A, v)); }},
        {"transpose", [&] { return probe(transpose(A)); }},
        {"add", [&] { return probe(add(A, B)); }},
        {"add_broadcast", [&] { return probe(add(v, s)); }},
        {"sub", [&] { return probe(sub(A, B)); }},
        {"mul", [&] { return probe(mul(A, B)); }},
        {"scale", [&] { return probe(scale(A, 2.5)); }},
        {"add_scalar", [&] { return probe(add_scalar(v, 0.7)); }},
        {"one_minus", [&] { return probe(one_minus(v)); }},
        {"sigmoid", [&] { return probe(sigmoid(A)); }},
        {"tanh", [&] { return probe(tanh(A)); }},
        {"exp", [&] { return probe(exp(v)); }},
        {"log", [&] { return probe(log(pos)); }},
        {"sum", [&] { return scale(sum(A), 1.5); }},
        {"sum_rows", [&] { return probe(sum_rows(A)); }},
        {"mean", [&] { return mean(mul(v, v)); }},
        {"dot", [&] { return dot(v, w); }},
        {"softmax", [&] { return probe(softmax(v)); }},
        {"softmax_axis0", [&] { return probe(softmax(A, 0)); }},
        {"log_softmax", [&] { return probe(log_softmax(v)); }},
        {"reshape", [&] { return probe(reshape(A, {n, m})); }},
        {"concat", [&] { return probe(concat<double>({v, w, s})); }},
        {"stack", [&] { return probe(stack<double>({v, w})); }},
        {"slice", [&] { return probe(slice(v, 2, 6)); }},
        {"embedding_lookup", [&] { return probe(embedding_lookup(table, std::span<const int>(ids))); }},
        {"gather", [&] { return probe(gather(v, std::span<const int>(vids))); }},
        {"pick", [&] { return pick(v, 4); }},
        {"scatter_add", [&] { return probe(scatter_add(v, std::span<const int>(sids), 3)); }},
        {"cross_entropy", [&] { return cross_entropy(log_softmax(v), 3); }},
    };
    for (const auto& [name, fn] : ops) {
      std::vector<NamedParameter<double>> ps{{"A", A}, {"B", B}, {"M", M},    {"v", v},
                                             {"w", w}, {"pos", pos}, {"s", s}, {"table", table}};
      out.push_back({"tensor", name, grad_check<double>(fn, ps)});
    }
  }

  // LSTM cell over two steps.
  {
    ParameterSet<double> ps;
    auto cell = StackedLstm<double>::create(ps, "lstm", 8, 8, 1, rng, 0.5);
    auto x1 = ps.add("x1", detail::rand_param(rng, {8}));
    auto x2 = ps.add("x2", detail::rand_param(rng, {8}));
    auto h0 = ps.add("h0", detail::rand_param(rng, {8}));
    auto c0 = ps.add("c0", detail::rand_param(rng, {8}));
    auto r = grad_check(
        [&] {
          std::vector<LstmState<double>> st{{h0, c0}};
          st = cell.step(x1, st);
          st = cell.step(x2, st);
          return add(probe(st[0].h, 7), probe(st[0].c, 8));
        },
        ps);
    out.push_back({"nn", "lstm_cell", r});
  }

  // Dynamic fusion gates.
  {
    CcsModel<double> model(detail::suite_config(Fusion::Dynamic, CopyMode::Hierarchical), seed);
    ParameterSet<double> ps;
    auto v = ps.add("emotion", detail::rand_param(rng, {8}));
    auto e = ps.add("word", detail::rand_param(rng, {8}));
    auto s = ps.add("state", detail::rand_param(rng, {8}));
    for (const char* n : {"dec.gate_emotion.weight", "dec.gate_emotion.bias", "dec.gate_word.weight",
                          "dec.gate_word.bias"})
      ps.add(n, model.params.get(n));
    out.push_back({"decoder", "dynamic_fusion",
                   grad_check([&] { return probe(fuse_dynamic(v, e, s, model.decoder)); }, ps)});
  }

  // Full copy path: encoder, one decoder step, hierarchical copy distribution.
  const std::vector<std::vector<int>> article{{4, 5, 6}, {7, 8}};
  {
    CcsModel<double> model(detail::suite_config(Fusion::Dynamic, CopyMode::Hierarchical), seed);
    auto r = grad_check(
        [&] {
          auto enc = model.encode(article);
          auto [o1, s1] = model.step(Vocab::kBos, model.start(enc), enc, 2);
          auto [o2, s2] = model.step(5, s1, enc, 2);
          return add(cross_entropy(log(o1.final_dist), 6), cross_entropy(log(o2.final_dist), 9));
        },
        model.params);
    out.push_back({"decoder", "copy_path", r});
  }

  // Combined loss for every fusion/copy configuration.
  {
    Example ex;
    ex.article = article;
    ex.comment = {Vocab::kBos, 9, 10, 4, 11, Vocab::kEos};
    ex.emotion = {Granularity::Fine, 3};
    for (auto f : {Fusion::None, Fusion::Simple, Fusion::Dynamic}) {
      for (auto c : {CopyMode::Off, CopyMode::Hierarchical}) {
        CcsModel<double> model(detail::suite_config(f, c), seed);
        auto r = grad_check([&] { return batch_loss(model, {&ex}, 0.5, 6).total; }, model.params);
        out.push_back({"losses", "total_loss/" + to_string(f) + "/" + to_string(c), r});
      }
    }
  }

  if (inject_fault) {
    // x^2 with a backward that reports twice the derivative.
    auto x = D::parameter({1}, {0.7});
    auto bad_square = [](const D& t) {
      const double val = t[0];
      return D::from_op({1}, {val * val}, {t}, [val](Node<double>& self) {
        self.parents[0]->grad[0] += 4.0 * val * self.grad[0];
      });
    };
    std::vector<NamedParameter<double>> ps{{"x", x}};
    out.push_back({"fault", "doubled_square", grad_check<double>([&] { return bad_square(x); }, ps)});
  }
  return out;
}

}  // namespace ccs
