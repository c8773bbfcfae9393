#pragma once

// Named configuration deltas over a base run, trained and evaluated on one
// dataset. Variants that only change decoding share the trained model.

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "ccs/experiment.hpp"

namespace ccs {

struct AblationVariant {
  std::string name;
  std::function<void(TrainConfig&, SearchConfig&)> apply;
};

/// Known variant names: "CCS" (base), "w/o RBS" (plain beam), "w/o HC" (copy
/// off), "CCS-Emo" (simple fusion), "w/o emo-loss" (xi = 0), "Seq2Seq"
/// (fusion none, copy off, xi = 0, plain beam).
inline AblationVariant ablation_variant(const std::string& name) {
  if (name == "CCS") return {name, [](TrainConfig&, SearchConfig&) {}};
  if (name == "w/o RBS") return {name, [](TrainConfig&, SearchConfig& s) { s.mode = SearchMode::Beam; }};
  if (name == "w/o HC") return {name, [](TrainConfig& t, SearchConfig&) { t.model.copy = CopyMode::Off; }};
  if (name == "CCS-Emo") return {name, [](TrainConfig& t, SearchConfig&) { t.model.fusion = Fusion::Simple; }};
  if (name == "w/o emo-loss") return {name, [](TrainConfig& t, SearchConfig&) { t.emo_weight = 0.0; }};
  if (name == "Seq2Seq") {
    return {name, [](TrainConfig& t, SearchConfig& s) {
              t.model.fusion = Fusion::None;
              t.model.copy = CopyMode::Off;
              t.emo_weight = 0.0;
              s.mode = SearchMode::Beam;
            }};
  }
  throw ConfigError("unknown ablation variant '" + name +
                    "' (CCS, w/o RBS, w/o HC, CCS-Emo, w/o emo-loss, Seq2Seq)");
}

/// Parses a comma-separated list of variant names; names must be unique.
inline std::vector<AblationVariant> parse_ablation(const std::string& list) {
  std::vector<AblationVariant> out;
  std::set<std::string> seen;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto end = list.find(',', start);
    if (end == std::string::npos) end = list.size();
    std::string name = list.substr(start, end - start);
    const auto b = name.find_first_not_of(' ');
    const auto e = name.find_last_not_of(' ');
    name = b == std::string::npos ? "" : name.substr(b, e - b + 1);
    if (name.empty()) throw ConfigError("empty name in ablation list '" + list + "'");
    if (!seen.insert(name).second) throw ConfigError("duplicate ablation variant '" + name + "'");
    out.push_back(ablation_variant(name));
    start = end + 1;
  }
  return out;
}

struct AblationRow {
  std::string name;
  TrainConfig train;
  SearchConfig search;
  EvalOutput eval;
  LossReport final_loss;
};

/// Trains each distinct training configuration once (in parallel threads if
/// requested), then evaluates every variant on the held-out split.
inline std::vector<AblationRow> run_ablation(const Dataset& data, const TrainConfig& base_train,
                                             const SearchConfig& base_search,
                                             const std::vector<AblationVariant>& variants,
                                             bool parallel = false,
                                             const std::function<void(const std::string&)>& log = {}) {
  std::vector<AblationRow> rows;
  std::map<std::string, std::size_t> model_of;  // train config JSON -> slot
  std::vector<TrainConfig> configs;
  std::vector<std::size_t> slot;
  for (const auto& v : variants) {
    AblationRow r{v.name, base_train, base_search, {}, {}};
    v.apply(r.train, r.search);
    r.train.validate();
    r.search.validate();
    const auto key = r.train.to_json().dump();
    auto [it, fresh] = model_of.emplace(key, configs.size());
    if (fresh) configs.push_back(r.train);
    slot.push_back(it->second);
    rows.push_back(std::move(r));
  }
  std::vector<std::unique_ptr<Trainer>> trainers(configs.size());
  std::vector<LossReport> losses(configs.size());
  auto train_one = [&](std::size_t i) {
    trainers[i] = std::make_unique<Trainer>(configs[i]);
    auto reps = trainers[i]->train(data.train);
    losses[i] = reps.back().loss;
  };
  if (parallel && configs.size() > 1) {
    std::vector<std::exception_ptr> errors(configs.size());
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < configs.size(); ++i) {
      pool.emplace_back([&, i] {
        try {
          train_one(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (std::size_t i = 0; i < configs.size(); ++i) {
      if (log) log("training configuration " + std::to_string(i + 1) + "/" + std::to_string(configs.size()));
      train_one(i);
    }
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (log) log("evaluating " + rows[k].name);
    rows[k].final_loss = losses[slot[k]];
    rows[k].eval = evaluate_model(trainers[slot[k]]->model(), data, rows[k].search);
  }
  return rows;
}

}  // namespace ccs
