#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ccs/config.hpp"
#include "ccs/corpus.hpp"
#include "ccs/errors.hpp"
#include "ccs/losses.hpp"
#include "ccs/model.hpp"
#include "ccs/optim.hpp"
#include "json.hpp"

namespace ccs {

struct TrainConfig {
  ModelConfig model;
  std::size_t batch_size = 16;
  AdamConfig adam;
  double emo_weight = 0.01;
  std::size_t topk = 50;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  double clip_norm = 5.0;
  bool freeze_classifier = false;

  /// Dimensions and batch size used for the published large-scale runs.
  void apply_paper_scale() {
    model.d_emb = 512;
    model.d_h = 512;
    model.word_layers = model.sentence_layers = model.decoder_layers = 2;
    batch_size = 64;
  }

  void validate() const {
    model.validate();
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
      throw ConfigError("adam betas must be in [0, 1)");
    }
    if (!(adam.eps > 0.0)) throw ConfigError("adam eps must be positive");
    if (!(emo_weight >= 0.0)) throw ConfigError("emo_weight must be >= 0");
    if (topk < 1 || topk > model.vocab_size) {
      throw ConfigError("topk must be in [1, vocab_size=" + std::to_string(model.vocab_size) +
                        "], got " + std::to_string(topk));
    }
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["vocab_size"] = model.vocab_size;
    j["d_emb"] = model.d_emb;
    j["d_h"] = model.d_h;
    j["word_layers"] = model.word_layers;
    j["sentence_layers"] = model.sentence_layers;
    j["decoder_layers"] = model.decoder_layers;
    j["fusion"] = to_string(model.fusion);
    j["copy"] = to_string(model.copy);
    j["granularity"] = to_string(model.granularity);
    j["dropout"] = model.dropout;
    j["init_scale"] = model.init_scale;
    j["batch_size"] = batch_size;
    j["lr"] = adam.lr;
    j["beta1"] = adam.beta1;
    j["beta2"] = adam.beta2;
    j["adam_eps"] = adam.eps;
    j["emo_weight"] = emo_weight;
    j["topk"] = topk;
    j["epochs"] = epochs;
    j["seed"] = seed;
    j["clip_norm"] = clip_norm;
    j["freeze_classifier"] = freeze_classifier;
    return j;
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.model.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.model.d_emb = j.at("d_emb").get<std::size_t>();
    c.model.d_h = j.at("d_h").get<std::size_t>();
    c.model.word_layers = j.at("word_layers").get<std::size_t>();
    c.model.sentence_layers = j.at("sentence_layers").get<std::size_t>();
    c.model.decoder_layers = j.at("decoder_layers").get<std::size_t>();
    c.model.fusion = parse_fusion(j.at("fusion").get<std::string>());
    c.model.copy = parse_copy(j.at("copy").get<std::string>());
    c.model.granularity = parse_granularity(j.at("granularity").get<std::string>());
    c.model.dropout = j.at("dropout").get<double>();
    c.model.init_scale = j.at("init_scale").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.adam.lr = j.at("lr").get<double>();
    c.adam.beta1 = j.at("beta1").get<double>();
    c.adam.beta2 = j.at("beta2").get<double>();
    c.adam.eps = j.at("adam_eps").get<double>();
    c.emo_weight = j.at("emo_weight").get<double>();
    c.topk = j.at("topk").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.clip_norm = j.at("clip_norm").get<double>();
    c.freeze_classifier = j.at("freeze_classifier").get<bool>();
    return c;
  }
};

/// Teacher-forced step distributions for one example.
template <typename T>
struct TeacherForced {
  std::vector<Tensor<T>> dists;
  std::vector<int> targets;
};

template <typename T>
TeacherForced<T> teacher_force(const CcsModel<T>& model, const Example& ex,
                               const ForwardContext& ctx = {}) {
  if (ex.comment.size() < 2) throw DataError("comment must contain at least BOS and EOS");
  if (ex.emotion.num_labels() != model.config.num_labels()) {
    throw DataError("example emotion granularity does not match the model");
  }
  TeacherForced<T> tf;
  auto enc = model.encode(ex.article, ctx);
  auto state = model.start(enc);
  for (std::size_t t = 0; t + 1 < ex.comment.size(); ++t) {
    auto [out, next] = model.step(ex.comment[t], state, enc, ex.emotion.label, ctx);
    tf.dists.push_back(out.final_dist);
    tf.targets.push_back(ex.comment[t + 1]);
    state = std::move(next);
  }
  return tf;
}

template <typename T>
struct BatchLoss {
  Tensor<T> mle;
  Tensor<T> emo;
  Tensor<T> total;
  std::size_t tokens = 0;
};

/// Token-mean NLL over the batch plus xi times the example-mean emotion loss.
template <typename T>
BatchLoss<T> batch_loss(const CcsModel<T>& model, const std::vector<const Example*>& examples,
                        double emo_weight, std::size_t topk, const ForwardContext& ctx = {}) {
  std::vector<Tensor<T>> dists;
  std::vector<int> targets;
  std::vector<Tensor<T>> emos;
  for (const Example* ex : examples) {
    auto tf = teacher_force(model, *ex, ctx);
    if (emo_weight > 0.0) {
      emos.push_back(emotion_loss(tf.dists, model.embedding, model.classifier, ex->emotion.label, topk));
    }
    dists.insert(dists.end(), tf.dists.begin(), tf.dists.end());
    targets.insert(targets.end(), tf.targets.begin(), tf.targets.end());
  }
  BatchLoss<T> out;
  out.tokens = targets.size();
  out.mle = mle_loss(dists, targets, std::vector<int>(targets.size(), 1));
  out.emo = emos.empty() ? Tensor<T>::scalar(T(0)) : mean(concat(emos));
  out.total = emo_weight > 0.0 ? add(out.mle, scale(out.emo, static_cast<T>(emo_weight))) : out.mle;
  return out;
}

struct StepRecord {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  LossReport loss;
};

struct EpochReport {
  std::size_t epoch = 0;
  LossReport loss;  // token-weighted mle, example-weighted emo
};

/// Owns the model, optimizer state and random streams of one training run.
class Trainer {
 public:
  Trainer(TrainConfig cfg)
      : config_(std::move(cfg)),
        model_((config_.validate(), config_.model), config_.seed),
        data_rng_(config_.seed ^ 0xDA7A5EEDULL),
        dropout_rng_(config_.seed ^ 0xD809011ULL) {}

  const TrainConfig& config() const { return config_; }
  CcsModel<float>& model() { return model_; }
  const CcsModel<float>& model() const { return model_; }
  AdamState<float>& adam_state() { return adam_; }
  const AdamState<float>& adam_state() const { return adam_; }
  std::uint64_t step() const { return adam_.step; }

  /// One pass over `examples` in seeded shuffled batches.
  EpochReport train_epoch(const std::vector<Example>& examples, std::size_t epoch,
                          const std::function<void(const StepRecord&)>& on_step = {}) {
    if (examples.empty()) throw DataError("cannot train on an empty corpus");
    auto batches = make_batches(examples, config_.batch_size, data_rng_);
    ForwardContext ctx{true, config_.model.dropout, &dropout_rng_};
    double mle_acc = 0.0, emo_acc = 0.0;
    std::size_t tok_acc = 0, ex_acc = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<const Example*> exs;
      for (auto i : batches[b].indices) exs.push_back(&examples[i]);
      model_.params.zero_grad();
      auto loss = batch_loss(model_, exs, config_.emo_weight, config_.topk, ctx);
      const double total = loss.total.item();
      if (!std::isfinite(total)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b) + ", step " + std::to_string(adam_.step + 1));
      }
      loss.total.backward();
      if (config_.freeze_classifier) model_.classifier.zero_grad();
      clip_grad_norm(model_.params, config_.clip_norm);
      adam_step(model_.params, adam_, config_.adam);
      const double mle = loss.mle.item(), emo = loss.emo.item();
      mle_acc += mle * static_cast<double>(loss.tokens);
      emo_acc += emo * static_cast<double>(exs.size());
      tok_acc += loss.tokens;
      ex_acc += exs.size();
      if (on_step) on_step({epoch, adam_.step, total_loss(mle, emo, config_.emo_weight, loss.tokens)});
    }
    EpochReport rep;
    rep.epoch = epoch;
    rep.loss = total_loss(mle_acc / static_cast<double>(tok_acc),
                          emo_acc / static_cast<double>(ex_acc), config_.emo_weight, tok_acc);
    return rep;
  }

  std::vector<EpochReport> train(const std::vector<Example>& examples,
                                 const std::function<void(const StepRecord&)>& on_step = {},
                                 const std::function<void(const EpochReport&)>& on_epoch = {}) {
    std::vector<EpochReport> out;
    for (std::size_t e = 1; e <= config_.epochs; ++e) {
      out.push_back(train_epoch(examples, e, on_step));
      if (on_epoch) on_epoch(out.back());
    }
    return out;
  }

  /// Restores parameters and optimizer state (used when loading a checkpoint).
  void restore(CcsModel<float> model, AdamState<float> adam) {
    model_ = std::move(model);
    adam_ = std::move(adam);
  }

 private:
  TrainConfig config_;
  CcsModel<float> model_;
  AdamState<float> adam_;
  Rng data_rng_;
  Rng dropout_rng_;
};

/// Dropout-free loss over a corpus (token-mean NLL, example-mean emotion loss).
template <typename T>
LossReport evaluate_loss(const CcsModel<T>& model, const std::vector<Example>& examples,
                         double emo_weight, std::size_t topk) {
  NoGradGuard ng;
  double mle = 0.0, emo = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : examples) {
    auto l = batch_loss(model, {&ex}, emo_weight, topk);
    mle += l.mle.item() * static_cast<double>(l.tokens);
    emo += l.emo.item();
    tokens += l.tokens;
  }
  return total_loss(mle / static_cast<double>(tokens), emo / static_cast<double>(examples.size()),
                    emo_weight, tokens);
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   magic "CCSCKPT\0" | u32 version | u64 header length | header JSON (UTF-8)
//   | u32 tensor count | tensors...
// each tensor: u32 name length | name | u32 rank | u64 dims[rank] | f32 data
// All integers and floats are little-endian. Optimizer moments are stored as
// tensors named "adam.m.<param>" and "adam.v.<param>".

inline constexpr char kCheckpointMagic[8] = {'C', 'C', 'S', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  std::uint64_t vocab_hash = 0;
  std::uint64_t step = 0;
  CcsModel<float> model;
  AdamState<float> adam;
};

namespace detail {

template <typename U>
void write_le(std::ostream& os, U v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(U));
  }
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U read_le(std::istream& is) {
  U v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(U))) throw LoadError("checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(U));
  }
  return v;
}

inline void write_tensor(std::ostream& os, const std::string& name, const Shape& shape,
                         std::span<const float> data) {
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) write_le<std::uint64_t>(os, d);
  for (float f : data) write_le<float>(os, f);
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg,
                            const CcsModel<float>& model, const AdamState<float>& adam,
                            std::uint64_t vocab_hash) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write checkpoint " + tmp.string());
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::write_le<std::uint32_t>(os, kCheckpointVersion);
    nlohmann::ordered_json header;
    header["config"] = cfg.to_json();
    header["vocab_hash"] = vocab_hash;
    header["step"] = adam.step;
    const std::string hs = header.dump();
    detail::write_le<std::uint64_t>(os, hs.size());
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    const auto& items = model.params.items();
    const bool with_adam = adam.m.size() == items.size();
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(items.size() * (with_adam ? 3 : 1)));
    for (const auto& p : items) detail::write_tensor(os, p.name, p.tensor.shape(), p.tensor.data());
    if (with_adam) {
      for (std::size_t k = 0; k < items.size(); ++k) {
        detail::write_tensor(os, "adam.m." + items[k].name, items[k].tensor.shape(), adam.m[k]);
        detail::write_tensor(os, "adam.v." + items[k].name, items[k].tensor.shape(), adam.v[k]);
      }
    }
    os.flush();
    if (!os) throw Error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Reads a checkpoint. If `expected_vocab_hash` is given, a mismatch is an error.
inline Checkpoint load_checkpoint(const std::filesystem::path& path,
                                  std::optional<std::uint64_t> expected_vocab_hash = std::nullopt) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw LoadError("not a checkpoint file (bad magic): " + path.string());
  }
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw LoadError("checkpoint format version " + std::to_string(version) + " unsupported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  const auto hlen = detail::read_le<std::uint64_t>(is);
  if (hlen > (1u << 24)) throw LoadError("checkpoint header length is implausible");
  std::string hs(hlen, '\0');
  if (!is.read(hs.data(), static_cast<std::streamsize>(hlen))) throw LoadError("checkpoint truncated");
  TrainConfig cfg;
  std::uint64_t vocab_hash = 0, step = 0;
  try {
    const auto header = nlohmann::json::parse(hs);
    cfg = TrainConfig::from_json(header.at("config"));
    vocab_hash = header.at("vocab_hash").get<std::uint64_t>();
    step = header.at("step").get<std::uint64_t>();
    cfg.validate();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("corrupt checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(std::string("checkpoint config is invalid: ") + e.what());
  }
  if (expected_vocab_hash && *expected_vocab_hash != vocab_hash) {
    throw LoadError("checkpoint was trained with a different vocabulary (hash mismatch)");
  }
  Checkpoint ck{cfg, vocab_hash, step, CcsModel<float>(cfg.model, 0), {}};
  auto& items = ck.model.params.items();
  std::vector<std::vector<float>> m(items.size()), v(items.size());
  std::vector<bool> seen(items.size(), false);
  std::size_t adam_seen = 0;
  const auto count = detail::read_le<std::uint32_t>(is);
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto nlen = detail::read_le<std::uint32_t>(is);
    if (nlen > 4096) throw LoadError("corrupt tensor name length");
    std::string name(nlen, '\0');
    if (!is.read(name.data(), nlen)) throw LoadError("checkpoint truncated");
    const auto rank = detail::read_le<std::uint32_t>(is);
    if (rank > 8) throw LoadError("corrupt tensor rank for " + name);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(detail::read_le<std::uint64_t>(is));
    std::string base = name;
    int kind = 0;
    if (name.rfind("adam.m.", 0) == 0) { base = name.substr(7); kind = 1; }
    else if (name.rfind("adam.v.", 0) == 0) { base = name.substr(7); kind = 2; }
    std::size_t idx = items.size();
    for (std::size_t i = 0; i < items.size(); ++i)
      if (items[i].name == base) idx = i;
    if (idx == items.size()) throw LoadError("checkpoint has unknown tensor " + name);
    if (shape != items[idx].tensor.shape()) {
      throw LoadError("tensor " + name + " has shape " + shape_str(shape) + ", model expects " +
                      shape_str(items[idx].tensor.shape()));
    }
    std::vector<float> data(shape_size(shape));
    for (auto& f : data) f = detail::read_le<float>(is);
    if (kind == 0) {
      std::copy(data.begin(), data.end(), items[idx].tensor.mutable_data().begin());
      seen[idx] = true;
    } else {
      (kind == 1 ? m : v)[idx] = std::move(data);
      ++adam_seen;
    }
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!seen[i]) throw LoadError("checkpoint is missing tensor " + items[i].name);
  }
  if (adam_seen == 2 * items.size()) {
    ck.adam.m = std::move(m);
    ck.adam.v = std::move(v);
    ck.adam.step = ck.step;
  } else if (adam_seen != 0) {
    throw LoadError("checkpoint has incomplete optimizer state");
  }
  return ck;
}

}  // namespace ccs
