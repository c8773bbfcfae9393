#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ccs/ccs.hpp"

namespace {

struct Options {
  std::uint64_t seed = 1;
  std::string granularity = "fine";
  std::string fusion = "dynamic";
  std::string copy = "hierarchical";
  std::string decode = "rbs";
  std::size_t beam_size = 5;
  std::size_t rbs_n = 1;
  double rbs_eta = 0.5;
  std::size_t max_len = 40;
  double emo_weight = 0.01;
  std::size_t topk = 50;
  bool paper_scale = false;
  std::size_t d_emb = 64;
  std::size_t d_h = 64;
  std::size_t layers = 1;
  double dropout = 0.3;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  double clip_norm = 5.0;
  bool freeze_classifier = false;
};

ccs::TrainConfig train_config(const Options& o, std::size_t vocab_size) {
  ccs::TrainConfig c;
  c.model.vocab_size = vocab_size;
  c.model.d_emb = o.d_emb;
  c.model.d_h = o.d_h;
  c.model.word_layers = c.model.sentence_layers = c.model.decoder_layers = o.layers;
  c.model.fusion = ccs::parse_fusion(o.fusion);
  c.model.copy = ccs::parse_copy(o.copy);
  c.model.granularity = ccs::parse_granularity(o.granularity);
  c.model.dropout = o.dropout;
  c.batch_size = o.batch_size;
  c.adam.lr = o.lr;
  c.emo_weight = o.emo_weight;
  c.topk = o.topk;
  c.epochs = o.epochs;
  c.seed = o.seed;
  c.clip_norm = o.clip_norm;
  c.freeze_classifier = o.freeze_classifier;
  if (o.paper_scale) c.apply_paper_scale();
  return c;
}

ccs::SearchConfig search_config(const Options& o) {
  ccs::SearchConfig s;
  s.mode = ccs::parse_search_mode(o.decode);
  s.beam_size = o.beam_size;
  s.ngram = o.rbs_n;
  s.eta = o.rbs_eta;
  s.max_len = o.max_len;
  s.validate();
  return s;
}

std::string vocab_path_for(const std::string& ckpt, const std::string& vocab) {
  return vocab.empty() ? ckpt + ".vocab" : vocab;
}

struct Loaded {
  ccs::Vocab vocab;
  ccs::Checkpoint ck;
};

Loaded load_model(const std::string& ckpt, const std::string& vocab_path) {
  auto vocab = ccs::Vocab::load(vocab_path_for(ckpt, vocab_path));
  auto ck = ccs::load_checkpoint(ckpt, vocab.hash());
  return {std::move(vocab), std::move(ck)};
}

/// Articles separated by blank lines, one sentence per line.
std::vector<std::vector<std::string>> read_articles(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ccs::DataError("cannot read article file " + path);
  std::vector<std::vector<std::string>> out(1);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      if (!out.back().empty()) out.emplace_back();
      continue;
    }
    out.back().push_back(line);
  }
  if (out.back().empty()) out.pop_back();
  if (out.empty()) throw ccs::DataError("article file " + path + " has no sentences");
  return out;
}

void print_report(const nlohmann::ordered_json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotion-controllable article commenting: synthesize data, train, generate, evaluate.",
               "ccs"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a key=value file; command-line flags override");

  Options o;
  app.add_option("--seed", o.seed, "Random seed")->capture_default_str();
  app.add_option("--granularity", o.granularity, "Emotion label set: coarse or fine")
      ->capture_default_str()
      ->check(CLI::IsMember({"coarse", "fine"}));
  app.add_option("--fusion", o.fusion, "Emotion fusion: none, simple or dynamic")
      ->capture_default_str()
      ->check(CLI::IsMember({"none", "simple", "dynamic"}));
  app.add_option("--copy", o.copy, "Copy mechanism: off or hierarchical")
      ->capture_default_str()
      ->check(CLI::IsMember({"off", "hierarchical"}));
  app.add_option("--decode", o.decode, "Search: greedy, beam, rbs or hard")
      ->capture_default_str()
      ->check(CLI::IsMember({"greedy", "beam", "rbs", "hard"}));
  app.add_option("--beam-size", o.beam_size, "Beam width")->capture_default_str();
  app.add_option("--rbs-n", o.rbs_n, "N-gram order penalized by rbs")->capture_default_str();
  app.add_option("--rbs-eta", o.rbs_eta, "Repetition penalty strength for rbs")->capture_default_str();
  app.add_option("--max-len", o.max_len, "Maximum generated tokens")->capture_default_str();
  app.add_option("--emo-weight", o.emo_weight, "Weight of the emotion loss")->capture_default_str();
  app.add_option("--topk", o.topk, "Tokens averaged into the emotion loss embedding")->capture_default_str();
  app.add_flag("--paper-scale", o.paper_scale, "Use 512-dim, 2-layer networks and batch 64");
  app.add_option("--d-emb", o.d_emb, "Embedding size")->capture_default_str();
  app.add_option("--d-h", o.d_h, "Hidden size")->capture_default_str();
  app.add_option("--layers", o.layers, "Layers per LSTM stack")->capture_default_str();
  app.add_option("--dropout", o.dropout, "Dropout rate")->capture_default_str();
  app.add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
  app.add_option("--batch-size", o.batch_size, "Examples per batch")->capture_default_str();
  app.add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
  app.add_option("--clip-norm", o.clip_norm, "Gradient norm clip")->capture_default_str();
  app.add_flag("--freeze-classifier", o.freeze_classifier, "Keep the emotion classifier fixed");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic JSONL corpus");
  std::size_t synth_n = 2000;
  std::string synth_out;
  ccs::SynthOptions synth_opt;
  synth->add_option("--n", synth_n, "Number of examples")->capture_default_str();
  synth->add_option("--out", synth_out, "Output JSONL path")->required();
  synth->add_option("--reduplication", synth_opt.reduplication_rate,
                    "Fraction of comments with a repeated lexicon word")
      ->capture_default_str();
  synth->add_option("--entities", synth_opt.entity_pool, "Entity pool size")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Train a model on a JSONL corpus");
  std::string train_data, train_out = "model.ckpt", train_log;
  train->add_option("--data", train_data, "Training corpus (JSONL)")->required();
  train->add_option("--out", train_out, "Checkpoint path; the vocabulary goes to <out>.vocab")
      ->capture_default_str();
  train->add_option("--log", train_log, "Per-step JSONL log (default <out>.log.jsonl)");

  // generate
  auto* gen = app.add_subcommand("generate", "Generate comments for an article");
  std::string gen_ckpt, gen_vocab, gen_article;
  std::vector<std::string> gen_emotions;
  gen->add_option("--checkpoint", gen_ckpt, "Checkpoint path")->required();
  gen->add_option("--vocab", gen_vocab, "Vocabulary path (default <checkpoint>.vocab)");
  gen->add_option("--article", gen_article,
                  "Text file, one sentence per line; blank lines separate articles")
      ->required();
  gen->add_option("--emotion", gen_emotions, "Requested emotion label (repeatable; default all)");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a held-out corpus");
  std::string ev_ckpt, ev_vocab, ev_data, ev_tagger, ev_out;
  bool ev_table = false;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint path")->required();
  ev->add_option("--vocab", ev_vocab, "Vocabulary path (default <checkpoint>.vocab)");
  ev->add_option("--data", ev_data, "Evaluation corpus (JSONL)")->required();
  ev->add_option("--tagger-data", ev_tagger, "Corpus used to fit the emotion tagger (default --data)");
  ev->add_option("--out", ev_out, "Also write the report JSON here");
  ev->add_flag("--table", ev_table, "Print a table instead of JSON");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  bool gc_fault = false;
  gc->add_flag("--inject-fault", gc_fault, "Add an op with a wrong backward");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train and evaluate named variants side by side");
  std::string ab_variants = "CCS,w/o RBS,w/o HC,CCS-Emo", ab_data, ab_json;
  std::size_t ab_n = 2000, ab_test = 200;
  bool ab_parallel = false;
  ab->add_option("--variants", ab_variants,
                 "Comma list of CCS, w/o RBS, w/o HC, CCS-Emo, w/o emo-loss, Seq2Seq")
      ->capture_default_str();
  ab->add_option("--data", ab_data, "Corpus (JSONL); synthesized when omitted");
  ab->add_option("--n", ab_n, "Synthetic corpus size")->capture_default_str();
  ab->add_option("--n-test", ab_test, "Held-out examples taken from the end")->capture_default_str();
  ab->add_option("--reduplication", synth_opt.reduplication_rate, "Synthetic reduplication rate")
      ->capture_default_str();
  ab->add_flag("--parallel", ab_parallel, "Train variants in parallel threads");
  ab->add_option("--json", ab_json, "Write per-variant reports as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const auto g = ccs::parse_granularity(o.granularity);

    if (*synth) {
      ccs::Rng rng(o.seed);
      ccs::save_corpus(ccs::synth_corpus(rng, synth_n, g, synth_opt), synth_out);
      std::cout << "wrote " << synth_n << " examples to " << synth_out << "\n";
      return 0;
    }

    if (*train) {
      ccs::TruncationStats stats;
      auto raw = ccs::load_corpus(train_data, &stats);
      if (raw.empty()) throw ccs::DataError("corpus " + train_data + " is empty");
      auto vocab = ccs::build_vocab(raw);
      auto examples = ccs::encode_examples(raw, vocab);
      auto cfg = train_config(o, vocab.size());
      cfg.model.granularity = raw.front().emotion.granularity;
      ccs::Trainer trainer(cfg);
      std::cout << "parameters: " << trainer.model().params.count() << "\n";
      std::cout << "examples: " << examples.size() << "  vocab: " << vocab.size() << "\n";
      if (stats.sentences_truncated || stats.articles_truncated) {
        std::cout << "truncated: " << stats.sentences_truncated << " sentences, "
                  << stats.articles_truncated << " articles\n";
      }
      vocab.save(train_out + ".vocab");
      const auto log_path = train_log.empty() ? train_out + ".log.jsonl" : train_log;
      std::ofstream log(log_path, std::ios::trunc);
      if (!log) throw ccs::Error("cannot write log " + log_path);
      trainer.train(
          examples,
          [&](const ccs::StepRecord& r) {
            nlohmann::ordered_json j;
            j["epoch"] = r.epoch;
            j["step"] = r.step;
            j["mle"] = r.loss.mle;
            j["emo"] = r.loss.emo;
            j["total"] = r.loss.total;
            log << j.dump() << "\n";
          },
          [&](const ccs::EpochReport& r) {
            std::printf("epoch %zu  mle %.4f  emo %.4f  total %.4f\n", r.epoch, r.loss.mle, r.loss.emo,
                        r.loss.total);
            std::fflush(stdout);
          });
      ccs::save_checkpoint(train_out, trainer.config(), trainer.model(), trainer.adam_state(),
                           vocab.hash());
      std::cout << "saved " << train_out << "\n";
      return 0;
    }

    if (*gen) {
      auto [vocab, ck] = load_model(gen_ckpt, gen_vocab);
      const auto cg = ck.config.model.granularity;
      std::vector<int> labels;
      if (gen_emotions.empty()) {
        for (std::size_t l = 0; l < ck.config.model.num_labels(); ++l) labels.push_back(static_cast<int>(l));
      } else {
        for (const auto& e : gen_emotions) labels.push_back(ccs::parse_emotion(e, cg).label);
      }
      const auto search = search_config(o);
      const auto articles = read_articles(gen_article);
      const auto& names = ccs::emotion_labels(cg);
      for (std::size_t a = 0; a < articles.size(); ++a) {
        ccs::RawExample raw{articles[a], "", {cg, 0}};
        auto ex = ccs::encode_example(raw, vocab);
        if (articles.size() > 1) std::cout << "# article " << a + 1 << "\n";
        for (int l : labels) {
          std::cout << names[static_cast<std::size_t>(l)] << "\t"
                    << ccs::generate_comment(ck.model, vocab, ex.article, l, search) << "\n";
        }
      }
      return 0;
    }

    if (*ev) {
      auto [vocab, ck] = load_model(ev_ckpt, ev_vocab);
      ccs::Dataset data;
      data.granularity = ck.config.model.granularity;
      data.vocab = vocab;
      data.test_raw = ccs::load_corpus(ev_data);
      if (data.test_raw.empty()) throw ccs::DataError("corpus " + ev_data + " is empty");
      data.test = ccs::encode_examples(data.test_raw, vocab);
      data.tagger = ccs::train_tagger(ev_tagger.empty() ? data.test_raw : ccs::load_corpus(ev_tagger));
      auto out = ccs::evaluate_model(ck.model, data, search_config(o));
      auto j = out.report.to_json();
      if (!ev_out.empty()) {
        std::ofstream os(ev_out, std::ios::trunc);
        if (!os) throw ccs::Error("cannot write " + ev_out);
        os << j.dump(2) << "\n";
      }
      if (ev_table)
        std::cout << ccs::render_table({{"model", out.report}});
      else
        print_report(j);
      return 0;
    }

    if (*gc) {
      const auto entries = ccs::run_grad_suite(gc_fault, o.seed);
      bool ok = true;
      for (const auto& e : entries) {
        const bool pass = e.result.max_rel_error < ccs::kGradSuiteTolerance;
        ok = ok && pass;
        std::printf("%-4s %-10s %-40s max_rel_err %.3e\n", pass ? "ok" : "FAIL", e.module.c_str(),
                    e.name.c_str(), e.result.max_rel_error);
      }
      std::printf("%zu checks, tolerance %.0e: %s\n", entries.size(), ccs::kGradSuiteTolerance,
                  ok ? "all passed" : "FAILED");
      return ok ? 0 : 1;
    }

    if (*ab) {
      const auto variants = ccs::parse_ablation(ab_variants);
      ccs::Dataset data = ab_data.empty() ? ccs::synth_dataset(o.seed, ab_n, ab_test, g, synth_opt)
                                          : ccs::make_dataset(ccs::load_corpus(ab_data), ab_test);
      auto cfg = train_config(o, data.vocab.size());
      cfg.model.granularity = data.granularity;
      auto rows = ccs::run_ablation(data, cfg, search_config(o), variants, ab_parallel,
                                    [](const std::string& m) { std::cerr << m << "\n"; });
      std::vector<std::pair<std::string, ccs::MetricReport>> table;
      nlohmann::ordered_json j = nlohmann::ordered_json::array();
      for (const auto& r : rows) {
        table.emplace_back(r.name, r.eval.report);
        nlohmann::ordered_json row;
        row["name"] = r.name;
        row["train"] = r.train.to_json();
        row["decode"] = ccs::to_string(r.search.mode);
        row["final_loss"] = {{"mle", r.final_loss.mle}, {"emo", r.final_loss.emo}, {"total", r.final_loss.total}};
        row["report"] = r.eval.report.to_json();
        j.push_back(row);
      }
      std::cout << ccs::render_table(table);
      if (!ab_json.empty()) {
        std::ofstream os(ab_json, std::ios::trunc);
        if (!os) throw ccs::Error("cannot write " + ab_json);
        os << j.dump(2) << "\n";
      }
      return 0;
    }
  } catch (const ccs::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
