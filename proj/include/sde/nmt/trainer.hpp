#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "sde/eval.hpp"
#include "sde/nmt/seq2seq.hpp"
#include "sde/numcore/adam.hpp"
#include "sde/numcore/checkpoint.hpp"

namespace sde {

/// Training produced a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 0.001;
  double lr_decay = 0.8;
  double dropout = 0.3;
  std::size_t batch_words = 1500;
  std::size_t eval_every = 2500;
  std::size_t patience = 5;
  std::size_t max_steps = 0;  ///< 0 trains until early stopping
  std::uint64_t seed = 1;
  int threads = 1;
};

struct EvalRecord {
  std::size_t step = 0;
  double dev_bleu = 0.0;
  double learning_rate = 0.0;  ///< rate in effect before this evaluation
  double train_loss = 0.0;     ///< mean batch loss since the previous evaluation
};

/// step TAB dev_bleu TAB lr TAB train_loss
inline std::string format_log_line(const EvalRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%zu\t%.4f\t%.8g\t%.6f", r.step, r.dev_bleu, r.learning_rate, r.train_loss);
  return buf;
}

struct TrainResult {
  std::vector<EvalRecord> log;
  double best_bleu = -1.0;
  std::size_t best_step = 0;
  std::size_t steps = 0;
  bool early_stopped = false;
  double final_learning_rate = 0.0;
};

/// Source units stay as strings; target units map through `target_vocab`.
inline std::vector<Example> make_examples(const ParallelCorpus& corpus, const Vocabulary& target_vocab) {
  std::vector<Example> out;
  out.reserve(corpus.size());
  for (const auto& p : corpus.pairs) out.push_back({p.source, p.lang, target_vocab.encode(p.target)});
  return out;
}

using TargetPostprocess = std::function<Sentence(const std::vector<std::string>&)>;

/// Greedy decoding of `examples` in fixed chunks, optionally sharded across
/// threads; output order and values do not depend on the thread count.
template <typename Scalar>
std::vector<Hypothesis> greedy_decode_all(const Seq2SeqModel<Scalar>& model, const std::vector<Example>& examples,
                                          int threads = 1, std::size_t chunk = 32) {
  std::vector<Hypothesis> out(examples.size());
  const std::size_t chunks = (examples.size() + chunk - 1) / chunk;
  auto work = [&](std::size_t first_chunk, std::size_t stride) {
    for (std::size_t ci = first_chunk; ci < chunks; ci += stride) {
      std::vector<const Example*> batch;
      std::vector<std::size_t> slots;
      for (std::size_t i = ci * chunk; i < std::min(examples.size(), (ci + 1) * chunk); ++i) {
        if (examples[i].source.empty()) {
          out[i] = Hypothesis{{Vocabulary::kEos}, 0.0, true};
          continue;
        }
        batch.push_back(&examples[i]);
        slots.push_back(i);
      }
      if (batch.empty()) continue;
      auto hyps = model.greedy(batch);
      for (std::size_t j = 0; j < hyps.size(); ++j) out[slots[j]] = std::move(hyps[j]);
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, threads));
  if (n == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work, t, n);
    for (auto& t : pool) t.join();
  }
  return out;
}

inline Sentence hypothesis_words(const Hypothesis& h, const Vocabulary& target_vocab, const TargetPostprocess& post) {
  auto units = target_vocab.decode(h.content(), true);
  return post ? post(units) : units;
}

template <typename Scalar>
double dev_bleu(const Seq2SeqModel<Scalar>& model, const std::vector<Example>& dev, const std::vector<Sentence>& refs,
                const TargetPostprocess& post = {}, int threads = 1) {
  const auto hyps = greedy_decode_all(model, dev, threads);
  std::vector<Sentence> words;
  words.reserve(hyps.size());
  for (const auto& h : hyps) words.push_back(hypothesis_words(h, model.target_vocab(), post));
  return bleu(words, refs).score;
}

template <typename Scalar>
using DevEvaluator = std::function<double(const Seq2SeqModel<Scalar>&)>;

/// Adam training with periodic dev evaluation. A non-improving evaluation
/// multiplies the learning rate by `lr_decay`; `patience` consecutive ones
/// stop training. When training ends between evaluations a final one runs.
/// The model is left holding the best-scoring parameters, which are also
/// written to `best_checkpoint` if a path is given.
template <typename Scalar>
TrainResult train_model(Seq2SeqModel<Scalar>& model, const TrainConfig& config, const std::vector<Example>& train,
                        const DevEvaluator<Scalar>& evaluate, std::ostream* log = nullptr,
                        const std::filesystem::path& best_checkpoint = {}) {
  if (train.empty()) throw std::invalid_argument("train: empty training set");
  if (config.eval_every == 0) throw std::invalid_argument("train.eval_every must be >= 1");
  if (config.patience == 0) throw std::invalid_argument("train.patience must be >= 1");
  std::vector<std::size_t> lengths;
  lengths.reserve(train.size());
  for (const auto& ex : train) {
    if (ex.source.empty()) throw std::invalid_argument("train: empty source sentence");
    lengths.push_back(ex.source.size());
  }

  auto& params = model.parameters();
  AdamState<Scalar> adam;
  adam.learning_rate = config.learning_rate;
  std::mt19937_64 dropout_rng(config.seed * 0x9E3779B97F4A7C15ULL + 1);

  TrainResult result;
  std::vector<Matrix<Scalar>> best_values = params.snapshot();
  std::size_t bad_evals = 0, last_eval_step = 0;
  double loss_sum = 0.0;
  std::size_t loss_batches = 0;
  bool stop = false;

  auto run_eval = [&]() {
    EvalRecord rec;
    rec.step = result.steps;
    rec.dev_bleu = evaluate(model);
    rec.learning_rate = adam.learning_rate;
    rec.train_loss = loss_batches ? loss_sum / static_cast<double>(loss_batches) : 0.0;
    loss_sum = 0.0;
    loss_batches = 0;
    last_eval_step = result.steps;
    result.log.push_back(rec);
    if (log) {
      *log << format_log_line(rec) << '\n';
      log->flush();
    }
    if (rec.dev_bleu > result.best_bleu) {
      result.best_bleu = rec.dev_bleu;
      result.best_step = rec.step;
      best_values = params.snapshot();
      bad_evals = 0;
      if (!best_checkpoint.empty()) save_checkpoint(best_checkpoint, params, &adam);
    } else {
      ++bad_evals;
      adam.decay(config.lr_decay);
      if (bad_evals >= config.patience) {
        result.early_stopped = true;
        stop = true;
      }
    }
  };

  for (std::uint64_t epoch = 0; !stop; ++epoch) {
    const auto batches = batch_iterator(lengths, config.batch_words, config.seed + epoch);
    for (const auto& indices : batches) {
      std::vector<const Example*> batch;
      batch.reserve(indices.size());
      for (auto i : indices) batch.push_back(&train[i]);
      {
        Graph<Scalar> g;
        const auto out = model.loss(g, batch, config.dropout, &dropout_rng);
        const double value = static_cast<double>(g.scalar(out.loss));
        if (!std::isfinite(value))
          throw NumericError("non-finite training loss at step " + std::to_string(result.steps + 1));
        g.backward(out.loss);
        loss_sum += value;
        ++loss_batches;
      }
      adam_step(params, adam);
      ++result.steps;
      if (result.steps % config.eval_every == 0) run_eval();
      if (stop || (config.max_steps && result.steps >= config.max_steps)) {
        stop = true;
        break;
      }
    }
  }
  if (last_eval_step != result.steps) run_eval();
  params.restore(best_values);
  result.final_learning_rate = adam.learning_rate;
  return result;
}

}  // namespace sde
