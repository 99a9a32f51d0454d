#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cops/corpus.hpp"
#include "cops/features.hpp"
#include "cops/metrics.hpp"
#include "cops/model.hpp"
#include "cops/optim.hpp"

namespace cops {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double lr = 0.001;
  std::uint64_t seed = 7;
  /// Seeds the train/validation split separately from initialization and
  /// shuffling, so grid cells with different seeds share one validation set.
  std::uint64_t split_seed = 7;
  std::size_t patience = 10;  // 0 disables early stopping
  double clip_norm = 5.0;
  double val_fraction = 0.1;
  /// Receives one JSON object per epoch.
  std::function<void(const nlohmann::ordered_json&)> on_epoch;

  void validate() const {
    require(epochs >= 1, ErrorCode::InvalidConfig, "epochs must be >= 1");
    require(batch_size >= 1, ErrorCode::InvalidConfig, "batch_size must be >= 1");
    require(lr > 0.0, ErrorCode::InvalidConfig, "lr must be > 0");
    require(val_fraction > 0.0 && val_fraction < 0.5, ErrorCode::InvalidConfig, "val_fraction must lie in (0,0.5)");
  }
};

/// A classifier with the featurizer it was trained against.
struct Classifier {
  Featurizer featurizer;
  CopsModel<float> model;
  std::vector<nlohmann::ordered_json> history;
  std::size_t best_epoch = 0;

  Task task() const { return model.config().label_task(); }

  /// Probabilities [N,K] in input order.
  Tensor<float> predict_proba(std::span<const EncodedText> items, std::size_t batch_size = 64) const {
    const std::size_t k = model.config().num_classes;
    Tensor<float> out({items.size(), k});
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < items.size(); start += batch_size) {
      idx.resize(std::min(batch_size, items.size() - start));
      std::iota(idx.begin(), idx.end(), start);
      const auto p = model.predict_proba(make_batch(items, idx));
      std::copy(p.data(), p.data() + p.size(), out.data() + start * k);
    }
    return out;
  }

  Tensor<float> predict_proba(std::span<const LabeledRecord> records) const {
    return predict_proba(featurizer.encode_all(records));
  }

  std::vector<Label> predict(const Tensor<float>& probs) const {
    std::vector<Label> out;
    for (std::size_t r = 0; r < probs.rows(); ++r) {
      const float* row = probs.data() + r * probs.cols();
      out.push_back(label_at(task(), static_cast<std::size_t>(std::max_element(row, row + probs.cols()) - row)));
    }
    return out;
  }

  /// Encoder means [N,L]; empty when the model has no encoder.
  Tensor<float> latent_means(std::span<const EncodedText> items, std::size_t batch_size = 64) const {
    if (!model.config().uses_encoder()) return {};
    const std::size_t l = model.config().latent_dim;
    Tensor<float> out({items.size(), l});
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < items.size(); start += batch_size) {
      idx.resize(std::min(batch_size, items.size() - start));
      std::iota(idx.begin(), idx.end(), start);
      const auto mu = model.latent_mean(make_batch(items, idx));
      std::copy(mu.data(), mu.data() + mu.size(), out.data() + start * l);
    }
    return out;
  }
};

/// A trained generation VAE and its featurizer.
struct Generator {
  Featurizer featurizer;
  CopsModel<float> model;
  std::vector<nlohmann::ordered_json> history;
  std::size_t best_epoch = 0;
  bool trained = false;

  Tensor<float> latent_means(std::span<const EncodedText> items, std::size_t batch_size = 64) const {
    const std::size_t l = model.config().latent_dim;
    Tensor<float> out({items.size(), l});
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < items.size(); start += batch_size) {
      idx.resize(std::min(batch_size, items.size() - start));
      std::iota(idx.begin(), idx.end(), start);
      const auto mu = model.latent_mean(make_batch(items, idx));
      std::copy(mu.data(), mu.data() + mu.size(), out.data() + start * l);
    }
    return out;
  }

  /// Word ids -> text in the cleaned token form (`<num>`, `[oov]` kept).
  std::string render(const std::vector<std::uint32_t>& ids) const {
    std::string out;
    for (auto id : ids) {
      if (!out.empty()) out += ' ';
      out += featurizer.words().token(id);
    }
    return out;
  }
};

namespace detail {

/// Stratified over the classes present; returns {train indices, val indices}.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> validation_split(
    std::span<const LabeledRecord> records, double fraction, std::uint64_t seed) {
  std::map<Label, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < records.size(); ++i) by_class[records[i].label].push_back(i);
  RngStream rng(seed);
  std::vector<char> in_val(records.size(), 0);
  for (auto& [label, members] : by_class) {
    const auto want = static_cast<std::size_t>(std::llround(static_cast<double>(members.size()) * fraction));
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t k = 0; k < want && k + 1 < members.size(); ++k) in_val[members[k]] = 1;
  }
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < records.size(); ++i) (in_val[i] ? out.second : out.first).push_back(i);
  return out;
}

inline std::vector<LabeledRecord> gather(std::span<const LabeledRecord> records, std::span<const std::size_t> idx) {
  std::vector<LabeledRecord> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(records[i]);
  return out;
}

inline void check_finite_loss(double loss, std::size_t epoch, std::size_t batch) {
  require(std::isfinite(loss), ErrorCode::Divergence,
          "loss became non-finite at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
              "; lower the learning rate or beta");
}

/// Shared minibatch loop: one Adam step per batch, returns the mean loss.
template <typename Step>
double run_epoch(CopsModel<float>& model, AdamState& adam, const TrainConfig& cfg, std::size_t n, RngStream& rng,
                 std::size_t epoch, Step&& step) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < n; start += cfg.batch_size) {
    const std::span<const std::size_t> idx(order.data() + start, std::min(cfg.batch_size, n - start));
    model.params().zero_grad();
    const double loss = step(idx);
    check_finite_loss(loss, epoch, batches);
    clip_grad_norm(model.params(), cfg.clip_norm);
    adam_step(model.params(), adam);
    total += loss;
    ++batches;
  }
  return total / static_cast<double>(batches);
}

inline ModelConfig sized_for(ModelConfig mcfg, const Featurizer& f) {
  mcfg.word_vocab_size = f.words().size();
  mcfg.char_vocab_size = f.chars().size();
  mcfg.word_seq_len = f.prep().word_seq_len;
  mcfg.char_seq_len = f.prep().char_seq_len;
  return mcfg;
}

}  // namespace detail

struct ClassifierEval {
  double loss = 0.0;
  MetricsReport metrics;
};

/// Mean inference loss (dropout off, z = mu) plus metrics.
inline ClassifierEval evaluate_classifier(const Classifier& c, std::span<const EncodedText> items,
                                          std::span<const std::size_t> labels, const ClassWeights& weights,
                                          std::size_t batch_size = 64) {
  require(!items.empty() && items.size() == labels.size(), ErrorCode::InvalidArgument, "nothing to evaluate");
  ClassifierEval out;
  std::vector<Label> preds, actuals;
  std::vector<std::size_t> idx;
  RngStream unused(0);
  for (std::size_t start = 0; start < items.size(); start += batch_size) {
    idx.resize(std::min(batch_size, items.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto b = make_batch(items, idx, labels);
    ad::Tape<float> tape(false);
    ParamBinder<float> p(tape, std::as_const(c.model.params()));
    const auto f = c.model.classification_forward(p, b, weights, unused, false);
    out.loss += static_cast<double>(tape.value(f.loss)[0]) * static_cast<double>(b.size);
    for (auto l : c.predict(tape.value(f.probs))) preds.push_back(l);
    for (auto l : b.labels) actuals.push_back(label_at(c.task(), l));
  }
  out.loss /= static_cast<double>(items.size());
  out.metrics = binary_metrics(preds, actuals);
  return out;
}

/// Trains the classification VAE. The returned model holds the parameters
/// from the epoch with the best validation F1 (ties: lower validation loss).
/// Early stopping watches validation loss. If `prefit` is given its
/// vocabularies are used instead of fitting new ones.
inline Classifier train_classifier(std::span<const LabeledRecord> data, const TrainConfig& cfg, ModelConfig mcfg,
                                   const ClassWeights& weights, const PreprocessConfig& prep,
                                   const Featurizer* prefit = nullptr) {
  cfg.validate();
  require(!data.empty(), ErrorCode::EmptyDataset, "no training records");
  require(!mcfg.is_generator(), ErrorCode::WrongTask, "train_classifier needs a classification config");
  const Task task = mcfg.label_task();
  for (const auto& r : data) require(task_of(r.label) == task, ErrorCode::WrongTask, "record label from other task");

  auto [train_idx, val_idx] = detail::validation_split(data, cfg.val_fraction, cfg.split_seed);
  const auto train = detail::gather(data, train_idx);
  auto val = detail::gather(data, val_idx);
  if (val.empty()) val = train;

  Classifier c;
  c.featurizer = prefit ? *prefit : Featurizer::fit(train, prep);
  c.model = CopsModel<float>(detail::sized_for(mcfg, c.featurizer), cfg.seed);
  const auto train_items = c.featurizer.encode_all(train);
  const auto val_items = c.featurizer.encode_all(val);
  std::vector<std::size_t> train_labels, val_labels;
  for (const auto& r : train) train_labels.push_back(label_index(r.label));
  for (const auto& r : val) val_labels.push_back(label_index(r.label));

  RngStream rng(RngStream(cfg.seed).derive(1));
  AdamState adam;
  adam.lr = cfg.lr;
  double best_f1 = -1.0, best_loss = std::numeric_limits<double>::infinity();
  double watch_loss = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  auto best = c.model.params().snapshot();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double train_loss = detail::run_epoch(c.model, adam, cfg, train_items.size(), rng, epoch, [&](auto idx) {
      const auto b = make_batch(train_items, idx, train_labels);
      ad::Tape<float> tape;
      ParamBinder<float> p(tape, c.model.params());
      const auto f = c.model.classification_forward(p, b, weights, rng, true);
      tape.backward(f.loss);
      return static_cast<double>(tape.value(f.loss)[0]);
    });
    const auto ev = evaluate_classifier(c, val_items, val_labels, weights);
    detail::check_finite_loss(ev.loss, epoch, 0);
    nlohmann::ordered_json row{{"epoch", epoch},
                               {"train_loss", train_loss},
                               {"val_loss", ev.loss},
                               {"val_acc", ev.metrics.accuracy},
                               {"val_f1", ev.metrics.f1}};
    c.history.push_back(row);
    if (cfg.on_epoch) cfg.on_epoch(row);
    if (ev.metrics.f1 > best_f1 || (ev.metrics.f1 == best_f1 && ev.loss < best_loss)) {
      best_f1 = ev.metrics.f1;
      best_loss = ev.loss;
      best = c.model.params().snapshot();
      c.best_epoch = epoch;
    }
    if (ev.loss < watch_loss) {
      watch_loss = ev.loss;
      stale = 0;
    } else if (cfg.patience > 0 && ++stale >= cfg.patience) {
      break;
    }
  }
  c.model.params().restore(best);
  c.model.params().zero_grad();
  return c;
}

/// Mean reconstruction (SSE) and total loss over items in inference mode.
inline std::pair<double, double> evaluate_generator(const Generator& g, std::span<const EncodedText> items,
                                                    std::size_t batch_size = 64) {
  double loss = 0.0, recon = 0.0;
  std::vector<std::size_t> idx;
  RngStream unused(0);
  for (std::size_t start = 0; start < items.size(); start += batch_size) {
    idx.resize(std::min(batch_size, items.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto b = make_batch(items, idx, {}, true);
    ad::Tape<float> tape(false);
    ParamBinder<float> p(tape, std::as_const(g.model.params()));
    const auto f = g.model.generation_forward(p, b, unused, false);
    loss += static_cast<double>(tape.value(f.loss)[0]) * static_cast<double>(b.size);
    for (float v : tape.value(f.per_sample).values()) recon += v;
  }
  const auto n = static_cast<double>(items.size());
  return {loss / n, recon / n};
}

/// Trains the generation VAE; returns the best-validation-loss checkpoint.
inline Generator train_generator(std::span<const LabeledRecord> data, const TrainConfig& cfg, ModelConfig mcfg,
                                 const PreprocessConfig& prep = PreprocessConfig::messages()) {
  cfg.validate();
  require(!data.empty(), ErrorCode::EmptyDataset, "no training records");
  require(mcfg.is_generator(), ErrorCode::WrongTask, "train_generator needs a generation config");

  auto [train_idx, val_idx] = detail::validation_split(data, cfg.val_fraction, cfg.split_seed);
  const auto train = detail::gather(data, train_idx);
  auto val = detail::gather(data, val_idx);
  if (val.empty()) val = train;

  Generator g;
  g.featurizer = Featurizer::fit(train, prep);
  g.model = CopsModel<float>(detail::sized_for(mcfg, g.featurizer), cfg.seed);
  const auto train_items = g.featurizer.encode_all(train);
  const auto val_items = g.featurizer.encode_all(val);

  RngStream rng(RngStream(cfg.seed).derive(2));
  AdamState adam;
  adam.lr = cfg.lr;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  auto best = g.model.params().snapshot();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double train_recon = 0.0;
    const double train_loss = detail::run_epoch(g.model, adam, cfg, train_items.size(), rng, epoch, [&](auto idx) {
      const auto b = make_batch(train_items, idx, {}, true);
      ad::Tape<float> tape;
      ParamBinder<float> p(tape, g.model.params());
      const auto f = g.model.generation_forward(p, b, rng, true);
      tape.backward(f.loss);
      for (float v : tape.value(f.per_sample).values()) train_recon += v;
      return static_cast<double>(tape.value(f.loss)[0]);
    });
    const auto [val_loss, val_recon] = evaluate_generator(g, val_items);
    detail::check_finite_loss(val_loss, epoch, 0);
    nlohmann::ordered_json row{{"epoch", epoch},
                               {"train_loss", train_loss},
                               {"train_recon", train_recon / static_cast<double>(train_items.size())},
                               {"val_loss", val_loss},
                               {"val_recon", val_recon}};
    g.history.push_back(row);
    if (cfg.on_epoch) cfg.on_epoch(row);
    if (val_loss < best_loss) {
      best_loss = val_loss;
      best = g.model.params().snapshot();
      g.best_epoch = epoch;
      stale = 0;
    } else if (cfg.patience > 0 && ++stale >= cfg.patience) {
      break;
    }
  }
  g.model.params().restore(best);
  g.model.params().zero_grad();
  g.trained = true;
  return g;
}

}  // namespace cops
