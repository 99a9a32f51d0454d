#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cops/autodiff.hpp"
#include "cops/corpus.hpp"
#include "cops/features.hpp"
#include "cops/layers.hpp"
#include "cops/losses.hpp"

namespace cops {

enum class ModelTask { Smishing, UrlPhishing, Generation };

/// None drops the encoder and latent input entirely, Vae trains with beta 1,
/// Beta uses the configured beta (which must exceed 1).
enum class VaeMode { None, Vae, Beta };

inline std::string_view model_task_name(ModelTask t) {
  switch (t) {
    case ModelTask::Smishing: return "smishing";
    case ModelTask::UrlPhishing: return "url";
    case ModelTask::Generation: return "generation";
  }
  return "?";
}

inline ModelTask parse_model_task(std::string_view s) {
  if (s == "smishing") return ModelTask::Smishing;
  if (s == "url" || s == "url_phishing") return ModelTask::UrlPhishing;
  if (s == "generation") return ModelTask::Generation;
  fail(ErrorCode::InvalidConfig, "unknown task '" + std::string(s) + "'");
}

inline std::string_view vae_mode_name(VaeMode m) {
  switch (m) {
    case VaeMode::None: return "none";
    case VaeMode::Vae: return "vae";
    case VaeMode::Beta: return "beta";
  }
  return "?";
}

inline VaeMode parse_vae_mode(std::string_view s) {
  if (s == "none") return VaeMode::None;
  if (s == "vae") return VaeMode::Vae;
  if (s == "beta") return VaeMode::Beta;
  fail(ErrorCode::InvalidConfig, "unknown vae_mode '" + std::string(s) + "'");
}

struct ModelConfig {
  ModelTask task = ModelTask::Smishing;
  std::size_t word_vocab_size = 8427;
  std::size_t char_vocab_size = 80;
  std::size_t embed_dim = 50;
  std::size_t encoder_lstm_dim = 64;
  std::size_t pre_latent_dense_dim = 96;
  std::size_t latent_dim = 2;
  std::size_t decoder_lstm_dim = 100;
  std::size_t decoder_bilstm_dim = 50;
  std::size_t gen_decoder_lstm_dim = 64;
  double dropout_rate = 0.5;
  double beta = 74.0;
  std::size_t num_classes = 3;
  std::size_t word_seq_len = 50;
  std::size_t char_seq_len = 180;
  VaeMode vae_mode = VaeMode::Beta;
  bool use_char = true;
  bool use_bilstm = true;
  SamplingMode sampling = SamplingMode::Multiplicative;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;

  static ModelConfig smishing() { return {}; }

  static ModelConfig url_phishing() {
    ModelConfig c;
    c.task = ModelTask::UrlPhishing;
    c.word_vocab_size = 30000;
    c.char_vocab_size = 31;
    c.num_classes = 2;
    c.word_seq_len = 20;
    c.char_seq_len = 200;
    return c;
  }

  static ModelConfig generation() {
    ModelConfig c;
    c.task = ModelTask::Generation;
    c.latent_dim = 32;
    c.num_classes = 0;
    return c;
  }

  bool is_generator() const { return task == ModelTask::Generation; }
  bool uses_encoder() const { return is_generator() || vae_mode != VaeMode::None; }

  double effective_beta() const {
    switch (vae_mode) {
      case VaeMode::None: return 0.0;
      case VaeMode::Vae: return 1.0;
      case VaeMode::Beta: return beta;
    }
    return beta;
  }

  Task label_task() const {
    require(!is_generator(), ErrorCode::WrongTask, "generation models have no label set");
    return task == ModelTask::Smishing ? Task::Smishing : Task::UrlPhishing;
  }

  void validate() const {
    const auto positive = [](std::size_t v, const char* what) {
      require(v > 0, ErrorCode::InvalidConfig, std::string(what) + " must be > 0");
    };
    positive(embed_dim, "embed_dim");
    positive(encoder_lstm_dim, "encoder_lstm_dim");
    positive(pre_latent_dense_dim, "pre_latent_dense_dim");
    positive(latent_dim, "latent_dim");
    positive(decoder_lstm_dim, "decoder_lstm_dim");
    positive(decoder_bilstm_dim, "decoder_bilstm_dim");
    positive(gen_decoder_lstm_dim, "gen_decoder_lstm_dim");
    positive(word_seq_len, "word_seq_len");
    positive(char_seq_len, "char_seq_len");
    require(word_vocab_size > 2 && char_vocab_size > 2, ErrorCode::InvalidConfig,
            "vocabularies need room beyond PAD and OOV");
    require(dropout_rate >= 0.0 && dropout_rate < 1.0, ErrorCode::InvalidConfig, "dropout_rate must be in [0,1)");
    if (is_generator()) {
      require(vae_mode == VaeMode::Beta, ErrorCode::InvalidConfig, "the generator is always a beta-VAE");
      require(use_char, ErrorCode::InvalidConfig, "the generator encoder reads words and characters");
    } else {
      const std::size_t expected = task == ModelTask::Smishing ? 3 : 2;
      require(num_classes == expected, ErrorCode::InvalidConfig,
              "num_classes must be " + std::to_string(expected) + " for task " + std::string(model_task_name(task)));
    }
    if (vae_mode == VaeMode::Beta) require_beta_vae(beta);
  }
};

/// Encoder, sampler and whichever decoder the task needs. The word and char
/// embedding tables are shared by the encoder and the classifier decoder.
template <typename S>
class CopsModel {
 public:
  using Mask = std::shared_ptr<const Tensor<S>>;

  struct Inputs {
    ad::Var wc;
    Mask mask;
    std::size_t steps = 0;
    std::size_t batch = 0;
  };

  struct Forward {
    ad::Var loss;
    ad::Var probs;
    ad::Var per_sample;  // reconstruction (SSE) or cross-entropy, [B]
    std::optional<ad::Var> kl;
    std::optional<ad::Var> mu;
    std::optional<ad::Var> log_sigma;
  };

  CopsModel() = default;

  CopsModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    RngStream rng(seed);
    const auto& c = config_;
    word_emb_ = make_embedding(params_, "emb.word", c.word_vocab_size, c.embed_dim, rng);
    if (c.use_char) char_emb_ = make_embedding(params_, "emb.char", c.char_vocab_size, c.embed_dim, rng);
    if (c.uses_encoder()) {
      enc_lstm_ = make_lstm(params_, "enc.lstm", c.embed_dim, c.encoder_lstm_dim, rng);
      enc_dense_ = make_dense(params_, "enc.dense", c.encoder_lstm_dim, c.pre_latent_dense_dim, Activation::Tanh, rng);
      enc_mu_ = make_dense(params_, "enc.mu", c.pre_latent_dense_dim, c.latent_dim, Activation::Identity, rng);
      enc_ls_ = make_dense(params_, "enc.log_sigma", c.pre_latent_dense_dim, c.latent_dim, Activation::Identity, rng);
    }
    if (c.is_generator()) {
      gen_lstm_ = make_lstm(params_, "gen.lstm", c.latent_dim, c.gen_decoder_lstm_dim, rng);
      gen_out_ = make_dense(params_, "gen.out", c.gen_decoder_lstm_dim, c.word_vocab_size, Activation::Identity, rng);
    } else {
      const std::size_t in = c.embed_dim + (c.uses_encoder() ? c.latent_dim : 0);
      cls_lstm_ = make_lstm(params_, "cls.lstm", in, c.decoder_lstm_dim, rng);
      std::size_t top = c.decoder_lstm_dim;
      if (c.use_bilstm) {
        cls_bilstm_ = make_bilstm(params_, "cls.bilstm", c.decoder_lstm_dim, c.decoder_bilstm_dim, rng);
        top = 2 * c.decoder_bilstm_dim;
      }
      cls_out_ = make_dense(params_, "cls.out", top, c.num_classes, Activation::Identity, rng);
    }
  }

  const ModelConfig& config() const { return config_; }
  ParameterStore<S>& params() { return params_; }
  const ParameterStore<S>& params() const { return params_; }

  /// Copies values by name from another store with the same layout.
  void load_parameters(const ParameterStore<S>& from) {
    require(from.size() == params_.size(), ErrorCode::ShapeMismatch,
            "parameter count " + std::to_string(from.size()) + " != " + std::to_string(params_.size()));
    for (auto& p : params_) {
      const auto idx = from.find(p.name);
      require(idx.has_value(), ErrorCode::ShapeMismatch, "missing parameter " + p.name);
      const auto& src = from[*idx].value;
      require(src.same_shape(p.value), ErrorCode::ShapeMismatch,
              "parameter " + p.name + " has shape " + shape_string(src.shape()) + ", expected " +
                  shape_string(p.value.shape()));
      p.value = src;
    }
  }

  /// Word embeddings followed by char embeddings along time, with the
  /// matching [T,B] mask.
  Inputs embed(ParamBinder<S>& p, const Batch& b) const {
    auto& t = p.tape();
    const auto check_ids = [](const std::vector<std::uint32_t>& ids, std::size_t vocab, const char* which) {
      for (auto id : ids) {
        require(id < vocab, ErrorCode::VocabularyMismatch,
                std::string(which) + " id " + std::to_string(id) + " outside model vocabulary of " +
                    std::to_string(vocab));
      }
    };
    check_ids(b.word_ids, config_.word_vocab_size, "word");
    Inputs in;
    in.batch = b.size;
    in.wc = embedding_forward(p, word_emb_, b.word_ids, b.word_steps, b.size);
    in.steps = b.word_steps;
    if (config_.use_char) {
      check_ids(b.char_ids, config_.char_vocab_size, "char");
      in.wc = ad::concat_time(t, in.wc, embedding_forward(p, char_emb_, b.char_ids, b.char_steps, b.size));
      in.steps += b.char_steps;
    }
    Tensor<S> mask({in.steps, b.size});
    for (std::size_t k = 0; k < b.size; ++k) {
      for (std::size_t s = 0; s < b.word_len[k]; ++s) mask[s * b.size + k] = S(1);
      if (config_.use_char) {
        for (std::size_t s = 0; s < b.char_len[k]; ++s) mask[(b.word_steps + s) * b.size + k] = S(1);
      }
    }
    in.mask = std::make_shared<const Tensor<S>>(std::move(mask));
    return in;
  }

  std::pair<ad::Var, ad::Var> encode(ParamBinder<S>& p, const Inputs& in) const {
    require(config_.uses_encoder(), ErrorCode::InvalidConfig, "model has no encoder (vae_mode none)");
    auto h = lstm_forward(p, enc_lstm_, in.wc, in.mask, false);
    h = dense_forward(p, enc_dense_, h);
    return {dense_forward(p, enc_mu_, h), dense_forward(p, enc_ls_, h)};
  }

  ad::Var sample(ad::Tape<S>& t, ad::Var mu, ad::Var log_sigma, RngStream& rng, bool training) const {
    if (!training) return mu;
    Tensor<S> eps(t.value(mu).shape());
    for (auto& e : eps.values()) e = static_cast<S>(rng.normal());
    if (config_.sampling == SamplingMode::Additive) {
      return ad::add(t, ad::add(t, mu, ad::exp(t, log_sigma)), t.constant(std::move(eps)));
    }
    return ad::add(t, mu, ad::mul_const(t, ad::exp(t, log_sigma), std::make_shared<const Tensor<S>>(std::move(eps))));
  }

  /// Per-sample KL term, [B].
  ad::Var kl(ad::Tape<S>& t, ad::Var mu, ad::Var log_sigma) const {
    auto e = ad::sub(t, ad::add(t, ad::exp(t, log_sigma), ad::square(t, mu)), log_sigma);
    return ad::row_sum(t, ad::add_scalar(t, e, S(-1)));
  }

  /// Class probabilities [B,K]. `z` is required exactly when the model has an
  /// encoder. Dropout on the first LSTM input uses one mask per sequence,
  /// shared across time steps.
  ad::Var classify(ParamBinder<S>& p, const Inputs& in, std::optional<ad::Var> z, RngStream& rng,
                   bool training) const {
    require(!config_.is_generator(), ErrorCode::WrongTask, "generator has no classifier decoder");
    require(z.has_value() == config_.uses_encoder(), ErrorCode::InvalidArgument, "latent input mismatch");
    auto& t = p.tape();
    auto x = in.wc;
    if (z) x = ad::concat_last(t, x, ad::repeat_time(t, *z, in.steps));
    if (training && config_.dropout_rate > 0.0) {
      const std::size_t d = t.value(x).cols();
      const S keep = static_cast<S>(1.0 / (1.0 - config_.dropout_rate));
      std::vector<S> row(in.batch * d);
      for (auto& v : row) v = rng.uniform() < config_.dropout_rate ? S(0) : keep;
      Tensor<S> mask({in.steps, in.batch, d});
      for (std::size_t s = 0; s < in.steps; ++s) std::copy(row.begin(), row.end(), mask.data() + s * row.size());
      x = ad::mul_const(t, x, std::make_shared<const Tensor<S>>(std::move(mask)));
    }
    auto h = lstm_forward(p, cls_lstm_, x, in.mask, config_.use_bilstm);
    if (config_.use_bilstm) h = bilstm_forward(p, cls_bilstm_, h, in.mask);
    return ad::softmax(t, dense_forward(p, cls_out_, h));
  }

  /// Per-step word distributions [T,B,V] from latent codes [B,L].
  ad::Var generate(ParamBinder<S>& p, ad::Var z) const {
    require(config_.is_generator(), ErrorCode::WrongTask, "classifier has no generation decoder");
    auto& t = p.tape();
    require(t.value(z).cols() == config_.latent_dim, ErrorCode::ShapeMismatch,
            "latent dim " + std::to_string(t.value(z).cols()) + " != " + std::to_string(config_.latent_dim));
    auto h = lstm_forward(p, gen_lstm_, ad::repeat_time(t, z, config_.word_seq_len), Mask{}, true);
    return ad::softmax(t, dense_forward(p, gen_out_, h));
  }

  /// Mean over the batch of (1 + w_y) * CE + beta * KL.
  Forward classification_forward(ParamBinder<S>& p, const Batch& b, const ClassWeights& weights, RngStream& rng,
                                 bool training) const {
    require(b.labels.size() == b.size, ErrorCode::InvalidArgument, "batch has no labels");
    auto& t = p.tape();
    const auto task = config_.label_task();
    Forward f;
    const auto in = embed(p, b);
    std::optional<ad::Var> z;
    if (config_.uses_encoder()) {
      std::tie(f.mu, f.log_sigma) = encode(p, in);
      z = sample(t, *f.mu, *f.log_sigma, rng, training);
    }
    f.probs = classify(p, in, z, rng, training);
    f.per_sample = ad::nll(t, f.probs, b.labels);
    Tensor<S> factor({b.size});
    for (std::size_t k = 0; k < b.size; ++k) factor[k] = static_cast<S>(1.0 + weights[label_at(task, b.labels[k])]);
    auto total = ad::mul_const(t, f.per_sample, std::make_shared<const Tensor<S>>(std::move(factor)));
    if (config_.uses_encoder()) {
      f.kl = kl(t, *f.mu, *f.log_sigma);
      total = ad::add(t, total, ad::scale(t, *f.kl, static_cast<S>(config_.effective_beta())));
    }
    f.loss = ad::mean(t, total);
    return f;
  }

  /// Mean over the batch of SSE(probs, onehot(words)) + beta * KL.
  Forward generation_forward(ParamBinder<S>& p, const Batch& b, RngStream& rng, bool training) const {
    require(b.target_steps == config_.word_seq_len, ErrorCode::ShapeMismatch, "batch built without word targets");
    auto& t = p.tape();
    Forward f;
    const auto in = embed(p, b);
    std::tie(f.mu, f.log_sigma) = encode(p, in);
    const auto z = sample(t, *f.mu, *f.log_sigma, rng, training);
    f.probs = generate(p, z);
    f.per_sample = ad::onehot_sse(t, f.probs, b.targets);
    f.kl = kl(t, *f.mu, *f.log_sigma);
    f.loss = ad::mean(t, ad::add(t, f.per_sample, ad::scale(t, *f.kl, static_cast<S>(config_.effective_beta()))));
    return f;
  }

  /// Inference probabilities [B,K] (dropout off, z = mu).
  Tensor<S> predict_proba(const Batch& b) const {
    ad::Tape<S> tape(false);
    ParamBinder<S> p(tape, params_);
    RngStream unused(0);
    const auto in = embed(p, b);
    std::optional<ad::Var> z;
    if (config_.uses_encoder()) z = encode(p, in).first;
    return tape.value(classify(p, in, z, unused, false));
  }

  /// Encoder means [B,L].
  Tensor<S> latent_mean(const Batch& b) const {
    ad::Tape<S> tape(false);
    ParamBinder<S> p(tape, params_);
    return tape.value(encode(p, embed(p, b)).first);
  }

  Tensor<S> decode_probs(const Tensor<S>& z) const {
    ad::Tape<S> tape(false);
    ParamBinder<S> p(tape, params_);
    return tape.value(generate(p, tape.constant(z)));
  }

  /// Argmax word ids per row, cut at the first PAD.
  std::vector<std::vector<std::uint32_t>> greedy_decode(const Tensor<S>& z) const {
    return pick(decode_probs(z), [](const S* row, std::size_t v) {
      return static_cast<std::uint32_t>(std::max_element(row, row + v) - row);
    });
  }

  /// Ids drawn from each step's distribution, cut at the first PAD.
  std::vector<std::vector<std::uint32_t>> sample_decode(const Tensor<S>& z, RngStream& rng) const {
    return pick(decode_probs(z), [&rng](const S* row, std::size_t v) {
      double u = rng.uniform(), acc = 0.0;
      for (std::size_t c = 0; c < v; ++c) {
        acc += static_cast<double>(row[c]);
        if (u < acc) return static_cast<std::uint32_t>(c);
      }
      return static_cast<std::uint32_t>(v - 1);
    });
  }

 private:
  template <typename Pick>
  std::vector<std::vector<std::uint32_t>> pick(const Tensor<S>& probs, Pick&& choose) const {
    const std::size_t steps = probs.dim(0), batch = probs.dim(1), v = probs.dim(2);
    std::vector<std::vector<std::uint32_t>> out(batch);
    std::vector<char> done(batch, 0);
    for (std::size_t s = 0; s < steps; ++s) {
      for (std::size_t k = 0; k < batch; ++k) {
        if (done[k]) continue;
        const auto id = choose(probs.data() + (s * batch + k) * v, v);
        if (id == Vocabulary::kPad) {
          done[k] = 1;
        } else {
          out[k].push_back(id);
        }
      }
    }
    return out;
  }

  ModelConfig config_;
  ParameterStore<S> params_;
  EmbeddingLayer word_emb_, char_emb_;
  LstmLayer enc_lstm_;
  DenseLayer enc_dense_, enc_mu_, enc_ls_;
  LstmLayer gen_lstm_;
  DenseLayer gen_out_;
  LstmLayer cls_lstm_;
  BiLstmLayer cls_bilstm_;
  DenseLayer cls_out_;
};

}  // namespace cops
