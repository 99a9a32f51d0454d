#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "cops/setups.hpp"

namespace cops {

/// Parsed INI configuration. Sections:
///   [data]        dir
///   [train]       epochs batch_size lr seed split_seed patience clip_norm val_fraction
///   [generator_train]  same keys as [train]
///   [smishing] [url] [generation]
///                 model keys (embed_dim, encoder_lstm_dim, pre_latent_dense_dim,
///                 latent_dim, decoder_lstm_dim, decoder_bilstm_dim,
///                 gen_decoder_lstm_dim, dropout_rate, beta, vae_mode, use_char,
///                 use_bilstm, sampling) and preprocessing keys (word_seq_len,
///                 char_seq_len, word_vocab_size, char_vocab_size,
///                 mask_long_numbers)
///   [setup]       augment s1_subsample s1_test_fraction s2_train_subsample
///                 s2_test_subsample s3_test_ham s3_test_spam s3_test_smishing
/// Missing keys keep their defaults; unknown sections or keys are errors.
struct CopsConfig {
  std::optional<std::filesystem::path> data_dir;
  TrainConfig train;
  TrainConfig generator_train;
  ModelConfig smishing = ModelConfig::smishing();
  ModelConfig url = ModelConfig::url_phishing();
  ModelConfig generation = ModelConfig::generation();
  PreprocessConfig smishing_prep = PreprocessConfig::messages();
  PreprocessConfig url_prep = PreprocessConfig::urls();
  SetupConfig setup_defaults;

  const ModelConfig& model_for(Task t) const { return t == Task::Smishing ? smishing : url; }
  const PreprocessConfig& prep_for(Task t) const { return t == Task::Smishing ? smishing_prep : url_prep; }

  /// Setup config for `which`, with the seed applied to every stage.
  SetupConfig setup_config(Setup which, std::uint64_t seed) const {
    SetupConfig c = setup_defaults;
    const Task task = setup_task(which);
    c.seed = seed;
    c.split_seed = train.split_seed;
    c.train = train;
    c.generator_train = generator_train;
    c.model = model_for(task);
    c.prep = prep_for(task);
    c.generator_model = generation;
    return c;
  }

  /// Data paths: explicit [data] dir, else COPS_DATA_DIR, else ./data.
  DataPaths data_paths() const {
    if (data_dir) return DataPaths::from_dir(*data_dir);
    if (auto env = DataPaths::from_env()) return *env;
    return DataPaths::from_dir("data");
  }
};

namespace detail {

using Ptree = boost::property_tree::ptree;

template <typename T>
T ini_value(const Ptree& section, const std::string& sec, const std::string& key) {
  try {
    return section.get<T>(key);
  } catch (const boost::property_tree::ptree_error&) {
    fail(ErrorCode::InvalidConfig, "[" + sec + "] " + key + ": cannot parse '" + section.get<std::string>(key) + "'");
  }
}

inline bool ini_bool(const Ptree& section, const std::string& sec, const std::string& key) {
  const auto v = lower_ascii(trim(section.get<std::string>(key)));
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  fail(ErrorCode::InvalidConfig, "[" + sec + "] " + key + ": expected a boolean, got '" + v + "'");
}

inline void apply_train(const Ptree& s, const std::string& sec, TrainConfig& c) {
  for (const auto& [key, _] : s) {
    if (key == "epochs") c.epochs = ini_value<std::size_t>(s, sec, key);
    else if (key == "batch_size") c.batch_size = ini_value<std::size_t>(s, sec, key);
    else if (key == "lr") c.lr = ini_value<double>(s, sec, key);
    else if (key == "seed") c.seed = ini_value<std::uint64_t>(s, sec, key);
    else if (key == "split_seed") c.split_seed = ini_value<std::uint64_t>(s, sec, key);
    else if (key == "patience") c.patience = ini_value<std::size_t>(s, sec, key);
    else if (key == "clip_norm") c.clip_norm = ini_value<double>(s, sec, key);
    else if (key == "val_fraction") c.val_fraction = ini_value<double>(s, sec, key);
    else fail(ErrorCode::InvalidConfig, "[" + sec + "] unknown key '" + key + "'");
  }
  c.validate();
}

inline void apply_model(const Ptree& s, const std::string& sec, ModelConfig& m, PreprocessConfig& p) {
  for (const auto& [key, _] : s) {
    if (key == "embed_dim") m.embed_dim = ini_value<std::size_t>(s, sec, key);
    else if (key == "encoder_lstm_dim") m.encoder_lstm_dim = ini_value<std::size_t>(s, sec, key);
    else if (key == "pre_latent_dense_dim") m.pre_latent_dense_dim = ini_value<std::size_t>(s, sec, key);
    else if (key == "latent_dim") m.latent_dim = ini_value<std::size_t>(s, sec, key);
    else if (key == "decoder_lstm_dim") m.decoder_lstm_dim = ini_value<std::size_t>(s, sec, key);
    else if (key == "decoder_bilstm_dim") m.decoder_bilstm_dim = ini_value<std::size_t>(s, sec, key);
    else if (key == "gen_decoder_lstm_dim") m.gen_decoder_lstm_dim = ini_value<std::size_t>(s, sec, key);
    else if (key == "dropout_rate") m.dropout_rate = ini_value<double>(s, sec, key);
    else if (key == "beta") m.beta = ini_value<double>(s, sec, key);
    else if (key == "vae_mode") m.vae_mode = parse_vae_mode(trim(s.get<std::string>(key)));
    else if (key == "use_char") m.use_char = ini_bool(s, sec, key);
    else if (key == "use_bilstm") m.use_bilstm = ini_bool(s, sec, key);
    else if (key == "sampling") {
      const auto v = trim(s.get<std::string>(key));
      if (v == "multiplicative") m.sampling = SamplingMode::Multiplicative;
      else if (v == "additive") m.sampling = SamplingMode::Additive;
      else fail(ErrorCode::InvalidConfig, "[" + sec + "] sampling: expected multiplicative or additive");
    }
    else if (key == "word_seq_len") p.word_seq_len = ini_value<std::size_t>(s, sec, key);
    else if (key == "char_seq_len") p.char_seq_len = ini_value<std::size_t>(s, sec, key);
    else if (key == "word_vocab_size") p.word_vocab_size = ini_value<std::size_t>(s, sec, key);
    else if (key == "char_vocab_size") p.char_vocab_size = ini_value<std::size_t>(s, sec, key);
    else if (key == "mask_long_numbers") p.mask_long_numbers = ini_bool(s, sec, key);
    else fail(ErrorCode::InvalidConfig, "[" + sec + "] unknown key '" + key + "'");
  }
  p.validate();
  m.word_vocab_size = p.word_vocab_size;
  m.char_vocab_size = p.char_vocab_size;
  m.word_seq_len = p.word_seq_len;
  m.char_seq_len = p.char_seq_len;
  m.validate();
}

inline void apply_setup(const Ptree& s, SetupConfig& c) {
  const std::string sec = "setup";
  for (const auto& [key, _] : s) {
    if (key == "augment") c.augment = ini_bool(s, sec, key);
    else if (key == "s1_subsample") c.s1_subsample = ini_value<std::size_t>(s, sec, key);
    else if (key == "s1_test_fraction") c.s1_test_fraction = ini_value<double>(s, sec, key);
    else if (key == "s2_train_subsample") c.s2_train_subsample = ini_value<std::size_t>(s, sec, key);
    else if (key == "s2_test_subsample") c.s2_test_subsample = ini_value<std::size_t>(s, sec, key);
    else if (key == "s3_test_ham") c.s3_test_counts[Label::Ham] = ini_value<std::size_t>(s, sec, key);
    else if (key == "s3_test_spam") c.s3_test_counts[Label::Spam] = ini_value<std::size_t>(s, sec, key);
    else if (key == "s3_test_smishing") c.s3_test_counts[Label::Smishing] = ini_value<std::size_t>(s, sec, key);
    else fail(ErrorCode::InvalidConfig, "[setup] unknown key '" + key + "'");
  }
}

}  // namespace detail

inline CopsConfig parse_config(std::istream& in) {
  detail::Ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    fail(ErrorCode::InvalidConfig, "config line " + std::to_string(e.line()) + ": " + e.message());
  }
  CopsConfig c;
  for (const auto& [sec, body] : tree) {
    require(!body.empty() || body.data().empty(), ErrorCode::InvalidConfig, "key '" + sec + "' outside a section");
    if (sec == "data") {
      for (const auto& [key, _] : body) {
        require(key == "dir", ErrorCode::InvalidConfig, "[data] unknown key '" + key + "'");
        c.data_dir = std::filesystem::path(detail::trim(body.get<std::string>(key)));
      }
    } else if (sec == "train") {
      detail::apply_train(body, sec, c.train);
    } else if (sec == "generator_train") {
      detail::apply_train(body, sec, c.generator_train);
    } else if (sec == "smishing") {
      detail::apply_model(body, sec, c.smishing, c.smishing_prep);
    } else if (sec == "url") {
      detail::apply_model(body, sec, c.url, c.url_prep);
    } else if (sec == "generation") {
      PreprocessConfig gen_prep = PreprocessConfig::messages();
      detail::apply_model(body, sec, c.generation, gen_prep);
      require(gen_prep == PreprocessConfig::messages(), ErrorCode::InvalidConfig,
              "[generation] takes no preprocessing keys; the generator uses [smishing] preprocessing");
    } else if (sec == "setup") {
      detail::apply_setup(body, c.setup_defaults);
    } else {
      fail(ErrorCode::InvalidConfig, "unknown config section [" + sec + "]");
    }
  }
  return c;
}

inline CopsConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::MissingFile, "cannot read config " + path.string());
  return parse_config(in);
}

}  // namespace cops
