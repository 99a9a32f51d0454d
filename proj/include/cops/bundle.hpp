#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/crc.hpp>
#include <json.hpp>

#include "cops/train.hpp"

namespace cops {

/// Binary model container:
///   "COPS" | u32 version | sections... | u32 crc32 of everything before it
/// Each section is a 4-byte tag, a u64 payload length and the payload:
///   CONF  JSON text: kind, model config, preprocessing config, model_version
///   WVOC  word vocabulary (text form)
///   CVOC  char vocabulary (text form)
///   PARM  u32 count, then per tensor: u32 name length, name, u32 rank,
///         u64 dims..., little-endian float32 values
/// All integers are little-endian.
inline constexpr std::uint32_t kBundleVersion = 1;

struct ModelBundle {
  /// "classifier" or "generator".
  std::string kind = "classifier";
  ModelConfig config;
  PreprocessConfig prep;
  Vocabulary words{VocabLevel::Word, 2};
  Vocabulary chars{VocabLevel::Char, 2};
  ParameterStore<float> params;
  std::string model_version;
};

inline nlohmann::ordered_json to_json(const ModelConfig& c) {
  return {{"task", model_task_name(c.task)},
          {"word_vocab_size", c.word_vocab_size},
          {"char_vocab_size", c.char_vocab_size},
          {"embed_dim", c.embed_dim},
          {"encoder_lstm_dim", c.encoder_lstm_dim},
          {"pre_latent_dense_dim", c.pre_latent_dense_dim},
          {"latent_dim", c.latent_dim},
          {"decoder_lstm_dim", c.decoder_lstm_dim},
          {"decoder_bilstm_dim", c.decoder_bilstm_dim},
          {"gen_decoder_lstm_dim", c.gen_decoder_lstm_dim},
          {"dropout_rate", c.dropout_rate},
          {"beta", c.beta},
          {"num_classes", c.num_classes},
          {"word_seq_len", c.word_seq_len},
          {"char_seq_len", c.char_seq_len},
          {"vae_mode", vae_mode_name(c.vae_mode)},
          {"use_char", c.use_char},
          {"use_bilstm", c.use_bilstm},
          {"sampling", c.sampling == SamplingMode::Multiplicative ? "multiplicative" : "additive"}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.task = parse_model_task(j.at("task").get<std::string>());
  c.word_vocab_size = j.at("word_vocab_size");
  c.char_vocab_size = j.at("char_vocab_size");
  c.embed_dim = j.at("embed_dim");
  c.encoder_lstm_dim = j.at("encoder_lstm_dim");
  c.pre_latent_dense_dim = j.at("pre_latent_dense_dim");
  c.latent_dim = j.at("latent_dim");
  c.decoder_lstm_dim = j.at("decoder_lstm_dim");
  c.decoder_bilstm_dim = j.at("decoder_bilstm_dim");
  c.gen_decoder_lstm_dim = j.at("gen_decoder_lstm_dim");
  c.dropout_rate = j.at("dropout_rate");
  c.beta = j.at("beta");
  c.num_classes = j.at("num_classes");
  c.word_seq_len = j.at("word_seq_len");
  c.char_seq_len = j.at("char_seq_len");
  c.vae_mode = parse_vae_mode(j.at("vae_mode").get<std::string>());
  c.use_char = j.at("use_char");
  c.use_bilstm = j.at("use_bilstm");
  c.sampling = j.at("sampling") == "additive" ? SamplingMode::Additive : SamplingMode::Multiplicative;
  return c;
}

inline nlohmann::ordered_json to_json(const PreprocessConfig& p) {
  return {{"kind", p.kind == TextKind::Message ? "message" : "url"},
          {"word_seq_len", p.word_seq_len},
          {"char_seq_len", p.char_seq_len},
          {"word_vocab_size", p.word_vocab_size},
          {"char_vocab_size", p.char_vocab_size},
          {"mask_long_numbers", p.mask_long_numbers}};
}

inline PreprocessConfig prep_config_from_json(const nlohmann::json& j) {
  PreprocessConfig p;
  p.kind = j.at("kind") == "url" ? TextKind::Url : TextKind::Message;
  p.word_seq_len = j.at("word_seq_len");
  p.char_seq_len = j.at("char_seq_len");
  p.word_vocab_size = j.at("word_vocab_size");
  p.char_vocab_size = j.at("char_vocab_size");
  p.mask_long_numbers = j.at("mask_long_numbers");
  return p;
}

namespace detail {

inline std::uint32_t crc32(std::string_view bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    require(n <= bytes_.size() - pos_, ErrorCode::CorruptBundle, "bundle truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline void put_section(std::string& out, const char tag[5], std::string_view payload) {
  out.append(tag, 4);
  put_le<std::uint64_t>(out, payload.size());
  out.append(payload);
}

inline std::string encode_params(const ParameterStore<float>& params) {
  std::string out;
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) put_le<std::uint64_t>(out, d);
    for (std::size_t i = 0; i < p.value.size(); ++i) put_le(out, std::bit_cast<std::uint32_t>(p.value.data()[i]));
  }
  return out;
}

inline ParameterStore<float> decode_params(std::string_view payload) {
  ByteReader r(payload);
  ParameterStore<float> store;
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name(r.take(r.le<std::uint32_t>()));
    const auto rank = r.le<std::uint32_t>();
    require(rank <= 4, ErrorCode::CorruptBundle, "parameter " + name + " has rank " + std::to_string(rank));
    Shape shape;
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(static_cast<std::size_t>(r.le<std::uint64_t>()));
      require(shape.back() <= payload.size(), ErrorCode::CorruptBundle, "parameter " + name + " has a bogus shape");
      n *= shape.back();
    }
    require(n * 4 <= payload.size(), ErrorCode::CorruptBundle, "parameter " + name + " larger than the bundle");
    const auto idx = store.add(name, shape);
    auto& value = store[idx].value;
    for (std::size_t i = 0; i < n; ++i) value.data()[i] = std::bit_cast<float>(r.le<std::uint32_t>());
  }
  require(r.done(), ErrorCode::CorruptBundle, "trailing bytes in parameter section");
  return store;
}

}  // namespace detail

/// Content-derived version string: "<kind>-<task>-<crc32 of parameters>".
inline std::string derive_model_version(const ModelBundle& b) {
  char hex[9];
  std::snprintf(hex, sizeof hex, "%08x", detail::crc32(detail::encode_params(b.params)));
  return b.kind + "-" + std::string(model_task_name(b.config.task)) + "-" + hex;
}

inline std::string serialize_bundle(const ModelBundle& b) {
  std::string out = "COPS";
  detail::put_le<std::uint32_t>(out, kBundleVersion);
  nlohmann::ordered_json conf{{"kind", b.kind},
                              {"model", to_json(b.config)},
                              {"preprocess", to_json(b.prep)},
                              {"model_version", b.model_version.empty() ? derive_model_version(b) : b.model_version}};
  detail::put_section(out, "CONF", conf.dump());
  detail::put_section(out, "WVOC", b.words.to_string());
  detail::put_section(out, "CVOC", b.chars.to_string());
  detail::put_section(out, "PARM", detail::encode_params(b.params));
  detail::put_le<std::uint32_t>(out, detail::crc32(out));
  return out;
}

inline ModelBundle deserialize_bundle(std::string_view bytes) {
  require(bytes.size() >= 12 && bytes.substr(0, 4) == "COPS", ErrorCode::CorruptBundle, "not a COPS model bundle");
  detail::ByteReader head(bytes.substr(4, 4));
  const auto version = head.le<std::uint32_t>();
  require(version == kBundleVersion, ErrorCode::UnsupportedVersion,
          "bundle version " + std::to_string(version) + " (this build reads version " +
              std::to_string(kBundleVersion) + ")");
  const auto body = bytes.substr(0, bytes.size() - 4);
  detail::ByteReader tail(bytes.substr(bytes.size() - 4));
  require(tail.le<std::uint32_t>() == detail::crc32(body), ErrorCode::CorruptBundle, "bundle checksum mismatch");

  ModelBundle b;
  detail::ByteReader r(body.substr(8));
  bool conf = false, wvoc = false, cvoc = false, parm = false;
  while (!r.done()) {
    const auto tag = r.take(4);
    const auto payload = r.take(static_cast<std::size_t>(r.le<std::uint64_t>()));
    if (tag == "CONF") {
      try {
        const auto j = nlohmann::json::parse(payload);
        b.kind = j.at("kind");
        b.config = model_config_from_json(j.at("model"));
        b.prep = prep_config_from_json(j.at("preprocess"));
        b.model_version = j.at("model_version");
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::CorruptBundle, std::string("bad CONF section: ") + e.what());
      }
      conf = true;
    } else if (tag == "WVOC") {
      b.words = Vocabulary::from_string(std::string(payload));
      wvoc = true;
    } else if (tag == "CVOC") {
      b.chars = Vocabulary::from_string(std::string(payload));
      cvoc = true;
    } else if (tag == "PARM") {
      b.params = detail::decode_params(payload);
      parm = true;
    } else {
      fail(ErrorCode::CorruptBundle, "unknown bundle section '" + std::string(tag) + "'");
    }
  }
  require(conf && wvoc && cvoc && parm, ErrorCode::CorruptBundle, "bundle is missing a section");
  b.config.validate();
  return b;
}

inline void save_model(const ModelBundle& b, const std::filesystem::path& path) {
  const auto bytes = serialize_bundle(b);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::MissingFile, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorCode::MissingFile, "write failed for " + path.string());
}

inline ModelBundle load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::MissingFile, "cannot read model bundle " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_bundle(bytes);
}

inline ModelBundle make_bundle(const Classifier& c) {
  ModelBundle b;
  b.kind = "classifier";
  b.config = c.model.config();
  b.prep = c.featurizer.prep();
  b.words = c.featurizer.words();
  b.chars = c.featurizer.chars();
  b.params = c.model.params();
  b.model_version = derive_model_version(b);
  return b;
}

inline ModelBundle make_bundle(const Generator& g) {
  ModelBundle b;
  b.kind = "generator";
  b.config = g.model.config();
  b.prep = g.featurizer.prep();
  b.words = g.featurizer.words();
  b.chars = g.featurizer.chars();
  b.params = g.model.params();
  b.model_version = derive_model_version(b);
  return b;
}

namespace detail {
inline CopsModel<float> model_from(const ModelBundle& b) {
  CopsModel<float> m(b.config, 0);
  m.load_parameters(b.params);
  return m;
}
}  // namespace detail

inline Classifier classifier_from(const ModelBundle& b) {
  require(b.kind == "classifier", ErrorCode::WrongTask, "bundle holds a " + b.kind + ", not a classifier");
  Classifier c;
  c.featurizer = Featurizer(b.prep, b.words, b.chars);
  c.model = detail::model_from(b);
  return c;
}

inline Generator generator_from(const ModelBundle& b) {
  require(b.kind == "generator", ErrorCode::WrongTask, "bundle holds a " + b.kind + ", not a generator");
  Generator g;
  g.featurizer = Featurizer(b.prep, b.words, b.chars);
  g.model = detail::model_from(b);
  g.trained = true;
  return g;
}

}  // namespace cops
