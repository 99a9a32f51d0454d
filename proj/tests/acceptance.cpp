// Acceptance harness: prints one PASS/FAIL line per criterion and exits
// nonzero when any selected criterion fails.
//
//   acceptance [--only 1,2,12] [--data-dir DIR] [--seeds 7,8,9]
//
// Criteria 4-8 need the real datasets (--data-dir, COPS_DATA_DIR or ./data).

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "cops/cops.hpp"
#include "support/full_size.hpp"
#include "support/grad_fixtures.hpp"
#include "support/stub_server.hpp"
#include "support/temp_dir.hpp"
#include "support/toy_corpus.hpp"

using namespace cops;
using namespace cops::testing;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

// ------------------------------------------------------------ 1. gradients

struct GateTally {
  double worst = 0.0;
  std::string where;
  std::size_t checked = 0;

  template <typename F>
  void run(const std::string& what, F&& loss, const ParameterStore<double>& point) {
    for (const auto& r : {grad_check<double>(loss, point), grad_check<float>(loss, point)}) {
      checked += r.checked;
      if (r.max_rel_error >= worst) {
        worst = r.max_rel_error;
        where = what + ":" + r.worst;
      }
    }
  }
};

Outcome gradient_gate() {
  const auto start = Clock::now();
  GateTally g;
  g.run("embedding", [](auto& t, auto& p) {
    static const std::vector<std::uint32_t> ids{3, 3, 0, 5, 1, 2};
    return project(t, embedding_forward(p, EmbeddingLayer{0}, ids, 3, 2));
  }, random_store({{"emb", {6, 3}}}, 1));
  for (auto act : {Activation::Identity, Activation::Relu, Activation::Tanh}) {
    g.run("dense", [act](auto& t, auto& p) { return project(t, dense_forward(p, DenseLayer{1, 2, act}, p(0))); },
          random_store({{"x", {3, 4}}, {"w", {4, 5}}, {"b", {5}}}, 2 + static_cast<int>(act)));
  }
  const auto mask = std::make_shared<Tensor<double>>(Shape{6, 2}, std::vector<double>{1, 1, 1, 1, 1, 0, 1, 0, 0, 0, 0, 0});
  for (bool reverse : {false, true}) {
    for (bool seq : {false, true}) {
      g.run("lstm", [&, reverse, seq](auto& t, auto& p) {
        using T = typename std::remove_reference_t<decltype(t.value(p(0)))>::value_type;
        auto m = std::make_shared<const Tensor<T>>(mask->template cast<T>());
        return project(t, lstm_forward<T>(p, LstmLayer{1, 2, 3}, p(0), m, seq, reverse));
      }, random_store({{"x", {6, 2, 3}}, {"wx", {3, 16}}, {"wh", {4, 16}}, {"b", {16}}}, 10 + reverse * 2 + seq));
    }
  }
  g.run("bilstm", [](auto& t, auto& p) {
    using T = typename std::remove_reference_t<decltype(t.value(p(0)))>::value_type;
    return project(t, bilstm_forward<T>(p, BiLstmLayer{{1, 2, 3}, {4, 5, 6}}, p(0), nullptr));
  }, random_store({{"x", {4, 2, 3}}, {"f.wx", {3, 8}}, {"f.wh", {2, 8}}, {"f.b", {8}},
                   {"b.wx", {3, 8}}, {"b.wh", {2, 8}}, {"b.b", {8}}}, 20));
  g.run("softmax+nll", [](auto& t, auto& p) {
    static const std::vector<std::size_t> labels{0, 3, 1, 2, 2, 1};
    return project(t, ad::nll(t, ad::softmax(t, p(0)), labels));
  }, random_store({{"x", {3, 2, 4}}}, 30, 2.0));
  g.run("softmax+sse", [](auto& t, auto& p) {
    static const std::vector<std::uint32_t> targets{0, 3, 1, 2, 2, 1};
    return project(t, ad::onehot_sse(t, ad::softmax(t, p(0)), targets));
  }, random_store({{"x", {3, 2, 4}}}, 31, 2.0));

  const ClassWeights w{{{Label::Ham, 0.4}, {Label::Spam, 3.9}, {Label::Smishing, 3.0}}};
  for (int variant : {0, 1, 2}) {
    auto cfg = tiny_config(ModelTask::Smishing);
    if (variant == 1) cfg.sampling = SamplingMode::Additive;
    if (variant == 2) cfg.use_bilstm = false;
    CopsModel<double> md(cfg, 11);
    CopsModel<float> mf(cfg, 11);
    const auto b = tiny_batch();
    g.run("classification", [&](auto& t, auto& p) {
      RngStream rng(77);
      if constexpr (std::is_same_v<std::remove_reference_t<decltype(t)>, ad::Tape<float>>) {
        return mf.classification_forward(p, b, w, rng, true).loss;
      } else {
        return md.classification_forward(p, b, w, rng, true).loss;
      }
    }, perturbed(md.params(), 5 + variant));
  }
  {
    const auto cfg = tiny_config(ModelTask::Generation);
    CopsModel<double> md(cfg, 12);
    CopsModel<float> mf(cfg, 12);
    const auto b = tiny_batch(true);
    g.run("generation", [&](auto& t, auto& p) {
      RngStream rng(78);
      if constexpr (std::is_same_v<std::remove_reference_t<decltype(t)>, ad::Tape<float>>) {
        return mf.generation_forward(p, b, rng, true).loss;
      } else {
        return md.generation_forward(p, b, rng, true).loss;
      }
    }, perturbed(md.params(), 13));
  }
  const double secs = seconds_since(start);
  return {g.worst < 1e-3 && secs < 60.0,
          fmt("max rel err %.2e at %s over %zu partials, %.1f s", g.worst, g.where.c_str(), g.checked, secs)};
}

// ------------------------------------------------------------ 2. losses

Outcome loss_identities() {
  std::vector<std::string> bad;
  const auto near = [&](const char* what, double got, double want, double tol) {
    if (!(std::abs(got - want) <= tol)) bad.push_back(fmt("%s=%.6f want %.6f", what, got, want));
  };
  near("kl(0,0)", kl_term(Tensor<double>::vector({0, 0}), Tensor<double>::vector({0, 0})), 0.0, 1e-4);
  near("kl(1,0)", kl_term(Tensor<double>::vector({1}), Tensor<double>::vector({0})), 1.0, 1e-4);
  near("kl(.5/-.5,.1/.2)", kl_term(Tensor<double>::vector({0.5, -0.5}), Tensor<double>::vector({0.1, 0.2})), 0.52657,
       1e-4);
  if (generation_loss(1.0, 0.5, 74.0) != 38.0) bad.emplace_back("generation_loss(1,.5,74) != 38");
  if (generation_loss(2.5, 0.0, 74.0) != 2.5) bad.emplace_back("generation_loss(2.5,0,74) != 2.5");
  if (generation_loss(0.0, 1.0, 74.0) != 74.0) bad.emplace_back("generation_loss(0,1,74) != 74");
  auto w = ClassWeights::uniform(Task::Smishing);
  w.weights[Label::Ham] = 0.4139;
  const std::vector<double> pred{0.7, 0.2, 0.1};
  near("classification_loss", classification_loss(pred, Label::Ham, Task::Smishing, w, 0.01, 74.0), 1.2448, 1e-3);
  RngStream rng(1);
  std::size_t negative = 0;
  double min_kl = 1e300;
  for (int i = 0; i < 10000; ++i) {
    Tensor<double> mu({4}), ls({4});
    for (auto& v : mu.values()) v = rng.uniform(-5, 5);
    for (auto& v : ls.values()) v = rng.uniform(-8, 4);
    const double kl = kl_term(mu, ls);
    min_kl = std::min(min_kl, kl);
    negative += kl < 0.0;
  }
  if (negative) bad.push_back(fmt("%zu negative kl values", negative));
  std::string detail = fmt("3 kl examples, 3 generation identities, 1 classification example; min kl over 1e4 = %.3g",
                           min_kl);
  for (const auto& b : bad) detail += "; " + b;
  return {bad.empty(), detail};
}

// ------------------------------------------------------------ 3. sampler

Outcome sampler_statistics() {
  RngStream rng(2024);
  Tensor<double> mu({100000}, 1.0), ls({100000}, std::log(2.0));
  const auto s = sample_latent(mu, ls, rng, true);
  double mean = 0.0, sq = 0.0;
  for (double z : s.z.values()) mean += z;
  mean /= 1e5;
  for (double z : s.z.values()) sq += (z - mean) * (z - mean);
  const double sd = std::sqrt(sq / (1e5 - 1));
  return {std::abs(mean - 1.0) <= 0.02 && std::abs(sd - 2.0) <= 0.03, fmt("mean %.4f, std %.4f", mean, sd)};
}

// ------------------------------------------------------------ 4-8. datasets

/// Setup runs on the real data, memoised across criteria.
class DataRuns {
 public:
  DataRuns(DataPaths paths, std::vector<std::uint64_t> seeds) : paths_(std::move(paths)), seeds_(std::move(seeds)) {}

  const std::vector<std::uint64_t>& seeds() const { return seeds_; }

  struct Run {
    MetricsReport report;
    double seconds = 0.0;
  };

  const Run& get(Setup s, std::uint64_t seed, bool augment) {
    const auto key = std::make_tuple(s, seed, augment);
    if (auto it = runs_.find(key); it != runs_.end()) return it->second;
    SetupConfig cfg;
    cfg.seed = seed;
    cfg.augment = augment;
    const auto start = Clock::now();
    auto res = run_setup(s, paths_, cfg);
    std::cerr << "  " << setup_name(s) << " seed " << seed << (augment ? " +aug" : "") << ": acc "
              << res.eval.report.accuracy << " f1 " << res.eval.report.f1 << '\n';
    return runs_[key] = {std::move(res.eval.report), seconds_since(start)};
  }

  struct Mean {
    double accuracy = 0, f1 = 0, fpr = 0, fnr = 0, seconds = 0;
  };

  Mean mean(Setup s, bool augment) {
    Mean m;
    for (auto seed : seeds_) {
      const auto& r = get(s, seed, augment);
      m.accuracy += r.report.accuracy;
      m.f1 += r.report.f1;
      m.fpr += r.report.fpr;
      m.fnr += r.report.fnr;
      m.seconds += r.seconds;
    }
    const double n = static_cast<double>(seeds_.size());
    m.accuracy /= n;
    m.f1 /= n;
    m.fpr /= n;
    m.fnr /= n;
    return m;
  }

 private:
  DataPaths paths_;
  std::vector<std::uint64_t> seeds_;
  std::map<std::tuple<Setup, std::uint64_t, bool>, Run> runs_;
};

/// Runs `body`, turning a missing dataset into a failed outcome.
Outcome with_data(const std::function<Outcome()>& body) {
  try {
    return body();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::MissingFile) return {false, std::string("blocked: ") + e.what()};
    throw;
  }
}

// ------------------------------------------------------------ 9. ablation

SetupConfig toy_setup_config(std::uint64_t seed) {
  SetupConfig c;
  c.seed = seed;
  c.train.epochs = 3;
  c.train.patience = 0;
  c.generator_train.epochs = 2;
  c.s3_test_counts = {{Label::Ham, 8}, {Label::Spam, 3}, {Label::Smishing, 3}};
  c.s1_subsample = 100;
  c.s2_train_subsample = 80;
  c.s2_test_subsample = 30;
  auto m = ModelConfig::smishing();
  m.embed_dim = m.encoder_lstm_dim = m.pre_latent_dense_dim = m.decoder_lstm_dim = 8;
  m.decoder_bilstm_dim = 4;
  c.model = m;
  auto g = ModelConfig::generation();
  g.embed_dim = g.encoder_lstm_dim = g.pre_latent_dense_dim = g.gen_decoder_lstm_dim = 8;
  g.latent_dim = 4;
  c.generator_model = g;
  auto p = PreprocessConfig::messages();
  p.word_seq_len = 16;
  p.char_seq_len = 80;
  c.prep = p;
  return c;
}

Outcome ablation_harness() {
  std::vector<std::string> bad;
  for (const auto& v : ablation_variants()) {
    std::istringstream ini("[smishing]\nvae_mode = " + std::string(vae_mode_name(v.vae_mode)) +
                           "\nuse_char = " + (v.use_char ? "true" : "false") +
                           "\nuse_bilstm = " + (v.use_bilstm ? "true" : "false") +
                           "\n[setup]\naugment = " + (v.augment ? "true" : "false") + "\n");
    const auto cfg = parse_config(ini);
    if (!(cfg.smishing == v.apply(ModelConfig::smishing())) || cfg.setup_defaults.augment != v.augment) {
      bad.push_back(v.name + " not reproducible from config");
    }
    CopsModel<float> probe(cfg.smishing, 1);
    (void)probe;
  }
  TempDir dir;
  write_toy_data_dir(dir.path());
  const auto cfg = toy_setup_config(7);
  const auto split = setup_split(Setup::S3, DataPaths::from_dir(dir.path()), cfg);
  const auto rows = run_ablation(split.train, split.test, cfg);
  std::ostringstream csv;
  write_ablation_csv(csv, rows);
  const std::string text = csv.str();
  const auto lines = std::count(text.begin(), text.end(), '\n');
  if (rows.size() != 6 || lines != 7) bad.push_back(fmt("%zu rows, %ld csv lines", rows.size(), static_cast<long>(lines)));
  bool monotone = true;
  std::string f1s;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i && rows[i].report.f1 < rows[i - 1].report.f1) monotone = false;
    f1s += (i ? " " : "") + fmt("%.3f", rows[i].report.f1);
  }
  std::string detail = fmt("6 variants from config; toy-split F1 [%s]; monotone %s (not binding)", f1s.c_str(),
                           monotone ? "yes" : "no");
  for (const auto& b : bad) detail += "; " + b;
  return {bad.empty(), detail};
}

// ------------------------------------------------------------ 10. footprint

Outcome footprint_and_latency(const std::optional<DataPaths>& paths) {
  const auto bundle = full_size_bundle();
  const auto bytes = serialize_bundle(bundle).size();
  const auto detector = std::make_shared<const Detector>(Detector::from_bundle(bundle));

  std::vector<std::string> texts;
  std::string source = "toy test split";
  if (paths) {
    try {
      const auto split = setup_split(Setup::S3, *paths, SetupConfig{});
      for (const auto& r : split.test) texts.push_back(r.text);
      source = "S3 test split";
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MissingFile) throw;
    }
  }
  if (texts.empty()) {
    const auto toy = stratified_split(toy_messages(400, 40, 40, 17), toy_setup_config(7).s3_test_counts, 7);
    for (const auto& r : toy.test) texts.push_back(r.text);
  }
  std::size_t chars = 0;
  const auto start = Clock::now();
  for (const auto& t : texts) {
    chars += t.size();
    detector->detect(t);
  }
  const double ms_per_char = seconds_since(start) * 1000.0 / static_cast<double>(chars);

  std::string message = "URGENT: your bank account has been suspended. Verify your identity within 24 hours at ";
  message += "http://secure-bank.example/verify?id=4471 or call 08001234567 to avoid closure";
  message.resize(160, '.');
  DetectionService svc({.port = 0});
  const int port = svc.start([&] { return *detector; });
  require(!svc.wait_loaded(), ErrorCode::InvalidArgument, "service failed to load");
  httplib::Client cli("127.0.0.1", port);
  cli.set_keep_alive(true);
  cli.set_tcp_nodelay(true);
  const std::string body = nlohmann::json{{"text", message}}.dump();
  std::vector<double> lat;
  for (int i = 0; i < 100; ++i) {
    const auto t0 = Clock::now();
    auto res = cli.Post("/v1/detect", body, "application/json");
    lat.push_back(seconds_since(t0) * 1000.0);
    require(res && res->status == 200, ErrorCode::InvalidArgument, "detect request failed");
  }
  svc.stop();
  std::sort(lat.begin(), lat.end());
  const double p95 = lat[94];
  return {bytes <= 5u * 1024 * 1024 && ms_per_char <= 1.0 && p95 <= 50.0,
          fmt("bundle %.2f MB; %.4f ms/char over %zu msgs (%s); serve p95 %.2f ms", bytes / 1048576.0, ms_per_char,
              texts.size(), source.c_str(), p95)};
}

// ------------------------------------------------------------ 11. determinism

std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) out[e.path().filename().string()] = read_file(e.path());
  return out;
}

Outcome determinism() {
  TempDir dir;
  write_toy_data_dir(dir.path() / "data");
  const auto paths = DataPaths::from_dir(dir.path() / "data");
  std::vector<std::string> bad;
  std::size_t files = 0;
  for (Setup s : {Setup::S3, Setup::S1}) {
    auto cfg = toy_setup_config(11);
    if (s == Setup::S1) {
      cfg.model = ModelConfig::url_phishing();
      cfg.model->embed_dim = cfg.model->encoder_lstm_dim = cfg.model->pre_latent_dense_dim = 8;
      cfg.model->decoder_lstm_dim = 8;
      cfg.model->decoder_bilstm_dim = 4;
      cfg.prep = PreprocessConfig::urls();
    }
    std::vector<std::map<std::string, std::string>> snaps;
    for (int rep = 0; rep < 2; ++rep) {
      const auto res = run_setup(s, paths, cfg);
      const auto out = dir.path() / (std::string(setup_name(s)) + "_" + std::to_string(rep));
      write_artifacts(res, out);
      std::ofstream(out / "model.cops", std::ios::binary) << serialize_bundle(make_bundle(res.classifier));
      snaps.push_back(snapshot(out));
    }
    files += snaps[0].size();
    for (const auto& [name, content] : snaps[0]) {
      if (snaps[1][name] != content) bad.push_back(std::string(setup_name(s)) + "/" + name);
    }
  }
  std::string detail = fmt("%zu artifact files across S3 (with generator) and S1, two runs each", files);
  for (const auto& b : bad) detail += "; differs: " + b;
  return {bad.empty(), detail};
}

// ------------------------------------------------------------ 12. URL expansion

Outcome url_expansion() {
  RedirectStub stub;
  std::vector<std::string> bad;
  std::size_t body_read = 0;
  const auto check = [&](const char* what, bool ok) {
    if (!ok) bad.emplace_back(what);
  };
  const auto direct = expand_url(stub.url("/ok"));
  check("direct", direct.status == ExpansionStatus::Final && direct.chain.size() == 1);
  const auto chain = expand_url(stub.url("/a"));
  check("chain", chain.status == ExpansionStatus::Final && chain.chain.size() == 3 && chain.final_url == stub.url("/c"));
  const auto loop = expand_url(stub.url("/x"), {.max_redirects = 10});
  check("loop", loop.status == ExpansionStatus::TooManyRedirects && loop.chain.size() == 11);
  const auto slow = expand_url(stub.url("/slow"), {.timeout = std::chrono::milliseconds(300)});
  check("timeout", slow.status == ExpansionStatus::Timeout && slow.elapsed_ms < 300.0 + 150.0);
  for (const auto* r : {&direct, &chain, &loop, &slow}) body_read += r->body_bytes_read;
  check("client body bytes", body_read == 0);
  check("server body bytes", stub.body_bytes_sent() == 0);
  std::string detail = fmt("direct/3-hop/loop(11)/timeout(%.0f ms); body bytes read %zu, sent %zu", slow.elapsed_ms,
                           body_read, stub.body_bytes_sent());
  for (const auto& b : bad) detail += "; failed: " + b;
  return {bad.empty(), detail};
}

std::vector<std::uint64_t> parse_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::istringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    if (!detail::trim(item).empty()) out.push_back(std::stoull(item));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string only, data_dir, seeds = "7,8,9";
  app.add_option("--only", only, "Comma-separated criterion numbers");
  app.add_option("--data-dir", data_dir, "Dataset directory");
  app.add_option("--seeds", seeds, "Seeds averaged for criteria 4, 5 and 8");
  CLI11_PARSE(app, argc, argv);

  const auto selected = parse_list(only);
  std::optional<DataPaths> paths;
  if (!data_dir.empty()) paths = DataPaths::from_dir(data_dir);
  else if (auto env = DataPaths::from_env()) paths = *env;
  else paths = DataPaths::from_dir("data");
  DataRuns runs(*paths, parse_list(seeds));
  const auto first_seed = runs.seeds().front();

  const std::vector<std::tuple<int, const char*, std::function<Outcome()>>> criteria{
      {1, "gradient gate", gradient_gate},
      {2, "loss identities", loss_identities},
      {3, "sampler statistics", sampler_statistics},
      {4, "S3 accuracy/F1", [&] {
         return with_data([&] {
           const auto m = runs.mean(Setup::S3, true);
           return Outcome{m.accuracy >= 0.955 && m.f1 >= 0.89 && m.seconds < 30 * 60,
                          fmt("mean acc %.4f (>= 0.955), F1 %.4f (>= 0.89) over %zu seeds, %.0f s", m.accuracy, m.f1,
                              runs.seeds().size(), m.seconds)};
         });
       }},
      {5, "S3 FPR/FNR", [&] {
         return with_data([&] {
           const auto m = runs.mean(Setup::S3, true);
           return Outcome{m.fpr <= 0.03 && m.fnr <= 0.08,
                          fmt("mean FPR %.4f (<= 0.03), FNR %.4f (<= 0.08)", m.fpr, m.fnr)};
         });
       }},
      {6, "S1 URL accuracy/F1", [&] {
         return with_data([&] {
           const auto& r = runs.get(Setup::S1, first_seed, false);
           return Outcome{r.report.accuracy >= 0.97 && r.report.f1 >= 0.95 && r.seconds < 60 * 60,
                          fmt("acc %.4f (>= 0.97), F1 %.4f (>= 0.95), %.0f s", r.report.accuracy, r.report.f1,
                              r.seconds)};
         });
       }},
      {7, "S2 degradation", [&] {
         return with_data([&] {
           const auto& s2 = runs.get(Setup::S2, first_seed, false);
           const auto& s1 = runs.get(Setup::S1, first_seed, false);
           return Outcome{s2.report.accuracy < s1.report.accuracy && s2.report.f1 >= 0.80,
                          fmt("S2 acc %.4f < S1 acc %.4f; S2 F1 %.4f (>= 0.80)", s2.report.accuracy,
                              s1.report.accuracy, s2.report.f1)};
         });
       }},
      {8, "augmentation effect", [&] {
         return with_data([&] {
           const auto with = runs.mean(Setup::S3, true), without = runs.mean(Setup::S3, false);
           const double gain = (with.f1 - without.f1) * 100.0;
           return Outcome{gain >= 0.5, fmt("F1 %.4f with vs %.4f without: %+.2f pp (>= +0.5)", with.f1, without.f1,
                                           gain)};
         });
       }},
      {9, "ablation harness", ablation_harness},
      {10, "footprint and latency", [&] { return footprint_and_latency(paths); }},
      {11, "determinism", determinism},
      {12, "URL expansion", url_expansion},
  };

  int failed = 0;
  for (const auto& [id, name, run] : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), id) == selected.end()) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << "  " << name << ": " << o.detail << std::endl;
  }
  return failed ? 1 : 0;
}
