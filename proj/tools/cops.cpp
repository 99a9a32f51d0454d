// cops: command-line front end for training, evaluation, detection,
// generation, URL expansion, grid search and ablation.
//
// Exit status: 0 success, 1 library failure, 2 usage error or missing file.
// Failures print one JSON object {"error": code, "message": text} on stderr.

#include <csignal>
#include <fstream>
#include <iostream>
#include <numeric>

#include <pthread.h>

#include <CLI11.hpp>

#include "cops/cops.hpp"

namespace fs = std::filesystem;
using namespace cops;

namespace {

struct Globals {
  std::string config;
  std::string data_dir;
  bool verbose = false;
};

CopsConfig load(const Globals& g) {
  CopsConfig c = g.config.empty() ? CopsConfig{} : load_config(g.config);
  if (!g.data_dir.empty()) c.data_dir = fs::path(g.data_dir);
  return c;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  require(f.good(), ErrorCode::MissingFile, "cannot write " + path.string());
  return f;
}

void write_jsonl(const fs::path& path, std::span<const nlohmann::ordered_json> rows) {
  auto f = open_out(path);
  for (const auto& r : rows) f << r.dump() << '\n';
}

/// Sibling path: model.cops -> model.<suffix>.
fs::path sibling(fs::path p, const std::string& suffix) { return p.replace_extension(suffix); }

void print(const nlohmann::ordered_json& j) { std::cout << j.dump() << '\n' << std::flush; }

TrainConfig with_progress(TrainConfig t, const Globals& g, const char* what) {
  if (g.verbose) {
    t.on_epoch = [what](const nlohmann::ordered_json& row) {
      std::cerr << what << ' ' << row.dump() << '\n';
    };
  }
  return t;
}

Setup default_setup(const std::string& task) { return task == "url" ? Setup::S1 : Setup::S3; }

std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(std::move(line));
  }
  return out;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string task;
  std::string setup;
  std::string out;
  std::uint64_t seed = 7;
  bool no_augment = false;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  const auto cfg_file = load(g);
  const Setup setup = a.setup.empty() ? default_setup(a.task) : parse_setup(a.setup);
  const Task task = a.task == "url" ? Task::UrlPhishing : Task::Smishing;
  require(setup_task(setup) == task, ErrorCode::WrongTask,
          "setup " + std::string(setup_name(setup)) + " does not train the " + a.task + " task");
  auto cfg = cfg_file.setup_config(setup, a.seed);
  if (a.no_augment) cfg.augment = false;
  const auto split = setup_split(setup, cfg_file.data_paths(), cfg);
  const fs::path out(a.out);

  if (a.task == "generation") {
    std::vector<LabeledRecord> targets;
    for (const auto& r : split.train) {
      if (AugmentOptions{}.target_classes.contains(r.label)) targets.push_back(r);
    }
    auto gcfg = with_progress(cfg.generator_train, g, "generator");
    gcfg.seed = a.seed;
    gcfg.split_seed = cfg.split_seed;
    const auto gen = train_generator(targets, gcfg, cfg_file.generation, cfg_file.smishing_prep);
    const auto bundle = make_bundle(gen);
    save_model(bundle, out);
    write_jsonl(sibling(out, ".train_log.jsonl"), gen.history);
    print({{"model", out.string()},
           {"kind", bundle.kind},
           {"model_version", bundle.model_version},
           {"train_records", targets.size()},
           {"best_epoch", gen.best_epoch}});
    return 0;
  }

  cfg.train = with_progress(cfg.train, g, "classifier");
  cfg.generator_train = with_progress(cfg.generator_train, g, "generator");
  const auto res = train_and_evaluate(setup, split.train, split.test, cfg);
  const auto bundle = make_bundle(res.classifier);
  save_model(bundle, out);
  write_jsonl(sibling(out, ".train_log.jsonl"), res.classifier.history);
  if (!res.generator_history.empty()) write_jsonl(sibling(out, ".generator_log.jsonl"), res.generator_history);
  auto summary = report_json(res);
  summary["model"] = out.string();
  summary["model_version"] = bundle.model_version;
  print(summary);
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string setup;
  std::vector<std::uint64_t> seeds{7};
  std::string out = "runs";
  std::string model;
  bool no_augment = false;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
  const auto cfg_file = load(g);
  const Setup setup = parse_setup(a.setup);
  const fs::path root(a.out);
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  double acc = 0.0, f1 = 0.0, fpr = 0.0, fnr = 0.0;
  const std::optional<Classifier> fixed =
      a.model.empty() ? std::nullopt : std::optional<Classifier>(classifier_from(load_model(a.model)));
  if (fixed) {
    require(fixed->task() == setup_task(setup), ErrorCode::WrongTask,
            "model task does not match setup " + std::string(setup_name(setup)));
  }
  for (const auto seed : a.seeds) {
    auto cfg = cfg_file.setup_config(setup, seed);
    if (a.no_augment) cfg.augment = false;
    SetupResult res;
    if (fixed) {
      const auto split = setup_split(setup, cfg_file.data_paths(), cfg);
      res.setup = setup;
      res.seed = seed;
      res.classifier = *fixed;
      res.train_counts = count_labels(split.train);
      res.test_counts = count_labels(split.test);
      res.eval = evaluate_on(*fixed, split.test);
    } else {
      cfg.train = with_progress(cfg.train, g, "classifier");
      cfg.generator_train = with_progress(cfg.generator_train, g, "generator");
      res = run_setup(setup, cfg_file.data_paths(), cfg);
    }
    const auto dir = artifact_dir(root, setup, seed);
    write_artifacts(res, dir);
    const auto& m = res.eval.report;
    acc += m.accuracy;
    f1 += m.f1;
    fpr += m.fpr;
    fnr += m.fnr;
    runs.push_back({{"seed", seed},
                    {"dir", dir.string()},
                    {"accuracy", m.accuracy},
                    {"f1", m.f1},
                    {"fpr", m.fpr},
                    {"fnr", m.fnr}});
  }
  const double n = static_cast<double>(a.seeds.size());
  nlohmann::ordered_json summary{{"setup", setup_name(setup)},
                                 {"runs", runs},
                                 {"mean", {{"accuracy", acc / n}, {"f1", f1 / n}, {"fpr", fpr / n}, {"fnr", fnr / n}}}};
  open_out(root / (std::string(setup_name(setup)) + "_summary.json")) << summary.dump(2) << '\n';
  print(summary);
  return 0;
}

// ---------------------------------------------------------------- detect

struct DetectArgs {
  std::string model;
  std::string text;
  bool expand = false;
  int timeout_ms = 3000;
  std::string shorteners;
};

int cmd_detect(const DetectArgs& a) {
  const auto detector = Detector::load(a.model);
  Detector::Rewrite rewrite;
  if (a.expand) {
    const auto hosts = a.shorteners.empty() ? default_shorteners() : load_shorteners(a.shorteners);
    const ExpandOptions opts{.timeout = std::chrono::milliseconds(a.timeout_ms)};
    rewrite = [hosts, opts](std::string_view text) { return expand_urls_in_text(text, opts, hosts); };
  }
  std::vector<std::string> lines;
  if (!a.text.empty()) lines.push_back(a.text);
  else lines = read_lines(std::cin);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) {
      print(warning_json(i + 1, "empty input"));
      continue;
    }
    try {
      print(to_json(detector.detect(lines[i], rewrite)));
    } catch (const Error& e) {
      print(warning_json(i + 1, e.what()));
    }
  }
  return 0;
}

// ---------------------------------------------------------------- serve

struct ServeArgs {
  std::string model;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t handlers = 0;
};

int cmd_serve(const ServeArgs& a) {
  // Block termination signals in every thread; the main thread waits for them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  DetectionService svc({.host = a.host, .port = a.port, .max_handlers = a.handlers});
  const fs::path path(a.model);
  const int port = svc.start([path] { return Detector::load(path); });
  std::cerr << nlohmann::json{{"listening", a.host + ":" + std::to_string(port)}}.dump() << '\n';
  if (auto err = svc.wait_loaded()) {
    svc.stop();
    std::cerr << nlohmann::json{{"error", "ModelLoad"}, {"message", *err}}.dump() << '\n';
    return err->starts_with("MissingFile") ? 2 : 1;
  }
  std::cerr << nlohmann::json{{"status", "ready"}}.dump() << '\n';
  int sig = 0;
  sigwait(&signals, &sig);
  svc.stop();
  return 0;
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string model;
  std::string ref_file;
  std::string corpus;
  std::vector<double> alphas{0.25, 0.5, 0.75};
  bool keep_duplicates = false;
};

int cmd_generate(const GenerateArgs& a) {
  const auto gen = generator_from(load_model(a.model));
  std::ifstream in(a.ref_file);
  require(in.good(), ErrorCode::MissingFile, "cannot read " + a.ref_file);
  std::vector<LabeledRecord> records;
  for (auto& line : read_lines(in)) {
    if (!detail::trim(line).empty()) records.push_back({std::move(line), Label::Smishing, "ref", false});
  }
  const std::size_t refs = records.size();
  require(refs > 0, ErrorCode::EmptyCorpus, a.ref_file + " has no reference lines");
  if (!a.corpus.empty()) {
    const auto extra = load_smishing_csv(a.corpus).records;
    records.insert(records.end(), extra.begin(), extra.end());
  }
  const auto corpus = latent_corpus(gen, records);
  const SynthesisOptions opts{.alphas = a.alphas, .drop_duplicates = !a.keep_duplicates};
  for (std::size_t i = 0; i < refs; ++i) {
    nlohmann::ordered_json sentences = nlohmann::ordered_json::array();
    for (const auto& s : synthesize_sentence(gen, corpus, i, opts)) sentences.push_back(render_display(s));
    print({{"reference", records[i].text},
           {"neighbor", records[nearest_neighbor(corpus, i)].text},
           {"sentences", std::move(sentences)}});
  }
  return 0;
}

// ---------------------------------------------------------------- expand-url

struct ExpandArgs {
  std::vector<std::string> urls;
  std::size_t max_redirects = 10;
  int timeout_ms = 3000;
  std::size_t parallel = 8;
};

int cmd_expand(const ExpandArgs& a) {
  auto urls = a.urls;
  if (urls.empty()) urls = read_lines(std::cin);
  std::vector<std::string> valid;
  std::vector<std::size_t> at;
  for (std::size_t i = 0; i < urls.size(); ++i) {
    urls[i] = detail::trim(urls[i]);
    if (urls[i].empty()) continue;
    valid.push_back(urls[i]);
    at.push_back(i);
  }
  const ExpandOptions opts{.max_redirects = a.max_redirects, .timeout = std::chrono::milliseconds(a.timeout_ms)};
  const auto results = expand_many(valid, opts, a.parallel);
  std::size_t next = 0;
  for (std::size_t i = 0; i < urls.size(); ++i) {
    if (next < at.size() && at[next] == i) print(to_json(results[next++]));
    else print(warning_json(i + 1, "empty input"));
  }
  return 0;
}

// ---------------------------------------------------------------- gridsearch

struct GridArgs {
  std::string task = "smishing";
  std::vector<std::string> grid;
  std::string out = "gridsearch";
  std::uint64_t seed = 7;
};

int cmd_gridsearch(const Globals& g, const GridArgs& a) {
  const auto cfg_file = load(g);
  GridSpec spec;
  for (const auto& p : a.grid) spec.params.push_back(parse_grid_param(p));
  spec.validate();
  const Setup setup = default_setup(a.task);
  const Task task = setup_task(setup);
  auto cfg = cfg_file.setup_config(setup, a.seed);
  const auto split = setup_split(setup, cfg_file.data_paths(), cfg);
  TrainConfig base = cfg.train;
  base.seed = a.seed;
  const auto result = grid_search(spec, split.train, base, cfg_file.model_for(task),
                                  compute_class_weights(count_labels(split.train)), cfg_file.prep_for(task),
                                  [&](const GridRow& row) {
                                    if (g.verbose) std::cerr << "cell " << row.cell + 1 << '/' << spec.size() << '\n';
                                  });
  const fs::path root(a.out);
  {
    auto f = open_out(root / "grid.csv");
    result.write_csv(f);
  }
  const bool has_beta = std::any_of(spec.params.begin(), spec.params.end(), [](const auto& p) { return p.first == "beta"; });
  if (has_beta) {
    auto f = open_out(root / "beta_curve.csv");
    result.write_beta_curve(f);
  }
  const auto& best = result.rows.front();
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  for (const auto& [k, v] : best.params) params[k] = v;
  print({{"cells", result.rows.size()},
         {"grid", (root / "grid.csv").string()},
         {"best", {{"params", params}, {"val_acc", best.val_acc}, {"val_f1", best.val_f1}}}});
  return 0;
}

// ---------------------------------------------------------------- ablation

struct AblationArgs {
  std::string setup = "S3";
  std::uint64_t seed = 7;
  std::string out = "ablation";
};

int cmd_ablation(const Globals& g, const AblationArgs& a) {
  const auto cfg_file = load(g);
  const Setup setup = parse_setup(a.setup);
  require(setup_task(setup) == Task::Smishing, ErrorCode::WrongTask, "ablation runs on a smishing setup");
  auto cfg = cfg_file.setup_config(setup, a.seed);
  const auto split = setup_split(setup, cfg_file.data_paths(), cfg);
  const auto rows = run_ablation(split.train, split.test, cfg, [&](const AblationRow& r) {
    print({{"variant", r.variant.name}, {"accuracy", r.report.accuracy}, {"f1", r.report.f1}});
  });
  auto f = open_out(fs::path(a.out) / "ablation.csv");
  write_ablation_csv(f, rows);
  return 0;
}

int report_error(const std::string& code, const std::string& message) {
  std::cerr << nlohmann::json{{"error", code}, {"message", message}}.dump() << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"COPS smishing and URL phishing detection"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "INI configuration file");
  app.add_option("--data-dir", g.data_dir, "Dataset directory (default: [data] dir, COPS_DATA_DIR, ./data)");
  app.add_flag("-v,--verbose", g.verbose, "Per-epoch progress on stderr");

  const std::vector<std::string> setups{"S1", "S2", "S3", "S4"};

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model and write a bundle");
  t->add_option("--task", train.task, "smishing, url or generation")
      ->required()
      ->check(CLI::IsMember({"smishing", "url", "generation"}));
  t->add_option("--setup", train.setup, "Setup whose training split is used")->check(CLI::IsMember(setups));
  t->add_option("--out", train.out, "Bundle path")->required();
  t->add_option("--seed", train.seed, "Seed");
  t->add_flag("--no-augment", train.no_augment, "Skip synthetic augmentation");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Run a setup and write report artifacts");
  e->add_option("--setup", eval.setup, "S1..S4")->required()->check(CLI::IsMember(setups));
  e->add_option("--seed", eval.seeds, "Seeds (repeatable)");
  e->add_option("--out", eval.out, "Artifact root");
  e->add_option("--model", eval.model, "Evaluate this bundle instead of training");
  e->add_flag("--no-augment", eval.no_augment, "Skip synthetic augmentation");

  DetectArgs detect;
  auto* d = app.add_subcommand("detect", "Classify --text or each line of stdin");
  d->add_option("--model", detect.model, "Classifier bundle")->required();
  d->add_option("--text", detect.text, "Single input");
  d->add_flag("--expand", detect.expand, "Expand shortened URLs before classifying");
  d->add_option("--timeout-ms", detect.timeout_ms, "Expansion deadline per URL")->check(CLI::PositiveNumber);
  d->add_option("--shorteners", detect.shorteners, "Shortener host list")->check(CLI::ExistingFile);

  ServeArgs serve;
  auto* s = app.add_subcommand("serve", "Serve /v1/detect and /v1/health");
  s->add_option("--model", serve.model, "Classifier bundle")->required();
  s->add_option("--host", serve.host, "Bind address");
  s->add_option("--port", serve.port, "Port (0 picks one)")->check(CLI::Range(0, 65535));
  s->add_option("--handlers", serve.handlers, "Concurrent handlers (0 = CPU count)");

  GenerateArgs generate;
  auto* gen = app.add_subcommand("generate", "Synthesize sentences near each reference");
  gen->add_option("--model", generate.model, "Generator bundle")->required();
  gen->add_option("--ref-file", generate.ref_file, "One reference per line")->required();
  gen->add_option("--corpus", generate.corpus, "Extra neighbour pool (smishing CSV)");
  gen->add_option("--alpha", generate.alphas, "Interpolation weights (repeatable)");
  gen->add_flag("--keep-duplicates", generate.keep_duplicates, "Keep decodes equal to the reference or neighbour");

  ExpandArgs expand;
  auto* x = app.add_subcommand("expand-url", "Resolve redirect chains for --url or each line of stdin");
  x->add_option("--url", expand.urls, "URL (repeatable)");
  x->add_option("--max-redirects", expand.max_redirects, "Redirect cap");
  x->add_option("--timeout-ms", expand.timeout_ms, "Deadline per URL")->check(CLI::PositiveNumber);
  x->add_option("--parallel", expand.parallel, "URLs in flight")->check(CLI::PositiveNumber);

  GridArgs grid;
  auto* gs = app.add_subcommand("gridsearch", "Grid search on the training split");
  gs->add_option("--task", grid.task, "smishing or url")->check(CLI::IsMember({"smishing", "url"}));
  gs->add_option("--grid", grid.grid, "name=v1,v2,... (repeatable)")->required();
  gs->add_option("--out", grid.out, "Output directory");
  gs->add_option("--seed", grid.seed, "Base seed");

  AblationArgs ablation;
  auto* ab = app.add_subcommand("ablation", "Six-variant ablation on a smishing setup");
  ab->add_option("--setup", ablation.setup, "S3 or S4")->check(CLI::IsMember({"S3", "S4"}));
  ab->add_option("--seed", ablation.seed, "Seed");
  ab->add_option("--out", ablation.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*t) return cmd_train(g, train);
    if (*e) return cmd_eval(g, eval);
    if (*d) return cmd_detect(detect);
    if (*s) return cmd_serve(serve);
    if (*gen) return cmd_generate(generate);
    if (*x) return cmd_expand(expand);
    if (*gs) return cmd_gridsearch(g, grid);
    if (*ab) return cmd_ablation(g, ablation);
  } catch (const Error& err) {
    report_error(std::string(to_string(err.code())), err.what());
    return err.code() == ErrorCode::MissingFile ? 2 : 1;
  } catch (const std::exception& err) {
    return report_error("Internal", err.what());
  }
  return 0;
}
