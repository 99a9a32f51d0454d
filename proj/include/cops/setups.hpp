#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cops/csv.hpp"
#include "cops/generate.hpp"
#include "cops/metrics.hpp"
#include "cops/train.hpp"

namespace cops {

enum class Setup { S1, S2, S3, S4 };

inline std::string_view setup_name(Setup s) {
  switch (s) {
    case Setup::S1: return "S1";
    case Setup::S2: return "S2";
    case Setup::S3: return "S3";
    case Setup::S4: return "S4";
  }
  return "?";
}

inline Setup parse_setup(std::string_view s) {
  if (s == "S1" || s == "s1") return Setup::S1;
  if (s == "S2" || s == "s2") return Setup::S2;
  if (s == "S3" || s == "s3") return Setup::S3;
  if (s == "S4" || s == "s4") return Setup::S4;
  fail(ErrorCode::InvalidArgument, "unknown setup '" + std::string(s) + "' (expected S1..S4)");
}

inline Task setup_task(Setup s) { return s == Setup::S1 || s == Setup::S2 ? Task::UrlPhishing : Task::Smishing; }

/// Dataset file locations. `from_dir` uses the standard file names.
struct DataPaths {
  std::filesystem::path smishing;
  std::filesystem::path sms_spam;
  std::filesystem::path url_dataset_1;
  std::filesystem::path url_dataset_2;
  std::filesystem::path url_dataset_3;

  static DataPaths from_dir(const std::filesystem::path& dir) {
    return {dir / "smishing.csv", dir / "sms_spam_kaggle.csv", dir / "url_dataset_1.csv", dir / "url_dataset_2.csv",
            dir / "url_dataset_3.csv"};
  }

  /// COPS_DATA_DIR, when set.
  static std::optional<DataPaths> from_env() {
    const char* dir = std::getenv("COPS_DATA_DIR");
    if (!dir || !*dir) return std::nullopt;
    return from_dir(dir);
  }

  std::vector<std::filesystem::path> required_for(Setup s) const {
    switch (s) {
      case Setup::S1:
      case Setup::S2: return {url_dataset_1, url_dataset_2, url_dataset_3};
      case Setup::S3: return {smishing};
      case Setup::S4: return {smishing, sms_spam};
    }
    return {};
  }

  /// Throws MissingFile naming the first absent path.
  void require_present(Setup s) const {
    for (const auto& p : required_for(s)) {
      require(std::filesystem::is_regular_file(p), ErrorCode::MissingFile,
              "dataset missing for " + std::string(setup_name(s)) + ": " + p.string());
    }
  }
};

struct SetupConfig {
  std::uint64_t seed = 7;
  /// Data splits and subsamples; kept apart from `seed` so seed averaging
  /// varies only initialisation and shuffling.
  std::uint64_t split_seed = 7;
  TrainConfig train;
  TrainConfig generator_train;
  bool augment = true;
  /// S1 pooled subsample size and its test fraction.
  std::size_t s1_subsample = 50000;
  double s1_test_fraction = 0.1;
  /// S2 train (sources 1-2) and held-out (source 3) subsample sizes.
  std::size_t s2_train_subsample = 50000;
  std::size_t s2_test_subsample = 20000;
  /// S3 per-class test counts.
  LabelCounts s3_test_counts{{Label::Ham, 516}, {Label::Spam, 35}, {Label::Smishing, 46}};
  std::optional<ModelConfig> model;
  std::optional<ModelConfig> generator_model;
  std::optional<PreprocessConfig> prep;
};

/// Classifier outputs on a test set.
struct Evaluation {
  MetricsReport report;
  std::vector<Label> predicted;
  std::vector<Label> actual;
  /// Summed probability of the positive labels per record.
  std::vector<double> scores;
  /// Encoder means [N,L]; empty without an encoder.
  Tensor<float> latent;
};

inline Evaluation evaluate_on(const Classifier& c, std::span<const LabeledRecord> test) {
  require(!test.empty(), ErrorCode::EmptyDataset, "empty test set");
  Evaluation ev;
  const auto items = c.featurizer.encode_all(test);
  const auto probs = c.predict_proba(items);
  ev.predicted = c.predict(probs);
  for (const auto& r : test) ev.actual.push_back(r.label);
  const auto positive = default_positive(c.task());
  const auto labels = task_labels(c.task());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < labels.size(); ++k) {
      if (positive.contains(labels[k])) s += static_cast<double>(probs.data()[i * probs.cols() + k]);
    }
    ev.scores.push_back(std::clamp(s, 0.0, 1.0));
  }
  ev.report = binary_metrics(ev.predicted, ev.actual, positive);
  ev.report.pr_curve = pr_curve(ev.scores, ev.actual, positive);
  ev.latent = c.latent_means(items);
  return ev;
}

struct SetupResult {
  Setup setup = Setup::S3;
  std::uint64_t seed = 0;
  Evaluation eval;
  Classifier classifier;
  LabelCounts train_counts;
  LabelCounts test_counts;
  std::size_t synthetic_added = 0;
  std::vector<nlohmann::ordered_json> generator_history;
};

namespace detail {

inline std::vector<LabeledRecord> load_smishing_records(const std::filesystem::path& p) {
  return load_smishing_csv(p).records;
}

inline std::vector<LabeledRecord> load_url_records(const DataPaths& paths, std::initializer_list<int> which) {
  std::vector<LabeledRecord> out;
  const std::filesystem::path files[] = {paths.url_dataset_1, paths.url_dataset_2, paths.url_dataset_3};
  for (int i : which) {
    auto rep = load_url_csv(files[i], url_source_id(static_cast<UrlSource>(i)));
    out.insert(out.end(), rep.records.begin(), rep.records.end());
  }
  return out;
}

/// Keeps only labels of the smishing task the external corpus shares (HAM, SPAM).
inline std::vector<LabeledRecord> smishing_task_only(std::vector<LabeledRecord> records) {
  std::erase_if(records, [](const LabeledRecord& r) { return task_of(r.label) != Task::Smishing; });
  return records;
}

}  // namespace detail

/// Trains the target-class generator on `train` and returns the augmented
/// set (input records first) together with the generator's history.
inline std::pair<std::vector<LabeledRecord>, std::vector<nlohmann::ordered_json>> augment_with_generator(
    std::span<const LabeledRecord> train, const SetupConfig& cfg) {
  const AugmentOptions opts{.seed = cfg.seed};
  std::vector<LabeledRecord> targets;
  for (const auto& r : train) {
    if (opts.target_classes.contains(r.label)) targets.push_back(r);
  }
  require(!targets.empty(), ErrorCode::EmptyClass, "no SPAM/SMISHING records to train the generator on");
  TrainConfig gcfg = cfg.generator_train;
  gcfg.seed = cfg.seed;
  gcfg.split_seed = cfg.split_seed;
  const auto gen = train_generator(targets, gcfg, cfg.generator_model.value_or(ModelConfig::generation()),
                                   cfg.prep.value_or(PreprocessConfig::messages()));
  return {augment_dataset(train, gen, opts), gen.history};
}

/// Trains a classifier on `train` (vocabulary fit on the non-synthetic
/// records) and evaluates it on `test`.
inline SetupResult train_and_evaluate(Setup which, std::span<const LabeledRecord> train,
                                      std::span<const LabeledRecord> test, const SetupConfig& cfg) {
  const Task task = setup_task(which);
  SetupResult res;
  res.setup = which;
  res.seed = cfg.seed;
  res.test_counts = count_labels(test);
  const auto prep = cfg.prep.value_or(task == Task::Smishing ? PreprocessConfig::messages() : PreprocessConfig::urls());
  const auto mcfg = cfg.model.value_or(task == Task::Smishing ? ModelConfig::smishing() : ModelConfig::url_phishing());
  require(mcfg.label_task() == task && !mcfg.is_generator(), ErrorCode::WrongTask,
          std::string(setup_name(which)) + " needs a " + std::string(task_name(task)) + " classifier config");

  std::vector<LabeledRecord> fit_set(train.begin(), train.end());
  std::erase_if(fit_set, [](const LabeledRecord& r) { return r.synthetic; });
  const auto featurizer = Featurizer::fit(fit_set, prep);

  std::vector<LabeledRecord> data(train.begin(), train.end());
  if (task == Task::Smishing && cfg.augment) {
    auto [augmented, history] = augment_with_generator(data, cfg);
    res.synthetic_added = augmented.size() - data.size();
    res.generator_history = std::move(history);
    data = std::move(augmented);
  }
  res.train_counts = count_labels(data);
  TrainConfig tcfg = cfg.train;
  tcfg.seed = cfg.seed;
  tcfg.split_seed = cfg.split_seed;
  res.classifier = train_classifier(data, tcfg, mcfg, compute_class_weights(res.train_counts), prep, &featurizer);
  res.eval = evaluate_on(res.classifier, test);
  return res;
}

/// Loads the setup's data and builds its train/test split.
inline DatasetSplit setup_split(Setup which, const DataPaths& paths, const SetupConfig& cfg) {
  paths.require_present(which);
  DatasetSplit split;
  split.seed = cfg.split_seed;
  switch (which) {
    case Setup::S1: {
      auto pooled = detail::load_url_records(paths, {0, 1, 2});
      pooled = stratified_subsample(pooled, cfg.s1_subsample, cfg.split_seed);
      return stratified_split(pooled, cfg.s1_test_fraction, cfg.split_seed);
    }
    case Setup::S2:
      split.train = stratified_subsample(detail::load_url_records(paths, {0, 1}), cfg.s2_train_subsample, cfg.split_seed);
      split.test = stratified_subsample(detail::load_url_records(paths, {2}), cfg.s2_test_subsample, cfg.split_seed);
      return split;
    case Setup::S3:
      return stratified_split(detail::load_smishing_records(paths.smishing), cfg.s3_test_counts, cfg.split_seed);
    case Setup::S4:
      split.train = detail::load_smishing_records(paths.smishing);
      split.test = detail::smishing_task_only(detail::load_smishing_records(paths.sms_spam));
      return split;
  }
  fail(ErrorCode::InvalidArgument, "unknown setup");
}

/// Loads the setup's data, builds its train/test split and runs it.
inline SetupResult run_setup(Setup which, const DataPaths& paths, const SetupConfig& cfg) {
  const auto split = setup_split(which, paths, cfg);
  return train_and_evaluate(which, split.train, split.test, cfg);
}

inline nlohmann::ordered_json counts_json(const LabelCounts& counts) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [l, n] : counts) j[std::string(label_name(l))] = n;
  return j;
}

inline nlohmann::ordered_json report_json(const SetupResult& r) {
  nlohmann::ordered_json j;
  j["setup"] = setup_name(r.setup);
  j["task"] = task_name(setup_task(r.setup));
  j["seed"] = r.seed;
  j["train_counts"] = counts_json(r.train_counts);
  j["test_counts"] = counts_json(r.test_counts);
  j["synthetic_added"] = r.synthetic_added;
  j["best_epoch"] = r.classifier.best_epoch;
  j["metrics"] = to_json(r.eval.report);
  return j;
}

/// Default artifact directory: <root>/<setup>_seed<seed>.
inline std::filesystem::path artifact_dir(const std::filesystem::path& root, Setup s, std::uint64_t seed) {
  return root / (std::string(setup_name(s)) + "_seed" + std::to_string(seed));
}

/// report.json, confusion.csv, pr_curve.csv, latent.csv, train_log.jsonl
/// (and generator_log.jsonl when a generator was trained).
inline void write_artifacts(const SetupResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    require(f.good(), ErrorCode::MissingFile, "cannot write " + (dir / name).string());
    return f;
  };
  open("report.json") << report_json(r).dump(2) << '\n';

  auto conf = open("confusion.csv");
  const auto labels = task_labels(r.eval.report.confusion.task);
  std::vector<std::string> header{"actual\\predicted"};
  for (Label l : labels) header.emplace_back(label_name(l));
  csv::write_row(conf, header);
  for (Label a : labels) {
    std::vector<std::string> row{std::string(label_name(a))};
    for (Label p : labels) row.push_back(std::to_string(r.eval.report.confusion.at(a, p)));
    csv::write_row(conf, row);
  }

  auto pr = open("pr_curve.csv");
  csv::write_row(pr, {"threshold", "precision", "recall"});
  for (const auto& p : r.eval.report.pr_curve) {
    csv::write_row(pr, {csv::number(p.threshold), csv::number(p.precision), csv::number(p.recall)});
  }

  auto lat = open("latent.csv");
  const std::size_t dims = r.eval.latent.rank() == 2 ? r.eval.latent.cols() : 0;
  std::vector<std::string> lh;
  for (std::size_t d = 0; d < dims; ++d) lh.push_back("mu" + std::to_string(d));
  lh.emplace_back("actual");
  lh.emplace_back("predicted");
  csv::write_row(lat, lh);
  if (dims > 0) {
    for (std::size_t i = 0; i < r.eval.actual.size(); ++i) {
      std::vector<std::string> row;
      for (std::size_t d = 0; d < dims; ++d) row.push_back(csv::number(r.eval.latent.data()[i * dims + d]));
      row.emplace_back(label_name(r.eval.actual[i]));
      row.emplace_back(label_name(r.eval.predicted[i]));
      csv::write_row(lat, row);
    }
  }

  auto log = open("train_log.jsonl");
  for (const auto& row : r.classifier.history) log << row.dump() << '\n';
  if (!r.generator_history.empty()) {
    auto glog = open("generator_log.jsonl");
    for (const auto& row : r.generator_history) glog << row.dump() << '\n';
  }
}

/// One ablation configuration, applied on top of the smishing defaults.
struct AblationVariant {
  std::string name;
  VaeMode vae_mode = VaeMode::None;
  bool use_char = false;
  bool use_bilstm = false;
  bool augment = false;

  ModelConfig apply(ModelConfig base) const {
    base.vae_mode = vae_mode;
    base.use_char = use_char;
    base.use_bilstm = use_bilstm;
    return base;
  }
};

/// basic LSTM, +char embedding, +BiLSTM, +VAE, +beta-VAE, +generation.
inline std::vector<AblationVariant> ablation_variants() {
  return {{"lstm", VaeMode::None, false, false, false},
          {"+char_embedding", VaeMode::None, true, false, false},
          {"+bilstm", VaeMode::None, true, true, false},
          {"+vae", VaeMode::Vae, true, true, false},
          {"+beta_vae", VaeMode::Beta, true, true, false},
          {"+generation", VaeMode::Beta, true, true, true}};
}

struct AblationRow {
  AblationVariant variant;
  MetricsReport report;
};

/// Trains and evaluates every variant on the same split. All variants share
/// `cfg` apart from the model switches and augmentation.
inline std::vector<AblationRow> run_ablation(std::span<const LabeledRecord> train,
                                             std::span<const LabeledRecord> test, const SetupConfig& cfg,
                                             const std::function<void(const AblationRow&)>& on_row = nullptr) {
  std::vector<AblationRow> rows;
  for (const auto& v : ablation_variants()) {
    SetupConfig c = cfg;
    c.model = v.apply(cfg.model.value_or(ModelConfig::smishing()));
    c.augment = v.augment;
    auto res = train_and_evaluate(Setup::S3, train, test, c);
    rows.push_back({v, std::move(res.eval.report)});
    if (on_row) on_row(rows.back());
  }
  return rows;
}

inline void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows) {
  csv::write_row(out, {"variant", "vae_mode", "use_char", "use_bilstm", "augment", "accuracy", "precision", "recall",
                       "f1", "fpr", "fnr"});
  for (const auto& r : rows) {
    const auto& m = r.report;
    csv::write_row(out, {r.variant.name, std::string(vae_mode_name(r.variant.vae_mode)), r.variant.use_char ? "1" : "0",
                         r.variant.use_bilstm ? "1" : "0", r.variant.augment ? "1" : "0", csv::number(m.accuracy),
                         csv::number(m.precision), csv::number(m.recall), csv::number(m.f1), csv::number(m.fpr),
                         csv::number(m.fnr)});
  }
}

}  // namespace cops
