#include <gtest/gtest.h>

#include "cops/setups.hpp"
#include "support/temp_dir.hpp"
#include "support/toy_corpus.hpp"

using namespace cops;
using namespace cops::testing;

namespace {

SetupConfig quick(Task task) {
  SetupConfig c;
  c.train.epochs = 2;
  c.train.patience = 0;
  c.generator_train.epochs = 1;
  c.s3_test_counts = {{Label::Ham, 8}, {Label::Spam, 3}, {Label::Smishing, 3}};
  c.s1_subsample = 100;
  c.s2_train_subsample = 80;
  c.s2_test_subsample = 30;
  auto m = task == Task::Smishing ? ModelConfig::smishing() : ModelConfig::url_phishing();
  m.embed_dim = 8;
  m.encoder_lstm_dim = 8;
  m.pre_latent_dense_dim = 8;
  m.decoder_lstm_dim = 8;
  m.decoder_bilstm_dim = 4;
  c.model = m;
  auto g = ModelConfig::generation();
  g.embed_dim = 8;
  g.encoder_lstm_dim = 8;
  g.pre_latent_dense_dim = 8;
  g.latent_dim = 4;
  g.gen_decoder_lstm_dim = 8;
  c.generator_model = g;
  auto p = task == Task::Smishing ? PreprocessConfig::messages() : PreprocessConfig::urls();
  p.word_seq_len = 16;
  p.char_seq_len = 80;
  c.prep = p;
  return c;
}

}  // namespace

TEST(Setups, NamesAndPaths) {
  EXPECT_EQ(parse_setup("S3"), Setup::S3);
  EXPECT_THROW(parse_setup("S5"), Error);
  auto paths = DataPaths::from_dir("/nonexistent");
  EXPECT_EQ(paths.smishing, std::filesystem::path("/nonexistent/smishing.csv"));
  try {
    paths.require_present(Setup::S4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingFile);
    EXPECT_NE(std::string(e.what()).find("/nonexistent/smishing.csv"), std::string::npos);
  }
}

TEST(Setups, S3SplitAugmentationAndArtifacts) {
  TempDir dir;
  write_toy_data_dir(dir.path() / "data");
  const auto paths = DataPaths::from_dir(dir.path() / "data");
  const auto cfg = quick(Task::Smishing);
  auto res = run_setup(Setup::S3, paths, cfg);
  EXPECT_EQ(res.test_counts, cfg.s3_test_counts);
  // Train split holds 32/9/9; targets are doubled.
  EXPECT_EQ(res.train_counts[Label::Ham], 32u);
  EXPECT_EQ(res.train_counts[Label::Spam], 18u);
  EXPECT_EQ(res.train_counts[Label::Smishing], 18u);
  EXPECT_EQ(res.synthetic_added, 18u);
  EXPECT_EQ(res.eval.report.confusion.total(), 14u);
  EXPECT_EQ(res.eval.latent.dim(1), 2u);
  EXPECT_EQ(res.eval.report.positive, (std::set<Label>{Label::Spam, Label::Smishing}));

  const auto out = artifact_dir(dir.path() / "out", Setup::S3, cfg.seed);
  write_artifacts(res, out);
  for (const char* f : {"report.json", "confusion.csv", "pr_curve.csv", "latent.csv", "train_log.jsonl",
                        "generator_log.jsonl"}) {
    EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
  }
  auto report = nlohmann::json::parse(read_file(out / "report.json"));
  EXPECT_EQ(report["setup"], "S3");
  EXPECT_EQ(report["metrics"]["confusion"]["counts"].size(), 3u);
  const auto latent = read_file(out / "latent.csv");
  EXPECT_EQ(std::count(latent.begin(), latent.end(), '\n'), 15);
}

TEST(Setups, SameSeedByteIdenticalArtifacts) {
  TempDir dir;
  write_toy_data_dir(dir.path() / "data");
  const auto paths = DataPaths::from_dir(dir.path() / "data");
  const auto cfg = quick(Task::Smishing);
  write_artifacts(run_setup(Setup::S3, paths, cfg), dir.path() / "a");
  write_artifacts(run_setup(Setup::S3, paths, cfg), dir.path() / "b");
  for (const char* f : {"report.json", "confusion.csv", "pr_curve.csv", "latent.csv", "train_log.jsonl"}) {
    EXPECT_EQ(read_file(dir.path() / "a" / f), read_file(dir.path() / "b" / f)) << f;
  }
}

TEST(Setups, UrlSetupsAndExternalTest) {
  TempDir dir;
  write_toy_data_dir(dir.path() / "data");
  const auto paths = DataPaths::from_dir(dir.path() / "data");
  auto s1 = run_setup(Setup::S1, paths, quick(Task::UrlPhishing));
  EXPECT_EQ(s1.eval.report.confusion.total(), 10u);
  EXPECT_EQ(s1.synthetic_added, 0u);
  auto s2 = run_setup(Setup::S2, paths, quick(Task::UrlPhishing));
  EXPECT_EQ(s2.eval.report.confusion.total(), 30u);
  EXPECT_EQ(s2.test_counts[Label::Phishing], 15u);

  auto cfg = quick(Task::Smishing);
  cfg.augment = false;
  auto s4 = run_setup(Setup::S4, paths, cfg);
  EXPECT_EQ(s4.eval.report.confusion.total(), 28u);
  EXPECT_EQ(s4.train_counts[Label::Ham], 40u);
}

TEST(Setups, AblationSixRows) {
  auto train = toy_messages(30, 8, 8, 61);
  auto test = toy_messages(10, 4, 4, 62);
  auto rows = run_ablation(train, test, quick(Task::Smishing));
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows.front().variant.name, "lstm");
  EXPECT_EQ(rows.back().variant.name, "+generation");
  EXPECT_TRUE(rows.back().variant.augment);
  std::ostringstream out;
  write_ablation_csv(out, rows);
  const auto text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 7);
}
