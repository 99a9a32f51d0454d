#include <gtest/gtest.h>

#include <sstream>

#include "cops/gridsearch.hpp"
#include "support/toy_corpus.hpp"

using namespace cops;
using cops::testing::toy_messages;

namespace {

ModelConfig tiny() {
  auto c = ModelConfig::smishing();
  c.embed_dim = 8;
  c.encoder_lstm_dim = 8;
  c.pre_latent_dense_dim = 8;
  c.decoder_lstm_dim = 8;
  c.decoder_bilstm_dim = 4;
  return c;
}

PreprocessConfig short_prep() {
  auto p = PreprocessConfig::messages();
  p.word_seq_len = 16;
  p.char_seq_len = 80;
  return p;
}

TrainConfig quick() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.patience = 0;
  cfg.seed = 40;
  return cfg;
}

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
  std::istringstream in(text);
  csv::Reader r(in);
  std::vector<std::vector<std::string>> rows;
  while (auto row = r.next()) rows.push_back(row->fields);
  return rows;
}

}  // namespace

TEST(GridSpec, CartesianProductAndValidation) {
  GridSpec s{{{"beta", {2, 74}}, {"lr", {0.1, 0.01, 0.001}}}};
  auto cells = s.cells();
  ASSERT_EQ(cells.size(), 6u);
  EXPECT_EQ(cells[0], (std::vector<std::pair<std::string, double>>{{"beta", 2}, {"lr", 0.1}}));
  EXPECT_EQ(cells[5], (std::vector<std::pair<std::string, double>>{{"beta", 74}, {"lr", 0.001}}));
  EXPECT_THROW(GridSpec{}.validate(), Error);
  EXPECT_THROW((GridSpec{{{"beta", {}}}}.validate()), Error);
  EXPECT_THROW((GridSpec{{{"momentum", {0.9}}}}.validate()), Error);
}

TEST(GridSearch, SingletonMatchesDirectTraining) {
  auto data = toy_messages(30, 10, 10, 41);
  const auto weights = ClassWeights::uniform(Task::Smishing);
  auto res = grid_search(GridSpec{{{"beta", {74}}}}, data, quick(), tiny(), weights, short_prep());
  ASSERT_EQ(res.rows.size(), 1u);
  auto direct = train_classifier(data, quick(), tiny(), weights, short_prep());
  const auto& h = direct.history[direct.best_epoch - 1];
  EXPECT_EQ(res.rows[0].best_epoch, direct.best_epoch);
  EXPECT_EQ(res.rows[0].val_acc, h["val_acc"].get<double>());
  EXPECT_EQ(res.rows[0].val_f1, h["val_f1"].get<double>());
  EXPECT_EQ(res.rows[0].val_loss, h["val_loss"].get<double>());
}

TEST(GridSearch, RowsSortedAndFailuresKept) {
  auto data = toy_messages(30, 10, 10, 42);
  auto res = grid_search(GridSpec{{{"beta", {1.5, 74, 0.5}}}}, data, quick(), tiny(),
                         ClassWeights::uniform(Task::Smishing), short_prep());
  ASSERT_EQ(res.rows.size(), 3u);
  EXPECT_FALSE(res.rows[0].error);
  EXPECT_FALSE(res.rows[1].error);
  EXPECT_TRUE(res.rows[2].error);
  EXPECT_EQ(res.rows[2].params[0].second, 0.5);
  const auto key = [](const GridRow& r) { return std::pair(r.val_acc, r.val_f1); };
  EXPECT_GE(key(res.rows[0]), key(res.rows[1]));
  EXPECT_EQ(res.rows[0].seed + res.rows[1].seed, 40u + 41u);

  std::ostringstream out;
  res.write_csv(out);
  auto rows = read_csv(out.str());
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"rank", "cell", "beta", "seed", "best_epoch", "val_acc", "val_f1",
                                               "val_loss", "error"}));
  EXPECT_EQ(rows[3][2], "0.5");
  EXPECT_FALSE(rows[3][8].empty());
}

TEST(GridSearch, BetaCurveFile) {
  auto data = toy_messages(30, 10, 10, 43);
  auto cfg = quick();
  cfg.epochs = 1;
  auto res = grid_search(GridSpec{{{"beta", {10, 30, 50, 74, 100}}}}, data, cfg, tiny(),
                         ClassWeights::uniform(Task::Smishing), short_prep());
  std::ostringstream out;
  res.write_beta_curve(out);
  auto rows = read_csv(out.str());
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"beta", "val_acc", "val_f1"}));
  const std::vector<std::string> betas{"10", "30", "50", "74", "100"};
  for (std::size_t i = 0; i < betas.size(); ++i) {
    EXPECT_EQ(rows[i + 1][0], betas[i]);
    const double acc = std::stod(rows[i + 1][1]);
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 1.0);
  }
}
