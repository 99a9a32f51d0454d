#include <gtest/gtest.h>

#include <set>

#include "cops/corpus.hpp"
#include "support/temp_dir.hpp"

using namespace cops;
using cops::testing::TempDir;

namespace {

std::vector<LabeledRecord> synthetic_smishing(std::size_t ham, std::size_t spam, std::size_t smish) {
  std::vector<LabeledRecord> out;
  for (std::size_t i = 0; i < ham; ++i) out.push_back({"ham message " + std::to_string(i), Label::Ham, "t"});
  for (std::size_t i = 0; i < spam; ++i) out.push_back({"spam message " + std::to_string(i), Label::Spam, "t"});
  for (std::size_t i = 0; i < smish; ++i) out.push_back({"smish message " + std::to_string(i), Label::Smishing, "t"});
  return out;
}

}  // namespace

TEST(LoadSmishing, ParsesHeaderQuotingAndCountsPerClass) {
  TempDir dir;
  auto path = dir.write("s.csv",
                        "LABEL,TEXT,URL\n"
                        "ham,\"Hi, are we still on for tonight?\",No\n"
                        "spam,WIN a FREE prize now,No\n"
                        "Smishing,\"Your bank acct is locked, visit http://x.co/a\",Yes\n"
                        "ham,\"multi\nline\",No\n");
  auto report = load_smishing_csv(path);
  ASSERT_EQ(report.records.size(), 4u);
  EXPECT_EQ(report.counts[Label::Ham], 2u);
  EXPECT_EQ(report.counts[Label::Spam], 1u);
  EXPECT_EQ(report.counts[Label::Smishing], 1u);
  EXPECT_EQ(report.records[0].text, "Hi, are we still on for tonight?");
  EXPECT_EQ(report.records[3].text, "multi\nline");
  for (const auto& r : report.records) EXPECT_FALSE(r.synthetic);
}

TEST(LoadSmishing, KaggleStyleHeaderAndLatin1) {
  TempDir dir;
  auto path = dir.write("k.csv", "v1,v2,,,\nham,caf\xe9 later?,,,\nspam,Txt WIN to 80082,,,\n");
  auto report = load_smishing_csv(path);
  ASSERT_EQ(report.records.size(), 2u);
  EXPECT_EQ(report.records[0].text, "caf\xc3\xa9 later?");
}

TEST(LoadSmishing, EmptyFileIsEmptyDataset) {
  TempDir dir;
  auto path = dir.write("e.csv", "");
  try {
    load_smishing_csv(path);
    FAIL() << "expected EmptyDataset";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyDataset);
  }
}

TEST(LoadSmishing, UnknownLabelRowIsRejectedAndCounted) {
  TempDir dir;
  auto path = dir.write("j.csv", "junk,some text\n");
  auto report = load_smishing_csv(path);
  EXPECT_EQ(report.records.size(), 0u);
  EXPECT_EQ(report.rejected_labels, 1u);
}

TEST(LoadSmishing, MalformedRowsSkippedWithReport) {
  TempDir dir;
  auto path = dir.write("m.csv", "ham,fine\nspam\nham,  \nham,\"never closed\n");
  auto report = load_smishing_csv(path);
  EXPECT_EQ(report.records.size(), 1u);
  EXPECT_EQ(report.malformed_rows, 3u);
  EXPECT_FALSE(report.errors.empty());
}

TEST(LoadSmishing, MissingFileThrows) {
  try {
    load_smishing_csv("/nonexistent/cops/x.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingFile);
  }
}

TEST(LoadSmishing, ReloadIsIdentical) {
  TempDir dir;
  auto path = dir.write("r.csv", "ham,a\nspam,b\nsmishing,c\nham,d\n");
  EXPECT_EQ(load_smishing_csv(path).records, load_smishing_csv(path).records);
}

TEST(LoadUrl, PerSourceLabelConventions) {
  TempDir dir;
  auto d1 = dir.write("d1.csv", "url,type\nexample.com/a,benign\nbad.example/login,phishing\nx.example,defacement\n");
  auto r1 = load_url_csv(d1, "dataset_1");
  EXPECT_EQ(r1.counts[Label::NotPhishing], 1u);
  EXPECT_EQ(r1.counts[Label::Phishing], 1u);
  EXPECT_EQ(r1.rejected_labels, 1u);

  auto d2 = dir.write("d2.csv", "url,label\ngoogle.com,good\nevil.example/x,bad\n");
  auto r2 = load_url_csv(d2, "dataset_2");
  EXPECT_EQ(r2.counts[Label::NotPhishing], 1u);
  EXPECT_EQ(r2.counts[Label::Phishing], 1u);

  auto d3 = dir.write("d3.csv", "domain,ranking,mld_res,label\nnic.example/x,10,0.0,0.0\nphish.example/y,1000,1.0,1.0\n");
  auto r3 = load_url_csv(d3, "dataset_3");
  EXPECT_EQ(r3.counts[Label::NotPhishing], 1u);
  EXPECT_EQ(r3.counts[Label::Phishing], 1u);
  EXPECT_EQ(r3.records[1].text, "phish.example/y");
  EXPECT_EQ(r3.records[1].source, "dataset_3");
}

TEST(LoadUrl, BadLabelRowSkipped) {
  TempDir dir;
  auto path = dir.write("b.csv", "http://a.example,bad-label\n");
  for (auto id : {"dataset_1", "dataset_2", "dataset_3"}) {
    auto report = load_url_csv(path, id);
    EXPECT_EQ(report.records.size(), 0u) << id;
    EXPECT_EQ(report.skipped(), 1u) << id;
  }
}

TEST(LoadUrl, UnknownDatasetId) {
  TempDir dir;
  auto path = dir.write("b.csv", "a,b\n");
  try {
    load_url_csv(path, "dataset_9");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownDataset);
  }
}

TEST(LoadUrl, OptionalExactDuplicateDrop) {
  TempDir dir;
  auto path = dir.write("d.csv", "url,label\na.com,good\na.com,good\na.com,bad\n");
  EXPECT_EQ(load_url_csv(path, "dataset_2").records.size(), 3u);
  auto dedup = load_url_csv(path, "dataset_2", {.drop_exact_duplicates = true});
  EXPECT_EQ(dedup.records.size(), 2u);
  EXPECT_EQ(dedup.duplicates_dropped, 1u);
}

TEST(StratifiedSplit, PerClassCountsFollowRoundedFraction) {
  auto records = synthetic_smishing(4844, 489, 638);
  auto split = stratified_split(records, 0.0965, 42);
  auto counts = count_labels(split.test);
  EXPECT_EQ(counts[Label::Ham], 467u);
  EXPECT_EQ(counts[Label::Spam], 47u);
  EXPECT_EQ(counts[Label::Smishing], 62u);
}

TEST(StratifiedSplit, ExplicitCountsReproduceTableOneSplit) {
  auto records = synthetic_smishing(4844, 489, 638);
  auto split = stratified_split(records, LabelCounts{{Label::Ham, 516}, {Label::Spam, 35}, {Label::Smishing, 46}}, 7);
  auto test = count_labels(split.test);
  auto train = count_labels(split.train);
  EXPECT_EQ(test[Label::Ham], 516u);
  EXPECT_EQ(test[Label::Spam], 35u);
  EXPECT_EQ(test[Label::Smishing], 46u);
  EXPECT_EQ(train[Label::Ham], 4328u);
  EXPECT_EQ(train[Label::Spam], 454u);
  EXPECT_EQ(train[Label::Smishing], 592u);
}

TEST(StratifiedSplit, DeterministicAndPartition) {
  auto records = synthetic_smishing(200, 30, 40);
  for (std::uint64_t seed : {1ull, 2ull, 99ull}) {
    auto a = stratified_split(records, 0.2, seed);
    auto b = stratified_split(records, 0.2, seed);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    EXPECT_EQ(a.train.size() + a.test.size(), records.size());
    std::set<std::string> seen;
    for (const auto& r : a.train) EXPECT_TRUE(seen.insert(r.text).second);
    for (const auto& r : a.test) EXPECT_TRUE(seen.insert(r.text).second);
  }
  EXPECT_NE(stratified_split(records, 0.2, 1).test, stratified_split(records, 0.2, 2).test);
}

TEST(StratifiedSplit, Errors) {
  auto records = synthetic_smishing(10, 10, 10);
  try {
    stratified_split(records, 1.5, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidFraction);
  }
  auto missing = synthetic_smishing(10, 0, 10);
  try {
    stratified_split(missing, 0.5, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyClass);
  }
}

TEST(ClassWeights, Balanced) {
  auto w = compute_class_weights({{Label::Ham, 10}, {Label::Spam, 10}});
  EXPECT_DOUBLE_EQ(w[Label::Ham], 1.0);
  EXPECT_DOUBLE_EQ(w[Label::Spam], 1.0);
}

TEST(ClassWeights, TableOneTrainCounts) {
  // Frozen from an independent evaluation of N/(K*n_c).
  auto w = compute_class_weights({{Label::Ham, 4328}, {Label::Spam, 454}, {Label::Smishing, 592}});
  EXPECT_NEAR(w[Label::Ham], 0.413894, 1e-3);
  EXPECT_NEAR(w[Label::Spam], 3.945668, 1e-3);
  EXPECT_NEAR(w[Label::Smishing], 3.025901, 1e-3);
}

TEST(ClassWeights, SingleClassAndZeroCount) {
  EXPECT_DOUBLE_EQ(compute_class_weights({{Label::Ham, 7}})[Label::Ham], 1.0);
  try {
    compute_class_weights({{Label::Ham, 7}, {Label::Spam, 0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroCount);
  }
}

TEST(ClassWeights, WeightedCountsSumToTotal) {
  RngStream rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    LabelCounts counts{{Label::Ham, 1 + rng.below(5000)},
                       {Label::Spam, 1 + rng.below(500)},
                       {Label::Smishing, 1 + rng.below(700)}};
    auto w = compute_class_weights(counts);
    double total = 0, weighted = 0;
    for (auto [l, n] : counts) {
      total += static_cast<double>(n);
      weighted += static_cast<double>(n) * w[l];
      EXPECT_GT(w[l], 0.0);
    }
    EXPECT_NEAR(weighted, total, 1e-9 * total);
  }
}

TEST(CollapseBinary, TableOneTestColumn) {
  auto collapsed = collapse_counts({{Label::Ham, 516}, {Label::Spam, 35}, {Label::Smishing, 46}});
  EXPECT_EQ(collapsed[BinaryLabel::Negative], 516u);
  EXPECT_EQ(collapsed[BinaryLabel::Positive], 81u);
}

TEST(CollapseBinary, AllHamEmptyAndWrongTask) {
  std::vector<Label> ham(5, Label::Ham);
  for (auto b : collapse_binary(std::span<const Label>(ham))) EXPECT_EQ(b, BinaryLabel::Negative);
  EXPECT_TRUE(collapse_binary(std::span<const Label>{}).empty());
  std::vector<Label> url{Label::Phishing};
  try {
    collapse_binary(std::span<const Label>(url));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::WrongTask);
  }
}

TEST(CollapseBinary, PreservesCount) {
  auto records = synthetic_smishing(13, 4, 9);
  EXPECT_EQ(collapse_binary(std::span<const LabeledRecord>(records)).size(), records.size());
}
