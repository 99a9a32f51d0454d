#include <gtest/gtest.h>

#include "cops/metrics.hpp"

using namespace cops;

namespace {

std::vector<Label> binary_labels(std::initializer_list<int> bits) {
  std::vector<Label> out;
  for (int b : bits) out.push_back(b ? Label::Phishing : Label::NotPhishing);
  return out;
}

}  // namespace

TEST(Confusion, DiagonalAndOffDiagonal) {
  std::vector<Label> a{Label::Ham, Label::Spam, Label::Ham, Label::Smishing};
  auto cm = confusion(a, a);
  EXPECT_EQ(cm.at(Label::Ham, Label::Ham), 2u);
  EXPECT_EQ(cm.at(Label::Smishing, Label::Smishing), 1u);
  EXPECT_EQ(cm.trace(), cm.total());

  std::vector<Label> preds{Label::Ham, Label::Spam}, actuals{Label::Ham, Label::Ham};
  auto c2 = confusion(preds, actuals);
  EXPECT_EQ(c2.at(Label::Ham, Label::Ham), 1u);
  EXPECT_EQ(c2.at(Label::Ham, Label::Spam), 1u);
}

TEST(Confusion, OrderInvariantAndErrors) {
  std::vector<Label> p{Label::Ham, Label::Spam, Label::Smishing, Label::Ham, Label::Spam};
  std::vector<Label> a{Label::Ham, Label::Ham, Label::Smishing, Label::Spam, Label::Spam};
  auto base = confusion(p, a);
  std::vector<std::size_t> perm{4, 2, 0, 3, 1};
  std::vector<Label> p2, a2;
  for (auto i : perm) {
    p2.push_back(p[i]);
    a2.push_back(a[i]);
  }
  EXPECT_EQ(confusion(p2, a2), base);
  for (Label l : task_labels(Task::Smishing)) {
    EXPECT_EQ(base.actual_count(l), static_cast<std::size_t>(std::count(a.begin(), a.end(), l)));
  }

  std::vector<Label> shorter{Label::Ham};
  try {
    confusion(shorter, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
  std::vector<Label> mixed{Label::Ham, Label::Phishing};
  std::vector<Label> hams{Label::Ham, Label::Ham};
  try {
    confusion(mixed, hams);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ForeignLabel);
  }
}

TEST(BinaryMetrics, AllCorrect) {
  std::vector<Label> a{Label::Ham, Label::Spam, Label::Smishing, Label::Ham};
  auto r = binary_metrics(a, a);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.fpr, 0.0);
  EXPECT_EQ(r.fnr, 0.0);
}

TEST(BinaryMetrics, HandArithmetic) {
  // TP=3 FP=1 FN=2 TN=4
  auto actual = binary_labels({1, 1, 1, 0, 1, 1, 0, 0, 0, 0});
  auto pred = binary_labels({1, 1, 1, 1, 0, 0, 0, 0, 0, 0});
  auto r = binary_metrics(pred, actual);
  EXPECT_EQ(r.tp, 3u);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_EQ(r.fn, 2u);
  EXPECT_EQ(r.tn, 4u);
  EXPECT_NEAR(r.precision, 0.75, 1e-12);
  EXPECT_NEAR(r.recall, 0.6, 1e-12);
  EXPECT_NEAR(r.f1, 2.0 / 3.0, 1e-4);
  EXPECT_NEAR(r.fpr, 0.2, 1e-12);
  EXPECT_NEAR(r.fnr, 0.4, 1e-12);
  EXPECT_NEAR(r.accuracy, 0.7, 1e-12);
}

TEST(BinaryMetrics, CollapseEquivalence) {
  RngStream rng(3);
  const auto labels = task_labels(Task::Smishing);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Label> p, a;
    for (int i = 0; i < 40; ++i) {
      p.push_back(labels[rng.below(3)]);
      a.push_back(labels[rng.below(3)]);
    }
    auto three = binary_metrics(p, a);
    // Same numbers via the collapsed binary view mapped onto the URL label set.
    std::vector<Label> pb, ab;
    for (auto b : collapse_binary(std::span<const Label>(p))) pb.push_back(b == BinaryLabel::Positive ? Label::Phishing : Label::NotPhishing);
    for (auto b : collapse_binary(std::span<const Label>(a))) ab.push_back(b == BinaryLabel::Positive ? Label::Phishing : Label::NotPhishing);
    auto two = binary_metrics(pb, ab);
    EXPECT_DOUBLE_EQ(three.precision, two.precision);
    EXPECT_DOUBLE_EQ(three.recall, two.recall);
    EXPECT_DOUBLE_EQ(three.f1, two.f1);
    EXPECT_DOUBLE_EQ(three.fpr, two.fpr);
    EXPECT_DOUBLE_EQ(three.binary_accuracy, two.accuracy);
    EXPECT_DOUBLE_EQ(three.accuracy, static_cast<double>(three.confusion.trace()) / 40.0);
    EXPECT_DOUBLE_EQ(three.fpr + three.specificity, 1.0);
    EXPECT_DOUBLE_EQ(three.fnr + three.recall, 1.0);
    if (three.precision + three.recall > 0) {
      EXPECT_NEAR(three.f1, 2 * three.precision * three.recall / (three.precision + three.recall), 1e-12);
    }
  }
}

TEST(BinaryMetrics, EmptyInput) {
  try {
    binary_metrics({}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyDataset);
  }
}

TEST(PrCurve, HandSweepWithTie) {
  std::vector<double> scores{0.9, 0.8, 0.7, 0.6, 0.55, 0.4, 0.4};
  auto actual = binary_labels({1, 0, 1, 1, 0, 0, 1});
  auto pts = pr_curve(scores, actual, {Label::Phishing});
  // Frozen from an exhaustive threshold enumeration.
  const std::vector<PrPoint> expected{{0.9, 1.0, 0.25}, {0.8, 0.5, 0.25}, {0.7, 2.0 / 3.0, 0.5},
                                      {0.6, 0.75, 0.75}, {0.55, 0.6, 0.75}, {0.4, 4.0 / 7.0, 1.0}};
  ASSERT_EQ(pts.size(), expected.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_DOUBLE_EQ(pts[i].threshold, expected[i].threshold);
    EXPECT_NEAR(pts[i].precision, expected[i].precision, 1e-12);
    EXPECT_NEAR(pts[i].recall, expected[i].recall, 1e-12);
  }
}

TEST(PrCurve, SeparatedEqualAndMonotone) {
  auto actual = binary_labels({1, 1, 0, 0});
  std::vector<double> sep{0.9, 0.8, 0.2, 0.1};
  auto pts = pr_curve(sep, actual, {Label::Phishing});
  EXPECT_TRUE(std::any_of(pts.begin(), pts.end(), [](auto p) { return p.precision == 1.0 && p.recall == 1.0; }));
  std::vector<double> same{0.5, 0.5, 0.5, 0.5};
  EXPECT_EQ(pr_curve(same, actual, {Label::Phishing}).size(), 1u);

  RngStream rng(8);
  std::vector<double> s;
  std::vector<Label> a;
  for (int i = 0; i < 200; ++i) {
    s.push_back(std::round(rng.uniform() * 50) / 50);
    a.push_back(rng.uniform() < 0.3 ? Label::Phishing : Label::NotPhishing);
  }
  auto curve = pr_curve(s, a, {Label::Phishing});
  for (std::size_t i = 1; i < curve.size(); ++i) {
    EXPECT_LT(curve[i].threshold, curve[i - 1].threshold);
    EXPECT_GE(curve[i].recall, curve[i - 1].recall);
  }
  EXPECT_THROW(pr_curve({}, {}, {Label::Phishing}), Error);
}
