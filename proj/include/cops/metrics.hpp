#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cops/corpus.hpp"
#include "cops/error.hpp"

namespace cops {

/// counts[actual][predicted] in the task's label order.
struct ConfusionMatrix {
  Task task = Task::Smishing;
  std::vector<std::vector<std::size_t>> counts;

  explicit ConfusionMatrix(Task t = Task::Smishing)
      : task(t), counts(task_labels(t).size(), std::vector<std::size_t>(task_labels(t).size(), 0)) {}

  std::size_t at(Label actual, Label predicted) const { return counts[label_index(actual)][label_index(predicted)]; }

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& row : counts) n = std::accumulate(row.begin(), row.end(), n);
    return n;
  }

  std::size_t trace() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) n += counts[i][i];
    return n;
  }

  std::size_t actual_count(Label l) const {
    const auto& row = counts[label_index(l)];
    return std::accumulate(row.begin(), row.end(), std::size_t{0});
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(std::span<const Label> preds, std::span<const Label> actuals) {
  require(preds.size() == actuals.size(), ErrorCode::LengthMismatch,
          "predictions (" + std::to_string(preds.size()) + ") and actuals (" + std::to_string(actuals.size()) +
              ") differ in length");
  require(!actuals.empty(), ErrorCode::EmptyDataset, "no predictions to score");
  ConfusionMatrix cm(task_of(actuals.front()));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    require(task_of(preds[i]) == cm.task && task_of(actuals[i]) == cm.task, ErrorCode::ForeignLabel,
            "labels from more than one task");
    ++cm.counts[label_index(actuals[i])][label_index(preds[i])];
  }
  return cm;
}

inline std::set<Label> default_positive(Task task) {
  if (task == Task::Smishing) return {Label::Spam, Label::Smishing};
  return {Label::Phishing};
}

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// `accuracy` is over the task's own classes (trace / total). Precision,
/// recall, F1, FPR, FNR and `binary_accuracy` treat the positive set as one
/// class against the rest.
struct MetricsReport {
  double accuracy = 0.0;
  double binary_accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
  double specificity = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::set<Label> positive;
  std::map<Label, ClassMetrics> per_class;
  ConfusionMatrix confusion;
  std::vector<PrPoint> pr_curve;
};

namespace detail {
inline double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}
inline double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }
}  // namespace detail

inline MetricsReport metrics_from_confusion(const ConfusionMatrix& cm, const std::set<Label>& positive) {
  require(cm.total() > 0, ErrorCode::EmptyDataset, "no predictions to score");
  for (Label l : positive) require(task_of(l) == cm.task, ErrorCode::ForeignLabel, "positive label from other task");
  MetricsReport r;
  r.confusion = cm;
  r.positive = positive;
  const auto labels = task_labels(cm.task);
  for (Label a : labels) {
    for (Label p : labels) {
      const auto n = cm.at(a, p);
      const bool ap = positive.contains(a), pp = positive.contains(p);
      if (ap && pp) r.tp += n;
      else if (!ap && pp) r.fp += n;
      else if (ap && !pp) r.fn += n;
      else r.tn += n;
    }
  }
  const auto total = cm.total();
  r.accuracy = detail::ratio(cm.trace(), total);
  r.binary_accuracy = detail::ratio(r.tp + r.tn, total);
  r.precision = detail::ratio(r.tp, r.tp + r.fp);
  r.recall = detail::ratio(r.tp, r.tp + r.fn);
  r.f1 = detail::harmonic(r.precision, r.recall);
  // With no actual negatives specificity is vacuously 1.
  r.specificity = r.fp + r.tn == 0 ? 1.0 : detail::ratio(r.tn, r.fp + r.tn);
  r.fpr = 1.0 - r.specificity;
  r.fnr = 1.0 - r.recall;
  for (Label l : labels) {
    ClassMetrics c;
    std::size_t predicted = 0;
    for (Label a : labels) predicted += cm.at(a, l);
    c.support = cm.actual_count(l);
    c.precision = detail::ratio(cm.at(l, l), predicted);
    c.recall = detail::ratio(cm.at(l, l), c.support);
    c.f1 = detail::harmonic(c.precision, c.recall);
    r.per_class[l] = c;
  }
  return r;
}

inline MetricsReport binary_metrics(std::span<const Label> preds, std::span<const Label> actuals,
                                    std::optional<std::set<Label>> positive = std::nullopt) {
  require(!actuals.empty(), ErrorCode::EmptyDataset, "no predictions to score");
  const auto cm = confusion(preds, actuals);
  return metrics_from_confusion(cm, positive.value_or(default_positive(cm.task)));
}

/// One point per distinct score (descending); a record counts as predicted
/// positive when its score is at least the threshold.
inline std::vector<PrPoint> pr_curve(std::span<const double> scores, std::span<const Label> actuals,
                                     const std::set<Label>& positive) {
  require(scores.size() == actuals.size(), ErrorCode::LengthMismatch, "scores and actuals differ in length");
  require(!scores.empty(), ErrorCode::EmptyDataset, "no scores for a PR curve");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  for (double s : scores) require(s >= 0.0 && s <= 1.0, ErrorCode::InvalidArgument, "score outside [0,1]");
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  std::size_t positives = 0;
  for (Label l : actuals) positives += positive.contains(l);
  std::vector<PrPoint> out;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double thr = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == thr; ++i) {
      ++seen;
      tp += positive.contains(actuals[order[i]]);
    }
    out.push_back({thr, detail::ratio(tp, seen), detail::ratio(tp, positives)});
  }
  return out;
}

inline nlohmann::ordered_json to_json(const ConfusionMatrix& cm) {
  nlohmann::ordered_json j;
  j["labels"] = nlohmann::ordered_json::array();
  for (Label l : task_labels(cm.task)) j["labels"].push_back(label_name(l));
  j["counts"] = cm.counts;
  return j;
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["accuracy"] = r.accuracy;
  j["binary_accuracy"] = r.binary_accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["fpr"] = r.fpr;
  j["fnr"] = r.fnr;
  j["specificity"] = r.specificity;
  j["tp"] = r.tp;
  j["fp"] = r.fp;
  j["fn"] = r.fn;
  j["tn"] = r.tn;
  j["positive"] = nlohmann::ordered_json::array();
  for (Label l : r.positive) j["positive"].push_back(label_name(l));
  auto& per = j["per_class"] = nlohmann::ordered_json::object();
  for (const auto& [l, c] : r.per_class) {
    per[std::string(label_name(l))] = {
        {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
  }
  j["confusion"] = to_json(r.confusion);
  return j;
}

}  // namespace cops
