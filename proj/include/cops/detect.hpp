#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cops/bundle.hpp"

namespace cops {

struct DetectionResponse {
  Label label = Label::Ham;
  /// One entry per task label, in class order.
  std::vector<std::pair<Label, double>> probabilities;
  bool collapsed_alert = false;
  double latency_ms = 0.0;
  std::string model_version;
};

inline nlohmann::ordered_json to_json(const DetectionResponse& r) {
  nlohmann::ordered_json probs = nlohmann::ordered_json::object();
  for (const auto& [label, p] : r.probabilities) probs[std::string(label_name(label))] = p;
  return {{"label", label_name(r.label)},
          {"probabilities", std::move(probs)},
          {"collapsed_alert", r.collapsed_alert},
          {"latency", r.latency_ms},
          {"model_version", r.model_version}};
}

/// Object emitted instead of a response for input that cannot be classified.
inline nlohmann::ordered_json warning_json(std::size_t line, const std::string& message) {
  return {{"warning", message}, {"line", line}};
}

/// Read-only classifier wrapper shared by the CLI and the service.
class Detector {
 public:
  /// Optional rewrite applied to the raw text before preprocessing.
  using Rewrite = std::function<std::string(std::string_view)>;

  Detector(Classifier classifier, std::string model_version)
      : classifier_(std::move(classifier)), version_(std::move(model_version)) {}

  static Detector from_bundle(const ModelBundle& b) { return Detector(classifier_from(b), b.model_version); }

  static Detector load(const std::filesystem::path& path) { return from_bundle(load_model(path)); }

  Task task() const { return classifier_.task(); }
  const std::string& model_version() const { return version_; }
  const Classifier& classifier() const { return classifier_; }

  /// Classifies one text. Throws InvalidArgument on empty input.
  DetectionResponse detect(std::string_view text, const Rewrite& rewrite = {}) const {
    const auto start = std::chrono::steady_clock::now();
    require(!detail::trim(text).empty(), ErrorCode::InvalidArgument, "empty input");
    const std::string source = rewrite ? rewrite(text) : std::string(text);
    const EncodedText item = classifier_.featurizer.encode(source);
    const auto probs = classifier_.predict_proba(std::span<const EncodedText>(&item, 1));

    DetectionResponse r;
    const auto labels = task_labels(task());
    double total = 0.0;
    for (std::size_t k = 0; k < labels.size(); ++k) total += probs.data()[k];
    std::size_t best = 0;
    for (std::size_t k = 0; k < labels.size(); ++k) {
      r.probabilities.emplace_back(labels[k], static_cast<double>(probs.data()[k]) / total);
      if (probs.data()[k] > probs.data()[best]) best = k;
    }
    r.label = labels[best];
    r.collapsed_alert = is_alert_label(r.label);
    r.model_version = version_;
    r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return r;
  }

 private:
  Classifier classifier_;
  std::string version_;
};

}  // namespace cops
