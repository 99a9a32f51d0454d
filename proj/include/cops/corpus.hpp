#pragma once

// Dataset ingestion, stratified splitting, class weights and the
// Spam+Smishing binary collapse used for reporting.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cops/csv.hpp"
#include "cops/error.hpp"
#include "cops/rng.hpp"
#include "cops/utf8.hpp"

namespace cops {

enum class Task { Smishing, UrlPhishing };

enum class Label { Ham, Spam, Smishing, NotPhishing, Phishing };

enum class BinaryLabel { Negative, Positive };

inline std::span<const Label> task_labels(Task task) {
  static constexpr std::array<Label, 3> kSmishing{Label::Ham, Label::Spam, Label::Smishing};
  static constexpr std::array<Label, 2> kUrl{Label::NotPhishing, Label::Phishing};
  if (task == Task::Smishing) return kSmishing;
  return kUrl;
}

inline Task task_of(Label label) {
  switch (label) {
    case Label::Ham:
    case Label::Spam:
    case Label::Smishing: return Task::Smishing;
    default: return Task::UrlPhishing;
  }
}

inline std::size_t label_index(Label label) {
  switch (label) {
    case Label::Ham: return 0;
    case Label::Spam: return 1;
    case Label::Smishing: return 2;
    case Label::NotPhishing: return 0;
    case Label::Phishing: return 1;
  }
  return 0;
}

inline Label label_at(Task task, std::size_t index) {
  const auto labels = task_labels(task);
  require(index < labels.size(), ErrorCode::IdOutOfRange,
          "class index " + std::to_string(index) + " out of range");
  return labels[index];
}

inline std::string_view label_name(Label label) {
  switch (label) {
    case Label::Ham: return "HAM";
    case Label::Spam: return "SPAM";
    case Label::Smishing: return "SMISHING";
    case Label::NotPhishing: return "NOT_PHISHING";
    case Label::Phishing: return "PHISHING";
  }
  return "?";
}

inline std::string_view task_name(Task task) {
  return task == Task::Smishing ? "smishing" : "url";
}

/// Labels that raise an alert: Spam and Smishing for messages, Phishing for URLs.
inline bool is_alert_label(Label label) {
  return label == Label::Spam || label == Label::Smishing || label == Label::Phishing;
}

struct LabeledRecord {
  std::string text;
  Label label = Label::Ham;
  std::string source;
  bool synthetic = false;

  friend bool operator==(const LabeledRecord&, const LabeledRecord&) = default;
};

using LabelCounts = std::map<Label, std::size_t>;

inline LabelCounts count_labels(std::span<const LabeledRecord> records) {
  LabelCounts counts;
  for (const auto& r : records) ++counts[r.label];
  return counts;
}

struct LoadReport {
  std::vector<LabeledRecord> records;
  LabelCounts counts;
  std::size_t malformed_rows = 0;
  std::size_t rejected_labels = 0;
  std::size_t duplicates_dropped = 0;
  std::vector<std::string> errors;  // first few diagnostics, "line N: reason"

  std::size_t skipped() const { return malformed_rows + rejected_labels + duplicates_dropped; }
};

namespace detail {

inline std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::optional<std::size_t> find_column(const std::vector<std::string>& header,
                                              std::initializer_list<std::string_view> names) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto cell = lower_ascii(trim(header[i]));
    for (auto n : names) {
      if (cell == n) return i;
    }
  }
  return std::nullopt;
}

inline void note(LoadReport& report, std::size_t line, const std::string& reason) {
  constexpr std::size_t kMaxErrors = 20;
  if (report.errors.size() < kMaxErrors) {
    report.errors.push_back("line " + std::to_string(line) + ": " + reason);
  }
}

inline std::ifstream open_or_throw(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorCode::MissingFile, "no such file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::MissingFile, "cannot open: " + path.string());
  return in;
}

struct ColumnLayout {
  std::size_t label = 0;
  std::size_t text = 1;
};

template <typename MapLabel>
LoadReport ingest(std::istream& in, const std::string& source, ColumnLayout layout,
                  std::optional<ColumnLayout> (*detect_header)(const std::vector<std::string>&),
                  MapLabel map_label, bool drop_duplicates) {
  LoadReport report;
  csv::Reader reader(in);
  bool first = true;
  std::size_t data_rows = 0;
  std::set<std::pair<std::string, Label>> seen;
  while (auto row = reader.next()) {
    if (first) {
      first = false;
      if (!row->fields.empty() && row->fields[0].rfind("\xEF\xBB\xBF", 0) == 0) {
        row->fields[0].erase(0, 3);
      }
      if (auto detected = detect_header(row->fields)) {
        layout = *detected;
        continue;
      }
    }
    if (csv::is_blank(*row)) continue;
    ++data_rows;
    if (row->malformed) {
      ++report.malformed_rows;
      note(report, row->line, "unterminated quoted field");
      continue;
    }
    if (row->fields.size() <= std::max(layout.label, layout.text)) {
      ++report.malformed_rows;
      note(report, row->line, "too few columns");
      continue;
    }
    const auto raw_label = lower_ascii(trim(row->fields[layout.label]));
    const std::optional<Label> label = map_label(raw_label);
    if (!label) {
      ++report.rejected_labels;
      note(report, row->line, "unknown label '" + raw_label + "'");
      continue;
    }
    auto text = trim(utf8::sanitize(row->fields[layout.text]));
    if (text.empty()) {
      ++report.malformed_rows;
      note(report, row->line, "empty text");
      continue;
    }
    if (drop_duplicates && !seen.emplace(text, *label).second) {
      ++report.duplicates_dropped;
      continue;
    }
    ++report.counts[*label];
    report.records.push_back(LabeledRecord{std::move(text), *label, source, false});
  }
  require(data_rows > 0, ErrorCode::EmptyDataset, "dataset '" + source + "' has no data rows");
  return report;
}

inline std::optional<ColumnLayout> smishing_header(const std::vector<std::string>& row) {
  auto label = find_column(row, {"label", "v1", "class", "category", "type"});
  auto text = find_column(row, {"text", "v2", "message", "sms", "msg"});
  if (label && text) return ColumnLayout{*label, *text};
  return std::nullopt;
}

inline std::optional<Label> smishing_label(const std::string& raw) {
  if (raw == "ham") return Label::Ham;
  if (raw == "spam") return Label::Spam;
  if (raw == "smishing") return Label::Smishing;
  return std::nullopt;
}

}  // namespace detail

/// Loads a delimited smishing file with label and message columns. Header
/// names are recognized when present (label/v1, text/v2/message); otherwise
/// column 0 is the label and column 1 the message.
inline LoadReport load_smishing_csv(const std::filesystem::path& path,
                                    const std::string& source = "smishing") {
  auto in = detail::open_or_throw(path);
  return detail::ingest(in, source, {}, &detail::smishing_header, &detail::smishing_label, false);
}

enum class UrlSource { Dataset1, Dataset2, Dataset3 };

inline UrlSource parse_url_source(std::string_view id) {
  if (id == "dataset_1") return UrlSource::Dataset1;
  if (id == "dataset_2") return UrlSource::Dataset2;
  if (id == "dataset_3") return UrlSource::Dataset3;
  fail(ErrorCode::UnknownDataset, "unknown URL dataset id '" + std::string(id) + "'");
}

inline std::string_view url_source_id(UrlSource source) {
  switch (source) {
    case UrlSource::Dataset1: return "dataset_1";
    case UrlSource::Dataset2: return "dataset_2";
    case UrlSource::Dataset3: return "dataset_3";
  }
  return "?";
}

struct UrlLoadOptions {
  bool drop_exact_duplicates = false;
};

/// Label conventions differ per source:
///   dataset_1  url,type       benign | phishing (defacement/malware rejected)
///   dataset_2  url,label      good | bad
///   dataset_3  domain,...,label  0 | 1 (the numeric columns are ignored)
inline LoadReport load_url_csv(const std::filesystem::path& path, std::string_view dataset_id,
                               UrlLoadOptions options = {}) {
  const UrlSource source = parse_url_source(dataset_id);
  auto in = detail::open_or_throw(path);
  const std::string tag(dataset_id);
  switch (source) {
    case UrlSource::Dataset1:
      return detail::ingest(
          in, tag, {1, 0},
          +[](const std::vector<std::string>& row) -> std::optional<detail::ColumnLayout> {
            auto url = detail::find_column(row, {"url"});
            auto type = detail::find_column(row, {"type", "label"});
            if (url && type) return detail::ColumnLayout{*type, *url};
            return std::nullopt;
          },
          [](const std::string& raw) -> std::optional<Label> {
            if (raw == "benign") return Label::NotPhishing;
            if (raw == "phishing") return Label::Phishing;
            return std::nullopt;
          },
          options.drop_exact_duplicates);
    case UrlSource::Dataset2:
      return detail::ingest(
          in, tag, {1, 0},
          +[](const std::vector<std::string>& row) -> std::optional<detail::ColumnLayout> {
            auto url = detail::find_column(row, {"url"});
            auto label = detail::find_column(row, {"label"});
            if (url && label) return detail::ColumnLayout{*label, *url};
            return std::nullopt;
          },
          [](const std::string& raw) -> std::optional<Label> {
            if (raw == "good") return Label::NotPhishing;
            if (raw == "bad") return Label::Phishing;
            return std::nullopt;
          },
          options.drop_exact_duplicates);
    case UrlSource::Dataset3:
      return detail::ingest(
          in, tag, {1, 0},
          +[](const std::vector<std::string>& row) -> std::optional<detail::ColumnLayout> {
            auto url = detail::find_column(row, {"domain", "url"});
            auto label = detail::find_column(row, {"label"});
            if (url && label) return detail::ColumnLayout{*label, *url};
            return std::nullopt;
          },
          [](const std::string& raw) -> std::optional<Label> {
            if (raw == "0" || raw == "0.0") return Label::NotPhishing;
            if (raw == "1" || raw == "1.0") return Label::Phishing;
            return std::nullopt;
          },
          options.drop_exact_duplicates);
  }
  fail(ErrorCode::UnknownDataset, tag);
}

struct DatasetSplit {
  std::vector<LabeledRecord> train;
  std::vector<LabeledRecord> test;
  std::uint64_t seed = 0;
};

namespace detail {

inline Task infer_task(std::span<const LabeledRecord> records) {
  require(!records.empty(), ErrorCode::EmptyDataset, "no records to split");
  const Task task = task_of(records.front().label);
  for (const auto& r : records) {
    require(task_of(r.label) == task, ErrorCode::WrongTask, "records mix smishing and URL labels");
  }
  return task;
}

/// Draws `test_counts[label]` records per class using one seeded shuffle per
/// class (classes visited in task order). Output keeps input order.
inline DatasetSplit split_by_counts(std::span<const LabeledRecord> records,
                                    const LabelCounts& test_counts, std::uint64_t seed) {
  const Task task = infer_task(records);
  RngStream rng(seed);
  std::vector<bool> in_test(records.size(), false);
  for (Label label : task_labels(task)) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].label == label) members.push_back(i);
    }
    require(!members.empty(), ErrorCode::EmptyClass,
            "class " + std::string(label_name(label)) + " has no records");
    const auto it = test_counts.find(label);
    const std::size_t want = it == test_counts.end() ? 0 : it->second;
    require(want <= members.size(), ErrorCode::InvalidArgument,
            "requested more test records than class " + std::string(label_name(label)) + " holds");
    rng.shuffle(members);
    for (std::size_t k = 0; k < want; ++k) in_test[members[k]] = true;
  }
  DatasetSplit split;
  split.seed = seed;
  for (std::size_t i = 0; i < records.size(); ++i) {
    (in_test[i] ? split.test : split.train).push_back(records[i]);
  }
  return split;
}

}  // namespace detail

/// Per-class test count = round(class_count * test_fraction).
inline DatasetSplit stratified_split(std::span<const LabeledRecord> records, double test_fraction,
                                     std::uint64_t seed) {
  require(test_fraction > 0.0 && test_fraction < 1.0, ErrorCode::InvalidFraction,
          "test_fraction must lie in (0,1), got " + std::to_string(test_fraction));
  const auto counts = count_labels(records);
  LabelCounts test_counts;
  for (const auto& [label, n] : counts) {
    test_counts[label] = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  }
  return detail::split_by_counts(records, test_counts, seed);
}

/// Stratified split with explicit per-class test sizes (reproduces a
/// published split whose class proportions differ, e.g. 516/35/46).
inline DatasetSplit stratified_split(std::span<const LabeledRecord> records,
                                     const LabelCounts& test_counts, std::uint64_t seed) {
  return detail::split_by_counts(records, test_counts, seed);
}

/// Stratified subsample of `target` records, classes kept in proportion.
inline std::vector<LabeledRecord> stratified_subsample(std::span<const LabeledRecord> records,
                                                       std::size_t target, std::uint64_t seed) {
  if (target >= records.size()) return {records.begin(), records.end()};
  const double fraction = static_cast<double>(target) / static_cast<double>(records.size());
  return stratified_split(records, fraction, seed).test;
}

struct ClassWeights {
  std::map<Label, double> weights;

  double operator[](Label label) const {
    const auto it = weights.find(label);
    require(it != weights.end(), ErrorCode::ForeignLabel,
            "no class weight for " + std::string(label_name(label)));
    return it->second;
  }

  /// Uniform weights of 1.0 over a task's labels.
  static ClassWeights uniform(Task task) {
    ClassWeights w;
    for (Label l : task_labels(task)) w.weights[l] = 1.0;
    return w;
  }
};

/// Inverse-frequency weights normalized so balanced data gets 1.0:
/// w_c = N / (K * n_c).
inline ClassWeights compute_class_weights(const LabelCounts& counts) {
  require(!counts.empty(), ErrorCode::InvalidArgument, "no classes given");
  double total = 0.0;
  for (const auto& [label, n] : counts) {
    require(n > 0, ErrorCode::ZeroCount, "class " + std::string(label_name(label)) + " has zero count");
    total += static_cast<double>(n);
  }
  const double k = static_cast<double>(counts.size());
  ClassWeights out;
  for (const auto& [label, n] : counts) out.weights[label] = total / (k * static_cast<double>(n));
  return out;
}

inline BinaryLabel collapse_label(Label label) {
  require(task_of(label) == Task::Smishing, ErrorCode::WrongTask,
          "binary collapse applies to smishing labels only");
  return label == Label::Ham ? BinaryLabel::Negative : BinaryLabel::Positive;
}

inline std::vector<BinaryLabel> collapse_binary(std::span<const Label> labels) {
  std::vector<BinaryLabel> out;
  out.reserve(labels.size());
  for (Label l : labels) out.push_back(collapse_label(l));
  return out;
}

inline std::vector<BinaryLabel> collapse_binary(std::span<const LabeledRecord> records) {
  std::vector<BinaryLabel> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(collapse_label(r.label));
  return out;
}

inline std::map<BinaryLabel, std::size_t> collapse_counts(const LabelCounts& counts) {
  std::map<BinaryLabel, std::size_t> out;
  for (const auto& [label, n] : counts) out[collapse_label(label)] += n;
  return out;
}

}  // namespace cops
