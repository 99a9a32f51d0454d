#pragma once

#include <charconv>
#include <cstddef>
#include <istream>
#include <ostream>
#include <optional>
#include <string>
#include <vector>

namespace cops::csv {

struct Row {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based line where the row starts
  bool malformed = false;
};

/// Streaming RFC 4180 reader: quoted fields, doubled quotes, CRLF and
/// newlines inside quotes. A quote left open at end of input marks the row
/// malformed instead of throwing, so the caller can count and skip it.
class Reader {
 public:
  explicit Reader(std::istream& in, char delimiter = ',') : in_(in), delimiter_(delimiter) {}

  std::optional<Row> next() {
    Row row;
    row.line = line_ + 1;
    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;
    bool any = false;
    int c;
    while ((c = in_.get()) != std::char_traits<char>::eof()) {
      any = true;
      const char ch = static_cast<char>(c);
      if (in_quotes) {
        if (ch == '"') {
          if (in_.peek() == '"') {
            in_.get();
            field.push_back('"');
          } else {
            in_quotes = false;
          }
        } else {
          if (ch == '\n') ++line_;
          field.push_back(ch);
        }
        continue;
      }
      if (ch == '"' && field.empty() && !field_was_quoted) {
        in_quotes = true;
        field_was_quoted = true;
      } else if (ch == delimiter_) {
        row.fields.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
      } else if (ch == '\n') {
        ++line_;
        if (!field.empty() && field.back() == '\r') field.pop_back();
        row.fields.push_back(std::move(field));
        return row;
      } else {
        // Stray quotes inside unquoted fields are kept literally.
        field.push_back(ch);
      }
    }
    if (!any) return std::nullopt;
    if (in_quotes) row.malformed = true;
    if (!field.empty() && field.back() == '\r') field.pop_back();
    row.fields.push_back(std::move(field));
    ++line_;
    return row;
  }

 private:
  std::istream& in_;
  char delimiter_;
  std::size_t line_ = 0;
};

inline bool is_blank(const Row& row) {
  for (const auto& f : row.fields) {
    for (char ch : f) {
      if (ch != ' ' && ch != '\t' && ch != '\r') return false;
    }
  }
  return true;
}

/// Quotes a field when it holds a delimiter, quote or line break.
inline std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << quote(fields[i]);
  }
  out << '\n';
}

/// Shortest text that reads back to the same double.
inline std::string number(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace cops::csv
