#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cops/error.hpp"
#include "cops/http.hpp"

namespace cops {

/// Pieces of an absolute http(s) URL. `target` is path plus query, always
/// starting with '/'.
struct ParsedUrl {
  std::string scheme;
  std::string host;
  int port = 0;
  std::string target = "/";

  bool default_port() const { return (scheme == "http" && port == 80) || (scheme == "https" && port == 443); }

  std::string origin() const {
    std::string h = host.find(':') != std::string::npos ? "[" + host + "]" : host;
    return scheme + "://" + h + (default_port() ? "" : ":" + std::to_string(port));
  }

  std::string str() const { return origin() + target; }

  std::string path() const { return target.substr(0, target.find_first_of("?#")); }
};

inline std::optional<ParsedUrl> parse_url(std::string_view url) {
  const auto sep = url.find("://");
  if (sep == std::string_view::npos) return std::nullopt;
  ParsedUrl u;
  for (char c : url.substr(0, sep)) u.scheme.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (u.scheme != "http" && u.scheme != "https") return std::nullopt;
  auto rest = url.substr(sep + 3);
  const auto slash = rest.find_first_of("/?#");
  auto authority = rest.substr(0, slash);
  u.target = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
  if (u.target.front() != '/') u.target.insert(0, "/");
  if (const auto hash = u.target.find('#'); hash != std::string::npos) u.target.resize(hash);
  if (const auto at = authority.rfind('@'); at != std::string_view::npos) authority = authority.substr(at + 1);
  std::string_view host = authority, port;
  if (!authority.empty() && authority.front() == '[') {
    const auto close = authority.find(']');
    if (close == std::string_view::npos) return std::nullopt;
    host = authority.substr(1, close - 1);
    if (close + 1 < authority.size()) {
      if (authority[close + 1] != ':') return std::nullopt;
      port = authority.substr(close + 2);
    }
  } else if (const auto colon = authority.rfind(':'); colon != std::string_view::npos) {
    host = authority.substr(0, colon);
    port = authority.substr(colon + 1);
  }
  if (host.empty()) return std::nullopt;
  for (char c : host) {
    if (std::isspace(static_cast<unsigned char>(c))) return std::nullopt;
    u.host.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (port.empty()) {
    u.port = u.scheme == "https" ? 443 : 80;
  } else {
    if (port.size() > 5 || !std::all_of(port.begin(), port.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      return std::nullopt;
    }
    u.port = std::stoi(std::string(port));
    if (u.port < 1 || u.port > 65535) return std::nullopt;
  }
  return u;
}

/// Resolves a Location header value against the URL that produced it.
inline std::optional<ParsedUrl> resolve_location(const ParsedUrl& base, std::string_view location) {
  if (location.find("://") != std::string_view::npos) return parse_url(location);
  if (location.starts_with("//")) return parse_url(base.scheme + ":" + std::string(location));
  ParsedUrl u = base;
  if (location.empty()) return u;
  if (location.front() == '/') {
    u.target = std::string(location);
  } else if (location.front() == '?') {
    u.target = base.path() + std::string(location);
  } else {
    const auto dir = base.path().substr(0, base.path().rfind('/') + 1);
    u.target = dir + std::string(location);
  }
  if (const auto hash = u.target.find('#'); hash != std::string::npos) u.target.resize(hash);
  return u;
}

enum class ExpansionStatus { Final, Timeout, TooManyRedirects, NetworkError };

inline std::string_view expansion_status_name(ExpansionStatus s) {
  switch (s) {
    case ExpansionStatus::Final: return "FINAL";
    case ExpansionStatus::Timeout: return "TIMEOUT";
    case ExpansionStatus::TooManyRedirects: return "TOO_MANY_REDIRECTS";
    case ExpansionStatus::NetworkError: return "NETWORK_ERROR";
  }
  return "?";
}

struct ExpansionResult {
  std::string original;
  std::string final_url;
  /// original first, then each redirect target in order.
  std::vector<std::string> chain;
  ExpansionStatus status = ExpansionStatus::NetworkError;
  double elapsed_ms = 0.0;
  /// Response body bytes handed to the client (HEAD and cancelled GETs read none).
  std::size_t body_bytes_read = 0;
  std::string detail;
};

inline nlohmann::ordered_json to_json(const ExpansionResult& r) {
  nlohmann::ordered_json j{{"original", r.original},
                           {"final", r.final_url},
                           {"chain", r.chain},
                           {"status", expansion_status_name(r.status)},
                           {"elapsed_ms", r.elapsed_ms}};
  if (!r.detail.empty()) j["detail"] = r.detail;
  return j;
}

struct ExpandOptions {
  std::size_t max_redirects = 10;
  std::chrono::milliseconds timeout{3000};
  /// Verify TLS certificates; a failed handshake reports NETWORK_ERROR.
  bool verify_tls = true;
};

namespace detail {

struct HopResponse {
  int status = 0;
  std::string location;
  httplib::Error error = httplib::Error::Success;
};

inline void set_timeouts(httplib::Client& cli, std::chrono::microseconds left) {
  const auto sec = std::chrono::duration_cast<std::chrono::seconds>(left);
  const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(left - sec);
  cli.set_connection_timeout(sec.count(), usec.count());
  cli.set_read_timeout(sec.count(), usec.count());
  cli.set_write_timeout(sec.count(), usec.count());
}

/// HEAD; on 405/501 a GET that is cancelled as soon as the headers arrive.
inline HopResponse request_headers(const ParsedUrl& url, std::chrono::microseconds left, const ExpandOptions& opts,
                                   std::size_t& body_bytes) {
  httplib::Client cli(url.origin());
  cli.set_follow_location(false);
  cli.set_keep_alive(false);
#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
  cli.enable_server_certificate_verification(opts.verify_tls);
#endif
  set_timeouts(cli, left);
  const httplib::Headers headers{{"User-Agent", "cops-url-expander/1"}};
  HopResponse hop;
  if (auto res = cli.Head(url.target, headers)) {
    hop.status = res->status;
    hop.location = res->get_header_value("Location");
    if (hop.status != 405 && hop.status != 501) return hop;
  } else {
    hop.error = res.error();
    return hop;
  }
  hop = {};
  auto res = cli.Get(
      url.target, headers,
      [&](const httplib::Response& r) {
        hop.status = r.status;
        hop.location = r.get_header_value("Location");
        return false;
      },
      [&](const char*, std::size_t n) {
        body_bytes += n;
        return false;
      });
  if (hop.status == 0) hop.error = res.error();
  return hop;
}

inline bool is_redirect(int status) {
  return status == 301 || status == 302 || status == 303 || status == 307 || status == 308;
}

}  // namespace detail

/// Follows redirects with header-only requests until a non-redirect answer,
/// the redirect cap, the deadline or a network failure. Never throws for
/// network conditions; an unparsable URL throws InvalidUrl.
inline ExpansionResult expand_url(std::string_view url, const ExpandOptions& opts = {}) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const auto deadline = start + opts.timeout;
  auto current = parse_url(url);
  require(current.has_value(), ErrorCode::InvalidUrl, "not an absolute http(s) URL: " + std::string(url));
  ExpansionResult r;
  r.original = std::string(url);
  r.chain.push_back(r.original);
  std::size_t redirects = 0;
  const auto finish = [&](ExpansionStatus s, std::string why = {}) {
    r.status = s;
    r.final_url = r.chain.back();
    r.detail = std::move(why);
    r.elapsed_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
    return r;
  };
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::microseconds>(deadline - clock::now());
    if (left.count() <= 0) return finish(ExpansionStatus::Timeout, "deadline reached");
    const auto hop = detail::request_headers(*current, left, opts, r.body_bytes_read);
    if (hop.status == 0) {
      if (clock::now() >= deadline - std::chrono::milliseconds(5) || hop.error == httplib::Error::ConnectionTimeout) {
        return finish(ExpansionStatus::Timeout, httplib::to_string(hop.error));
      }
      return finish(ExpansionStatus::NetworkError, httplib::to_string(hop.error));
    }
    if (!detail::is_redirect(hop.status) || hop.location.empty()) return finish(ExpansionStatus::Final);
    if (redirects == opts.max_redirects) return finish(ExpansionStatus::TooManyRedirects);
    auto next = resolve_location(*current, hop.location);
    if (!next) return finish(ExpansionStatus::NetworkError, "unusable Location header: " + hop.location);
    current = std::move(next);
    r.chain.push_back(current->str());
    ++redirects;
  }
}

/// Expands each URL with at most `max_in_flight` requests running at once.
/// Results are in input order; invalid URLs get NETWORK_ERROR with a detail.
inline std::vector<ExpansionResult> expand_many(const std::vector<std::string>& urls, const ExpandOptions& opts = {},
                                                std::size_t max_in_flight = 8) {
  std::vector<ExpansionResult> out(urls.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < urls.size();) {
      try {
        out[i] = expand_url(urls[i], opts);
      } catch (const Error& e) {
        out[i].original = out[i].final_url = urls[i];
        out[i].chain = {urls[i]};
        out[i].status = ExpansionStatus::NetworkError;
        out[i].detail = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(std::max<std::size_t>(max_in_flight, 1), urls.size()); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return out;
}

inline const std::set<std::string>& default_shorteners() {
  static const std::set<std::string> hosts{"bit.ly",  "t.co",    "tinyurl.com", "goo.gl",     "ow.ly",   "is.gd",
                                           "buff.ly", "rb.gy",   "cutt.ly",     "shorturl.at", "tiny.cc", "t.ly",
                                           "s.id",    "v.gd",    "bl.ink",      "rebrand.ly", "qrco.de", "lnkd.in"};
  return hosts;
}

/// One hostname per line; blank lines and '#' comments ignored.
inline std::set<std::string> load_shorteners(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::MissingFile, "cannot read shortener list " + path.string());
  std::set<std::string> out;
  for (std::string line; std::getline(in, line);) {
    line = line.substr(0, line.find('#'));
    std::string host;
    for (char c : line) {
      if (!std::isspace(static_cast<unsigned char>(c))) host.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (!host.empty()) out.insert(host);
  }
  return out;
}

/// True when the host is a listed shortener, or when the URL has no query
/// and its path is one segment of 4-10 letters/digits mixing in a digit or
/// an uppercase letter (the shape of a short code such as "/3xYz").
inline bool looks_shortened(std::string_view url, const std::set<std::string>& shorteners = default_shorteners()) {
  const auto u = parse_url(url);
  require(u.has_value(), ErrorCode::InvalidUrl, "not an absolute http(s) URL: " + std::string(url));
  std::string host = u->host;
  if (host.starts_with("www.")) host.erase(0, 4);
  if (shorteners.contains(host)) return true;
  if (u->target.find('?') != std::string::npos) return false;
  const std::string seg = u->path().substr(1);
  if (seg.size() < 4 || seg.size() > 10) return false;
  bool code_like = false;
  for (char c : seg) {
    if (!std::isalnum(static_cast<unsigned char>(c))) return false;
    code_like |= std::isdigit(static_cast<unsigned char>(c)) || std::isupper(static_cast<unsigned char>(c));
  }
  return code_like;
}

/// http(s) URLs appearing in free text, in order.
inline std::vector<std::string> find_urls(std::string_view text) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < text.size();) {
    const auto a = text.find("http://", i), b = text.find("https://", i);
    const auto pos = std::min(a, b);
    if (pos == std::string_view::npos) break;
    auto end = pos;
    while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end]))) ++end;
    std::string candidate(text.substr(pos, end - pos));
    while (!candidate.empty() && std::string_view(".,;:!?)\"'").find(candidate.back()) != std::string_view::npos) {
      candidate.pop_back();
    }
    if (parse_url(candidate)) out.push_back(candidate);
    i = end;
  }
  return out;
}

/// Replaces every shortened-looking URL in `text` with the final URL of its
/// redirect chain. URLs that fail to expand are left as they are.
inline std::string expand_urls_in_text(std::string_view text, const ExpandOptions& opts = {},
                                       const std::set<std::string>& shorteners = default_shorteners()) {
  std::string out(text);
  for (const auto& url : find_urls(text)) {
    if (!looks_shortened(url, shorteners)) continue;
    const auto r = expand_url(url, opts);
    if (r.status != ExpansionStatus::Final || r.final_url == url) continue;
    for (auto pos = out.find(url); pos != std::string::npos; pos = out.find(url, pos + r.final_url.size())) {
      out.replace(pos, url.size(), r.final_url);
    }
  }
  return out;
}

}  // namespace cops
