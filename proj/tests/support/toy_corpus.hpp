#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cops/corpus.hpp"
#include "cops/csv.hpp"
#include "cops/rng.hpp"

namespace cops::testing {

/// Small SMS-like corpus whose classes are separable by vocabulary.
inline std::vector<LabeledRecord> toy_messages(std::size_t ham, std::size_t spam, std::size_t smish,
                                               std::uint64_t seed) {
  RngStream rng(seed);
  const auto pick = [&rng](const std::vector<std::string>& v) { return v[rng.below(v.size())]; };
  const std::vector<std::string> names{"tom", "ana", "sam", "lee", "kim", "joe"};
  const std::vector<std::string> places{"home", "the gym", "work", "the mall", "class"};
  const std::vector<std::string> times{"tonight", "later", "tomorrow", "at 5", "soon"};
  const std::vector<std::string> prizes{"ipod", "holiday", "camera", "voucher", "phone"};
  const std::vector<std::string> banks{"bank", "paypal", "card", "wallet"};
  const std::vector<std::string> hosts{"secure-login.example", "verify.example", "acct-check.example"};
  const auto digits = [&rng](int n) {
    std::string s;
    for (int i = 0; i < n; ++i) s += static_cast<char>('0' + rng.below(10));
    return s;
  };
  std::vector<LabeledRecord> out;
  for (std::size_t i = 0; i < ham; ++i) {
    std::string t;
    switch (rng.below(3)) {
      case 0: t = "hey " + pick(names) + " are we still meeting at " + pick(places) + " " + pick(times); break;
      case 1: t = "ok i will see you at " + pick(places) + " " + pick(times) + " love " + pick(names); break;
      default: t = "can you pick me up from " + pick(places) + " " + pick(times) + "?"; break;
    }
    out.push_back({t, Label::Ham, "toy"});
  }
  for (std::size_t i = 0; i < spam; ++i) {
    std::string t;
    switch (rng.below(2)) {
      case 0: t = "WIN a FREE " + pick(prizes) + " now! txt WIN to " + digits(5) + " to claim"; break;
      default: t = "Congratulations you have won a " + pick(prizes) + " call " + digits(11) + " now"; break;
    }
    out.push_back({t, Label::Spam, "toy"});
  }
  for (std::size_t i = 0; i < smish; ++i) {
    std::string t;
    switch (rng.below(2)) {
      case 0: t = "Your " + pick(banks) + " account is locked, verify at http://" + pick(hosts) + "/" + digits(4); break;
      default: t = "Alert: unusual " + pick(banks) + " activity. Confirm details http://" + pick(hosts); break;
    }
    out.push_back({t, Label::Smishing, "toy"});
  }
  return out;
}

/// URL records: phishing ones carry login/verify words and odd hosts.
inline std::vector<LabeledRecord> toy_urls(std::size_t benign, std::size_t phishing, std::uint64_t seed) {
  RngStream rng(seed);
  const auto pick = [&rng](const std::vector<std::string>& v) { return v[rng.below(v.size())]; };
  const std::vector<std::string> sites{"wikipedia.org", "github.com", "bbc.co.uk", "python.org", "nytimes.com"};
  const std::vector<std::string> paths{"wiki/cat", "news/world", "docs/index.html", "about", "search?q=rain"};
  const std::vector<std::string> lures{"login", "verify", "secure-update", "account-confirm", "signin"};
  const std::vector<std::string> brands{"paypa1", "app1e-id", "bankofamerica-alert", "micr0soft"};
  std::vector<LabeledRecord> out;
  for (std::size_t i = 0; i < benign; ++i) {
    out.push_back({"https://www." + pick(sites) + "/" + pick(paths) + "/" + std::to_string(rng.below(1000)),
                   Label::NotPhishing, "toy"});
  }
  for (std::size_t i = 0; i < phishing; ++i) {
    out.push_back({"http://" + pick(brands) + "." + std::to_string(rng.below(100)) + ".xyz/" + pick(lures) +
                       ".php?id=" + std::to_string(rng.below(100000)),
                   Label::Phishing, "toy"});
  }
  return out;
}

inline void write_records(const std::filesystem::path& p, const std::vector<std::string>& header,
                          const std::vector<LabeledRecord>& records,
                          std::string (*label)(Label)) {
  std::ofstream out(p, std::ios::binary);
  csv::write_row(out, header);
  for (const auto& r : records) {
    if (header.size() > 2) csv::write_row(out, {r.text, "0", "0", label(r.label)});
    else if (header[0] == "url") csv::write_row(out, {r.text, label(r.label)});
    else csv::write_row(out, {label(r.label), r.text});
  }
}

/// Writes the five dataset files under their standard names. `scale`
/// multiplies every class count.
inline void write_toy_data_dir(const std::filesystem::path& dir, std::size_t scale = 1) {
  std::filesystem::create_directories(dir);
  const auto sms = +[](Label l) { return std::string(l == Label::Ham ? "ham" : l == Label::Spam ? "spam" : "smishing"); };
  write_records(dir / "smishing.csv", {"LABEL", "TEXT"}, toy_messages(40 * scale, 12 * scale, 12 * scale, 101), sms);
  write_records(dir / "sms_spam_kaggle.csv", {"v1", "v2"}, toy_messages(20 * scale, 8 * scale, 0, 102), sms);
  write_records(dir / "url_dataset_1.csv", {"url", "type"}, toy_urls(30 * scale, 20 * scale, 103),
                +[](Label l) { return std::string(l == Label::Phishing ? "phishing" : "benign"); });
  write_records(dir / "url_dataset_2.csv", {"url", "label"}, toy_urls(30 * scale, 20 * scale, 104),
                +[](Label l) { return std::string(l == Label::Phishing ? "bad" : "good"); });
  write_records(dir / "url_dataset_3.csv", {"domain", "ranking", "mld_res", "label"},
                toy_urls(25 * scale, 25 * scale, 105),
                +[](Label l) { return std::string(l == Label::Phishing ? "1" : "0"); });
}

}  // namespace cops::testing
