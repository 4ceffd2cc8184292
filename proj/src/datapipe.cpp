// SPDX-License-Identifier: Apache-2.0
#include "plm/datapipe.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_set>

#include "plm/jsonl.hpp"

namespace plm {

namespace {

using json = nlohmann::json;

const std::vector<std::pair<SourceCategory, std::string>> kCategoryNames = {
    {SourceCategory::web, "web"},
    {SourceCategory::news, "news"},
    {SourceCategory::patents, "patents"},
    {SourceCategory::papers, "papers"},
    {SourceCategory::books, "books"},
    {SourceCategory::chats, "chats"},
    {SourceCategory::exams, "exams"},
    {SourceCategory::codes, "codes"},
    {SourceCategory::research_reports, "research_reports"},
    {SourceCategory::supervised, "supervised"},
};

std::string normalize_ws(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool in_space = true;  // also trims leading whitespace
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      if (!in_space) out.push_back(' ');
      in_space = true;
    } else {
      out.push_back(c);
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream is(text);
  std::string w;
  while (is >> w) words.push_back(w);
  return words;
}

std::vector<uint64_t> shingle_set(const std::vector<std::string>& words, int k) {
  std::set<uint64_t> s;
  if (static_cast<int>(words.size()) < k) {
    std::string all;
    for (const auto& w : words) {
      all += w;
      all += '\x1f';
    }
    s.insert(fnv1a64(all));
  } else {
    for (size_t i = 0; i + k <= words.size(); ++i) {
      std::string sh;
      for (int j = 0; j < k; ++j) {
        sh += words[i + j];
        sh += '\x1f';
      }
      s.insert(fnv1a64(sh));
    }
  }
  return {s.begin(), s.end()};
}

double jaccard_sorted(const std::vector<uint64_t>& a, const std::vector<uint64_t>& b) {
  size_t i = 0, j = 0, inter = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++inter;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

std::string to_string(SourceCategory c) {
  for (const auto& [cat, name] : kCategoryNames)
    if (cat == c) return name;
  fail("unknown source category");
}

SourceCategory category_from_string(const std::string& s) {
  std::string norm = s;
  std::replace(norm.begin(), norm.end(), '-', '_');
  for (const auto& [cat, name] : kCategoryNames)
    if (name == norm) return cat;
  fail("unknown source category '" + s + "'");
}

std::string to_string(Language l) {
  switch (l) {
    case Language::zh: return "zh";
    case Language::en: return "en";
    case Language::other: return "other";
  }
  fail("unknown language");
}

Language language_from_string(const std::string& s) {
  if (s == "zh") return Language::zh;
  if (s == "en") return Language::en;
  if (s == "other") return Language::other;
  fail("unknown language '" + s + "'");
}

json CorpusDocument::to_json() const {
  json j;
  j["id"] = id;
  j["source_category"] = plm::to_string(category);
  j["language"] = plm::to_string(language);
  j["text"] = text;
  j["meta"] = meta;
  return j;
}

CorpusDocument CorpusDocument::from_json(const json& j) {
  CorpusDocument d;
  d.id = j.at("id").get<std::string>();
  d.category = category_from_string(j.at("source_category").get<std::string>());
  d.language = language_from_string(j.at("language").get<std::string>());
  d.text = j.at("text").get<std::string>();
  if (j.contains("meta")) d.meta = j.at("meta").get<std::map<std::string, std::string>>();
  return d;
}

std::vector<CorpusDocument> read_corpus_jsonl(const std::string& path) {
  std::vector<CorpusDocument> docs;
  std::unordered_set<std::string> ids;
  for (const auto& row : read_jsonl(path)) {
    docs.push_back(CorpusDocument::from_json(row));
    if (!ids.insert(docs.back().id).second)
      fail("read_corpus_jsonl: duplicate document id '" + docs.back().id + "' in " + path);
  }
  return docs;
}

void write_corpus_jsonl(const std::string& path, const std::vector<CorpusDocument>& docs) {
  std::vector<json> rows;
  rows.reserve(docs.size());
  for (const auto& d : docs) rows.push_back(d.to_json());
  write_jsonl(path, rows);
}

void QualityParams::validate() const {
  if (max_symbol_ratio < 0 || max_symbol_ratio > 1 || max_repeat_ratio < 0 ||
      max_repeat_ratio > 1)
    fail("QualityParams: ratios must lie in [0, 1]");
  if (min_chars < 0) fail("QualityParams: min_chars must be non-negative");
}

std::optional<std::string> quality_check(const CorpusDocument& doc, const QualityParams& p) {
  if (!valid_utf8(doc.text)) return "invalid_utf8";
  auto cps = utf8_codepoints(doc.text);
  if (static_cast<int>(cps.size()) < p.min_chars) return "too_short";

  int64_t symbols = 0, non_space = 0;
  for (uint32_t cp : cps) {
    bool space = cp == ' ' || cp == '\t' || cp == '\r' || cp == '\n';
    if (space) continue;
    ++non_space;
    bool ascii_alnum = (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') ||
                       (cp >= 'A' && cp <= 'Z');
    if (cp < 0x80 && !ascii_alnum) ++symbols;  // ASCII punctuation and symbols
  }
  if (non_space > 0 &&
      static_cast<double>(symbols) / static_cast<double>(non_space) > p.max_symbol_ratio)
    return "symbol_ratio";

  auto words = split_words(doc.text);
  if (!words.empty()) {
    std::set<std::string> distinct(words.begin(), words.end());
    double repeat = 1.0 - static_cast<double>(distinct.size()) / static_cast<double>(words.size());
    if (repeat > p.max_repeat_ratio) return "repeat_ratio";
  }

  if (std::find(p.lang_allowlist.begin(), p.lang_allowlist.end(), doc.language) ==
      p.lang_allowlist.end())
    return "language";
  return std::nullopt;
}

void NearDupParams::validate() const {
  if (shingle_k < 1) fail("NearDupParams: shingle_k must be at least 1");
  if (jaccard_threshold <= 0 || jaccard_threshold > 1)
    fail("NearDupParams: jaccard_threshold must lie in (0, 1]");
}

std::vector<CorpusDocument> dedup_exact(std::vector<CorpusDocument> docs, FilterReport* report) {
  std::vector<CorpusDocument> kept;
  std::unordered_set<uint64_t> seen;
  if (report) report->exact.in += static_cast<int64_t>(docs.size());
  for (auto& d : docs) {
    uint64_t h = fnv1a64(normalize_ws(d.text));
    if (seen.insert(h).second) {
      kept.push_back(std::move(d));
      if (report) report->exact.kept++;
    } else if (report) {
      report->exact.dropped++;
      report->drops.emplace_back(d.id, "exact_duplicate");
    }
  }
  return kept;
}

double shingle_jaccard(const std::string& a, const std::string& b, int k) {
  return jaccard_sorted(shingle_set(split_words(a), k), shingle_set(split_words(b), k));
}

std::vector<CorpusDocument> dedup_near(std::vector<CorpusDocument> docs, const NearDupParams& p,
                                       FilterReport* report) {
  p.validate();
  if (report) report->near.in += static_cast<int64_t>(docs.size());
  std::vector<CorpusDocument> kept;
  std::vector<std::vector<uint64_t>> kept_shingles;
  for (auto& d : docs) {
    auto sh = shingle_set(split_words(d.text), p.shingle_k);
    bool duplicate = false;
    for (const auto& prior : kept_shingles) {
      if (jaccard_sorted(sh, prior) >= p.jaccard_threshold) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) {
      if (report) {
        report->near.dropped++;
        report->drops.emplace_back(d.id, "near_duplicate");
      }
    } else {
      kept.push_back(std::move(d));
      kept_shingles.push_back(std::move(sh));
      if (report) report->near.kept++;
    }
  }
  return kept;
}

std::vector<PiiRule> default_pii_rules() {
  return {
      {"email", R"([A-Za-z0-9._%+\-]+@[A-Za-z0-9.\-]+\.[A-Za-z]{2,})", "[EMAIL]"},
      {"phone", R"(\+\d{1,3}(?:[-\s]?\d{2,4}){2,4})", "[PHONE]"},
      {"id", R"(\b\d{3}-\d{2}-\d{4}\b|\b\d{15,18}\b)", "[ID]"},
  };
}

PiiRedactor::PiiRedactor(const std::vector<PiiRule>& rules) {
  for (const auto& r : rules) {
    try {
      rules_.push_back({r.name, std::regex(r.pattern, std::regex::ECMAScript), r.placeholder});
    } catch (const std::regex_error& e) {
      fail("PiiRedactor: invalid pattern for rule '" + r.name + "': " + e.what());
    }
  }
}

PiiRedactor::Result PiiRedactor::redact(const std::string& text) const {
  Result res;
  res.text = text;
  for (const auto& rule : rules_) {
    std::string next;
    next.reserve(res.text.size());
    auto begin = std::sregex_iterator(res.text.begin(), res.text.end(), rule.re);
    auto end = std::sregex_iterator();
    size_t last = 0;
    for (auto it = begin; it != end; ++it) {
      next.append(res.text, last, static_cast<size_t>(it->position()) - last);
      next += rule.placeholder;
      last = static_cast<size_t>(it->position() + it->length());
      res.matches++;
      res.per_rule[rule.name]++;
    }
    next.append(res.text, last, std::string::npos);
    res.text = std::move(next);
  }
  return res;
}

json FilterReport::to_json() const {
  auto stage = [](const StageCounts& c) {
    return json{{"in", c.in}, {"kept", c.kept}, {"dropped", c.dropped}};
  };
  json j;
  j["quality"] = stage(quality);
  j["exact_dedup"] = stage(exact);
  j["near_dedup"] = stage(near);
  j["pii"] = {{"matches", pii_matches}, {"per_rule", pii_per_rule}};
  json drops_j = json::array();
  for (const auto& [id, reason] : drops) drops_j.push_back({{"id", id}, {"reason", reason}});
  j["drops"] = drops_j;
  return j;
}

PipelineOutput run_datapipe(std::vector<CorpusDocument> docs, const QualityParams& q,
                            const NearDupParams& n, const PiiRedactor& pii) {
  q.validate();
  n.validate();
  PipelineOutput out;
  out.report.quality.in = static_cast<int64_t>(docs.size());

  std::vector<CorpusDocument> passed;
  for (auto& d : docs) {
    if (auto reason = quality_check(d, q)) {
      out.report.quality.dropped++;
      out.report.drops.emplace_back(d.id, *reason);
    } else {
      out.report.quality.kept++;
      passed.push_back(std::move(d));
    }
  }
  passed = dedup_exact(std::move(passed), &out.report);
  passed = dedup_near(std::move(passed), n, &out.report);
  for (auto& d : passed) {
    auto r = pii.redact(d.text);
    d.text = std::move(r.text);
    out.report.pii_matches += r.matches;
    for (const auto& [name, cnt] : r.per_rule) out.report.pii_per_rule[name] += cnt;
  }
  out.docs = std::move(passed);
  return out;
}

}  // namespace plm
