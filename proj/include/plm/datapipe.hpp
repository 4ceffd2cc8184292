// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "plm/common.hpp"

namespace plm {

enum class SourceCategory {
  web,
  news,
  patents,
  papers,
  books,
  chats,
  exams,
  codes,
  research_reports,
  supervised,
};

enum class Language { zh, en, other };

std::string to_string(SourceCategory c);
SourceCategory category_from_string(const std::string& s);
std::string to_string(Language l);
Language language_from_string(const std::string& s);

struct CorpusDocument {
  std::string id;
  SourceCategory category = SourceCategory::web;
  Language language = Language::en;
  std::string text;
  std::map<std::string, std::string> meta;

  nlohmann::json to_json() const;
  static CorpusDocument from_json(const nlohmann::json& j);
};

std::vector<CorpusDocument> read_corpus_jsonl(const std::string& path);
void write_corpus_jsonl(const std::string& path, const std::vector<CorpusDocument>& docs);

struct QualityParams {
  int min_chars = 100;               // counted in code points
  double max_symbol_ratio = 0.3;     // ASCII punctuation over non-space code points
  double max_repeat_ratio = 0.6;     // 1 - distinct/total whitespace words
  std::vector<Language> lang_allowlist = {Language::en, Language::zh};

  void validate() const;
};

/// First failing rule names the drop reason; nullopt means keep.
/// Rule order: invalid_utf8, too_short, symbol_ratio, repeat_ratio, language.
std::optional<std::string> quality_check(const CorpusDocument& doc, const QualityParams& p);

struct NearDupParams {
  int shingle_k = 5;
  double jaccard_threshold = 0.8;

  void validate() const;
};

struct PiiRule {
  std::string name;
  std::string pattern;
  std::string placeholder;
};

std::vector<PiiRule> default_pii_rules();

/// Compiles the ruleset up front; an invalid pattern is rejected at load.
class PiiRedactor {
public:
  explicit PiiRedactor(const std::vector<PiiRule>& rules);

  struct Result {
    std::string text;
    int matches = 0;
    std::map<std::string, int> per_rule;
  };
  Result redact(const std::string& text) const;

private:
  struct Compiled {
    std::string name;
    std::regex re;
    std::string placeholder;
  };
  std::vector<Compiled> rules_;
};

struct StageCounts {
  int64_t in = 0;
  int64_t kept = 0;
  int64_t dropped = 0;
};

struct FilterReport {
  StageCounts quality, exact, near;
  std::vector<std::pair<std::string, std::string>> drops;  // (doc id, reason)
  int64_t pii_matches = 0;
  std::map<std::string, int64_t> pii_per_rule;

  nlohmann::json to_json() const;
};

/// Exact-hash dedup over whitespace-normalized text; first occurrence wins.
std::vector<CorpusDocument> dedup_exact(std::vector<CorpusDocument> docs, FilterReport* report);

/// Word k-shingle sets, exact pairwise Jaccard against earlier kept docs.
std::vector<CorpusDocument> dedup_near(std::vector<CorpusDocument> docs, const NearDupParams& p,
                                       FilterReport* report);

/// Exact word-shingle Jaccard between two texts, exposed so callers can
/// audit individual dedup decisions.
double shingle_jaccard(const std::string& a, const std::string& b, int k);

struct PipelineOutput {
  std::vector<CorpusDocument> docs;
  FilterReport report;
};

/// Fixed order: quality filter, exact dedup, near dedup, PII redaction.
PipelineOutput run_datapipe(std::vector<CorpusDocument> docs, const QualityParams& q,
                            const NearDupParams& n, const PiiRedactor& pii);

}  // namespace plm
