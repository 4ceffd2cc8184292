// SPDX-License-Identifier: Apache-2.0
#include "plm/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

namespace plm {

namespace {

using json = nlohmann::json;

const std::vector<std::pair<std::string, std::string>> kSpecials = {
    {"bos", "<bos>"}, {"eos", "<eos>"}, {"pad", "<pad>"}};

TokenizerModel byte_base() {
  TokenizerModel t;
  t.vocab.reserve(TokenizerModel::kByteCount + kSpecials.size());
  for (int b = 0; b < TokenizerModel::kByteCount; ++b)
    t.vocab.push_back(std::string(1, static_cast<char>(b)));
  for (const auto& [name, text] : kSpecials) {
    t.special[name] = static_cast<int>(t.vocab.size());
    t.vocab.push_back(text);
  }
  t.reindex();
  return t;
}

// Token byte strings may not be valid UTF-8 on their own, so the JSON file
// stores each byte as the code point of the same value (latin-1 style).
std::string bytes_to_jsonstr(const std::string& bytes) {
  std::string out;
  out.reserve(bytes.size());
  for (unsigned char c : bytes) {
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

std::string jsonstr_to_bytes(const std::string& s) {
  std::string out;
  size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
      i += 1;
    } else if ((c & 0xE0) == 0xC0 && i + 1 < s.size()) {
      unsigned char c2 = static_cast<unsigned char>(s[i + 1]);
      unsigned cp = ((c & 0x1Fu) << 6) | (c2 & 0x3Fu);
      if (cp > 0xFF) fail("tokenizer file: token code point exceeds one byte");
      out.push_back(static_cast<char>(cp));
      i += 2;
    } else {
      fail("tokenizer file: malformed token string encoding");
    }
  }
  return out;
}

}  // namespace

bool TokenizerModel::is_special(int id) const {
  for (const auto& [name, sid] : special)
    if (sid == id) return true;
  return false;
}

void TokenizerModel::reindex() {
  token_to_id_.clear();
  token_to_id_.reserve(vocab.size());
  for (size_t i = 0; i < vocab.size(); ++i) {
    auto [it, inserted] = token_to_id_.emplace(vocab[i], static_cast<int>(i));
    if (!inserted) fail("tokenizer: duplicate token string at ids " +
                        std::to_string(it->second) + " and " + std::to_string(i));
  }
  merge_rank_.clear();
  for (size_t r = 0; r < merges.size(); ++r) merge_rank_[merges[r]] = static_cast<int>(r);
}

std::vector<int> TokenizerModel::encode(std::string_view text) const {
  std::vector<int> seq;
  seq.reserve(text.size());
  for (unsigned char c : text) seq.push_back(static_cast<int>(c));
  while (seq.size() >= 2) {
    int best_rank = std::numeric_limits<int>::max();
    std::pair<int, int> best{-1, -1};
    for (size_t i = 0; i + 1 < seq.size(); ++i) {
      auto it = merge_rank_.find({seq[i], seq[i + 1]});
      if (it != merge_rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best = it->first;
      }
    }
    if (best.first < 0) break;
    int merged_id = token_to_id_.at(vocab[best.first] + vocab[best.second]);
    std::vector<int> next;
    next.reserve(seq.size());
    for (size_t i = 0; i < seq.size();) {
      if (i + 1 < seq.size() && seq[i] == best.first && seq[i + 1] == best.second) {
        next.push_back(merged_id);
        i += 2;
      } else {
        next.push_back(seq[i]);
        i += 1;
      }
    }
    seq.swap(next);
  }
  return seq;
}

std::string TokenizerModel::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= size()) fail("decode: id " + std::to_string(id) + " out of range");
    if (is_special(id)) continue;
    out += vocab[static_cast<size_t>(id)];
  }
  return out;
}

TokenizerModel train_bpe(const std::vector<std::string>& corpus, int target_vocab) {
  TokenizerModel tok = byte_base();
  if (target_vocab < tok.size())
    fail("train_bpe: target_vocab must be at least " + std::to_string(tok.size()) +
         " (bytes plus special tokens), got " + std::to_string(target_vocab));
  bool any_text = false;
  std::vector<std::vector<int>> seqs;
  seqs.reserve(corpus.size());
  for (const auto& doc : corpus) {
    if (doc.empty()) continue;
    any_text = true;
    std::vector<int> s;
    s.reserve(doc.size());
    for (unsigned char c : doc) s.push_back(static_cast<int>(c));
    seqs.push_back(std::move(s));
  }
  if (!any_text) fail("train_bpe: empty corpus");

  while (tok.size() < target_vocab) {
    // Count adjacent pairs; pairs never cross document boundaries.
    std::map<std::pair<int, int>, int64_t> counts;
    for (const auto& s : seqs)
      for (size_t i = 0; i + 1 < s.size(); ++i) counts[{s[i], s[i + 1]}]++;
    int64_t best_count = 0;
    std::pair<int, int> best{-1, -1};
    std::string best_str;
    for (const auto& [pair, n] : counts) {
      if (n < 2) continue;
      std::string merged = tok.vocab[pair.first] + tok.vocab[pair.second];
      if (n > best_count || (n == best_count && merged < best_str)) {
        best_count = n;
        best = pair;
        best_str = std::move(merged);
      }
    }
    if (best.first < 0) break;
    int new_id = tok.size();
    tok.vocab.push_back(best_str);
    tok.merges.push_back(best);
    for (auto& s : seqs) {
      std::vector<int> next;
      next.reserve(s.size());
      for (size_t i = 0; i < s.size();) {
        if (i + 1 < s.size() && s[i] == best.first && s[i + 1] == best.second) {
          next.push_back(new_id);
          i += 2;
        } else {
          next.push_back(s[i]);
          i += 1;
        }
      }
      s.swap(next);
    }
  }
  tok.reindex();
  return tok;
}

TokenizerModel merge_tokenizers(const TokenizerModel& base, const TokenizerModel& domain) {
  for (int b = 0; b < TokenizerModel::kByteCount; ++b) {
    if (base.vocab.size() <= static_cast<size_t>(b) || base.vocab[b].size() != 1 ||
        static_cast<unsigned char>(base.vocab[b][0]) != b)
      fail("merge_tokenizers: base tokenizer does not follow the byte-fallback convention");
    if (domain.vocab.size() <= static_cast<size_t>(b) || domain.vocab[b].size() != 1 ||
        static_cast<unsigned char>(domain.vocab[b][0]) != b)
      fail("merge_tokenizers: domain tokenizer does not follow the byte-fallback convention");
  }
  for (const auto& [name, did] : domain.special) {
    auto it = base.special.find(name);
    if (it == base.special.end())
      fail("merge_tokenizers: special token '" + name + "' missing from base tokenizer");
    if (base.vocab[it->second] != domain.vocab[did])
      fail("merge_tokenizers: special token '" + name + "' conflicts between tokenizers");
  }

  TokenizerModel out;
  out.vocab = base.vocab;
  out.merges = base.merges;
  out.special = base.special;
  out.version = base.version;

  std::unordered_map<std::string, int> index;
  index.reserve(out.vocab.size() + domain.vocab.size());
  for (size_t i = 0; i < out.vocab.size(); ++i) index[out.vocab[i]] = static_cast<int>(i);
  std::vector<int> domain_to_out(domain.vocab.size(), -1);
  for (size_t id = 0; id < domain.vocab.size(); ++id) {
    const std::string& t = domain.vocab[id];
    auto it = index.find(t);
    if (it != index.end()) {
      domain_to_out[id] = it->second;
    } else {
      domain_to_out[id] = static_cast<int>(out.vocab.size());
      index[t] = domain_to_out[id];
      out.vocab.push_back(t);
    }
  }
  std::set<std::pair<int, int>> have(out.merges.begin(), out.merges.end());
  for (const auto& [l, r] : domain.merges) {
    std::pair<int, int> remapped{domain_to_out[l], domain_to_out[r]};
    if (have.insert(remapped).second) out.merges.push_back(remapped);
  }
  out.reindex();
  return out;
}

double compression_ratio(const TokenizerModel& tok, const std::vector<std::string>& corpus) {
  int64_t tokens = 0, bytes = 0;
  for (const auto& doc : corpus) {
    tokens += static_cast<int64_t>(tok.encode(doc).size());
    bytes += static_cast<int64_t>(doc.size());
  }
  if (bytes == 0) fail("compression_ratio: empty corpus");
  return static_cast<double>(tokens) / static_cast<double>(bytes);
}

void save_tokenizer(const TokenizerModel& tok, const std::string& path) {
  json j;
  j["version"] = tok.version;
  j["vocab"] = json::array();
  for (const auto& t : tok.vocab) j["vocab"].push_back(bytes_to_jsonstr(t));
  j["merges"] = json::array();
  for (const auto& [l, r] : tok.merges)
    j["merges"].push_back({bytes_to_jsonstr(tok.vocab[l]), bytes_to_jsonstr(tok.vocab[r])});
  j["special"] = tok.special;
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("save_tokenizer: cannot open " + path);
  out << j.dump(1) << "\n";
  if (!out) fail("save_tokenizer: write failed for " + path);
}

TokenizerModel load_tokenizer(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("load_tokenizer: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail("load_tokenizer: invalid JSON in " + path + ": " + e.what());
  }
  TokenizerModel tok;
  try {
    tok.version = j.at("version").get<int>();
    if (tok.version != 1)
      fail("load_tokenizer: unsupported tokenizer version " + std::to_string(tok.version));
    for (const auto& s : j.at("vocab")) tok.vocab.push_back(jsonstr_to_bytes(s.get<std::string>()));
    tok.special = j.at("special").get<std::map<std::string, int>>();
    tok.reindex();
    for (const auto& m : j.at("merges")) {
      std::string l = jsonstr_to_bytes(m.at(0).get<std::string>());
      std::string r = jsonstr_to_bytes(m.at(1).get<std::string>());
      auto li = tok.token_index().find(l);
      auto ri = tok.token_index().find(r);
      if (li == tok.token_index().end() || ri == tok.token_index().end())
        fail("load_tokenizer: merge rule references unknown token");
      tok.merges.emplace_back(li->second, ri->second);
    }
  } catch (const json::exception& e) {
    fail("load_tokenizer: malformed tokenizer file " + path + ": " + e.what());
  }
  for (const auto& name : {"bos", "eos", "pad"})
    if (!tok.special.count(name))
      fail(std::string("load_tokenizer: missing special token '") + name + "'");
  tok.reindex();
  return tok;
}

}  // namespace plm
