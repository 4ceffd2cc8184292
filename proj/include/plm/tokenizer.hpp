// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "plm/common.hpp"

namespace plm {

/// Byte-level BPE model. Ids 0..255 are the raw bytes, the special tokens
/// follow, and learned merges take the ids after that. Byte fallback makes
/// encode total over arbitrary UTF-8 (in fact arbitrary bytes), and
/// decode(encode(s)) == s always holds.
struct TokenizerModel {
  static constexpr int kByteCount = 256;

  std::vector<std::string> vocab;            // id -> token byte string
  std::vector<std::pair<int, int>> merges;   // (left id, right id), priority order
  std::map<std::string, int> special;        // "bos"/"eos"/"pad" -> id
  int version = 1;

  int bos_id() const { return special.at("bos"); }
  int eos_id() const { return special.at("eos"); }
  int pad_id() const { return special.at("pad"); }
  int size() const { return static_cast<int>(vocab.size()); }
  bool is_special(int id) const;

  /// Rebuilds the token and merge lookup tables; call after mutating fields.
  void reindex();
  const std::unordered_map<std::string, int>& token_index() const { return token_to_id_; }

  std::vector<int> encode(std::string_view text) const;
  std::string decode(std::span<const int> ids) const;

private:
  std::unordered_map<std::string, int> token_to_id_;
  std::map<std::pair<int, int>, int> merge_rank_;
};

/// Greedy highest-frequency pair merging over the corpus until target_vocab
/// tokens exist or no pair occurs at least twice. Frequency ties go to the
/// lexicographically smaller merged string.
TokenizerModel train_bpe(const std::vector<std::string>& corpus, int target_vocab);

/// Base vocabulary keeps its ids; domain tokens unknown to the base are
/// appended in domain order, and domain merge rules follow the base rules.
TokenizerModel merge_tokenizers(const TokenizerModel& base, const TokenizerModel& domain);

/// Total token count divided by total byte count over the corpus.
double compression_ratio(const TokenizerModel& tok, const std::vector<std::string>& corpus);

/// JSON format: {"vocab": [...], "merges": [[l, r]...], "special": {...},
/// "version": n}. Token byte strings are stored code-point-per-byte so the
/// file is valid UTF-8; save/load round-trips bit-exactly.
void save_tokenizer(const TokenizerModel& tok, const std::string& path);
TokenizerModel load_tokenizer(const std::string& path);

}  // namespace plm
