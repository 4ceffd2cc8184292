// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "plm/rng.hpp"
#include "plm/tokenizer.hpp"

using namespace plm;

namespace {

// Deterministic mixed-script string generator for round-trip properties.
std::string random_mixed_string(Rng& rng, int max_units) {
  static const std::vector<std::string> pieces = {
      "the", " ", "dose", "mg", "\n", "\t", "片", "剂", "药", "物", "β", "µ",
      "Ω", "é", "ß", "😀", "🧪", "→", "half-life", "50%", "…", "水", "分",
  };
  std::string out;
  int n = 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(max_units)));
  for (int i = 0; i < n; ++i) out += pieces[rng.uniform_int(pieces.size())];
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("first merge on aaabdaaabac is (a,a)") {
  auto tok = train_bpe({"aaabdaaabac"}, 260);
  REQUIRE(tok.merges.size() == 1);
  CHECK(tok.vocab[tok.merges[0].first] == "a");
  CHECK(tok.vocab[tok.merges[0].second] == "a");
  CHECK(tok.vocab.back() == "aa");
}

TEST_CASE("single repeated byte admits exactly one merge") {
  auto tok = train_bpe({"aaaaa"}, 400);
  CHECK(tok.merges.size() == 1);
  CHECK(tok.vocab.back() == "aa");
}

TEST_CASE("training is deterministic across runs") {
  std::vector<std::string> corpus = {"the cat sat on the mat", "the dog sat on the log",
                                     "药品说明书 the label"};
  auto a = train_bpe(corpus, 300);
  auto b = train_bpe(corpus, 300);
  CHECK(a.vocab == b.vocab);
  CHECK(a.merges == b.merges);
}

TEST_CASE("empty corpus and tiny targets are rejected") {
  CHECK_THROWS_AS(train_bpe({}, 300), Error);
  CHECK_THROWS_AS(train_bpe({"", ""}, 300), Error);
  CHECK_THROWS_AS(train_bpe({"abc"}, 100), Error);
}

TEST_CASE("encode of empty string is empty; unknown script falls back to bytes") {
  auto tok = train_bpe({"english text only, over and over, english text"}, 280);
  CHECK(tok.encode("").empty());
  std::string cyrillic = "привет";
  auto ids = tok.encode(cyrillic);
  CHECK(ids.size() == cyrillic.size());  // every byte one token
  for (int id : ids) CHECK(id < 256);
  CHECK(tok.decode(ids) == cyrillic);
}

TEST_CASE("round-trip holds for random mixed-script strings") {
  auto tok = train_bpe({"the dose is 50 mg twice daily 药品说明书 half-life"}, 320);
  Rng rng(2024);
  for (int i = 0; i < 300; ++i) {
    std::string s = random_mixed_string(rng, 20);
    CHECK(tok.decode(tok.encode(s)) == s);
  }
}

TEST_CASE("merging preserves base ids and appends novel domain tokens") {
  std::vector<std::string> base_corpus = {"general english text about weather and cooking",
                                          "more general english text and words"};
  std::vector<std::string> domain_corpus = {"pharmacokinetics bioavailability pharmacodynamics",
                                            "pharmacokinetics bioavailability dosing"};
  auto base = train_bpe(base_corpus, 290);
  auto domain = train_bpe(domain_corpus, 300);
  auto merged = merge_tokenizers(base, domain);

  for (int i = 0; i < base.size(); ++i) CHECK(merged.vocab[i] == base.vocab[i]);
  // Size equals base plus the set difference of token strings.
  std::set<std::string> base_set(base.vocab.begin(), base.vocab.end());
  int novel = 0;
  for (const auto& t : domain.vocab)
    if (!base_set.count(t)) ++novel;
  CHECK(merged.size() == base.size() + novel);
  // Base rules come first, so base-era text segments identically.
  std::string probe = "general english text";
  CHECK(base.encode(probe) == merged.encode(probe));
}

TEST_CASE("merging a tokenizer with itself is the identity") {
  auto tok = train_bpe({"abc abc abc abd abd"}, 270);
  auto merged = merge_tokenizers(tok, tok);
  CHECK(merged.vocab == tok.vocab);
  CHECK(merged.merges == tok.merges);
}

TEST_CASE("special token conflicts are rejected by name") {
  auto base = train_bpe({"aaa bbb aaa bbb"}, 265);
  auto domain = train_bpe({"ccc ddd ccc ddd"}, 265);
  domain.special["cls"] = 0;  // base lacks this special
  CHECK_THROWS_WITH_AS(merge_tokenizers(base, domain), doctest::Contains("cls"), Error);
}

TEST_CASE("compression ratio: byte tokenizer is exactly 1.0 and merges only help") {
  auto bytes_only = train_bpe({"qwxyz"}, 259);  // no pair repeats -> no merges
  CHECK(bytes_only.merges.empty());
  std::vector<std::string> corpus = {"pharmacokinetics pharmacokinetics pharmacokinetics"};
  CHECK(compression_ratio(bytes_only, corpus) == 1.0);

  auto trained = train_bpe(corpus, 300);
  CHECK(compression_ratio(trained, corpus) < compression_ratio(bytes_only, corpus));
  CHECK(compression_ratio(trained, corpus) == compression_ratio(trained, corpus));
  CHECK_THROWS_AS(compression_ratio(trained, {}), Error);
}

TEST_CASE("save/load round-trips bit-exactly including non-UTF-8 tokens") {
  auto tok = train_bpe({"药品说明书药品说明书 the dose the dose"}, 290);
  auto dir = std::filesystem::temp_directory_path() / "plm_tok_test";
  std::filesystem::create_directories(dir);
  auto p1 = (dir / "tok1.json").string();
  auto p2 = (dir / "tok2.json").string();
  save_tokenizer(tok, p1);
  auto loaded = load_tokenizer(p1);
  CHECK(loaded.vocab == tok.vocab);
  CHECK(loaded.merges == tok.merges);
  CHECK(loaded.special == tok.special);
  save_tokenizer(loaded, p2);
  CHECK(slurp(p1) == slurp(p2));
  // Encoding behaviour survives the round trip.
  std::string s = "the dose 药品";
  CHECK(loaded.encode(s) == tok.encode(s));
  std::filesystem::remove_all(dir);
}

TEST_CASE("corrupted tokenizer files are rejected") {
  auto dir = std::filesystem::temp_directory_path() / "plm_tok_bad";
  std::filesystem::create_directories(dir);
  auto p = (dir / "bad.json").string();
  std::ofstream(p) << "{ not json";
  CHECK_THROWS_AS(load_tokenizer(p), Error);
  std::ofstream(p) << "{\"version\": 9, \"vocab\": [], \"merges\": [], \"special\": {}}";
  CHECK_THROWS_AS(load_tokenizer(p), Error);
  std::filesystem::remove_all(dir);
}
