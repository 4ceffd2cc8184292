// SPDX-License-Identifier: Apache-2.0
#include "plm/checkpoint_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "plm/model.hpp"

namespace plm::ckpt_io {

namespace {

using json = nlohmann::json;

void write_u64_le(std::ostream& out, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

uint64_t read_u64_le(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_one_le(std::ostream& out, float x) {
  uint32_t bits = std::bit_cast<uint32_t>(x);
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

void write_one_le(std::ostream& out, double x) {
  write_u64_le(out, std::bit_cast<uint64_t>(x));
}

void read_one_le(std::istream& in, float& x) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<uint32_t>(b[i]) << (8 * i);
  x = std::bit_cast<float>(bits);
}

void read_one_le(std::istream& in, double& x) { x = std::bit_cast<double>(read_u64_le(in)); }

void write_reals_le(std::ostream& out, const std::vector<real>& v) {
  for (real x : v) write_one_le(out, x);
}

void read_reals_le(std::istream& in, std::vector<real>& v) {
  for (auto& x : v) read_one_le(in, x);
}

}  // namespace

void write_checkpoint(const std::string& path, json header,
                      const std::map<std::string, NamedArray>& tensors) {
  header["format_version"] = ckpt::kVersion;
  header["dtype"] = kRealName;
  json table = json::object();
  int64_t offset = 0;
  for (const auto& [name, arr] : tensors) {  // std::map iterates in sorted order
    table[name] = {{"offset", offset}, {"shape", arr.shape}};
    offset += static_cast<int64_t>(arr.data.size());
  }
  header["tensors"] = table;
  std::string hdr = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("write_checkpoint: cannot open " + path);
  out.write(ckpt::kMagic, 8);
  write_u64_le(out, hdr.size());
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  for (const auto& [name, arr] : tensors) write_reals_le(out, arr.data);
  if (!out) fail("write_checkpoint: write failed for " + path);
}

LoadedCheckpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("read_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, ckpt::kMagic, 8) != 0)
    fail("read_checkpoint: " + path + " is not a checkpoint file (bad magic)");
  uint64_t hdr_len = read_u64_le(in);
  if (!in || hdr_len == 0 || hdr_len > (1ULL << 30))
    fail("read_checkpoint: " + path + " has a corrupt header length");
  std::string hdr(hdr_len, '\0');
  in.read(hdr.data(), static_cast<std::streamsize>(hdr_len));
  if (!in) fail("read_checkpoint: " + path + " is truncated in the header");

  LoadedCheckpoint result;
  try {
    result.header = json::parse(hdr);
  } catch (const json::exception& e) {
    fail("read_checkpoint: " + path + " has a corrupt JSON header: " + e.what());
  }
  if (!result.header.contains("format_version") ||
      result.header["format_version"].get<int>() != ckpt::kVersion)
    fail("read_checkpoint: " + path + " has unsupported format version");
  std::string dtype = result.header.value("dtype", "");
  if (dtype != kRealName)
    fail("read_checkpoint: " + path + " stores " + dtype + " but this build uses " + kRealName);

  for (const auto& [name, meta] : result.header.at("tensors").items()) {
    NamedArray arr;
    arr.shape = meta.at("shape").get<Shape>();
    arr.data.resize(static_cast<size_t>(shape_numel(arr.shape)));
    result.tensors[name] = std::move(arr);
  }
  // Table order is sorted by name, matching the write layout.
  for (auto& [name, arr] : result.tensors) {
    read_reals_le(in, arr.data);
    if (!in) fail("read_checkpoint: " + path + " is truncated in tensor " + name);
  }
  return result;
}

}  // namespace plm::ckpt_io
