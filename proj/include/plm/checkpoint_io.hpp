// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "plm/tensor.hpp"

namespace plm::ckpt_io {

struct NamedArray {
  Shape shape;
  std::vector<real> data;
};

/// Writes magic + length-prefixed JSON header + flat little-endian float
/// data. Tensors are laid out in sorted name order, so identical state
/// always produces identical bytes.
void write_checkpoint(const std::string& path, nlohmann::json header,
                      const std::map<std::string, NamedArray>& tensors);

struct LoadedCheckpoint {
  nlohmann::json header;
  std::map<std::string, NamedArray> tensors;
};

/// Validates magic, version and dtype before any state is handed out.
LoadedCheckpoint read_checkpoint(const std::string& path);

}  // namespace plm::ckpt_io
