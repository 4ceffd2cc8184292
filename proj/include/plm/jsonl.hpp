// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "plm/common.hpp"

namespace plm {

/// Reads a JSONL file, one object per non-empty line. Parse failures report
/// the line number.
std::vector<nlohmann::json> read_jsonl(const std::string& path);

void write_jsonl(const std::string& path, const std::vector<nlohmann::json>& rows);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j, int indent = 1);

/// True iff the byte string is well-formed UTF-8.
bool valid_utf8(std::string_view s);

/// Decodes UTF-8 into code points; invalid bytes decode as U+FFFD.
std::vector<uint32_t> utf8_codepoints(std::string_view s);

uint64_t fnv1a64(std::string_view s);

}  // namespace plm
