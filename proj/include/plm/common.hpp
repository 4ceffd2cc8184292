// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace plm {

// Build-wide scalar type. The default build trains in 32-bit; defining
// PLM_REAL64 switches the whole library to 64-bit, which the gradient
// oracle tests require.
#ifdef PLM_REAL64
using real = double;
inline constexpr const char* kRealName = "f64";
#else
using real = float;
inline constexpr const char* kRealName = "f32";
#endif

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

// When enabled, every primitive screens its forward output for NaN/Inf.
void set_debug_checks(bool on) noexcept;
bool debug_checks() noexcept;

}  // namespace plm
