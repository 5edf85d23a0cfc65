#pragma once

#include <stdexcept>
#include <string>

namespace metapop {

// Precondition / argument violations.
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Numeric failures discovered mid-computation.
inline void require_numeric(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

}  // namespace metapop
