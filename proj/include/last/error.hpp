#pragma once

#include <stdexcept>
#include <string>

namespace last {

/// Error raised by library operations on contract violations
/// (dimension mismatches, bad input files, degenerate numerics, ...).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace last
