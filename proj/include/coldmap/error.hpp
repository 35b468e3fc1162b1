#pragma once

#include <stdexcept>
#include <string>

namespace coldmap {

// Validation and I/O failures surfaced to callers; the CLI maps these to exit code 2.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace coldmap
