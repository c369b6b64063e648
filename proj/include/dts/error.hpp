#pragma once

#include <stdexcept>
#include <string>

namespace dts {

enum class ErrorKind {
  invalid_argument,
  out_of_range,
  state,
  io,
  config,
  geometry_mismatch,
  lesion_placement,
  missing_checkpoint,
};

/// All library failures are reported as dts::Error; kind() drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::invalid_argument, what);
}

}  // namespace dts
