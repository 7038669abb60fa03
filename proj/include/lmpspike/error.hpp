#pragma once

#include <stdexcept>
#include <string>

namespace lmpspike {

enum class ErrorKind {
  Parse,         // malformed input document or config
  Validation,    // well-formed input violating a model invariant
  Infeasible,    // optimization problem has no feasible point
  Numerical,     // internal numerical failure (rank deficiency, iteration cap)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace lmpspike
