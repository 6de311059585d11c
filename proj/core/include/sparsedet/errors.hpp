#pragma once

#include <stdexcept>
#include <string>

namespace sparsedet {

/// Remote predictor failures. Exit code 3 at the CLI boundary.
class TransportError : public std::runtime_error {
 public:
  enum class Kind { Timeout, Http, Malformed, Connection };

  TransportError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Non-finite loss or parameters during training. Exit code 4 at the CLI
/// boundary; the trainer attaches a diagnostic snapshot before throwing.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sparsedet
