#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace agesel {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid arguments, mismatched dimensions, bad configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated input files.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A computation produced a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Local training diverged (non-finite parameters) on a given worker and round.
class DivergenceError : public NumericError {
 public:
  DivergenceError(std::size_t round, int worker_id)
      : NumericError("training diverged: non-finite parameters at round " + std::to_string(round) +
                     " on worker " + std::to_string(worker_id)),
        round_(round),
        worker_id_(worker_id) {}

  std::size_t round() const noexcept { return round_; }
  int worker_id() const noexcept { return worker_id_; }

 private:
  std::size_t round_;
  int worker_id_;
};

}  // namespace agesel
