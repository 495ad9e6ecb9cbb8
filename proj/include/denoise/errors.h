// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DENOISE_ERRORS_H_
#define DENOISE_ERRORS_H_

#include <stdexcept>
#include <string>

namespace denoise {

// Tensor shapes that cannot be combined.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid static configuration (kernel widths, head counts, COLA, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A caller broke an operation's precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Bad input data: too-short signals, malformed files, zero references.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Corpus does not carry what a consumer needs.
class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical breakdown during training (NaN/Inf loss).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace denoise

#endif  // DENOISE_ERRORS_H_
