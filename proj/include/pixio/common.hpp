#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

// Every translation unit of the library is compiled either in single or in
// double precision. The two builds live in distinct inline namespaces so both
// can be linked into one binary (the gradient suite runs against both).
#if defined(PIXIO_USE_F64)
#define PIXIO_PRECISION_NS f64
#else
#define PIXIO_PRECISION_NS f32
#endif

namespace pixio::inline PIXIO_PRECISION_NS {

#if defined(PIXIO_USE_F64)
using real = double;
#else
using real = float;
#endif

/// Raised when a caller breaks an operation's precondition (shapes, lengths).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised for invalid configuration values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NaN/Inf produced by an op, or found in gradients.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or mismatched files (corpus, checkpoint, config).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* precision_name() {
#if defined(PIXIO_USE_F64)
  return "f64";
#else
  return "f32";
#endif
}

}  // namespace pixio::inline PIXIO_PRECISION_NS
