#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace advrep {

// Error taxonomy, mapped to CLI exit codes:
//   ConfigError / UsageError -> 1, DataError -> 2, InternalError -> 3.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape mismatches between tensors or against a layer's expectations.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Problems with external inputs (files, formats, labels).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {
template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}
}  // namespace detail

}  // namespace advrep

// Invariant check; failure indicates a bug, not bad input.
#define ADVREP_CHECK(cond, ...)                                              \
  do {                                                                       \
    if (!(cond)) {                                                           \
      throw ::advrep::InternalError(                                         \
          ::advrep::detail::concat("invariant failed (", #cond, "): ",       \
                                   __VA_ARGS__));                            \
    }                                                                        \
  } while (0)

#define ADVREP_REQUIRE(cond, exc, ...)                                       \
  do {                                                                       \
    if (!(cond)) {                                                           \
      throw exc(::advrep::detail::concat(__VA_ARGS__));                      \
    }                                                                        \
  } while (0)
