#pragma once

#include <stdexcept>
#include <string>

namespace iqr {

// Out-of-range or malformed parameter passed to a public operation.
class invalid_parameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of a density or formula.
class domain_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A solver detected loss of stability or a violated numerical invariant.
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw invalid_parameter(what);
}

}  // namespace detail
}  // namespace iqr
