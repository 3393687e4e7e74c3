#pragma once

#include <stdexcept>
#include <string>

namespace tmeval {

/// All recoverable failures (bad input, format violations, contract breaches
/// at module boundaries) are reported with this type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tmeval
