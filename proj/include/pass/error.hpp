#pragma once

#include <stdexcept>
#include <string>

namespace pass {

/// Error type for all input-validation and contract failures in the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pass
