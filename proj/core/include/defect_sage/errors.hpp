#pragma once

#include <stdexcept>
#include <string>

namespace defect_sage {

// Root of every exception the engine throws on contract violations.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace defect_sage
