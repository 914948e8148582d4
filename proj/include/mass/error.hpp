#pragma once

#include <stdexcept>
#include <string>

namespace mass {

/// Raised for contract violations and unrecoverable input problems
/// anywhere in the pipeline.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mass
