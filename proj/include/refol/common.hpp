#pragma once

#include <stdexcept>
#include <string>

namespace refol {

// Bad inputs caught before any round executes (CLI exit code 1).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Failures mid-run: non-finite values, unreadable state, broken files
// (CLI exit code 2).
struct RunError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace refol
