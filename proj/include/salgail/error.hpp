#pragma once

#include <stdexcept>
#include <string>

namespace salgail {

// Exception families map onto CLI exit codes (2, 3, 4).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace salgail
