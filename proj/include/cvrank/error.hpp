#pragma once

#include <stdexcept>
#include <string>

namespace cvrank {

// Bad input data or arguments. The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem, network, or on-disk format failures. The CLI maps this to exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A binary file exists but does not decode (bad magic, version, truncation).
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

// Builds "file:line: id: message" diagnostics for row-oriented inputs.
std::string located(const std::string& file, std::size_t line, const std::string& id,
                    const std::string& message);

}  // namespace cvrank
