#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace stenokit {

// Base for every error the toolkit raises. The CLI maps `InputError`
// subclasses to exit code 2 and anything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class ParseError : public InputError {
 public:
  using InputError::InputError;
};

class ValidationError : public InputError {
 public:
  explicit ValidationError(std::vector<std::string> violations);

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  std::vector<std::string> violations_;
};

class ShapeMismatch : public InputError {
 public:
  using InputError::InputError;
};

class InvalidBox : public InputError {
 public:
  using InputError::InputError;
};

class InvalidPolygon : public InputError {
 public:
  using InputError::InputError;
};

class InvalidRoi : public InputError {
 public:
  using InputError::InputError;
};

class IndexOutOfRange : public InputError {
 public:
  using InputError::InputError;
};

class EmptyBatch : public InputError {
 public:
  using InputError::InputError;
};

class SizeMismatch : public InputError {
 public:
  using InputError::InputError;
};

class MissingMask : public InputError {
 public:
  using InputError::InputError;
};

inline std::string join_violations(const std::vector<std::string>& v) {
  std::string out = std::to_string(v.size()) + " validation error(s):";
  for (const auto& s : v) {
    out += "\n  - ";
    out += s;
  }
  return out;
}

inline ValidationError::ValidationError(std::vector<std::string> violations)
    : InputError(join_violations(violations)), violations_(std::move(violations)) {}

}  // namespace stenokit
