#pragma once

#include <stdexcept>
#include <string>

namespace mgvae {

// Raised by tensor ops and layers when operand shapes do not conform.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string op, const std::string& detail)
      : std::invalid_argument(op + ": " + detail), op_(std::move(op)) {}

  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

// Invalid segment boundaries (gaps, overlaps, empty intervals, hierarchy violations).
class SegmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent on-disk data (utterance files, manifests, checkpoints).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A synthesis mode was requested whose trained components are not loaded,
// or a request combined options the mode does not accept.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mgvae
