#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sct {

// Tensor shapes disagree with an operation's contract.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A numeric precondition was violated (e.g. non-negative decay rate).
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid architecture / run configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed binary file. Carries the byte offset of the first bad byte.
struct FormatError : std::runtime_error {
  std::size_t offset;
  FormatError(const std::string& msg, std::size_t off)
      : std::runtime_error(msg + " (at byte offset " + std::to_string(off) + ")"),
        offset(off) {}
};

// Dataset-level problems: missing pairs, unreadable directories.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpoint does not match the model it is loaded into.
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Evaluation cannot proceed (e.g. empty body mask).
struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sct
