#pragma once

#include <stdexcept>
#include <string>

namespace livespeech {

// Bad input, bad config, malformed file. The CLI maps this to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Failure while running an otherwise valid job (NaN loss, I/O). Exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace livespeech
