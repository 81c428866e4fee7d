#pragma once

#include <stdexcept>
#include <string>

namespace convemb {

// Dimension disagreement between operands. Message always carries both shapes.
struct shape_error : std::invalid_argument {
  explicit shape_error(const std::string& msg) : std::invalid_argument(msg) {}
};

// Softmax/attention asked to normalize over an empty (all-masked) support.
struct empty_attention_error : std::invalid_argument {
  explicit empty_attention_error(const std::string& msg) : std::invalid_argument(msg) {}
};

// Input exceeds a configured capacity (e.g. more turns than N*M slots).
struct capacity_error : std::invalid_argument {
  explicit capacity_error(const std::string& msg) : std::invalid_argument(msg) {}
};

// Malformed on-disk data; message names the file and, where known, the line.
struct parse_error : std::runtime_error {
  explicit parse_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint version/shape problems.
struct checkpoint_error : std::runtime_error {
  explicit checkpoint_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Anything else that violates a documented precondition.
struct value_error : std::invalid_argument {
  explicit value_error(const std::string& msg) : std::invalid_argument(msg) {}
};

}  // namespace convemb
