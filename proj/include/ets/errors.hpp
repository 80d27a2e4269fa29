#pragma once
#include <stdexcept>
#include <string>

namespace ets {

// Invalid shapes or argument contracts caught at call sites.
class shape_error : public std::invalid_argument {
 public:
  explicit shape_error(const std::string& what) : std::invalid_argument(what) {}
};

// Bad command lines or config files.  CLI exit code 1.
class usage_error : public std::runtime_error {
 public:
  explicit usage_error(const std::string& what) : std::runtime_error(what) {}
};

// Unreadable, malformed or inconsistent data.  CLI exit code 2.
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

// Training aborted (non-finite loss or gradients, empty partitions, ...).
// CLI exit code 3.
class train_error : public std::runtime_error {
 public:
  explicit train_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ets
