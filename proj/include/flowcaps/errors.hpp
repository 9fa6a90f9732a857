#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace fc {

// Error taxonomy. category() is the stable machine-parseable token the CLI
// prints on failure.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& msg)
      : std::runtime_error(msg), category_(std::move(category)) {}
  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error("shape_error", m) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("config_error", m) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& m) : Error("domain_error", m) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& m) : Error("format_error", m) {}
};
struct DataError : Error {
  explicit DataError(const std::string& m) : Error("data_error", m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error("io_error", m) {}
};
struct StateError : Error {
  explicit StateError(const std::string& m) : Error("state_error", m) {}
};

}  // namespace fc
