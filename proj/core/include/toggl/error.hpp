#pragma once

#include <stdexcept>
#include <string>

namespace toggl {

// Error categories shared with the CLI exit codes: config=2, data=3, numeric=4.
enum class ErrorKind { config = 2, data = 3, numeric = 4 };

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string &msg)
        : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string &msg) : Error(ErrorKind::config, msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string &msg) : Error(ErrorKind::data, msg) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string &msg) : Error(ErrorKind::numeric, msg) {}
};

} // namespace toggl
