#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace san {

// Error hierarchy. The CLI maps ConfigError -> exit 2, DataError (and its
// ProtocolError subclass) -> exit 3, anything else -> exit 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct ProtocolError : DataError {
  using DataError::DataError;
};

// Violated call contracts (bad arguments, shape mismatches).
struct ContractError : Error {
  using Error::Error;
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  format_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string strcat(const Args&... args) {
  std::ostringstream os;
  detail::format_into(os, args...);
  return os.str();
}

}  // namespace san

#define SAN_CHECK(cond, ...)                                        \
  do {                                                              \
    if (!(cond)) {                                                  \
      throw ::san::ContractError(::san::strcat(__VA_ARGS__));       \
    }                                                               \
  } while (0)

#define SAN_CHECK_CONFIG(cond, ...)                                 \
  do {                                                              \
    if (!(cond)) {                                                  \
      throw ::san::ConfigError(::san::strcat(__VA_ARGS__));         \
    }                                                               \
  } while (0)

#define SAN_CHECK_DATA(cond, ...)                                   \
  do {                                                              \
    if (!(cond)) {                                                  \
      throw ::san::DataError(::san::strcat(__VA_ARGS__));           \
    }                                                               \
  } while (0)
