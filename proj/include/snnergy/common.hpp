#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace snnergy {

// Error hierarchy. Shape/contract violations throw; callers that need soft
// failure (CLI, file parsing) catch at the boundary.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};
struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error(msg) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};
struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error(msg) {}
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
std::string strcat_msg(const Args&... args) {
    std::ostringstream os;
    detail::format_into(os, args...);
    return os.str();
}

}  // namespace snnergy

#define SNN_CHECK(cond, ...)                                              \
    do {                                                                  \
        if (!(cond)) throw ::snnergy::Error(::snnergy::strcat_msg(__VA_ARGS__)); \
    } while (0)

#define SNN_CHECK_SHAPE(cond, ...)                                             \
    do {                                                                       \
        if (!(cond)) throw ::snnergy::ShapeError(::snnergy::strcat_msg(__VA_ARGS__)); \
    } while (0)

#define SNN_CHECK_CONTRACT(cond, ...)                                             \
    do {                                                                          \
        if (!(cond)) throw ::snnergy::ContractError(::snnergy::strcat_msg(__VA_ARGS__)); \
    } while (0)
