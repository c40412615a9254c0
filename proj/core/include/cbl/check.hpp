#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace cbl {

/// Invalid user-facing configuration (bad config file, bad flag value).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Training/evaluation failure at runtime (non-finite loss, corrupt checkpoint).
class RuntimeAbort : public std::runtime_error {
public:
    explicit RuntimeAbort(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
[[noreturn]] inline void check_failed(const char* expr, const char* file, int line,
                                      const std::string& msg) {
    std::ostringstream os;
    os << "contract violation: " << expr << " at " << file << ":" << line;
    if (!msg.empty()) os << " (" << msg << ")";
    throw std::invalid_argument(os.str());
}
}  // namespace detail

}  // namespace cbl

#define CBL_CHECK(cond, msg)                                              \
    do {                                                                  \
        if (!(cond)) ::cbl::detail::check_failed(#cond, __FILE__, __LINE__, msg); \
    } while (0)
