#pragma once

#include <stdexcept>
#include <string>

namespace srcnet {

// Error categories map onto CLI exit codes: usage/config -> 2, data -> 3,
// numeric -> 4.
enum class ErrorCategory { usage, config, data, numeric };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& msg)
        : std::runtime_error(msg), category_(category) {}

    ErrorCategory category() const { return category_; }

    int exit_code() const {
        switch (category_) {
        case ErrorCategory::usage:
        case ErrorCategory::config: return 2;
        case ErrorCategory::data: return 3;
        case ErrorCategory::numeric: return 4;
        }
        return 1;
    }

private:
    ErrorCategory category_;
};

[[noreturn]] inline void usage_error(const std::string& msg) {
    throw Error(ErrorCategory::usage, msg);
}
[[noreturn]] inline void config_error(const std::string& msg) {
    throw Error(ErrorCategory::config, msg);
}
[[noreturn]] inline void data_error(const std::string& msg) {
    throw Error(ErrorCategory::data, msg);
}
[[noreturn]] inline void numeric_error(const std::string& msg) {
    throw Error(ErrorCategory::numeric, msg);
}

} // namespace srcnet
