#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace cscf::cli {

enum class LogLevel { error = 0, info = 1, debug = 2 };

// Parses CSCF_LOG; unknown or missing values fall back to info.
inline LogLevel level_from_env() {
    const char *v = std::getenv("CSCF_LOG");
    if (!v) return LogLevel::info;
    const std::string_view s(v);
    if (s == "error") return LogLevel::error;
    if (s == "debug") return LogLevel::debug;
    return LogLevel::info;
}

// Line-oriented logger. Counts error lines so commands can derive their exit
// status from it.
class Logger {
public:
    explicit Logger(LogLevel level = level_from_env(), std::ostream &os = std::cerr) : level_(level), os_(&os) {}

    void error(const std::string &msg) { emit(LogLevel::error, "error", msg); }
    void warn(const std::string &msg) { emit(LogLevel::info, "warn", msg); }
    void info(const std::string &msg) { emit(LogLevel::info, "info", msg); }
    void debug(const std::string &msg) { emit(LogLevel::debug, "debug", msg); }

    std::size_t errors() const noexcept { return errors_; }
    int exit_code() const noexcept { return errors_ == 0 ? 0 : 1; }
    LogLevel level() const noexcept { return level_; }

private:
    void emit(LogLevel lvl, const char *tag, const std::string &msg) {
        std::lock_guard lock(mu_);
        if (lvl == LogLevel::error) ++errors_;
        if (static_cast<int>(lvl) <= static_cast<int>(level_)) *os_ << '[' << tag << "] " << msg << '\n';
    }

    LogLevel level_;
    std::ostream *os_;
    std::mutex mu_;
    std::size_t errors_ = 0;
};

} // namespace cscf::cli
