#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <string>

namespace dstreamon {

// Minimal leveled logger. Level comes from DSTREAMON_LOG
// (error|warn|info|debug), default warn.

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline LogLevel log_level() {
    static LogLevel lvl = [] {
        const char* e = std::getenv("DSTREAMON_LOG");
        if (!e) return LogLevel::Warn;
        if (!std::strcmp(e, "error")) return LogLevel::Error;
        if (!std::strcmp(e, "warn")) return LogLevel::Warn;
        if (!std::strcmp(e, "info")) return LogLevel::Info;
        if (!std::strcmp(e, "debug")) return LogLevel::Debug;
        return LogLevel::Warn;
    }();
    return lvl;
}

inline std::mutex& log_mutex() {
    static std::mutex m;
    return m;
}

template <typename... Args>
inline void log_at(LogLevel lvl, const char* tag, const char* fmt, Args... args) {
    if (lvl > log_level()) return;
    std::lock_guard<std::mutex> lock(log_mutex());
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::fprintf(stderr, "[%s] %s: ", names[static_cast<int>(lvl)], tag);
    if constexpr (sizeof...(Args) == 0)
        std::fputs(fmt, stderr);
    else
        std::fprintf(stderr, fmt, args...);
    std::fputc('\n', stderr);
}

#define DSM_LOG_ERROR(tag, ...) ::dstreamon::log_at(::dstreamon::LogLevel::Error, tag, __VA_ARGS__)
#define DSM_LOG_WARN(tag, ...) ::dstreamon::log_at(::dstreamon::LogLevel::Warn, tag, __VA_ARGS__)
#define DSM_LOG_INFO(tag, ...) ::dstreamon::log_at(::dstreamon::LogLevel::Info, tag, __VA_ARGS__)
#define DSM_LOG_DEBUG(tag, ...) ::dstreamon::log_at(::dstreamon::LogLevel::Debug, tag, __VA_ARGS__)

}  // namespace dstreamon
