#include "pathogan/log.hpp"

#include <iostream>
#include <mutex>

namespace pathogan::log {
namespace {

std::mutex g_mutex;
Level g_level = Level::info;
std::function<void(Level, const std::string&)> g_sink;

const char* tag(Level level) {
    switch (level) {
    case Level::debug:
        return "debug";
    case Level::info:
        return "info";
    case Level::warn:
        return "warn";
    case Level::error:
        return "error";
    }
    return "?";
}

}  // namespace

void set_level(Level level) {
    std::lock_guard lock(g_mutex);
    g_level = level;
}

void set_sink(std::function<void(Level, const std::string&)> sink) {
    std::lock_guard lock(g_mutex);
    g_sink = std::move(sink);
}

void write(Level level, const std::string& message) {
    std::lock_guard lock(g_mutex);
    if (g_sink) {
        g_sink(level, message);
        return;
    }
    if (level < g_level) return;
    std::cerr << '[' << tag(level) << "] " << message << '\n';
}

}  // namespace pathogan::log
