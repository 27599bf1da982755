#pragma once

#include <functional>
#include <string>

namespace pathogan::log {

enum class Level { debug, info, warn, error };

void set_level(Level level);
// Redirects messages (tests capture warnings this way); nullptr restores stderr.
void set_sink(std::function<void(Level, const std::string&)> sink);

void write(Level level, const std::string& message);
inline void info(const std::string& m) { write(Level::info, m); }
inline void warn(const std::string& m) { write(Level::warn, m); }
inline void debug(const std::string& m) { write(Level::debug, m); }

}  // namespace pathogan::log
