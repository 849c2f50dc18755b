#pragma once

#include <string_view>

#include <json.hpp>

namespace cci::log {

enum class Level { debug, info, warn, error };

// Line-delimited JSON on stderr. Thread-safe; each call writes one line.
void write(Level level, std::string_view event, const nlohmann::json& fields = nlohmann::json::object());

void set_min_level(Level level);

inline void info(std::string_view event, const nlohmann::json& fields = nlohmann::json::object()) {
  write(Level::info, event, fields);
}
inline void warn(std::string_view event, const nlohmann::json& fields = nlohmann::json::object()) {
  write(Level::warn, event, fields);
}
inline void error(std::string_view event, const nlohmann::json& fields = nlohmann::json::object()) {
  write(Level::error, event, fields);
}

}  // namespace cci::log
