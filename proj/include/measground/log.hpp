#pragma once

#include <string_view>

#include <json.hpp>

namespace measground::log {

enum class Level { Debug, Info, Warn, Error };

/// Reads MEASGROUND_LOG once; "debug" enables debug lines, anything else means info.
Level threshold();
void set_threshold(Level level);

/// One JSON object per line on stderr: {"level", "event", ...fields}.
void emit(Level level, std::string_view event, const nlohmann::json& fields = nlohmann::json::object());

inline void debug(std::string_view e, const nlohmann::json& f = nlohmann::json::object()) { emit(Level::Debug, e, f); }
inline void info(std::string_view e, const nlohmann::json& f = nlohmann::json::object()) { emit(Level::Info, e, f); }
inline void warn(std::string_view e, const nlohmann::json& f = nlohmann::json::object()) { emit(Level::Warn, e, f); }
inline void error(std::string_view e, const nlohmann::json& f = nlohmann::json::object()) { emit(Level::Error, e, f); }

}  // namespace measground::log
