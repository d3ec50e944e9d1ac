#include "measground/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace measground::log {
namespace {

Level level_from_env() {
  const char* env = std::getenv("MEASGROUND_LOG");
  if (env != nullptr && std::string(env) == "debug") return Level::Debug;
  return Level::Info;
}

std::atomic<Level>& current() {
  static std::atomic<Level> level{level_from_env()};
  return level;
}

const char* name(Level level) {
  switch (level) {
    case Level::Debug: return "debug";
    case Level::Info: return "info";
    case Level::Warn: return "warn";
    case Level::Error: return "error";
  }
  return "info";
}

}  // namespace

Level threshold() { return current().load(); }
void set_threshold(Level level) { current().store(level); }

void emit(Level level, std::string_view event, const nlohmann::json& fields) {
  if (level < threshold()) return;
  nlohmann::json line = {{"level", name(level)}, {"event", std::string(event)}};
  if (fields.is_object()) {
    for (auto it = fields.begin(); it != fields.end(); ++it) line[it.key()] = it.value();
  }
  static std::mutex mu;
  const std::string text = line.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  std::lock_guard lock(mu);
  std::cerr << text << '\n';
}

}  // namespace measground::log
