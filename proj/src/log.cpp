#include <atomic>
#include <iostream>
#include <mutex>

#include "dissolve/types.hpp"

namespace dissolve {

namespace {
std::atomic<bool> g_warnings{true};
std::mutex g_log_mutex;
}  // namespace

void set_warnings_enabled(bool enabled) { g_warnings = enabled; }

void log_warning(const std::string& message) {
  if (!g_warnings) return;
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << "dissolve: warning: " << message << '\n';
}

}  // namespace dissolve
