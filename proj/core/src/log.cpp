#include "hcustom/log.hpp"

#include <atomic>
#include <chrono>
#include <iostream>
#include <mutex>

namespace hcustom::log {
namespace {

std::atomic<bool> g_enabled{true};
const auto g_start = std::chrono::steady_clock::now();
std::mutex g_mutex;

}  // namespace

void record(std::string_view event, nlohmann::json fields) {
  if (!g_enabled.load()) return;
  if (!fields.is_object()) fields = nlohmann::json{{"value", fields}};
  fields["event"] = std::string(event);
  fields["wall_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - g_start).count();
  std::lock_guard lock(g_mutex);
  std::cerr << fields.dump() << '\n';
}

void set_enabled(bool enabled) { g_enabled.store(enabled); }

}  // namespace hcustom::log
