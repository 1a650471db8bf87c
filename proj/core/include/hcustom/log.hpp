#pragma once

#include <nlohmann/json.hpp>
#include <string_view>

namespace hcustom::log {

/// Emits one JSON record per line on stderr: {"event":..., "wall_s":..., ...fields}.
void record(std::string_view event, nlohmann::json fields = nlohmann::json::object());

/// Silences record() (tests use this to keep output readable).
void set_enabled(bool enabled);

}  // namespace hcustom::log
