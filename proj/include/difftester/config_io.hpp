#pragma once

#include <filesystem>
#include <string_view>

#include <json.hpp>

#include "difftester/core_model.hpp"

namespace difftester {

/// Flat object with one key per SchedulerConfig field, in declaration order.
nlohmann::ordered_json config_to_json(const SchedulerConfig& config);

/// Overlays the keys present in `doc` onto `base`. Unknown keys and
/// wrongly-typed values raise ConfigError; the result is validated.
SchedulerConfig config_from_json(const nlohmann::json& doc, SchedulerConfig base = {});

SchedulerConfig parse_config(std::string_view document, SchedulerConfig base = {});
SchedulerConfig load_config(const std::filesystem::path& path, SchedulerConfig base = {});

}  // namespace difftester
