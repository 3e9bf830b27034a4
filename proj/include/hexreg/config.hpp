#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "hexreg/trainer.hpp"

namespace hexreg::config {

/// Strict reader: unknown keys and wrong types are BadConfig errors.
/// Missing keys keep their defaults; `schedule.total_epochs` defaults to `epochs`.
TrainConfig from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);

TrainConfig load(const std::filesystem::path& path);

/// FNV-1a 64 over the sorted-key dump of `to_json(c)`, as 16 hex digits.
std::string hash(const TrainConfig& c);

}  // namespace hexreg::config
