#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <string_view>

namespace compmap {

inline constexpr int kReportSchemaVersion = 1;

// FNV-1a 64 over the canonical (key-sorted) dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

// Standard report envelope: schema version, command, resolved config, its
// hash and the seed, with command-specific metrics under "metrics".
nlohmann::json make_report(std::string_view command, const nlohmann::json& config, std::uint64_t seed,
                           nlohmann::json metrics);

// Delta per shared numeric metric (oracle - pred), recursing into objects;
// arrays of numbers are differenced element-wise.
nlohmann::json delta_metrics(const nlohmann::json& oracle_metrics, const nlohmann::json& pred_metrics);

}  // namespace compmap
