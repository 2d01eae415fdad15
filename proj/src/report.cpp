#include "compmap/report.hpp"

#include "compmap/intervention.hpp"

#include <cstdio>

namespace compmap {

using nlohmann::json;

std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json make_report(std::string_view command, const json& config, std::uint64_t seed, json metrics) {
  return json{{"schema_version", kReportSchemaVersion},
              {"command", command},
              {"config", config},
              {"config_hash", config_hash(config)},
              {"seed", seed},
              {"metrics", std::move(metrics)}};
}

json delta_metrics(const json& oracle, const json& pred) {
  if (oracle.is_number() && pred.is_number()) {
    return interpretability_delta(oracle.get<double>(), pred.get<double>());
  }
  if (oracle.is_object() && pred.is_object()) {
    json out = json::object();
    for (const auto& [key, value] : oracle.items()) {
      if (!pred.contains(key)) continue;
      auto d = delta_metrics(value, pred.at(key));
      if (!d.is_null()) out[key] = std::move(d);
    }
    return out.empty() ? json() : out;
  }
  if (oracle.is_array() && pred.is_array() && oracle.size() == pred.size()) {
    json out = json::array();
    for (std::size_t i = 0; i < oracle.size(); ++i) {
      if (!oracle[i].is_number() || !pred[i].is_number()) return json();
      out.push_back(interpretability_delta(oracle[i].get<double>(), pred[i].get<double>()));
    }
    return out;
  }
  return json();
}

}  // namespace compmap
