// SPDX-License-Identifier: Apache-2.0
//
// JSON reading/writing of SystemConfig and ExperimentSpec.
#pragma once

#include "ristrack/harness.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace ristrack {

/// Malformed or out-of-range configuration input.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

using json = nlohmann::json;

template <class T>
T get_field(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

inline Index get_count(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number_integer() && !(v.is_number_float() && v.get<double>() == std::floor(v.get<double>())))
    throw ConfigError(std::string("field '") + key + "' must be an integer");
  return v.get<Index>();
}

inline void reject_unknown(const json& j, const std::vector<std::string>& allowed, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError(std::string(where) + ": unknown field '" + it.key() + "'");
  }
}

}  // namespace detail

/// Missing fields keep their defaults. n_paths_user may be a list (one entry
/// per user) or a single integer applied to every user.
inline SystemConfig system_config_from_json(const nlohmann::json& j) {
  using detail::get_count;
  if (!j.is_object()) throw ConfigError("SystemConfig: expected a JSON object");
  detail::reject_unknown(j, system_config_fields(), "SystemConfig");
  SystemConfig cfg;
  if (j.contains("n_rx")) cfg.n_rx = get_count(j, "n_rx");
  if (j.contains("n_ris")) cfg.n_ris = get_count(j, "n_ris");
  if (j.contains("n_users")) cfg.n_users = get_count(j, "n_users");
  if (j.contains("pilot_len")) cfg.pilot_len = get_count(j, "pilot_len");
  if (j.contains("n_profiles")) cfg.n_profiles = get_count(j, "n_profiles");
  if (j.contains("n_slots")) cfg.n_slots = get_count(j, "n_slots");
  if (j.contains("snr_db")) cfg.snr_db = detail::get_field<double>(j, "snr_db");
  if (j.contains("forgetting")) cfg.forgetting = detail::get_field<double>(j, "forgetting");
  if (j.contains("n_paths_g")) cfg.n_paths_g = get_count(j, "n_paths_g");
  if (j.contains("rng_seed")) cfg.rng_seed = detail::get_field<std::uint64_t>(j, "rng_seed");
  if (j.contains("n_paths_user")) {
    const auto& v = j.at("n_paths_user");
    if (v.is_array()) {
      cfg.n_paths_user = detail::get_field<std::vector<Index>>(j, "n_paths_user");
    } else {
      cfg.n_paths_user.assign(static_cast<std::size_t>(cfg.n_users), get_count(j, "n_paths_user"));
    }
  } else {
    cfg.broadcast_user_paths();
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

inline nlohmann::json to_json(const SystemConfig& cfg) {
  return nlohmann::json{{"n_rx", cfg.n_rx},           {"n_ris", cfg.n_ris},
                        {"n_users", cfg.n_users},     {"pilot_len", cfg.pilot_len},
                        {"n_profiles", cfg.n_profiles}, {"n_slots", cfg.n_slots},
                        {"snr_db", cfg.snr_db},       {"forgetting", cfg.forgetting},
                        {"n_paths_g", cfg.n_paths_g}, {"n_paths_user", cfg.n_paths_user},
                        {"rng_seed", cfg.rng_seed}};
}

/// sweep entries are either {"name": ..., "values": [...]} or ["name", [...]].
inline ExperimentSpec experiment_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("ExperimentSpec: expected a JSON object");
  detail::reject_unknown(j,
                         {"figure_id", "base", "sweep", "sweep_zip", "n_monte_carlo", "algorithms", "total_slots",
                          "eval_slots", "noiseless", "record_timing", "tracker_update"},
                         "ExperimentSpec");
  ExperimentSpec spec;
  try {
    if (j.contains("figure_id")) spec.figure_id = figure_id_from_string(detail::get_field<std::string>(j, "figure_id"));
    if (j.contains("base")) spec.base = system_config_from_json(j.at("base"));
    if (j.contains("sweep")) {
      for (const auto& axis : j.at("sweep")) {
        SweepAxis a;
        if (axis.is_array() && axis.size() == 2) {
          a.name = axis[0].get<std::string>();
          a.values = axis[1].get<std::vector<double>>();
        } else if (axis.is_object()) {
          a.name = detail::get_field<std::string>(axis, "name");
          a.values = detail::get_field<std::vector<double>>(axis, "values");
        } else {
          throw ConfigError("sweep entries must be {\"name\", \"values\"} objects or [name, values] pairs");
        }
        spec.sweep.push_back(std::move(a));
      }
    }
    if (j.contains("sweep_zip")) spec.sweep_zip = detail::get_field<bool>(j, "sweep_zip");
    if (j.contains("n_monte_carlo")) spec.n_monte_carlo = detail::get_count(j, "n_monte_carlo");
    if (j.contains("algorithms")) {
      for (const auto& name : detail::get_field<std::vector<std::string>>(j, "algorithms"))
        spec.algorithms.insert(algorithm_from_string(name));
    }
    if (j.contains("total_slots")) spec.total_slots = detail::get_count(j, "total_slots");
    if (j.contains("eval_slots")) spec.eval_slots = detail::get_field<std::vector<Index>>(j, "eval_slots");
    if (j.contains("noiseless")) spec.noiseless = detail::get_field<bool>(j, "noiseless");
    if (j.contains("record_timing")) spec.record_timing = detail::get_field<bool>(j, "record_timing");
    if (j.contains("tracker_update")) {
      const auto mode = detail::get_field<std::string>(j, "tracker_update");
      if (mode == "structured") spec.tracker_update = FUpdate::structured;
      else if (mode == "unstructured") spec.tracker_update = FUpdate::unstructured;
      else throw ConfigError("tracker_update must be 'structured' or 'unstructured'");
    }
    validate_spec(spec);
  } catch (const ConfigError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("ExperimentSpec: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace ristrack
