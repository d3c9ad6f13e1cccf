#include "cansim/config.hpp"

#include <filesystem>
#include <fstream>

namespace cansim::config {

namespace fs = std::filesystem;
using nlohmann::json;
using scenario::ConfigError;

namespace {

std::string resolve_path(const std::string& path, const std::string& base_dir) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).lexically_normal().string();
}

template <typename T>
void read_opt(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) out = it->get<T>();
}

json::json_pointer to_pointer(const std::string& dotted) {
  std::string ptr;
  std::size_t start = 0;
  while (start <= dotted.size()) {
    const auto dot = dotted.find('.', start);
    const auto token = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (token.empty()) throw ConfigError("malformed override key: " + dotted);
    ptr += '/';
    for (char c : token) {
      if (c == '~') ptr += "~0";
      else if (c == '/') ptr += "~1";
      else ptr += c;
    }
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return json::json_pointer(ptr);
}

vehicle::VehicleParams vehicle_from_json(const json& j) {
  vehicle::VehicleParams p;
  read_opt(j, "mass", p.mass);
  read_opt(j, "drag_coeff", p.drag_coeff);
  read_opt(j, "frontal_area", p.frontal_area);
  read_opt(j, "air_density", p.air_density);
  read_opt(j, "rolling_coeff", p.rolling_coeff);
  read_opt(j, "wheel_radius", p.wheel_radius);
  read_opt(j, "gear_ratio", p.gear_ratio);
  read_opt(j, "driveline_efficiency", p.driveline_efficiency);
  read_opt(j, "motor_torque_min", p.motor_torque_min);
  read_opt(j, "motor_torque_max", p.motor_torque_max);
  read_opt(j, "battery_capacity", p.battery_capacity);
  read_opt(j, "road_grade", p.road_grade);
  return p;
}

attack::AttackSpec attack_from_json(const json& j) {
  attack::AttackSpec a;
  a.attack_id = j.at("id").get<std::string>();
  a.target_message = parse_message_id(j.at("target_message"));
  a.target_signal = j.at("target_signal").get<std::string>();
  a.waveform = attack::waveform_from_string(j.value("waveform", std::string("step")));
  a.amplitude = j.at("amplitude").get<double>();
  read_opt(j, "frequency", a.frequency);
  read_opt(j, "duty", a.duty);
  a.t_start = j.at("t_start").get<double>();
  a.t_end = j.at("t_end").get<double>();
  a.mode = attack::injection_mode_from_string(j.value("mode", std::string("additive")));
  return a;
}

}  // namespace

std::uint32_t parse_message_id(const json& value) {
  if (value.is_number_unsigned() || value.is_number_integer()) {
    const auto v = value.get<long long>();
    if (v < 0 || v > 0x1FFFFFFF) throw ConfigError("message id out of range");
    return static_cast<std::uint32_t>(v);
  }
  if (value.is_string()) {
    const auto s = value.get<std::string>();
    try {
      std::size_t used = 0;
      const auto v = std::stoul(s, &used, 0);
      if (used == s.size() && v <= 0x1FFFFFFF) return static_cast<std::uint32_t>(v);
    } catch (const std::exception&) {
    }
    throw ConfigError("invalid message id: " + s);
  }
  throw ConfigError("message id must be a number or string");
}

void apply_overrides(json& doc, const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must be key=value: " + item);
    const auto key = item.substr(0, eq);
    const auto raw = item.substr(eq + 1);
    const auto ptr = to_pointer(key);
    if (!doc.contains(ptr)) throw ConfigError("override key does not exist in config: " + key);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    doc[ptr] = std::move(value);
  }
}

scenario::ScenarioConfig from_json(const json& doc, const std::string& base_dir) {
  try {
    scenario::ScenarioConfig cfg;
    read_opt(doc, "name", cfg.name);
    cfg.dbc_path = resolve_path(doc.at("dbc_path").get<std::string>(), base_dir);

    if (auto it = doc.find("bus"); it != doc.end()) {
      read_opt(*it, "bitrate", cfg.bus.bitrate);
      read_opt(*it, "channel", cfg.bus.channel);
      read_opt(*it, "max_queue_depth", cfg.bus.max_queue_depth);
      if (auto sched = it->find("schedules"); sched != it->end()) {
        for (const auto& [key, period] : sched->items()) {
          cfg.bus.schedules[parse_message_id(json(key))] = period.get<double>();
        }
      }
    }
    if (auto it = doc.find("vehicle"); it != doc.end()) cfg.vehicle = vehicle_from_json(*it);

    cfg.controller.torque_min = cfg.vehicle.motor_torque_min;
    cfg.controller.torque_max = cfg.vehicle.motor_torque_max;
    if (auto it = doc.find("controller"); it != doc.end()) {
      read_opt(*it, "kp", cfg.controller.kp);
      read_opt(*it, "ki", cfg.controller.ki);
      read_opt(*it, "torque_min", cfg.controller.torque_min);
      read_opt(*it, "torque_max", cfg.controller.torque_max);
    }

    const auto& ref = doc.at("reference");
    if (auto it = ref.find("cycle_path"); it != ref.end()) {
      cfg.reference.cycle_path = resolve_path(it->get<std::string>(), base_dir);
      try {
        cfg.reference.cycle = scenario::load_cycle(cfg.reference.cycle_path);
      } catch (const scenario::CycleError& e) {
        throw ConfigError(e.what());
      }
    }
    if (auto it = ref.find("cruise_kph"); it != ref.end()) cfg.reference.cruise_kph = it->get<double>();

    if (auto it = doc.find("attacks"); it != doc.end()) {
      for (const auto& a : *it) cfg.attacks.push_back(attack_from_json(a));
    }
    if (auto it = doc.find("coupling"); it != doc.end()) {
      cfg.coupling = scenario::coupling_from_string(it->get<std::string>());
    }
    read_opt(doc, "dt", cfg.dt);
    cfg.duration = doc.at("duration").get<double>();
    read_opt(doc, "initial_soc", cfg.initial_soc);

    if (auto it = doc.find("signals"); it != doc.end()) {
      read_opt(*it, "torque_message", cfg.wiring.torque_message);
      read_opt(*it, "torque_signal", cfg.wiring.torque_signal);
      read_opt(*it, "status_message", cfg.wiring.status_message);
      read_opt(*it, "speed_signal", cfg.wiring.speed_signal);
      read_opt(*it, "torque_act_signal", cfg.wiring.torque_act_signal);
      read_opt(*it, "soc_signal", cfg.wiring.soc_signal);
    }
    if (auto it = doc.find("output"); it != doc.end()) read_opt(*it, "sample_period", cfg.output.sample_period);
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json doc = json::parse(in, nullptr, false, true);
  if (doc.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
  return doc;
}

scenario::ScenarioConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json doc = read_json_file(path);
  apply_overrides(doc, overrides);
  return from_json(doc, fs::path(path).parent_path().string());
}

}  // namespace cansim::config
