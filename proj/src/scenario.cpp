#include "cansim/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

namespace cansim::scenario {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

struct ResolvedWiring {
  const dbc::MessageSpec* torque_msg = nullptr;
  const dbc::MessageSpec* status_msg = nullptr;
};

ResolvedWiring resolve(const Wiring& w, const dbc::Database& db) {
  ResolvedWiring r;
  r.torque_msg = db.find(w.torque_message);
  if (r.torque_msg == nullptr) throw ConfigError("message " + w.torque_message + " not in database");
  if (r.torque_msg->find_signal(w.torque_signal) == nullptr) {
    throw ConfigError("signal " + w.torque_signal + " not in message " + w.torque_message);
  }
  r.status_msg = db.find(w.status_message);
  if (r.status_msg == nullptr) throw ConfigError("message " + w.status_message + " not in database");
  for (const auto* name : {&w.speed_signal, &w.torque_act_signal, &w.soc_signal}) {
    if (r.status_msg->find_signal(*name) == nullptr) {
      throw ConfigError("signal " + *name + " not in message " + w.status_message);
    }
  }
  return r;
}

}  // namespace

void DriveCycle::validate() const {
  if (breakpoints.empty()) throw CycleError("drive cycle has no breakpoints");
  for (std::size_t i = 0; i < breakpoints.size(); ++i) {
    if (breakpoints[i].second < 0.0) {
      throw CycleError("negative speed at breakpoint " + std::to_string(i + 1));
    }
    if (i > 0 && !(breakpoints[i].first > breakpoints[i - 1].first)) {
      throw CycleError("breakpoint times must strictly increase (breakpoint " + std::to_string(i + 1) + ")");
    }
  }
}

double DriveCycle::peak_speed() const {
  double peak = 0.0;
  for (const auto& [t, v] : breakpoints) peak = std::max(peak, v);
  return peak;
}

DriveCycle parse_cycle(std::string_view text) {
  DriveCycle cycle;
  int line_no = 0;
  bool seen_data = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string_view::npos) {
      throw CycleError("line " + std::to_string(line_no) + ": expected two comma-separated columns");
    }
    double t = 0.0;
    double v = 0.0;
    if (!parse_double(line.substr(0, comma), t) || !parse_double(line.substr(comma + 1), v)) {
      if (!seen_data && cycle.breakpoints.empty()) {  // header row
        seen_data = true;
        continue;
      }
      throw CycleError("line " + std::to_string(line_no) + ": malformed number");
    }
    seen_data = true;
    cycle.breakpoints.emplace_back(t, v);
  }
  cycle.validate();
  return cycle;
}

DriveCycle load_cycle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CycleError("cannot open drive cycle: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_cycle(buf.str());
}

double reference_speed(const DriveCycle& cycle, double t) {
  const auto& bp = cycle.breakpoints;
  if (bp.empty()) return 0.0;
  if (t <= bp.front().first) return bp.front().second;
  if (t >= bp.back().first) return bp.back().second;
  auto upper = std::upper_bound(bp.begin(), bp.end(), t,
                                [](double value, const auto& p) { return value < p.first; });
  const auto& [t1, v1] = *upper;
  const auto& [t0, v0] = *(upper - 1);
  if (t == t0) return v0;
  return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
}

std::string to_string(Coupling c) {
  return c == Coupling::closed_loop ? "closed_loop" : "replay_counterfactual";
}

Coupling coupling_from_string(const std::string& s) {
  if (s == "closed_loop" || s == "closed-loop") return Coupling::closed_loop;
  if (s == "replay_counterfactual" || s == "replay-counterfactual") return Coupling::replay_counterfactual;
  throw ConfigError("unknown coupling mode: " + s);
}

double Reference::speed_at(double t) const {
  if (cycle) return reference_speed(*cycle, t);
  if (cruise_kph) return *cruise_kph / 3.6;
  return 0.0;
}

long long ticks_per_second(double dt) {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  const double inv = 1.0 / dt;
  const double rounded = std::round(inv);
  if (rounded < 1.0 || std::abs(inv - rounded) > 1e-6 * rounded) {
    throw ConfigError("dt must be 1/n seconds for an integer n");
  }
  return static_cast<long long>(rounded);
}

void validate(const ScenarioConfig& config, const dbc::Database& db) {
  try {
    config.bus.validate();
    config.vehicle.validate();
    for (const auto& a : config.attacks) a.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  ticks_per_second(config.dt);
  if (!(config.duration > 0.0)) throw ConfigError("duration must be positive");
  if (!(config.initial_soc >= 0.0 && config.initial_soc <= 1.0)) {
    throw ConfigError("initial_soc must be in [0, 1]");
  }
  if (!(config.output.sample_period > 0.0)) throw ConfigError("output.sample_period must be positive");
  if (config.reference.cycle.has_value() == config.reference.cruise_kph.has_value()) {
    throw ConfigError("reference needs exactly one of a drive cycle or a cruise setpoint");
  }
  if (config.reference.cruise_kph && *config.reference.cruise_kph < 0.0) {
    throw ConfigError("cruise setpoint must be non-negative");
  }
  if (!(config.controller.torque_min < config.controller.torque_max)) {
    throw ConfigError("controller torque_min must be below torque_max");
  }
  resolve(config.wiring, db);
  for (const auto& [id, period] : config.bus.schedules) {
    if (db.find(id) == nullptr) throw ConfigError("scheduled id " + std::to_string(id) + " not in database");
  }
  std::set<std::string> ids;
  for (const auto& a : config.attacks) {
    if (!ids.insert(a.attack_id).second) throw ConfigError("duplicate attack id " + a.attack_id);
    const auto* msg = db.find(a.target_message);
    if (msg == nullptr) {
      throw ConfigError("attack " + a.attack_id + " targets unknown message " + std::to_string(a.target_message));
    }
    if (msg->find_signal(a.target_signal) == nullptr) {
      throw ConfigError("attack " + a.attack_id + " targets unknown signal " + a.target_signal);
    }
    if (a.t_start < 0.0 || a.t_end > config.duration) {
      throw ConfigError("attack " + a.attack_id + " window lies outside [0, duration]");
    }
  }
}

void Channels::reserve(std::size_t n) {
  for (auto* v : {&time, &torque_command, &torque_request_clean, &torque_request_dirty, &torque_applied, &speed,
                  &reference_speed, &soc}) {
    v->reserve(n);
  }
  saturated.reserve(n);
}

SimulationTrace run_scenario(const ScenarioConfig& config, const dbc::Database& db,
                             const std::vector<double>* replay_commands) {
  validate(config, db);
  const auto wiring = resolve(config.wiring, db);
  const long long rate = ticks_per_second(config.dt);
  const auto steps = static_cast<std::size_t>(std::llround(config.duration * static_cast<double>(rate)));
  if (replay_commands != nullptr && replay_commands->size() < steps) {
    throw ConfigError("replayed command trace is shorter than the run");
  }
  const double dt = 1.0 / static_cast<double>(rate);
  const double tolerance = dt / 2;

  SimulationTrace trace;
  trace.name = config.name;
  trace.dt = dt;
  trace.duration = config.duration;
  trace.bitrate = config.bus.bitrate;
  trace.channel = config.bus.channel;
  trace.torque_message_id = wiring.torque_msg->id;
  trace.channels.reserve(steps);

  bus::Bus can(config.bus);
  vehicle::VehicleState state;
  state.speed = config.reference.speed_at(0.0);
  state.motor_speed = vehicle::motor_speed_for(state.speed, config.vehicle);
  state.soc = config.initial_soc;
  vehicle::ControllerState ctrl;
  ctrl.mode = config.reference.cruise_kph ? vehicle::ControlMode::cruise : vehicle::ControlMode::cycle_follow;

  // Receiver-side values, updated when frames finish transmission.
  double received_torque = 0.0;
  double measured_speed = state.speed;
  std::deque<bus::Transmission> in_flight;

  double held_clean = 0.0;
  double held_dirty = 0.0;
  bool held_saturated = false;

  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(rate);

    while (!in_flight.empty() && in_flight.front().delivered_at <= t + 1e-12) {
      const auto& frame = in_flight.front().timed.frame;
      if (const auto* msg = db.find(frame.id, frame.extended); msg != nullptr && frame.dlc() == msg->dlc) {
        const auto values = dbc::unpack_message(*msg, frame.payload);
        if (msg == wiring.torque_msg) {
          received_torque = values.at(config.wiring.torque_signal);
        } else if (msg == wiring.status_msg) {
          measured_speed = values.at(config.wiring.speed_signal) / 3.6;
        }
      }
      in_flight.pop_front();
    }

    const double ref = config.reference.speed_at(t);
    double command = 0.0;
    if (replay_commands != nullptr) {
      command = (*replay_commands)[k];
    } else {
      command = attack::quantize_to_grid(
          vehicle::controller_command(ref, measured_speed, ctrl, dt, config.controller));
    }

    for (const auto id : can.due_messages(t, tolerance)) {
      const auto* msg = db.find(id);
      dbc::SignalValues values;
      for (const auto& sig : msg->signals) values.emplace(sig.name, 0.0);
      if (msg == wiring.torque_msg) {
        values[config.wiring.torque_signal] = command;
      }
      if (msg == wiring.status_msg) {
        values[config.wiring.speed_signal] = state.speed * 3.6;
        values[config.wiring.torque_act_signal] = state.torque_applied;
        values[config.wiring.soc_signal] = state.soc * 100.0;
      }

      std::set<std::string> active;
      for (auto& [signal_name, value] : values) {
        const auto specs = attack::attacks_on(config.attacks, id, signal_name);
        if (specs.empty()) continue;
        const auto injected = attack::apply_injection(value, specs, t);
        value = injected.dirty;
        active.insert(injected.active.begin(), injected.active.end());
      }

      auto packed = dbc::pack_message_checked(*msg, values);
      if (msg == wiring.torque_msg) {
        held_clean = command;
        held_dirty = values.at(config.wiring.torque_signal);
        held_saturated = !packed.saturated_signals.empty();
      }
      bus::CanFrame frame{msg->id, msg->extended, std::move(packed.payload)};
      auto label = attack::label_frame(frame, config.attacks, active);
      can.enqueue(std::move(frame), t, std::move(label));
    }

    for (auto& tx : can.transmit_until(t, t + dt)) {
      trace.frames.push_back(tx.timed);
      in_flight.push_back(std::move(tx));
    }

    auto& ch = trace.channels;
    ch.time.push_back(t);
    ch.torque_command.push_back(command);
    ch.torque_request_clean.push_back(held_clean);
    ch.torque_request_dirty.push_back(held_dirty);
    ch.torque_applied.push_back(state.torque_applied);
    ch.speed.push_back(state.speed);
    ch.reference_speed.push_back(ref);
    ch.soc.push_back(state.soc);
    ch.saturated.push_back(held_saturated ? 1 : 0);

    state = vehicle::step_vehicle(state, received_torque, dt, config.vehicle);
    state.t = static_cast<double>(k + 1) / static_cast<double>(rate);
    state.soc = vehicle::battery_step(state.soc, state.torque_applied, state.motor_speed, dt, config.vehicle);
  }

  trace.final_state = state;
  trace.bus_saturated = can.saturated();
  trace.diagnostics = can.diagnostics();
  return trace;
}

RunPair run_benign_and_attacked(const ScenarioConfig& config, const dbc::Database& db) {
  ScenarioConfig benign_config = config;
  benign_config.attacks.clear();
  benign_config.coupling = Coupling::closed_loop;
  RunPair pair{run_scenario(benign_config, db), std::nullopt};
  if (config.attacks.empty()) return pair;
  if (config.coupling == Coupling::replay_counterfactual) {
    pair.attacked = run_scenario(config, db, &pair.benign.channels.torque_command);
  } else {
    pair.attacked = run_scenario(config, db);
  }
  return pair;
}

DivergenceReport compare_runs(const SimulationTrace& benign, const SimulationTrace& attacked) {
  const auto& a = benign.channels;
  const auto& b = attacked.channels;
  if (a.size() != b.size() || benign.dt != attacked.dt || a.time != b.time) {
    throw GridMismatch("traces are not on the same time grid");
  }
  DivergenceReport report;
  report.time = a.time;
  report.torque_offset.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    report.torque_offset[i] = b.torque_request_dirty[i] - a.torque_request_dirty[i];
  }

  const std::pair<const char*, const std::vector<double> Channels::*> series[] = {
      {"torque_command", &Channels::torque_command},
      {"torque_request_clean", &Channels::torque_request_clean},
      {"torque_request_dirty", &Channels::torque_request_dirty},
      {"torque_applied", &Channels::torque_applied},
      {"speed", &Channels::speed},
      {"reference_speed", &Channels::reference_speed},
      {"soc", &Channels::soc},
  };
  std::size_t first = a.size();
  for (const auto& [name, member] : series) {
    const auto& x = a.*member;
    const auto& y = b.*member;
    ChannelDeviation dev{name, 0.0, 0.0};
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = std::abs(y[i] - x[i]);
      dev.max_abs = std::max(dev.max_abs, d);
      dev.mean_abs += d;
      if (std::memcmp(&x[i], &y[i], sizeof(double)) != 0) first = std::min(first, i);
    }
    if (!x.empty()) dev.mean_abs /= static_cast<double>(x.size());
    report.deviations.push_back(dev);
  }
  for (std::size_t i = 0; i < a.saturated.size(); ++i) {
    if (a.saturated[i] != b.saturated[i]) {
      first = std::min(first, i);
      break;
    }
  }
  if (first < a.size()) report.first_divergence_time = a.time[first];
  report.frames_identical = benign.frames == attacked.frames;
  return report;
}

}  // namespace cansim::scenario
