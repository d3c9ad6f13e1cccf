#pragma once

// Closed-loop co-simulation: controller -> zero-order hold -> injector ->
// CAN pack/transmit -> receive/unpack -> plant -> status frames back.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cansim/candb.hpp"
#include "cansim/frames.hpp"
#include "cansim/injector.hpp"
#include "cansim/vehicle.hpp"

namespace cansim::scenario {

struct DriveCycle {
  std::vector<std::pair<double, double>> breakpoints;  // (time s, speed m/s)

  void validate() const;
  double duration() const { return breakpoints.empty() ? 0.0 : breakpoints.back().first; }
  double peak_speed() const;
};

class CycleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// CSV with `time_s,speed_mps` rows; optional header, `#` comments.
DriveCycle parse_cycle(std::string_view text);
DriveCycle load_cycle(const std::string& path);

/// Linear interpolation, held at the end points outside the cycle.
double reference_speed(const DriveCycle& cycle, double t);

enum class Coupling { closed_loop, replay_counterfactual };

std::string to_string(Coupling c);
Coupling coupling_from_string(const std::string& s);

/// Either a drive cycle or a constant cruise setpoint.
struct Reference {
  std::optional<DriveCycle> cycle;
  std::string cycle_path;
  std::optional<double> cruise_kph;

  double speed_at(double t) const;
};

/// Message and signal names the simulation loop reads and writes.
struct Wiring {
  std::string torque_message = "TorqueRequest";
  std::string torque_signal = "MotorTorqueReq";
  std::string status_message = "VehicleStatus";
  std::string speed_signal = "VehSpeed";         // km/h on the wire
  std::string torque_act_signal = "MotorTorqueAct";
  std::string soc_signal = "BatterySoC";         // percent on the wire
};

struct OutputOptions {
  double sample_period = 0.01;  // channel decimation for written series
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::string dbc_path;
  bus::BusConfig bus;
  vehicle::VehicleParams vehicle;
  vehicle::ControllerGains controller;
  Reference reference;
  std::vector<attack::AttackSpec> attacks;
  Coupling coupling = Coupling::closed_loop;
  double dt = 0.001;
  double duration = 0.0;
  double initial_soc = 0.9;
  Wiring wiring;
  OutputOptions output;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Steps per simulated second; dt must be 1/n seconds for an integer n.
long long ticks_per_second(double dt);

/// Checks the config against itself and the database. Throws ConfigError.
void validate(const ScenarioConfig& config, const dbc::Database& db);

struct Channels {
  std::vector<double> time;
  std::vector<double> torque_command;        // controller output (or replayed)
  std::vector<double> torque_request_clean;  // held sample before injection
  std::vector<double> torque_request_dirty;  // held sample after injection
  std::vector<double> torque_applied;
  std::vector<double> speed;
  std::vector<double> reference_speed;
  std::vector<double> soc;
  std::vector<std::uint8_t> saturated;

  std::size_t size() const { return time.size(); }
  void reserve(std::size_t n);
};

struct SimulationTrace {
  std::string name;
  double dt = 0.0;
  double duration = 0.0;
  double bitrate = 0.0;
  std::string channel;
  std::uint32_t torque_message_id = 0;
  std::vector<bus::TimedFrame> frames;
  Channels channels;
  vehicle::VehicleState final_state;
  std::vector<std::string> diagnostics;
  bool bus_saturated = false;
};

/// Runs one simulation. With `replay_commands`, the controller is bypassed
/// and the commands (one per step) are fed to the hold instead.
SimulationTrace run_scenario(const ScenarioConfig& config, const dbc::Database& db,
                             const std::vector<double>* replay_commands = nullptr);

struct RunPair {
  SimulationTrace benign;
  std::optional<SimulationTrace> attacked;
};

/// Benign run first (attacks stripped, closed loop), then the attacked run
/// in the configured coupling mode when attacks are present.
RunPair run_benign_and_attacked(const ScenarioConfig& config, const dbc::Database& db);

struct ChannelDeviation {
  std::string channel;
  double max_abs = 0.0;
  double mean_abs = 0.0;
};

struct DivergenceReport {
  std::vector<ChannelDeviation> deviations;
  std::optional<double> first_divergence_time;
  std::vector<double> time;
  std::vector<double> torque_offset;  // attacked dirty - benign dirty
  bool frames_identical = true;
};

class GridMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

DivergenceReport compare_runs(const SimulationTrace& benign, const SimulationTrace& attacked);

}  // namespace cansim::scenario
