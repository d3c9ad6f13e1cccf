#pragma once

// Attack waveforms and their injection onto CAN signal values.

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cansim/frames.hpp"

namespace cansim::attack {

enum class Waveform { step, pulse, sine, ramp };
enum class InjectionMode { additive, override_ };

struct AttackSpec {
  std::string attack_id;
  std::uint32_t target_message = 0;
  std::string target_signal;
  Waveform waveform = Waveform::step;
  double amplitude = 0.0;  // physical units of the target signal
  double frequency = 0.0;  // Hz, sine and pulse
  double duty = 0.5;       // pulse only, fraction of each period
  double t_start = 0.0;
  double t_end = 0.0;
  InjectionMode mode = InjectionMode::additive;

  bool active_at(double t) const { return t >= t_start && t < t_end; }
  void validate() const;
};

std::string to_string(Waveform w);
std::string to_string(InjectionMode m);
Waveform waveform_from_string(const std::string& s);
InjectionMode injection_mode_from_string(const std::string& s);

/// Resolution of signal-level arithmetic (2^-16 physical units). Commands
/// and waveform contributions live on this grid so that sums and
/// differences of injected values are exact in binary floating point.
inline constexpr double kSignalResolution = 1.0 / 65536.0;
double quantize_to_grid(double value);

/// Attack waveform at time t; zero outside [t_start, t_end).
double waveform_value(const AttackSpec& spec, double t);

struct InjectionResult {
  double dirty = 0.0;
  std::set<std::string> active;
};

/// Applies every spec active at t. The last active override (in list order)
/// replaces the clean value; additive contributions are then summed onto it.
/// With nothing active the clean value is returned untouched.
InjectionResult apply_injection(double clean_value, std::span<const AttackSpec> specs, double t);

/// Specs that target one (message, signal) pair, in declaration order.
std::vector<AttackSpec> attacks_on(std::span<const AttackSpec> specs, std::uint32_t message_id,
                                   const std::string& signal);

/// Attack label for a frame sampled while `active` attacks were live. Only
/// frames of a targeted message are labeled; ties take the lexicographically
/// first attack id.
bus::Label label_frame(const bus::CanFrame& frame, std::span<const AttackSpec> specs,
                       const std::set<std::string>& active);

}  // namespace cansim::attack
