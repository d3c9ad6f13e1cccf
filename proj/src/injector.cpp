#include "cansim/injector.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cansim::attack {

void AttackSpec::validate() const {
  if (attack_id.empty()) throw std::invalid_argument("attack id must not be empty");
  if (!(t_start < t_end)) throw std::invalid_argument("attack " + attack_id + ": t_start must precede t_end");
  if ((waveform == Waveform::sine || waveform == Waveform::pulse) && !(frequency > 0.0)) {
    throw std::invalid_argument("attack " + attack_id + ": frequency must be positive");
  }
  if (waveform == Waveform::pulse && !(duty >= 0.0 && duty <= 1.0)) {
    throw std::invalid_argument("attack " + attack_id + ": duty must be in [0, 1]");
  }
  if (!std::isfinite(amplitude)) throw std::invalid_argument("attack " + attack_id + ": amplitude must be finite");
}

std::string to_string(Waveform w) {
  switch (w) {
    case Waveform::step: return "step";
    case Waveform::pulse: return "pulse";
    case Waveform::sine: return "sine";
    case Waveform::ramp: return "ramp";
  }
  return "step";
}

std::string to_string(InjectionMode m) { return m == InjectionMode::additive ? "additive" : "override"; }

Waveform waveform_from_string(const std::string& s) {
  if (s == "step") return Waveform::step;
  if (s == "pulse") return Waveform::pulse;
  if (s == "sine") return Waveform::sine;
  if (s == "ramp") return Waveform::ramp;
  throw std::invalid_argument("unknown waveform: " + s);
}

InjectionMode injection_mode_from_string(const std::string& s) {
  if (s == "additive") return InjectionMode::additive;
  if (s == "override") return InjectionMode::override_;
  throw std::invalid_argument("unknown injection mode: " + s);
}

double quantize_to_grid(double value) { return std::round(value / kSignalResolution) * kSignalResolution; }

double waveform_value(const AttackSpec& spec, double t) {
  if (!spec.active_at(t)) return 0.0;
  const double elapsed = t - spec.t_start;
  switch (spec.waveform) {
    case Waveform::step:
      return spec.amplitude;
    case Waveform::sine:
      return spec.amplitude * std::sin(2.0 * std::numbers::pi * spec.frequency * elapsed);
    case Waveform::ramp:
      return spec.amplitude * elapsed / (spec.t_end - spec.t_start);
    case Waveform::pulse: {
      const double cycles = spec.frequency * elapsed;
      const double phase = cycles - std::floor(cycles);
      return phase < spec.duty ? spec.amplitude : 0.0;
    }
  }
  return 0.0;
}

InjectionResult apply_injection(double clean_value, std::span<const AttackSpec> specs, double t) {
  InjectionResult result{clean_value, {}};
  const AttackSpec* last_override = nullptr;
  for (const auto& spec : specs) {
    if (!spec.active_at(t)) continue;
    result.active.insert(spec.attack_id);
    if (spec.mode == InjectionMode::override_) last_override = &spec;
  }
  if (result.active.empty()) return result;

  if (last_override != nullptr) result.dirty = quantize_to_grid(waveform_value(*last_override, t));
  for (const auto& spec : specs) {
    if (spec.mode == InjectionMode::additive && spec.active_at(t)) {
      result.dirty += quantize_to_grid(waveform_value(spec, t));
    }
  }
  return result;
}

std::vector<AttackSpec> attacks_on(std::span<const AttackSpec> specs, std::uint32_t message_id,
                                   const std::string& signal) {
  std::vector<AttackSpec> out;
  for (const auto& spec : specs) {
    if (spec.target_message == message_id && spec.target_signal == signal) out.push_back(spec);
  }
  return out;
}

bus::Label label_frame(const bus::CanFrame& frame, std::span<const AttackSpec> specs,
                       const std::set<std::string>& active) {
  for (const auto& id : active) {  // std::set iterates in lexicographic order
    for (const auto& spec : specs) {
      if (spec.attack_id == id && spec.target_message == frame.id && !frame.extended) {
        return bus::Label::attack(id);
      }
    }
  }
  return bus::Label::benign();
}

}  // namespace cansim::attack
