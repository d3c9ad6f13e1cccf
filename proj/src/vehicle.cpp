#include "cansim/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cansim::vehicle {

void VehicleParams::validate() const {
  if (!(mass > 0.0)) throw std::invalid_argument("vehicle.mass must be positive");
  if (!(wheel_radius > 0.0)) throw std::invalid_argument("vehicle.wheel_radius must be positive");
  if (!(gear_ratio > 0.0)) throw std::invalid_argument("vehicle.gear_ratio must be positive");
  if (!(driveline_efficiency > 0.0 && driveline_efficiency <= 1.0)) {
    throw std::invalid_argument("vehicle.driveline_efficiency must be in (0, 1]");
  }
  if (!(motor_torque_min < 0.0 && motor_torque_max > 0.0)) {
    throw std::invalid_argument("vehicle torque limits must satisfy min < 0 < max");
  }
  if (!(battery_capacity > 0.0)) throw std::invalid_argument("vehicle.battery_capacity must be positive");
  if (drag_coeff < 0.0 || frontal_area < 0.0 || air_density < 0.0 || rolling_coeff < 0.0) {
    throw std::invalid_argument("vehicle resistance coefficients must be non-negative");
  }
}

double motor_speed_for(double speed, const VehicleParams& params) {
  return speed * params.gear_ratio / params.wheel_radius;
}

double road_load(double speed, const VehicleParams& params) {
  const double aero = 0.5 * params.air_density * params.drag_coeff * params.frontal_area * speed * speed;
  const double weight = params.mass * kGravity;
  const double rolling = speed > 0.0 ? params.rolling_coeff * weight * std::cos(params.road_grade) : 0.0;
  const double grade = weight * std::sin(params.road_grade);
  return aero + rolling + grade;
}

double traction_force(double motor_torque, const VehicleParams& params) {
  const double eta = params.driveline_efficiency;
  if (motor_torque >= 0.0) return motor_torque * params.gear_ratio * eta / params.wheel_radius;
  return motor_torque * params.gear_ratio / (eta * params.wheel_radius);
}

VehicleState step_vehicle(const VehicleState& state, double motor_torque, double dt,
                          const VehicleParams& params) {
  const double torque = std::clamp(motor_torque, params.motor_torque_min, params.motor_torque_max);
  const double accel = (traction_force(torque, params) - road_load(state.speed, params)) / params.mass;
  VehicleState next = state;
  next.t = state.t + dt;
  next.speed = std::max(0.0, state.speed + accel * dt);
  next.distance = state.distance + next.speed * dt;
  next.torque_applied = torque;
  next.motor_speed = motor_speed_for(next.speed, params);
  return next;
}

double battery_step(double soc, double motor_torque, double motor_speed, double dt,
                    const VehicleParams& params) {
  const double mech = motor_torque * motor_speed;
  const double eta = params.driveline_efficiency;
  const double power = mech >= 0.0 ? mech / eta : mech * eta;
  return std::clamp(soc - power * dt / params.battery_capacity_joules(), 0.0, 1.0);
}

double steady_state_torque(double speed, const VehicleParams& params) {
  const double force = road_load(speed, params);
  if (force >= 0.0) return force * params.wheel_radius / (params.gear_ratio * params.driveline_efficiency);
  return force * params.wheel_radius * params.driveline_efficiency / params.gear_ratio;
}

double controller_command(double reference_speed, double measured_speed, ControllerState& ctrl,
                          double dt, const ControllerGains& gains) {
  const double error = reference_speed - measured_speed;
  const double candidate = ctrl.integral + error * dt;
  const double unclamped = gains.kp * error + gains.ki * candidate;
  const bool high = unclamped > gains.torque_max;
  const bool low = unclamped < gains.torque_min;
  if ((!high && !low) || (high && error < 0.0) || (low && error > 0.0)) {
    ctrl.integral = candidate;
  }
  const double output = gains.kp * error + gains.ki * ctrl.integral;
  return std::clamp(output, gains.torque_min, gains.torque_max);
}

}  // namespace cansim::vehicle
