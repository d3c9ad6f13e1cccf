#pragma once

// Point-mass longitudinal model of a battery electric vehicle with a
// single-speed reduction, a lumped battery and a PI speed controller.

namespace cansim::vehicle {

inline constexpr double kGravity = 9.81;

/// Defaults approximate a Tesla Model 3 from public data.
struct VehicleParams {
  double mass = 1847.0;             // kg
  double drag_coeff = 0.23;
  double frontal_area = 2.22;       // m^2
  double air_density = 1.225;       // kg/m^3
  double rolling_coeff = 0.01;
  double wheel_radius = 0.334;      // m
  double gear_ratio = 9.0;
  double driveline_efficiency = 0.95;
  double motor_torque_min = -250.0;  // Nm
  double motor_torque_max = 250.0;   // Nm
  double battery_capacity = 75.0;    // kWh
  double road_grade = 0.0;           // rad

  void validate() const;
  double battery_capacity_joules() const { return battery_capacity * 3.6e6; }
};

struct VehicleState {
  double t = 0.0;             // s
  double speed = 0.0;         // m/s
  double distance = 0.0;      // m
  double motor_speed = 0.0;   // rad/s
  double torque_applied = 0.0;  // Nm
  double soc = 1.0;

  bool operator==(const VehicleState&) const = default;
};

double motor_speed_for(double speed, const VehicleParams& params);

/// Aerodynamic drag + rolling resistance + grade force (N). Rolling
/// resistance vanishes at standstill.
double road_load(double speed, const VehicleParams& params);

/// Wheel force (N) for a motor torque; driveline losses reduce traction and
/// increase the braking demand on the motor side.
double traction_force(double motor_torque, const VehicleParams& params);

/// Semi-implicit Euler step. Torque is clamped to the motor limits; speed
/// is floored at zero. The battery is stepped separately.
VehicleState step_vehicle(const VehicleState& state, double motor_torque, double dt,
                          const VehicleParams& params);

/// Battery power is T*w/eta while driving and T*w*eta while regenerating.
double battery_step(double soc, double motor_torque, double motor_speed, double dt,
                    const VehicleParams& params);

/// Motor torque that balances road load at a constant speed.
double steady_state_torque(double speed, const VehicleParams& params);

enum class ControlMode { cycle_follow, cruise };

struct ControllerGains {
  double kp = 0.0;  // Nm per m/s
  double ki = 0.0;  // Nm per m
  double torque_min = -250.0;
  double torque_max = 250.0;
};

struct ControllerState {
  double integral = 0.0;  // accumulated speed error, m
  ControlMode mode = ControlMode::cycle_follow;
};

/// PI law with conditional-integration anti-windup: the integrator only
/// accumulates while the unclamped output is inside the limits, or while the
/// error drives it back toward them.
double controller_command(double reference_speed, double measured_speed, ControllerState& ctrl,
                          double dt, const ControllerGains& gains);

}  // namespace cansim::vehicle
