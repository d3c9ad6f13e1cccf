#pragma once

// Raw CAN frames, periodic schedules, priority arbitration and the
// zero-order hold that samples continuous signals onto the bus clock.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cansim::bus {

struct CanFrame {
  std::uint32_t id = 0;
  bool extended = false;
  std::vector<std::uint8_t> payload;

  int dlc() const { return static_cast<int>(payload.size()); }
  bool valid() const;
  bool operator==(const CanFrame&) const = default;
};

struct Label {
  std::string attack_id;  // empty means benign

  bool is_attack() const { return !attack_id.empty(); }
  static Label benign() { return {}; }
  static Label attack(std::string id) { return {std::move(id)}; }
  bool operator==(const Label&) const = default;
};

struct TimedFrame {
  CanFrame frame;
  double timestamp = 0.0;  // bus grant time, simulation seconds
  std::string channel;
  Label label;
  bool operator==(const TimedFrame&) const = default;
};

struct BusConfig {
  double bitrate = 500'000.0;
  // message id (standard) -> period in seconds
  std::map<std::uint32_t, double> schedules;
  std::size_t max_queue_depth = 64;
  std::string channel = "vcan0";

  void validate() const;
};

/// Worst-case frame length on the wire including stuff bits:
/// standard: 47 + 8*dlc + floor((34 + 8*dlc) / 5)
/// extended: 67 + 8*dlc + floor((54 + 8*dlc) / 5)
int frame_bit_length(const CanFrame& frame);

double transmit_time(const CanFrame& frame, double bitrate);

/// Arbitration priority; a smaller key wins the bus. A standard frame beats
/// an extended frame sharing its 11-bit base id.
std::uint64_t arbitration_key(const CanFrame& frame);

/// Order in which simultaneously pending frames are granted the bus.
/// Returns indices into `pending`; ties keep their input order.
std::vector<std::size_t> arbitrate(const std::vector<CanFrame>& pending);

/// Fraction of bus capacity consumed by periodic traffic.
double bus_load(const std::map<std::uint32_t, double>& periods_by_id,
                const std::map<std::uint32_t, int>& dlc_by_id, double bitrate);

struct ZohSample {
  double value = 0.0;
  bool due = false;
};

/// One-shot form of the hold rule. `tolerance` absorbs floating-point jitter
/// of the simulation clock (typically half a step).
ZohSample sample_zoh(double source_value, double period, double now,
                     std::optional<double> last_sample_time, double tolerance = 1e-9);

class ZeroOrderHold {
 public:
  ZeroOrderHold(double period, double tolerance = 1e-9);

  /// Samples `source` when a period has elapsed, otherwise keeps the held
  /// value.
  ZohSample update(double source, double now);
  bool due(double now) const;

  double held() const { return held_; }
  std::optional<double> last_sample_time() const { return last_; }
  double period() const { return period_; }

 private:
  double period_;
  double tolerance_;
  std::optional<double> last_;
  double held_ = 0.0;
};

/// A frame waiting for the bus, with the instant its content was sampled.
struct PendingFrame {
  CanFrame frame;
  double sample_time = 0.0;
  Label label;
  std::uint64_t sequence = 0;
};

/// A granted frame together with its end-of-transmission (delivery) time.
struct Transmission {
  TimedFrame timed;
  double delivered_at = 0.0;
};

/// Non-preemptive, ideal (error-free) single-channel bus.
class Bus {
 public:
  explicit Bus(BusConfig config);

  const BusConfig& config() const { return config_; }

  /// Ids whose schedule is due at `now`, ascending. Marks them sampled.
  std::vector<std::uint32_t> due_messages(double now, double tolerance = 1e-9);

  /// Queues a frame. Returns false (and records a saturation diagnostic) if
  /// the queue is at its configured depth; the frame is dropped.
  bool enqueue(CanFrame frame, double sample_time, Label label = {});

  /// Grants the bus to pending frames for every idle instant before
  /// `horizon`, lowest arbitration key first. Frames already queued are all
  /// considered pending from `now`.
  std::vector<Transmission> transmit_until(double now, double horizon);

  std::size_t queue_depth() const { return queue_.size(); }
  double busy_until() const { return bus_free_at_; }
  bool saturated() const { return saturated_; }
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

 private:
  BusConfig config_;
  std::map<std::uint32_t, std::optional<double>> last_sampled_;
  std::vector<PendingFrame> queue_;
  std::uint64_t next_sequence_ = 0;
  double bus_free_at_ = 0.0;
  bool saturated_ = false;
  std::vector<std::string> diagnostics_;
};

/// Runs bare periodic schedules (payload supplied by `make_payload`) for
/// `duration` seconds on a `dt` grid and returns the emitted frames.
template <typename PayloadFn>
std::vector<TimedFrame> simulate_schedules(const BusConfig& config, double duration, double dt,
                                           PayloadFn&& make_payload) {
  Bus bus(config);
  std::vector<TimedFrame> out;
  const auto steps = static_cast<long long>(duration / dt + 0.5);
  for (long long k = 0; k < steps; ++k) {
    const double now = static_cast<double>(k) * dt;
    for (auto id : bus.due_messages(now, dt / 2)) {
      bus.enqueue(CanFrame{id, false, make_payload(id, now)}, now);
    }
    for (auto& tx : bus.transmit_until(now, now + dt)) out.push_back(std::move(tx.timed));
  }
  return out;
}

}  // namespace cansim::bus
