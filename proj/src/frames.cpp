#include "cansim/frames.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace cansim::bus {

bool CanFrame::valid() const {
  if (payload.size() > 8) return false;
  return extended ? id <= 0x1FFFFFFFu : id <= 0x7FFu;
}

void BusConfig::validate() const {
  if (!(bitrate > 0.0)) throw std::invalid_argument("bus bitrate must be positive");
  for (const auto& [id, period] : schedules) {
    if (!(period > 0.0)) {
      throw std::invalid_argument("schedule period for id " + std::to_string(id) + " must be positive");
    }
    if (id > 0x7FFu) throw std::invalid_argument("scheduled id exceeds 11 bits");
  }
  if (max_queue_depth == 0) throw std::invalid_argument("max_queue_depth must be positive");
}

int frame_bit_length(const CanFrame& frame) {
  const int data_bits = 8 * frame.dlc();
  if (frame.extended) return 67 + data_bits + (54 + data_bits) / 5;
  return 47 + data_bits + (34 + data_bits) / 5;
}

double transmit_time(const CanFrame& frame, double bitrate) {
  return static_cast<double>(frame_bit_length(frame)) / bitrate;
}

std::uint64_t arbitration_key(const CanFrame& frame) {
  if (!frame.extended) return static_cast<std::uint64_t>(frame.id) << 19;
  const std::uint64_t base = frame.id >> 18;
  const std::uint64_t ext = frame.id & 0x3FFFFu;
  return (base << 19) | (std::uint64_t{1} << 18) | ext;
}

std::vector<std::size_t> arbitrate(const std::vector<CanFrame>& pending) {
  std::vector<std::size_t> order(pending.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return arbitration_key(pending[a]) < arbitration_key(pending[b]);
  });
  return order;
}

double bus_load(const std::map<std::uint32_t, double>& periods_by_id,
                const std::map<std::uint32_t, int>& dlc_by_id, double bitrate) {
  double bits_per_second = 0.0;
  for (const auto& [id, period] : periods_by_id) {
    auto it = dlc_by_id.find(id);
    const int dlc = it == dlc_by_id.end() ? 8 : it->second;
    CanFrame probe{id, false, std::vector<std::uint8_t>(static_cast<std::size_t>(dlc))};
    bits_per_second += frame_bit_length(probe) / period;
  }
  return bits_per_second / bitrate;
}

ZohSample sample_zoh(double source_value, double period, double now,
                     std::optional<double> last_sample_time, double tolerance) {
  if (!last_sample_time || now - *last_sample_time >= period - tolerance) {
    return {source_value, true};
  }
  return {0.0, false};
}

ZeroOrderHold::ZeroOrderHold(double period, double tolerance) : period_(period), tolerance_(tolerance) {
  if (!(period > 0.0)) throw std::invalid_argument("hold period must be positive");
}

bool ZeroOrderHold::due(double now) const {
  return sample_zoh(0.0, period_, now, last_, tolerance_).due;
}

ZohSample ZeroOrderHold::update(double source, double now) {
  if (due(now)) {
    held_ = source;
    last_ = now;
    return {held_, true};
  }
  return {held_, false};
}

Bus::Bus(BusConfig config) : config_(std::move(config)) {
  config_.validate();
  for (const auto& [id, period] : config_.schedules) last_sampled_.emplace(id, std::nullopt);
}

std::vector<std::uint32_t> Bus::due_messages(double now, double tolerance) {
  std::vector<std::uint32_t> due;
  for (auto& [id, last] : last_sampled_) {
    if (sample_zoh(0.0, config_.schedules.at(id), now, last, tolerance).due) {
      last = now;
      due.push_back(id);
    }
  }
  return due;
}

bool Bus::enqueue(CanFrame frame, double sample_time, Label label) {
  if (queue_.size() >= config_.max_queue_depth) {
    if (!saturated_) {
      diagnostics_.push_back("bus saturated at t=" + std::to_string(sample_time) +
                             ": queue depth " + std::to_string(queue_.size()) + " reached");
    }
    saturated_ = true;
    return false;
  }
  queue_.push_back({std::move(frame), sample_time, std::move(label), next_sequence_++});
  return true;
}

std::vector<Transmission> Bus::transmit_until(double now, double horizon) {
  std::vector<Transmission> out;
  while (!queue_.empty()) {
    const double grant = std::max(bus_free_at_, now);
    if (grant >= horizon) break;
    auto winner = std::min_element(queue_.begin(), queue_.end(), [](const PendingFrame& a, const PendingFrame& b) {
      const auto ka = arbitration_key(a.frame);
      const auto kb = arbitration_key(b.frame);
      return ka != kb ? ka < kb : a.sequence < b.sequence;
    });
    PendingFrame granted = std::move(*winner);
    queue_.erase(winner);
    bus_free_at_ = grant + transmit_time(granted.frame, config_.bitrate);
    out.push_back({TimedFrame{std::move(granted.frame), grant, config_.channel, std::move(granted.label)},
                   bus_free_at_});
  }
  return out;
}

}  // namespace cansim::bus
