#pragma once

// Writers for candump logs, labeled CSV datasets, channel and plot series,
// and run summaries. All output is byte-deterministic for a given trace.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cansim/frames.hpp"
#include "cansim/scenario.hpp"

namespace cansim::dataset {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  FormatError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct DatasetBundle {
  std::string candump_path;
  std::string labeled_csv_path;
  std::string channels_csv_path;
  std::string summary_path;
};

/// Fixed six-decimal rendering; negative zero prints as "0.000000".
std::string format_fixed6(double value);

/// "101" for standard ids, "18FF0001" for extended ids.
std::string format_id(const bus::CanFrame& frame);
std::string format_payload(const bus::CanFrame& frame);

/// `(<timestamp>) <channel> <ID>#<DATA>`
std::string format_candump_line(const bus::TimedFrame& frame, const std::string& channel);

struct CandumpRecord {
  double timestamp = 0.0;
  std::string channel;
  bus::CanFrame frame;
};

/// Parses one candump line; nullopt for a malformed line.
std::optional<CandumpRecord> parse_candump_line(std::string_view line);

/// Reads a whole candump log; blank lines are ignored. Throws FormatError
/// naming the first malformed line.
std::vector<CandumpRecord> read_candump(std::istream& in);
std::vector<CandumpRecord> read_candump_file(const std::string& path);

std::size_t write_candump(const scenario::SimulationTrace& trace, const std::string& channel_name,
                          const std::string& path);

inline constexpr const char* kLabeledCsvHeader = "timestamp,channel,id_hex,dlc,data_hex,label,attack_id";

std::size_t write_labeled_csv(const scenario::SimulationTrace& trace, const std::string& path);

/// Every channel, decimated to `sample_period` (a multiple of the step).
std::size_t write_channels_csv(const scenario::SimulationTrace& trace, const std::string& path,
                               double sample_period);

/// time_s,torque_benign,torque_attacked,speed_benign,speed_attacked,reference_speed
/// Torque columns are the transmitted (post-injection) torque request.
std::size_t write_plot_series(const scenario::SimulationTrace& benign, const scenario::SimulationTrace& attacked,
                              const std::string& path, double sample_period);

struct ChannelStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

struct Summary {
  std::string name;
  std::size_t total_frames = 0;
  std::size_t attack_frames = 0;
  std::size_t benign_frames = 0;
  std::map<std::string, std::size_t> frames_per_id;  // keyed by format_id
  std::map<std::string, std::size_t> frames_per_attack;
  std::map<std::string, ChannelStats> channels;
  double bus_load = 0.0;  // transmitted bits / (bitrate * duration)
  double attack_fraction_of_target = 0.0;
  bool bus_saturated = false;
};

Summary summarize(const scenario::SimulationTrace& trace);

void write_summary(const Summary& summary, const std::string& path);
void write_comparison(const scenario::DivergenceReport& report, const std::string& path);

/// Writes the four dataset files into `directory` with a common stem.
DatasetBundle write_bundle(const scenario::SimulationTrace& trace, const std::string& directory,
                           const std::string& stem, double sample_period);

}  // namespace cansim::dataset
