#include "cansim/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>

#include <json.hpp>

namespace cansim::dataset {

namespace {

using scenario::SimulationTrace;

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

std::size_t decimation_stride(double sample_period, double dt) {
  const auto stride = static_cast<long long>(std::llround(sample_period / dt));
  return static_cast<std::size_t>(std::max(1LL, stride));
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

ChannelStats stats_of(const std::vector<double>& v) {
  if (v.empty()) return {};
  ChannelStats s{v.front(), v.front(), 0.0};
  double sum = 0.0;
  for (double x : v) {
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
    sum += x;
  }
  s.mean = sum / static_cast<double>(v.size());
  return s;
}

}  // namespace

std::string format_fixed6(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

std::string format_id(const bus::CanFrame& frame) {
  char buf[16];
  if (frame.extended) {
    std::snprintf(buf, sizeof buf, "%08X", static_cast<unsigned>(frame.id));
  } else {
    std::snprintf(buf, sizeof buf, "%03X", static_cast<unsigned>(frame.id));
  }
  return buf;
}

std::string format_payload(const bus::CanFrame& frame) {
  static constexpr char kDigits[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(frame.payload.size() * 2);
  for (auto b : frame.payload) {
    out += kDigits[b >> 4];
    out += kDigits[b & 0x0F];
  }
  return out;
}

std::string format_candump_line(const bus::TimedFrame& frame, const std::string& channel) {
  return "(" + format_fixed6(frame.timestamp) + ") " + channel + " " + format_id(frame.frame) + "#" +
         format_payload(frame.frame);
}

std::optional<CandumpRecord> parse_candump_line(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
  if (line.size() < 2 || line.front() != '(') return std::nullopt;
  const auto close = line.find(')');
  if (close == std::string_view::npos) return std::nullopt;

  CandumpRecord rec;
  const auto ts = line.substr(1, close - 1);
  const auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), rec.timestamp);
  if (ec != std::errc{} || ptr != ts.data() + ts.size() || !std::isfinite(rec.timestamp)) return std::nullopt;

  auto rest = line.substr(close + 1);
  if (rest.empty() || rest.front() != ' ') return std::nullopt;
  rest.remove_prefix(1);
  const auto space = rest.find(' ');
  if (space == 0 || space == std::string_view::npos) return std::nullopt;
  rec.channel = std::string(rest.substr(0, space));
  auto frame = rest.substr(space + 1);

  const auto hash = frame.find('#');
  if (hash == std::string_view::npos || hash == 0) return std::nullopt;
  const auto id_text = frame.substr(0, hash);
  const auto data_text = frame.substr(hash + 1);
  if (id_text.size() != 3 && id_text.size() != 8) return std::nullopt;
  std::uint32_t id = 0;
  for (char c : id_text) {
    const int v = hex_value(c);
    if (v < 0) return std::nullopt;
    id = (id << 4) | static_cast<std::uint32_t>(v);
  }
  rec.frame.id = id;
  rec.frame.extended = id_text.size() == 8;
  if (data_text.size() % 2 != 0 || data_text.size() > 16) return std::nullopt;
  for (std::size_t i = 0; i < data_text.size(); i += 2) {
    const int hi = hex_value(data_text[i]);
    const int lo = hex_value(data_text[i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    rec.frame.payload.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
  }
  if (!rec.frame.valid()) return std::nullopt;
  return rec;
}

std::vector<CandumpRecord> read_candump(std::istream& in) {
  std::vector<CandumpRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto rec = parse_candump_line(line);
    if (!rec) throw FormatError(line_no, "malformed candump line");
    out.push_back(std::move(*rec));
  }
  return out;
}

std::vector<CandumpRecord> read_candump_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open candump log: " + path);
  return read_candump(in);
}

std::size_t write_candump(const SimulationTrace& trace, const std::string& channel_name, const std::string& path) {
  auto out = open_output(path);
  for (const auto& f : trace.frames) out << format_candump_line(f, channel_name) << '\n';
  finish(out, path);
  return trace.frames.size();
}

std::size_t write_labeled_csv(const SimulationTrace& trace, const std::string& path) {
  auto out = open_output(path);
  out << kLabeledCsvHeader << '\n';
  for (const auto& f : trace.frames) {
    out << format_fixed6(f.timestamp) << ',' << f.channel << ',' << format_id(f.frame) << ',' << f.frame.dlc()
        << ',' << format_payload(f.frame) << ',' << (f.label.is_attack() ? "attack" : "benign") << ','
        << f.label.attack_id << '\n';
  }
  finish(out, path);
  return trace.frames.size();
}

std::size_t write_channels_csv(const SimulationTrace& trace, const std::string& path, double sample_period) {
  auto out = open_output(path);
  const auto& c = trace.channels;
  out << "time_s,torque_command,torque_request_clean,torque_request_dirty,torque_applied,speed,"
         "reference_speed,soc,saturated\n";
  std::size_t rows = 0;
  const auto stride = decimation_stride(sample_period, trace.dt);
  for (std::size_t i = 0; i < c.size(); i += stride) {
    out << format_fixed6(c.time[i]) << ',' << format_fixed6(c.torque_command[i]) << ','
        << format_fixed6(c.torque_request_clean[i]) << ',' << format_fixed6(c.torque_request_dirty[i]) << ','
        << format_fixed6(c.torque_applied[i]) << ',' << format_fixed6(c.speed[i]) << ','
        << format_fixed6(c.reference_speed[i]) << ',' << format_fixed6(c.soc[i]) << ','
        << static_cast<int>(c.saturated[i]) << '\n';
    ++rows;
  }
  finish(out, path);
  return rows;
}

std::size_t write_plot_series(const SimulationTrace& benign, const SimulationTrace& attacked, const std::string& path,
                              double sample_period) {
  const auto& a = benign.channels;
  const auto& b = attacked.channels;
  if (a.size() != b.size() || a.time != b.time) throw scenario::GridMismatch("plot series traces are not aligned");
  auto out = open_output(path);
  out << "time_s,torque_benign,torque_attacked,speed_benign,speed_attacked,reference_speed\n";
  std::size_t rows = 0;
  const auto stride = decimation_stride(sample_period, benign.dt);
  for (std::size_t i = 0; i < a.size(); i += stride) {
    out << format_fixed6(a.time[i]) << ',' << format_fixed6(a.torque_request_dirty[i]) << ','
        << format_fixed6(b.torque_request_dirty[i]) << ',' << format_fixed6(a.speed[i]) << ','
        << format_fixed6(b.speed[i]) << ',' << format_fixed6(a.reference_speed[i]) << '\n';
    ++rows;
  }
  finish(out, path);
  return rows;
}

Summary summarize(const SimulationTrace& trace) {
  Summary s;
  s.name = trace.name;
  s.total_frames = trace.frames.size();
  s.bus_saturated = trace.bus_saturated;
  double bits = 0.0;
  std::size_t target_frames = 0;
  for (const auto& f : trace.frames) {
    ++s.frames_per_id[format_id(f.frame)];
    if (f.label.is_attack()) {
      ++s.attack_frames;
      ++s.frames_per_attack[f.label.attack_id];
    }
    if (!f.frame.extended && f.frame.id == trace.torque_message_id) ++target_frames;
    bits += bus::frame_bit_length(f.frame);
  }
  s.benign_frames = s.total_frames - s.attack_frames;
  if (trace.bitrate > 0.0 && trace.duration > 0.0) s.bus_load = bits / (trace.bitrate * trace.duration);
  if (target_frames > 0) s.attack_fraction_of_target = static_cast<double>(s.attack_frames) / target_frames;

  const auto& c = trace.channels;
  s.channels["torque_command"] = stats_of(c.torque_command);
  s.channels["torque_request_clean"] = stats_of(c.torque_request_clean);
  s.channels["torque_request_dirty"] = stats_of(c.torque_request_dirty);
  s.channels["torque_applied"] = stats_of(c.torque_applied);
  s.channels["speed"] = stats_of(c.speed);
  s.channels["reference_speed"] = stats_of(c.reference_speed);
  s.channels["soc"] = stats_of(c.soc);
  return s;
}

void write_summary(const Summary& summary, const std::string& path) {
  nlohmann::json j;
  j["name"] = summary.name;
  j["total_frames"] = summary.total_frames;
  j["attack_frames"] = summary.attack_frames;
  j["benign_frames"] = summary.benign_frames;
  j["frames_per_id"] = summary.frames_per_id;
  j["frames_per_attack"] = summary.frames_per_attack;
  j["bus_load"] = summary.bus_load;
  j["attack_fraction_of_target"] = summary.attack_fraction_of_target;
  j["bus_saturated"] = summary.bus_saturated;
  for (const auto& [name, st] : summary.channels) {
    j["channels"][name] = {{"min", st.min}, {"max", st.max}, {"mean", st.mean}};
  }
  auto out = open_output(path);
  out << j.dump(2) << '\n';
  finish(out, path);
}

void write_comparison(const scenario::DivergenceReport& report, const std::string& path) {
  nlohmann::json j;
  j["frames_identical"] = report.frames_identical;
  j["first_divergence_time"] =
      report.first_divergence_time ? nlohmann::json(*report.first_divergence_time) : nlohmann::json(nullptr);
  for (const auto& d : report.deviations) {
    j["deviations"][d.channel] = {{"max_abs", d.max_abs}, {"mean_abs", d.mean_abs}};
  }
  double min_offset = 0.0;
  double max_offset = 0.0;
  for (double x : report.torque_offset) {
    min_offset = std::min(min_offset, x);
    max_offset = std::max(max_offset, x);
  }
  j["torque_offset"] = {{"min", min_offset}, {"max", max_offset}};
  auto out = open_output(path);
  out << j.dump(2) << '\n';
  finish(out, path);
}

DatasetBundle write_bundle(const SimulationTrace& trace, const std::string& directory, const std::string& stem,
                           double sample_period) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw IoError("cannot create directory " + directory + ": " + ec.message());
  const fs::path dir(directory);
  DatasetBundle bundle{(dir / (stem + ".log")).string(), (dir / (stem + "_labeled.csv")).string(),
                       (dir / (stem + "_channels.csv")).string(), (dir / (stem + "_summary.json")).string()};
  write_candump(trace, trace.channel, bundle.candump_path);
  write_labeled_csv(trace, bundle.labeled_csv_path);
  write_channels_csv(trace, bundle.channels_csv_path, sample_period);
  write_summary(summarize(trace), bundle.summary_path);
  return bundle;
}

}  // namespace cansim::dataset
