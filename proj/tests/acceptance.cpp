// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cansim/candb.hpp"
#include "cansim/cli.hpp"
#include "cansim/config.hpp"
#include "cansim/dataset.hpp"
#include "cansim/frames.hpp"
#include "cansim/scenario.hpp"
#include "cansim/vehicle.hpp"

namespace fs = std::filesystem;
using namespace cansim;

namespace {

const std::string kConfigDir = CANSIM_CONFIG_DIR;
constexpr double kCruiseSpeed = 100.0 / 3.6;
constexpr double kKph = 1.0 / 3.6;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string trimmed(const std::ostringstream& s) {
  auto text = s.str();
  while (!text.empty() && (text.back() == ' ' || text.back() == ';')) text.pop_back();
  return text;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

std::size_t index_at(const scenario::SimulationTrace& trace, double t) {
  return static_cast<std::size_t>(std::llround(t / trace.dt));
}

struct Scenario {
  scenario::ScenarioConfig config;
  dbc::Database db;
};

Scenario load(const std::string& name, const std::vector<std::string>& overrides = {}) {
  Scenario s;
  s.config = config::load_config(kConfigDir + "/" + name + ".json", overrides);
  s.db = dbc::load_dbc(s.config.dbc_path);
  return s;
}

struct TimedPair {
  scenario::RunPair pair;
  double seconds = 0.0;
};

// Runs are shared between criteria; keyed by "<scenario>/<coupling>".
std::map<std::string, TimedPair> g_runs;

const TimedPair& run(const std::string& name, const std::string& coupling) {
  const auto key = name + "/" + coupling;
  if (auto it = g_runs.find(key); it != g_runs.end()) return it->second;
  const auto s = load(name, {"coupling=" + coupling});
  const auto start = std::chrono::steady_clock::now();
  auto pair = scenario::run_benign_and_attacked(s.config, s.db);
  const double elapsed = seconds_since(start);
  return g_runs.emplace(key, TimedPair{std::move(pair), elapsed}).first->second;
}

// 1. Attacked minus benign torque is exactly the step on [160, 240) and
// exactly zero elsewhere, in replay mode; each scenario runs in < 30 s.
Outcome injection_offset() {
  Outcome o;
  std::ostringstream detail;
  for (const std::string name : {"eudc", "cruise"}) {
    const auto& tp = run(name, "replay_counterfactual");
    const auto& b = tp.pair.benign.channels;
    const auto& a = tp.pair.attacked->channels;
    std::size_t inside = 0, bad = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      const double diff = a.torque_request_dirty[i] - b.torque_request_dirty[i];
      const bool window = b.time[i] >= 160.0 && b.time[i] < 240.0;
      if (window) ++inside;
      if (diff != (window ? -15.0 : 0.0)) ++bad;
    }
    const bool fast = tp.seconds < 30.0;
    o.pass = o.pass && bad == 0 && inside == 80000 && fast;
    detail << name << ": " << inside << " window samples, " << bad << " mismatches, runtime "
           << fmt("%.2f", tp.seconds) << " s; ";
  }
  o.detail = trimmed(detail);
  return o;
}

// 2. Every frame and channel sample before t = 160 s is bit-identical.
Outcome pre_attack_identity() {
  Outcome o;
  std::ostringstream detail;
  for (const std::string name : {"eudc", "cruise"}) {
    for (const std::string coupling : {"closed_loop", "replay_counterfactual"}) {
      const auto& tp = run(name, coupling);
      const auto& b = tp.pair.benign;
      const auto& a = *tp.pair.attacked;
      std::size_t samples = 0, frames = 0, bad = 0;
      for (std::size_t i = 0; i < b.channels.size() && b.channels.time[i] < 160.0; ++i) {
        ++samples;
        const auto& x = b.channels;
        const auto& y = a.channels;
        const bool same = same_bits(x.time[i], y.time[i]) && same_bits(x.torque_command[i], y.torque_command[i]) &&
                          same_bits(x.torque_request_clean[i], y.torque_request_clean[i]) &&
                          same_bits(x.torque_request_dirty[i], y.torque_request_dirty[i]) &&
                          same_bits(x.torque_applied[i], y.torque_applied[i]) && same_bits(x.speed[i], y.speed[i]) &&
                          same_bits(x.reference_speed[i], y.reference_speed[i]) && same_bits(x.soc[i], y.soc[i]) &&
                          x.saturated[i] == y.saturated[i];
        if (!same) ++bad;
      }
      for (std::size_t i = 0; i < b.frames.size() && b.frames[i].timestamp < 160.0; ++i) {
        ++frames;
        if (i >= a.frames.size() || !(a.frames[i] == b.frames[i])) ++bad;
      }
      o.pass = o.pass && bad == 0 && samples == 160000;
      detail << name << "/" << coupling << ": " << samples << " samples + " << frames << " frames, " << bad
             << " differ; ";
    }
  }
  o.detail = trimmed(detail);
  return o;
}

// 3. Closed-loop cruise: speed strictly decreasing on (161, 240) and within
// 1 km/h of 100 km/h from t = 340 s on.
Outcome cruise_recovery() {
  const auto& tp = run("cruise", "closed_loop");
  const auto& tr = *tp.pair.attacked;
  const auto& v = tr.channels.speed;
  std::size_t violations = 0;
  for (std::size_t i = index_at(tr, 161.0) + 1; i < index_at(tr, 240.0); ++i) {
    if (!(v[i] < v[i - 1])) ++violations;
  }
  double worst_after = 0.0;
  for (std::size_t i = index_at(tr, 340.0); i < v.size(); ++i) {
    worst_after = std::max(worst_after, std::fabs(v[i] - kCruiseSpeed));
  }
  const double lowest = *std::min_element(v.begin() + static_cast<long>(index_at(tr, 160.0)),
                                          v.begin() + static_cast<long>(index_at(tr, 240.0)));
  Outcome o;
  o.pass = violations == 0 && worst_after < kKph;
  o.detail = std::to_string(violations) + " non-decreasing steps on (161,240); lowest speed " +
             fmt("%.2f", lowest * 3.6) + " km/h; max error after 340 s " + fmt("%.3f", worst_after * 3.6) + " km/h";
  return o;
}

// 4. Steady cruise torque within [8, 18] Nm, from the algebraic balance and
// from the simulated pre-attack plateau.
Outcome steady_torque() {
  const vehicle::VehicleParams params;
  const double balance = vehicle::steady_state_torque(kCruiseSpeed, params);
  const double force = vehicle::road_load(kCruiseSpeed, params);
  const double recomputed = force * params.wheel_radius / (params.gear_ratio * params.driveline_efficiency);

  const auto& tp = run("cruise", "closed_loop");
  const auto& c = tp.pair.benign.channels;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.time[i] >= 100.0 && c.time[i] < 160.0) {
      sum += c.torque_applied[i];
      ++n;
    }
  }
  const double simulated = sum / static_cast<double>(n);
  Outcome o;
  o.pass = balance >= 8.0 && balance <= 18.0 && simulated >= 8.0 && simulated <= 18.0 &&
           std::fabs(balance - recomputed) < 1e-9 && std::fabs(simulated - balance) < 0.1;
  o.detail = "balance " + fmt("%.3f", balance) + " Nm, simulated plateau " + fmt("%.3f", simulated) + " Nm";
  return o;
}

// 5. Benign EUDC tracking error within 2 km/h at every step.
Outcome eudc_tracking() {
  const auto& tp = run("eudc", "closed_loop");
  const auto& c = tp.pair.benign.channels;
  double worst = 0.0;
  double at = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double e = std::fabs(c.speed[i] - c.reference_speed[i]);
    if (e > worst) {
      worst = e;
      at = c.time[i];
    }
  }
  Outcome o;
  o.pass = worst * 3.6 <= 2.0;
  o.detail = "max error " + fmt("%.3f", worst * 3.6) + " km/h at t=" + fmt("%.3f", at) + " s";
  return o;
}

// 6. Codec round trips on every bundled signal, under 5 s.
Outcome codec_soundness() {
  const auto start = std::chrono::steady_clock::now();
  const auto db = dbc::load_dbc(load("cruise").config.dbc_path);
  std::mt19937_64 rng(20240601);
  std::size_t phys_checks = 0, raw_checks = 0, bad = 0;
  for (const auto& [key, msg] : db.messages) {
    for (const auto& sig : msg.signals) {
      std::uniform_real_distribution<double> dist(sig.min, sig.max);
      for (int i = 0; i < 10000; ++i) {
        const double x = dist(rng);
        const double back = dbc::decode_signal(sig, dbc::encode_signal(sig, x));
        ++phys_checks;
        if (!(std::fabs(back - x) <= std::fabs(sig.factor) / 2)) ++bad;
      }
      for (std::int64_t raw = sig.raw_min(); raw <= sig.raw_max(); ++raw) {
        ++raw_checks;
        if (dbc::encode_signal(sig, dbc::decode_signal(sig, raw)) != raw) ++bad;
      }
    }
  }
  const double elapsed = seconds_since(start);
  Outcome o;
  o.pass = bad == 0 && elapsed < 5.0;
  o.detail = std::to_string(phys_checks) + " physical + " + std::to_string(raw_checks) + " raw round trips, " +
             std::to_string(bad) + " failures, " + fmt("%.2f", elapsed) + " s";
  return o;
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "cansim_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// 7. Cruise dataset: 8000 attack-labeled torque frames; candump, CSV and
// trace counts agree; the candump file re-parses to the same frames.
Outcome dataset_contract() {
  const auto& tp = run("cruise", "closed_loop");
  const auto& trace = *tp.pair.attacked;
  const auto dir = scratch("dataset");
  const auto bundle = dataset::write_bundle(trace, dir.string(), "cruise", 0.01);

  const auto records = dataset::read_candump_file(bundle.candump_path);
  std::size_t csv_rows = 0, csv_attack = 0;
  {
    std::ifstream csv(bundle.labeled_csv_path);
    std::string line;
    std::getline(csv, line);
    while (std::getline(csv, line)) {
      ++csv_rows;
      if (line.find(",attack,") != std::string::npos) ++csv_attack;
    }
  }
  std::size_t labeled = 0;
  for (const auto& f : trace.frames) {
    if (f.label.is_attack() && f.frame.id == trace.torque_message_id) ++labeled;
  }
  std::size_t mismatched = 0;
  for (std::size_t i = 0; i < std::min(records.size(), trace.frames.size()); ++i) {
    const auto& f = trace.frames[i];
    // timestamps are compared at the log's microsecond resolution
    if (!(records[i].frame == f.frame) || records[i].channel != trace.channel ||
        dataset::format_fixed6(records[i].timestamp) != dataset::format_fixed6(f.timestamp)) {
      ++mismatched;
    }
  }
  Outcome o;
  o.pass = labeled == 8000 && csv_attack == 8000 && records.size() == trace.frames.size() &&
           csv_rows == trace.frames.size() && mismatched == 0;
  o.detail = std::to_string(labeled) + " attack frames; trace/candump/csv = " + std::to_string(trace.frames.size()) +
             "/" + std::to_string(records.size()) + "/" + std::to_string(csv_rows) + "; " +
             std::to_string(mismatched) + " re-parse mismatches";
  return o;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) files[fs::relative(entry.path(), root).string()] = read_all(entry.path());
  }
  return files;
}

// 8. Two paper-repro invocations write byte-identical trees.
Outcome determinism() {
  const auto first = scratch("repro_a");
  const auto second = scratch("repro_b");
  std::ostringstream out_a, err_a, out_b, err_b;
  const int code_a = cli::cmd_paper_repro(first.string(), kConfigDir, out_a, err_a, 2);
  const int code_b = cli::cmd_paper_repro(second.string(), kConfigDir, out_b, err_b, 1);
  const auto a = snapshot(first);
  const auto b = snapshot(second);
  std::size_t bytes = 0;
  for (const auto& [name, content] : a) bytes += content.size();
  Outcome o;
  o.pass = code_a == 0 && code_b == 0 && !a.empty() && a == b && out_a.str() == out_b.str();
  o.detail = std::to_string(a.size()) + " files, " + std::to_string(bytes) + " bytes, trees " +
             (a == b ? "identical" : "differ") + "; exit codes " + std::to_string(code_a) + "/" +
             std::to_string(code_b);
  return o;
}

// 9. Lowest id wins among simultaneously pending frames (randomized
// schedules); bundled bus load < 1 and equal to the closed form.
Outcome bus_properties() {
  std::mt19937 rng(99);
  std::size_t groups = 0, violations = 0;
  for (int trial = 0; trial < 200; ++trial) {
    bus::BusConfig cfg;
    const int n = 2 + static_cast<int>(rng() % 10);
    std::map<std::uint32_t, int> dlc;
    while (static_cast<int>(cfg.schedules.size()) < n) {
      const std::uint32_t id = rng() % 0x800;
      const double periods[] = {0.005, 0.01, 0.02, 0.05, 0.1};
      cfg.schedules[id] = periods[rng() % 5];
      dlc[id] = static_cast<int>(rng() % 9);
    }
    bus::Bus can(cfg);
    for (int k = 0; k < 1000; ++k) {
      const double now = k * 0.001;
      const auto due = can.due_messages(now, 0.0005);
      const bool idle = can.busy_until() <= now;
      for (auto id : due) {
        can.enqueue(bus::CanFrame{id, false, std::vector<std::uint8_t>(static_cast<std::size_t>(dlc[id]))}, now);
      }
      const auto pending = can.queue_depth();
      const auto tx = can.transmit_until(now, now + 1.0);  // drain
      if (idle && pending > 1) {
        ++groups;
        for (std::size_t i = 1; i < tx.size(); ++i) {
          if (!(tx[i - 1].timed.frame.id < tx[i].timed.frame.id) ||
              !(tx[i - 1].timed.timestamp < tx[i].timed.timestamp)) {
            ++violations;
          }
        }
      }
    }
  }

  std::ostringstream loads;
  bool loads_ok = true;
  for (const std::string name : {"eudc", "cruise"}) {
    const auto s = load(name);
    std::map<std::uint32_t, int> dlcs;
    double closed_form_bps = 0.0;
    for (const auto& [id, period] : s.config.bus.schedules) {
      const int d = s.db.find(id)->dlc;
      dlcs[id] = d;
      closed_form_bps += (47 + 8 * d + (34 + 8 * d) / 5) / period;
    }
    const double closed = closed_form_bps / s.config.bus.bitrate;
    const double computed = bus::bus_load(s.config.bus.schedules, dlcs, s.config.bus.bitrate);
    const double measured = dataset::summarize(*run(name, "closed_loop").pair.attacked).bus_load;
    loads_ok = loads_ok && computed < 1.0 && std::fabs(computed - closed) < 1e-12 &&
               std::fabs(measured - closed) < 1e-9;
    loads << name << " load " << fmt("%.5f", computed) << " (measured " << fmt("%.5f", measured) << "); ";
  }
  Outcome o;
  o.pass = groups > 0 && violations == 0 && loads_ok;
  o.detail = std::to_string(groups) + " contended instants, " + std::to_string(violations) + " order violations; " +
             trimmed(loads);
  return o;
}

// 10. Speed >= 0 and SoC in [0, 1] over 1000 randomized runs; halving dt
// moves the EUDC terminal speed by < 0.1 m/s.
Outcome physics_invariants() {
  std::mt19937_64 rng(424242);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t violations = 0;
  for (int r = 0; r < 1000; ++r) {
    vehicle::VehicleParams p;
    p.mass = 300.0 + 4000.0 * u(rng);
    p.drag_coeff = 0.6 * u(rng);
    p.frontal_area = 1.0 + 3.0 * u(rng);
    p.rolling_coeff = 0.05 * u(rng);
    p.wheel_radius = 0.15 + 0.4 * u(rng);
    p.gear_ratio = 1.0 + 15.0 * u(rng);
    p.driveline_efficiency = 0.3 + 0.7 * u(rng);
    p.motor_torque_min = -(10.0 + 600.0 * u(rng));
    p.motor_torque_max = 10.0 + 600.0 * u(rng);
    p.battery_capacity = 0.01 + 120.0 * u(rng);
    p.road_grade = 0.3 * (u(rng) - 0.5);
    const double dt = r % 2 == 0 ? 0.001 : 0.01;
    vehicle::VehicleState s;
    s.speed = 50.0 * u(rng);
    s.motor_speed = vehicle::motor_speed_for(s.speed, p);
    s.soc = u(rng);
    double torque = 0.0;
    for (int k = 0; k < 2000; ++k) {
      if (k % 50 == 0) torque = 1500.0 * (u(rng) - 0.5);
      s = vehicle::step_vehicle(s, torque, dt, p);
      s.soc = vehicle::battery_step(s.soc, s.torque_applied, s.motor_speed, dt, p);
      if (!(s.speed >= 0.0) || !(s.soc >= 0.0 && s.soc <= 1.0)) ++violations;
    }
  }

  // scenario traces obey the same bounds
  for (const auto& [key, tp] : g_runs) {
    for (const auto* tr : {&tp.pair.benign, tp.pair.attacked ? &*tp.pair.attacked : nullptr}) {
      if (tr == nullptr) continue;
      for (std::size_t i = 0; i < tr->channels.size(); ++i) {
        if (tr->channels.speed[i] < 0.0 || tr->channels.soc[i] < 0.0 || tr->channels.soc[i] > 1.0) ++violations;
      }
    }
  }

  auto coarse = load("eudc");
  coarse.config.attacks.clear();
  auto fine = coarse;
  fine.config.dt = coarse.config.dt / 2;
  const auto a = scenario::run_scenario(coarse.config, coarse.db);
  const auto b = scenario::run_scenario(fine.config, fine.db);
  const double terminal = std::fabs(a.final_state.speed - b.final_state.speed);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.channels.size(); ++i) {
    worst = std::max(worst, std::fabs(a.channels.speed[i] - b.channels.speed[2 * i]));
  }
  Outcome o;
  o.pass = violations == 0 && terminal < 0.1;
  o.detail = std::to_string(violations) + " bound violations in 1000 fuzz runs; terminal speed change " +
             fmt("%.2e", terminal) + " m/s (max over cycle " + fmt("%.4f", worst) + " m/s)";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"injection offset exactness", injection_offset},
      {"pre-attack identity", pre_attack_identity},
      {"cruise deceleration and recovery", cruise_recovery},
      {"steady cruise torque in [8,18] Nm", steady_torque},
      {"EUDC tracking within 2 km/h", eudc_tracking},
      {"codec soundness", codec_soundness},
      {"dataset contract", dataset_contract},
      {"determinism", determinism},
      {"bus properties", bus_properties},
      {"physics invariants", physics_invariants},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << "  [" << o.detail
              << "]" << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
