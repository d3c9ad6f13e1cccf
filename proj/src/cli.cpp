#include "cansim/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "cansim/candb.hpp"
#include "cansim/config.hpp"
#include "cansim/dataset.hpp"
#include "cansim/scenario.hpp"

namespace cansim::cli {

namespace fs = std::filesystem;

namespace {

// Decimal places implied by a signal's scale factor (0.1 -> 1, 0.01 -> 2).
int decimals_for(double factor) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, std::abs(factor));
  if (ec != std::errc{}) return 6;
  std::string_view s(buf, static_cast<std::size_t>(end - buf));
  if (s.find('e') != std::string_view::npos) return 6;
  const auto dot = s.find('.');
  if (dot == std::string_view::npos) return 1;
  return std::clamp(static_cast<int>(s.size() - dot - 1), 1, 9);
}

std::string format_value(double value, int decimals) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << value;
  auto s = os.str();
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

const char* endian_name(dbc::ByteOrder o) { return o == dbc::ByteOrder::little_endian ? "intel" : "motorola"; }

struct RunOutcome {
  std::string name;
  scenario::ScenarioConfig config;
  scenario::RunPair pair;
};

// Runs the benign/attacked pair and writes every output file for it.
RunOutcome simulate_and_write(const scenario::ScenarioConfig& config, const dbc::Database& db,
                              const std::string& output_dir) {
  RunOutcome outcome{config.name, config, scenario::run_benign_and_attacked(config, db)};
  const auto& primary = outcome.pair.attacked ? *outcome.pair.attacked : outcome.pair.benign;
  dataset::write_bundle(primary, output_dir, config.name, config.output.sample_period);
  if (outcome.pair.attacked) {
    const fs::path dir(output_dir);
    dataset::write_plot_series(outcome.pair.benign, *outcome.pair.attacked,
                               (dir / (config.name + "_plot_series.csv")).string(), config.output.sample_period);
    dataset::write_comparison(scenario::compare_runs(outcome.pair.benign, *outcome.pair.attacked),
                              (dir / (config.name + "_comparison.json")).string());
  }
  return outcome;
}

bool any_saturated(const RunOutcome& o) {
  return o.pair.benign.bus_saturated || (o.pair.attacked && o.pair.attacked->bus_saturated);
}

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

const attack::AttackSpec* first_attack(const scenario::ScenarioConfig& c) {
  return c.attacks.empty() ? nullptr : &c.attacks.front();
}

std::size_t period_ticks(const scenario::ScenarioConfig& c, std::uint32_t id) {
  auto it = c.bus.schedules.find(id);
  if (it == c.bus.schedules.end()) return 1;
  return static_cast<std::size_t>(std::llround(it->second * static_cast<double>(scenario::ticks_per_second(c.dt))));
}

std::vector<Check> reproduction_checks(const RunOutcome& o, const std::string& kind) {
  std::vector<Check> checks;
  const auto* atk = first_attack(o.config);
  if (atk == nullptr || !o.pair.attacked) return checks;
  const auto& ben = o.pair.benign;
  const auto& att = *o.pair.attacked;
  const auto& bc = ben.channels;
  const auto& ac = att.channels;
  const auto stride = period_ticks(o.config, ben.torque_message_id);
  const auto specs = attack::attacks_on(o.config.attacks, ben.torque_message_id, o.config.wiring.torque_signal);

  if (o.config.coupling == scenario::Coupling::replay_counterfactual) {
    bool exact = true;
    std::size_t samples = 0;
    for (std::size_t k = 0; k < bc.size(); k += stride) {
      const double expected = attack::apply_injection(0.0, specs, bc.time[k]).dirty;
      if (ac.torque_request_dirty[k] - bc.torque_request_dirty[k] != expected) exact = false;
      ++samples;
    }
    checks.push_back({o.name + ": torque offset " + fmt(atk->amplitude, 1) + " Nm on [" + fmt(atk->t_start, 0) + "," +
                          fmt(atk->t_end, 0) + ")",
                      exact, std::to_string(samples) + " samples compared exactly"});
  }

  bool identical = true;
  for (std::size_t k = 0; k < bc.size() && bc.time[k] < atk->t_start; ++k) {
    if (bc.speed[k] != ac.speed[k] || bc.torque_request_dirty[k] != ac.torque_request_dirty[k] ||
        bc.torque_applied[k] != ac.torque_applied[k] || bc.soc[k] != ac.soc[k] ||
        bc.torque_command[k] != ac.torque_command[k]) {
      identical = false;
    }
  }
  for (std::size_t i = 0; i < std::min(ben.frames.size(), att.frames.size()); ++i) {
    if (ben.frames[i].timestamp >= atk->t_start) break;
    if (!(ben.frames[i] == att.frames[i])) identical = false;
  }
  checks.push_back({o.name + ": identical before t=" + fmt(atk->t_start, 0), identical, ""});

  std::size_t attack_frames = 0;
  for (const auto& f : att.frames) attack_frames += f.label.is_attack() ? 1 : 0;
  const auto expected_frames = static_cast<std::size_t>(
      std::llround((atk->t_end - atk->t_start) * static_cast<double>(scenario::ticks_per_second(o.config.dt)) /
                   static_cast<double>(stride)));
  checks.push_back({o.name + ": attack-labeled frames", attack_frames == expected_frames,
                    std::to_string(attack_frames) + " of expected " + std::to_string(expected_frames)});

  if (kind == "cruise" && o.config.coupling == scenario::Coupling::closed_loop) {
    bool decreasing = true;
    for (std::size_t k = 1; k < ac.size(); ++k) {
      if (ac.time[k - 1] > atk->t_start + 1.0 && ac.time[k] < atk->t_end && !(ac.speed[k] < ac.speed[k - 1])) {
        decreasing = false;
      }
    }
    checks.push_back({o.name + ": speed strictly decreasing on (" + fmt(atk->t_start + 1.0, 0) + "," +
                          fmt(atk->t_end, 0) + ")",
                      decreasing, ""});
    const double recover_at = atk->t_end + 100.0;
    const auto idx = static_cast<std::size_t>(std::llround(recover_at / ben.dt));
    if (idx < ac.size()) {
      const double err_kph = std::abs(ac.speed[idx] - ac.reference_speed[idx]) * 3.6;
      checks.push_back({o.name + ": within 1 km/h of setpoint at t=" + fmt(recover_at, 0), err_kph < 1.0,
                        "error " + fmt(err_kph) + " km/h"});
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < bc.size() && bc.time[k] < atk->t_start; ++k) {
      if (bc.time[k] >= atk->t_start - 10.0) {
        sum += bc.torque_applied[k];
        ++n;
      }
    }
    const double steady = n > 0 ? sum / static_cast<double>(n) : 0.0;
    checks.push_back({o.name + ": steady cruise torque in [8,18] Nm", steady >= 8.0 && steady <= 18.0,
                      fmt(steady, 2) + " Nm"});
  }
  if (kind == "eudc" && o.config.coupling == scenario::Coupling::closed_loop) {
    double worst = 0.0;
    for (std::size_t k = 0; k < bc.size(); ++k) worst = std::max(worst, std::abs(bc.speed[k] - bc.reference_speed[k]));
    checks.push_back({o.name + ": benign tracking within 2 km/h", worst * 3.6 <= 2.0,
                      "max error " + fmt(worst * 3.6) + " km/h"});
  }
  return checks;
}

}  // namespace

int cmd_simulate(const std::string& config_path, const std::vector<std::string>& overrides,
                 const std::string& output_dir, std::ostream& out, std::ostream& err) {
  scenario::ScenarioConfig config;
  dbc::Database db;
  try {
    if (!fs::exists(config_path)) {
      err << "error: config file not found: " << config_path << '\n';
      return kConfigError;
    }
    config = config::load_config(config_path, overrides);
    db = dbc::load_dbc(config.dbc_path);
    scenario::validate(config, db);
  } catch (const std::exception& e) {
    err << "error: " << config_path << ": " << e.what() << '\n';
    return kConfigError;
  }

  try {
    const auto outcome = simulate_and_write(config, db, output_dir);
    const auto& primary = outcome.pair.attacked ? *outcome.pair.attacked : outcome.pair.benign;
    const auto summary = dataset::summarize(primary);
    out << config.name << ": " << summary.total_frames << " frames (" << summary.attack_frames
        << " attack), bus load " << fmt(summary.bus_load * 100.0, 2) << "%\n";
    out << "outputs written to " << output_dir << '\n';
    if (any_saturated(outcome)) {
      for (const auto& d : primary.diagnostics) err << "diagnostic: " << d << '\n';
      err << "error: bus saturated\n";
      return kSimulationError;
    }
  } catch (const dataset::IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: simulation failed: " << e.what() << '\n';
    return kSimulationError;
  }
  return kOk;
}

int cmd_validate_dbc(const std::string& path, std::ostream& out, std::ostream& err) {
  dbc::Database db;
  try {
    db = dbc::load_dbc(path);
  } catch (const dbc::DbcError& e) {
    err << "error: " << path << ": " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
  for (const auto& d : db.diagnostics) err << "note: line " << d.line << ": " << d.message << '\n';
  if (db.messages.empty()) err << "warning: database defines no messages\n";
  out << "version \"" << db.version << "\", " << db.messages.size() << " message(s)\n";
  for (const auto& [key, msg] : db.messages) {
    out << "0x" << std::hex << std::uppercase << msg.id << std::dec << (msg.extended ? "x" : "") << " " << msg.name
        << " dlc=" << msg.dlc << " sender=" << msg.sender << '\n';
    for (const auto& s : msg.signals) {
      out << "  " << s.name << " start=" << s.start_bit << " len=" << s.bit_length << ' '
          << endian_name(s.byte_order) << ' ' << (s.is_signed() ? "signed" : "unsigned") << " factor=" << s.factor
          << " offset=" << s.offset << " range=[" << s.min << "," << s.max << "] unit=\"" << s.unit << "\"\n";
    }
  }
  return kOk;
}

int cmd_decode(const std::string& dbc_path, const std::string& candump_path, std::ostream& out,
               std::ostream& err) {
  dbc::Database db;
  std::vector<dataset::CandumpRecord> records;
  try {
    db = dbc::load_dbc(dbc_path);
  } catch (const std::exception& e) {
    err << "error: " << dbc_path << ": " << e.what() << '\n';
    return kConfigError;
  }
  try {
    records = dataset::read_candump_file(candump_path);
  } catch (const dataset::FormatError& e) {
    err << "error: " << candump_path << ": " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
  for (const auto& rec : records) {
    const auto* msg = db.find(rec.frame.id, rec.frame.extended);
    out << dataset::format_fixed6(rec.timestamp) << ' ' << dataset::format_id(rec.frame) << ' ';
    if (msg == nullptr || msg->dlc != rec.frame.dlc()) {
      out << "unknown " << dataset::format_payload(rec.frame) << '\n';
      continue;
    }
    out << msg->name;
    const auto values = dbc::unpack_message(*msg, rec.frame.payload);
    for (const auto& sig : msg->signals) {
      out << ' ' << sig.name << '=' << format_value(values.at(sig.name), decimals_for(sig.factor));
    }
    out << '\n';
  }
  return kOk;
}

int cmd_paper_repro(const std::string& output_dir, const std::string& config_dir, std::ostream& out,
                    std::ostream& err, unsigned jobs) {
  struct Job {
    std::string kind;
    scenario::ScenarioConfig config;
  };
  std::vector<Job> plan;
  std::map<std::string, dbc::Database> databases;
  try {
    for (const std::string kind : {"eudc", "cruise"}) {
      const auto path = (fs::path(config_dir) / (kind + ".json")).string();
      if (!fs::exists(path)) {
        err << "error: bundled config not found: " << path << '\n';
        return kConfigError;
      }
      const auto base = config::load_config(path);
      if (!databases.count(base.dbc_path)) databases.emplace(base.dbc_path, dbc::load_dbc(base.dbc_path));
      for (auto coupling : {scenario::Coupling::closed_loop, scenario::Coupling::replay_counterfactual}) {
        auto cfg = base;
        cfg.coupling = coupling;
        cfg.name = kind + "_" + scenario::to_string(coupling);
        scenario::validate(cfg, databases.at(cfg.dbc_path));
        plan.push_back({kind, std::move(cfg)});
      }
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  std::vector<RunOutcome> outcomes(plan.size());
  try {
    for (std::size_t start = 0; start < plan.size(); start += jobs) {
      std::vector<std::future<RunOutcome>> batch;
      for (std::size_t i = start; i < std::min(plan.size(), start + jobs); ++i) {
        const auto& job = plan[i];
        const auto dir = (fs::path(output_dir) / job.config.name).string();
        batch.push_back(std::async(std::launch::async, [&job, &databases, dir] {
          return simulate_and_write(job.config, databases.at(job.config.dbc_path), dir);
        }));
      }
      for (std::size_t i = 0; i < batch.size(); ++i) outcomes[start + i] = batch[i].get();
    }
  } catch (const dataset::IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: simulation failed: " << e.what() << '\n';
    return kSimulationError;
  }

  std::ostringstream table;
  bool all_pass = true;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    for (const auto& c : reproduction_checks(outcomes[i], plan[i].kind)) {
      all_pass = all_pass && c.pass;
      table << (c.pass ? "PASS  " : "FAIL  ") << c.name;
      if (!c.detail.empty()) table << "  (" << c.detail << ")";
      table << '\n';
    }
  }
  out << table.str();
  try {
    const auto summary_path = (fs::path(output_dir) / "repro_summary.txt").string();
    std::ofstream f(summary_path, std::ios::binary | std::ios::trunc);
    if (!f) throw dataset::IoError("cannot write " + summary_path);
    f << table.str();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
  for (const auto& o : outcomes) {
    if (any_saturated(o)) {
      err << "error: bus saturated in " << o.name << '\n';
      return kSimulationError;
    }
  }
  if (!all_pass) err << "warning: some reproduction checks failed\n";
  return kOk;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"CAN bus attack co-simulation: BEV longitudinal model, DBC codec, attack injection, datasets"};
  app.require_subcommand(1);
  int verbosity = 0;
  app.add_flag("-v,--verbose", verbosity, "Increase log verbosity");

  std::string default_out = "out";
  if (const char* env = std::getenv("CANSIM_OUTPUT_DIR"); env != nullptr && *env != '\0') default_out = env;

  auto* simulate = app.add_subcommand("simulate", "Run a scenario (benign, then attacked) and write datasets");
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir = default_out;
  simulate->add_option("-c,--config", config_path, "Scenario config file (JSON)")->required();
  simulate->add_option("-o,--output-dir", output_dir, "Directory for output files")->capture_default_str();
  simulate->add_option("--override", overrides, "Dotted-path override key=value (repeatable)");

  auto* validate = app.add_subcommand("validate-dbc", "Parse a DBC file and list its messages and signals");
  std::string dbc_path;
  validate->add_option("dbc", dbc_path, "DBC file")->required();

  auto* decode = app.add_subcommand("decode", "Decode a candump log with a DBC database");
  std::string decode_dbc;
  std::string decode_log;
  decode->add_option("-d,--dbc", decode_dbc, "DBC file")->required();
  decode->add_option("-l,--log", decode_log, "candump log file")->required();

  auto* repro = app.add_subcommand("paper-repro", "Run the bundled EUDC and cruise attack scenarios in both modes");
  std::string repro_out = default_out;
  std::string config_dir = CANSIM_DEFAULT_CONFIG_DIR;
  unsigned jobs = 0;
  repro->add_option("-o,--output-dir", repro_out, "Directory for output files")->capture_default_str();
  repro->add_option("--config-dir", config_dir, "Directory holding eudc.json and cruise.json")->capture_default_str();
  repro->add_option("-j,--jobs", jobs, "Scenarios run concurrently (0 = hardware threads)");

  std::vector<const char*> argv{"cansim"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  if (verbosity > 0) err << "verbosity " << verbosity << '\n';
  if (*simulate) return cmd_simulate(config_path, overrides, output_dir, out, err);
  if (*validate) return cmd_validate_dbc(dbc_path, out, err);
  if (*decode) return cmd_decode(decode_dbc, decode_log, out, err);
  if (*repro) return cmd_paper_repro(repro_out, config_dir, out, err, jobs);
  return kConfigError;
}

}  // namespace cansim::cli
