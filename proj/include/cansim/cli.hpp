#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cansim::cli {

// Stable exit-code contract.
enum ExitCode : int {
  kOk = 0,
  kConfigError = 1,
  kSimulationError = 2,
  kIoError = 3,
};

int cmd_simulate(const std::string& config_path, const std::vector<std::string>& overrides,
                 const std::string& output_dir, std::ostream& out, std::ostream& err);

int cmd_validate_dbc(const std::string& path, std::ostream& out, std::ostream& err);

int cmd_decode(const std::string& dbc_path, const std::string& candump_path, std::ostream& out,
               std::ostream& err);

/// Runs the bundled EUDC and cruise scenarios in both coupling modes and
/// prints the reproduction check table.
int cmd_paper_repro(const std::string& output_dir, const std::string& config_dir, std::ostream& out,
                    std::ostream& err, unsigned jobs = 0);

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cansim::cli
