#pragma once

#include "scatter/kernelalg.hpp"
#include "scatter/levinson.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace scatter {

/// Field-level configuration problem; `field` is "section.key" or a section name.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& msg)
      : std::runtime_error(field + ": " + msg), field(std::move(field)) {}
  std::string field;
};

enum class Task { phase, spectrum, levinson, waveop, kernels };

std::string to_string(Task t);
/// Dependency order: phase, spectrum, levinson, waveop, kernels.
const std::vector<Task>& all_tasks();

struct Tolerances {
  double eps_factor = 3.0;          ///< operator checks pass below eps_factor * eps_disc
  double unitarity = 1e-10;         ///< max ||s| - 1|
  double consistency = 1e-8;        ///< regular solution rebuilt from Jost data
  double ode_residual = 1e-6;
  double growth = 4.0;              ///< bound on fitted envelope growth ratios
  double levinson = 5e-3;           ///< |total winding - N|
  double classical = 5e-3 * 3.141592653589793;  ///< |eta(inf) - eta(0) - pi (N + delta)|
  double hs_stability = 0.1;        ///< relative change of ||K||_F under refinement
  double identity = 1e-6;
  double decomposition = 1e-6;
  double factorization = 1e-8;
};

struct RunConfig {
  /// The [potential] block as written.
  std::map<std::string, std::string> potential_block;
  Potential potential = Potential::zero();
  OperatorGrid grid = OperatorGrid::uniform();
  double k_min = 0.01, k_max = 39.0;
  Eigen::Index phase_points = 400;
  Eigen::Index mellin_points = 4096;
  bool refine = true;
  Tolerances tol;
  std::vector<Task> tasks;
  std::filesystem::path out_dir = "scatter_out";
  bool dump_matrices = false;
  /// Normalized "section.key = value" lines, sorted; hashed for provenance.
  std::string canonical;
  std::string hash;  ///< SHA-256 of `canonical`, hex
};

/// Parses and validates; every problem is a ConfigError naming its field.
/// Grid preconditions (k_max h < pi/4, dk < pi/X) are checked here.
RunConfig load_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);
/// Replaces the task list (names as in [tasks] run) and re-hashes.
void set_tasks(RunConfig& cfg, const std::vector<std::string>& names);

struct Check {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  bool gating = true;  ///< false: reported only, never fails the task
};

enum class TaskStatus { pass, fail, skipped, error };
std::string to_string(TaskStatus s);

struct TaskReport {
  Task task = Task::phase;
  bool requested = true;
  TaskStatus status = TaskStatus::skipped;
  std::vector<Check> checks;
  nlohmann::json results = nlohmann::json::object();
  std::vector<std::string> artifacts;
  std::string error;  ///< what() of a numerical breakdown
  double seconds = 0.0;
};

struct RunReport {
  std::string config_hash;
  std::string canonical_config;
  std::map<std::string, std::string> potential_block;
  std::vector<TaskReport> tasks;
  std::optional<double> eps_disc;

  bool any_failure() const;
  bool any_breakdown() const;
  /// 0 pass, 2 tolerance failure, 4 numerical breakdown.
  int exit_code() const;
  const TaskReport* find(Task t) const;
};

/// Runs the requested tasks and their prerequisites (levinson and waveop need
/// the spectrum), writing artifacts to `out_dir`.
RunReport run_pipeline(const RunConfig& cfg, const std::filesystem::path& out_dir);

/// Stable JSON; timing lives only under "metadata".
nlohmann::json to_json(const RunReport& r);
/// Pass/fail matrix, one line per check and one per winding contribution.
void write_text(std::ostream& os, const RunReport& r);

}  // namespace scatter
