#include <doctest.h>

#include "scatter/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace scatter;
namespace fs = std::filesystem;

namespace {

const fs::path fixtures = SCATTER_TEST_DIR "/fixtures";
const fs::path golden = SCATTER_TEST_DIR "/golden";

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return load_config(in);
}

std::string config_error_field(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.field;
  }
  return "";
}

const std::string well = "[potential]\nkind = square_well\ndepth = 4\nwidth = 1\n";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("scatter_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("config: defaults, echo and hash") {
  const RunConfig cfg = parse(well + "[tasks]\nrun = all  # everything\n");
  CHECK(cfg.tasks.size() == 5);
  CHECK(cfg.grid.x.size() == 2000);
  CHECK(cfg.grid.k.size() == 1950);
  CHECK(cfg.grid.k_min() == doctest::Approx(0.01));
  CHECK(cfg.potential_block.at("depth") == "4");
  CHECK(cfg.hash.size() == 64);

  // Same effective config, same hash; comments, order and spacing do not matter.
  const RunConfig again =
      parse("[tasks]\nrun = [\"kernels\", \"phase\", \"all\"]\n; comment\n" + well + "[grid]\nh=0.02\n");
  CHECK(again.hash == cfg.hash);
  const RunConfig other = parse(well + "[tasks]\nrun = levinson\n");
  CHECK(other.hash != cfg.hash);
  RunConfig swapped = cfg;
  set_tasks(swapped, {"levinson"});
  CHECK(swapped.hash == other.hash);
  CHECK(swapped.tasks == std::vector<Task>{Task::levinson});
}

TEST_CASE("config: field-level errors") {
  const std::string tasks = "[tasks]\nrun = all\n";
  CHECK(config_error_field(well + "[grid]\nh = 0.02\nk_max = 40\n" + tasks) == "grid.k_max");
  CHECK(config_error_field(well + "[grid]\nk_min = 0.1\n" + tasks) == "grid.k_min");
  CHECK(config_error_field(well + "[grid]\nh = 0.03\n" + tasks) == "grid.h");
  CHECK(config_error_field(well + "[grid]\nx_max = 4\nh = 0.02\nk_min = 0.25\nk_max = 10\n" + tasks) == "grid.x_max");
  CHECK(config_error_field(well + "[tasks]\nrun = \n") == "tasks.run");
  CHECK(config_error_field(well + "[tasks]\nrun = phase, bogus\n") == "tasks.run");
  CHECK(config_error_field(well) == "tasks");
  CHECK(config_error_field(tasks) == "potential");
  CHECK(config_error_field(well + "[tolerances]\nidentity = -1\n" + tasks) == "tolerances.identity");
  CHECK(config_error_field(well + "[tolerances]\nidentity = tight\n" + tasks) == "tolerances.identity");
  CHECK(config_error_field(well + "[tolerances]\nidentiy = 1e-6\n" + tasks) == "tolerances.identiy");
  CHECK(config_error_field(well + "[extras]\na = 1\n" + tasks) == "extras");
  CHECK(config_error_field("[potential]\nkind = well\n" + tasks) == "potential.kind");
  CHECK(config_error_field("[potential]\nkind = power\nc = -3\n" + tasks) == "potential.rho");
  CHECK(config_error_field("[potential]\nkind = power\nc = -3\nrho = 1.5\n" + tasks) == "potential");
  CHECK(config_error_field("[potential]\nkind = zero\ndepth = 1\n" + tasks) == "potential.depth");
  CHECK(config_error_field(well + "certificate_c = 0.1\n" + tasks) == "potential.certificate");
  CHECK(config_error_field(well + "[output]\ndump_matrices = maybe\n" + tasks) == "output.dump_matrices");
  CHECK_THROWS_AS(load_config(fixtures / "bad_grid.toml"), ConfigError);
  CHECK_THROWS_AS(load_config(fixtures / "missing.toml"), ConfigError);
}

TEST_CASE("config: certificate override") {
  const RunConfig cfg = parse(well + "certificate_c = 200\ncertificate_rho = 3\n[tasks]\nrun = phase\n");
  CHECK(cfg.potential.certificate().c == 200.0);
  CHECK(cfg.potential(0.5) == -4.0);
  CHECK(cfg.potential_block.at("certificate_c") == "200");
}

TEST_CASE("exit codes") {
  RunReport r;
  CHECK(r.exit_code() == 0);
  r.tasks.push_back({});
  r.tasks.back().status = TaskStatus::pass;
  CHECK(r.exit_code() == 0);
  r.tasks.push_back({});
  r.tasks.back().status = TaskStatus::fail;
  CHECK(r.exit_code() == 2);
  r.tasks.push_back({});
  r.tasks.back().status = TaskStatus::error;
  CHECK(r.exit_code() == 4);
}

TEST_CASE("pipeline: square well Levinson, text output against the golden lines") {
  const RunConfig cfg = load_config(fixtures / "well_levinson.toml");
  const fs::path out = scratch("well");
  const RunReport r = run_pipeline(cfg, out);
  REQUIRE(r.tasks.size() == 2);
  CHECK(r.tasks[0].task == Task::spectrum);
  CHECK_FALSE(r.tasks[0].requested);
  const TaskReport* lev = r.find(Task::levinson);
  REQUIRE(lev);
  CHECK(lev->status == TaskStatus::pass);
  CHECK(lev->results["total"].get<double>() == doctest::Approx(1.0).epsilon(5e-3));
  CHECK(lev->results["expected_index"] == 1);
  CHECK(r.exit_code() == 0);
  for (const char* f : {"gamma1.csv", "gamma4.csv", "symbol.svg", "winding.json", "spectrum.json", "report.json"})
    CHECK(fs::exists(out / f));

  std::ostringstream text;
  write_text(text, r);
  std::istringstream lines(text.str());
  std::string picked;
  for (std::string line; std::getline(lines, line);)
    if (line.rfind("  wn(", 0) == 0 || line.rfind("  total", 0) == 0) picked += line + "\n";
  CHECK(picked == slurp(golden / "well_levinson.txt"));

  // Every artifact carries the config hash.
  CHECK(slurp(out / "gamma1.csv").find(cfg.hash) != std::string::npos);
  CHECK(slurp(out / "symbol.svg").find(cfg.hash) != std::string::npos);
  const auto w = nlohmann::json::parse(slurp(out / "winding.json"));
  CHECK(w["config_hash"] == cfg.hash);
  CHECK(w["potential"]["depth"] == "4.0");

  // An impossible tolerance fails the task and the exit status.
  RunConfig strict = cfg;
  strict.tol.levinson = 1e-300;
  strict.tol.classical = 1e-300;
  const RunReport rs = run_pipeline(strict, scratch("strict"));
  CHECK(rs.find(Task::levinson)->status == TaskStatus::fail);
  CHECK(rs.exit_code() == 2);
}

TEST_CASE("pipeline: zero potential, every task, deterministic artifacts") {
  const RunConfig cfg = load_config(fixtures / "zero_small.toml");
  const fs::path a = scratch("zero_a"), b = scratch("zero_b");
  const RunReport r = run_pipeline(cfg, a);
  CHECK(r.exit_code() == 0);
  REQUIRE(r.tasks.size() == 5);
  for (const auto& t : r.tasks) {
    INFO(to_string(t.task), " ", t.error);
    CHECK(t.status == TaskStatus::pass);
  }
  const auto* lev = r.find(Task::levinson);
  CHECK(std::abs(lev->results["total"].get<double>()) < 1e-12);
  CHECK(r.find(Task::spectrum)->results["N"] == 0);
  const auto* wo = r.find(Task::waveop);
  REQUIRE(r.eps_disc);
  CHECK(wo->results["hs_report"]["frobenius"].get<double>() < 3.0 * *r.eps_disc);
  CHECK(*r.eps_disc < 1e-6);

  const nlohmann::json j = to_json(r);
  CHECK(nlohmann::json::parse(j.dump()) == j);
  CHECK(j["config_hash"] == cfg.hash);
  CHECK(j["tasks"]["kernels"]["checks"].size() >= 6);

  run_pipeline(cfg, b);
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename();
    INFO(name.string());
    CHECK(slurp(entry.path()) == slurp(b / name));
    ++compared;
  }
  CHECK(compared >= 20);
}

TEST_CASE("pipeline: unwritable output directory") {
  const RunConfig cfg = parse(well + "[tasks]\nrun = spectrum\n");
  const fs::path blocker = scratch("blocker");
  std::ofstream(blocker) << "file";
  CHECK_THROWS(run_pipeline(cfg, blocker / "sub"));
  fs::remove(blocker);
}
