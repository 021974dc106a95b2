#include "scatter/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

int run(const std::string& config, const std::vector<std::string>& tasks, const std::string& out,
        const std::string& format) {
  scatter::RunConfig cfg;
  try {
    cfg = scatter::load_config(config);
    if (!tasks.empty()) scatter::set_tasks(cfg, tasks);
  } catch (const scatter::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 3;
  }
  const std::filesystem::path dir = out.empty() ? cfg.out_dir : std::filesystem::path(out);
  scatter::RunReport report;
  try {
    report = scatter::run_pipeline(cfg, dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  if (format == "json")
    std::cout << scatter::to_json(report).dump(2) << '\n';
  else
    scatter::write_text(std::cout, report);
  return report.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Half-line scattering: Jost data, Levinson windings, wave operators, remainder kernels"};
  app.require_subcommand(1);

  std::string config, out, format = "text";
  std::vector<std::string> tasks;
  auto* run_cmd = app.add_subcommand("run", "Run the configured tasks");
  run_cmd->add_option("--config", config, "Config file")->required();
  run_cmd->add_option("--task", tasks, "Override the task list (repeatable)")
      ->check(CLI::IsMember({"phase", "spectrum", "levinson", "waveop", "kernels", "all"}));
  run_cmd->add_option("--out", out, "Output directory");
  run_cmd->add_option("--format", format, "Report format")->check(CLI::IsMember({"json", "text"}));

  auto* validate_cmd = app.add_subcommand("validate", "Check a config file without computing");
  validate_cmd->add_option("--config", config, "Config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 3;
  }

  if (*validate_cmd) {
    try {
      const auto cfg = scatter::load_config(config);
      std::cout << "config ok " << cfg.hash << '\n' << cfg.canonical;
      return 0;
    } catch (const scatter::ConfigError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return 3;
    }
  }
  return run(config, tasks, out, format);
}
