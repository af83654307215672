#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "crossflux/commands.hpp"

namespace {

// exit codes: 0 ok, 2 config, 3 numerical, 4 verification, 1 other
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

int dispatch(const std::string& cmd, const crossflux::ExperimentConfig& cfg,
             const std::optional<std::string>& out, int threads) {
  if (cmd == "analyze") return crossflux::cmd_analyze(cfg, out);
  if (cmd == "branches") return crossflux::cmd_branches(cfg, out, threads);
  if (cmd == "limit") return crossflux::cmd_limit(cfg, out, threads);
  if (cmd == "compare") return crossflux::cmd_compare(cfg, out, threads);
  if (cmd == "evolve") return crossflux::cmd_evolve(cfg, out);
  if (cmd == "verify") return crossflux::cmd_verify(cfg, out);
  std::cerr << "unknown subcommand: " << cmd << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crossflux: bifurcation structure of a cooperative system with attractive-transition flux"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int threads = 1;

  for (const char* name : {"analyze", "branches", "limit", "compare", "evolve", "verify"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "configuration file")->required();
    sub->add_option("--out", out_dir, "output directory (overrides [output] dir)");
    sub->add_option("--threads", threads, "worker threads for independent branches");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string cmd = app.get_subcommands().front()->get_name();
  const std::optional<std::string> out =
      out_dir.empty() ? std::nullopt : std::optional<std::string>(out_dir);

  try {
    const crossflux::ExperimentConfig cfg = crossflux::load_config(config_path);
    return dispatch(cmd, cfg, out, threads);
  } catch (const crossflux::ConfigError& e) {
    std::cerr << config_path << ": " << e.what() << "\n";
    return kExitConfig;
  } catch (const crossflux::RegimeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const crossflux::SingularMatrixError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const crossflux::SwitchFailure& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const crossflux::SwitchCollapse& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
