// slice-sim: train, evaluate and compare RAN slicing agents for XR and eMBB users.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ibs/config.hpp"
#include "ibs/errors.hpp"
#include "ibs/experiment.hpp"

namespace {

enum ExitCode : int { kOk = 0, kOther = 1, kConfig = 2, kInfeasible = 3, kCheckpoint = 4, kNumerical = 5 };

int fail(int code, const char* category, const std::string& msg) {
  std::cerr << "error[" << category << "]: " << msg << '\n';
  return code;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = s.find(',', start);
    std::string item = s.substr(start, comma - start);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  ibs::tune_allocator();
  CLI::App app{"RAN slicing simulator for XR (IBS) and eMBB users"};
  app.set_version_flag("--version", std::string(IBS_VERSION));
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string agents;
  std::string densities;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string preset = "full";
  std::string checkpoint;
  std::optional<int> workers;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file (flat keys, units in names)");
    sub->add_option("--agent", agents, "agent kind(s): sac, sac-base, equal, demand; comma separated");
    sub->add_option("--densities", densities, "comma separated IBS user counts, e.g. 10,25");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--out", out, "output directory")->capture_default_str();
    sub->add_option("--preset", preset, "full (default settings) or desk (CI scale)")->capture_default_str();
    sub->add_option("--workers", workers, "concurrent (agent, density) cells");
  };
  CLI::App* train = app.add_subcommand("train", "train learning agents, one checkpoint per density");
  CLI::App* eval = app.add_subcommand("eval", "evaluate frozen policies and write report CSVs");
  CLI::App* sweep = app.add_subcommand("sweep", "train where needed and evaluate every (agent, density) cell");
  CLI::App* report = app.add_subcommand("report", "rebuild report CSVs from an output directory");
  for (CLI::App* s : {train, eval, sweep}) add_common(s);
  eval->add_option("--checkpoint", checkpoint, "policy checkpoint (single agent and density only)");
  report->add_option("--out", out, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kConfig, "usage", e.what());
  }

  try {
    ibs::CommandOptions opts;
    opts.out = out;
    if (report->parsed()) {
      ibs::Runner(ibs::preset_config("full"), opts).report();
      return kOk;
    }

    ibs::ExperimentConfig cfg = ibs::preset_config(preset);
    if (!config_path.empty()) ibs::apply_config_json(cfg, ibs::read_config_file(config_path));
    if (!agents.empty()) {
      cfg.agents.clear();
      for (const auto& a : split_list(agents)) cfg.agents.push_back(ibs::parse_agent_kind(a));
    }
    if (!densities.empty()) {
      cfg.densities.clear();
      for (const auto& d : split_list(densities)) {
        std::size_t used = 0;
        int v = 0;
        try {
          v = std::stoi(d, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != d.size()) throw ibs::ConfigError("--densities: '" + d + "' is not an integer");
        cfg.densities.push_back(v);
      }
    }
    if (seed) cfg.master_seed = *seed;
    if (workers) cfg.workers = *workers;
    if (!checkpoint.empty()) opts.checkpoint = checkpoint;

    ibs::Runner runner(cfg, opts);
    if (train->parsed()) runner.train();
    else if (eval->parsed()) runner.eval();
    else runner.sweep();
    return kOk;
  } catch (const ibs::ConfigError& e) {
    return fail(kConfig, "config", e.what());
  } catch (const ibs::InfeasibleLayout& e) {
    return fail(kInfeasible, "infeasible-layout", e.what());
  } catch (const ibs::CheckpointError& e) {
    return fail(kCheckpoint, "checkpoint", e.what());
  } catch (const ibs::NumericalError& e) {
    return fail(kNumerical, "numerical", e.what());
  } catch (const std::exception& e) {
    return fail(kOther, "internal", e.what());
  }
}
