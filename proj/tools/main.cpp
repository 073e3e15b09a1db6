#include <iostream>

#include <CLI11.hpp>

#include "nnmd/cli.hpp"
#include "nnmd/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"nnmd: desk-scale molecular dynamics with a neural potential "
               "under a virtual domain decomposition"};
  app.require_subcommand(1);

  std::string config, points_csv, trajectory;
  nnmd::cli::Overrides ov;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON configuration file");
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { ov.seed = s; ov.has_seed = true; },
        "override the run seed");
    cmd->add_option_function<int>(
        "--workers", [&](int w) { ov.workers = w; ov.has_workers = true; },
        "concurrent simulated-rank workers");
    cmd->add_option_function<std::string>(
        "--out", [&](const std::string& o) { ov.out = o; ov.has_out = true; },
        "output directory");
    cmd->add_option_function<std::string>(
        "--scheme",
        [&](const std::string& s) { ov.scheme = s; ov.has_scheme = true; },
        "masked-reduction | wide-halo");
    cmd->add_option_function<std::vector<int>>(
        "--ranks",
        [&](const std::vector<int>& r) { ov.ranks = r; ov.has_ranks = true; },
        "simulated rank counts");
  };

  CLI::App* train = app.add_subcommand("train", "train a model on oracle data");
  add_common(train);
  CLI::App* run = app.add_subcommand("run", "run molecular dynamics");
  add_common(run);
  CLI::App* validate =
      app.add_subcommand("validate-dd", "decomposition-vs-oracle sweep");
  add_common(validate);
  CLI::App* sweep =
      app.add_subcommand("sweep", "strong/weak scaling throughput sweep");
  add_common(sweep);
  CLI::App* fit = app.add_subcommand("fit-scaling", "fit the throughput model");
  add_common(fit);
  fit->add_option("points", points_csv, "sweep points CSV")->required();
  CLI::App* gyrate =
      app.add_subcommand("gyrate", "gyration radii of a trajectory");
  add_common(gyrate);
  gyrate->add_option("trajectory", trajectory, "extended-XYZ trajectory")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return nnmd::cli::cmd_train(config, ov);
    if (run->parsed()) return nnmd::cli::cmd_run(config, ov);
    if (validate->parsed()) return nnmd::cli::cmd_validate_dd(config, ov);
    if (sweep->parsed()) return nnmd::cli::cmd_sweep(config, ov);
    if (fit->parsed()) return nnmd::cli::cmd_fit_scaling(points_csv, config, ov);
    if (gyrate->parsed()) return nnmd::cli::cmd_gyrate(trajectory, config, ov);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
