// SPDX-License-Identifier: Apache-2.0

// morwave: snapshot generation, reduced-order models and error reports for
// the damaged 2D wave benchmark.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "morwave/pipeline.hpp"

namespace
{

namespace pl = morwave::pipeline;

struct Flags
{
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::string> output_dir;
  std::vector<int> ranks;
  std::optional<double> tau;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> integrator;
  // simulate-wave
  std::optional<double> h;
  std::optional<std::string> initial_velocity;
  // ingest
  std::optional<std::string> input;
  std::optional<std::string> format;
  std::optional<std::string> rows;
  std::optional<bool> time_column;
  std::optional<int> sensor_row;
  // dmd
  std::optional<std::string> amplitudes;
  std::optional<int> forecast_steps;
  // mrdmd
  std::optional<int> levels;
  std::optional<int> branching;
  std::optional<double> rho;
  std::optional<int> rank_cap;
  // opinf
  std::optional<std::string> variant;
  std::optional<double> lambda;
  std::optional<int> max_iters;
  std::optional<double> step_size;
  std::optional<std::string> gauge;
  // evaluate
  std::vector<std::string> compare;
};

void AddCommon(CLI::App *sub, Flags &f)
{
  sub->add_option("-c,--config", f.config, "JSON run configuration");
  sub->add_option("--set", f.sets, "override a config key, e.g. --set time.tau=0.01");
  sub->add_option("-o,--output-dir", f.output_dir, "output directory");
  sub->add_option("--rank", f.ranks, "rank(s), replaces the config list");
  sub->add_option("--tau", f.tau, "time step");
  sub->add_option("--seed", f.seed, "random seed");
  sub->add_option("--integrator", f.integrator, "newmark or trapezoidal");
  sub->add_option("--mesh-size", f.h, "mesh size h");
}

template <typename T>
void Put(pl::Json &root, const char *path, const std::optional<T> &v)
{
  if (v)
  {
    pl::Json value = *v;
    pl::ApplyOverride(root, std::string(path) + "=" + value.dump());
  }
}

int ThreadsFromEnvironment()
{
  const char *env = std::getenv("MORWAVE_THREADS");
  if (env == nullptr || *env == '\0')
  {
    return 1;
  }
  const int n = std::atoi(env);
  return n > 0 ? n : 1;
}

}  // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Reduced-order models for the damaged 2D wave benchmark"};
  app.require_subcommand(1);
  Flags f;

  auto *simulate = app.add_subcommand("simulate-wave", "solve the full-order wave problem");
  AddCommon(simulate, f);
  simulate->add_option("--initial-velocity", f.initial_velocity, "derivative or zero");

  auto *ingest = app.add_subcommand("ingest", "import external snapshot data");
  AddCommon(ingest, f);
  ingest->add_option("--input", f.input, "snapshot file")->required();
  ingest->add_option("--format", f.format, "binary or text");
  ingest->add_option("--rows", f.rows, "text layout: space or time");
  ingest->add_option("--time-column", f.time_column, "text carries a time row/column (true/false)");
  ingest->add_option("--sensor-row", f.sensor_row, "state row used as the sensor");

  auto *differentiate = app.add_subcommand("differentiate", "eighth-order second time derivative");
  AddCommon(differentiate, f);

  auto *pod = app.add_subcommand("pod", "POD-Galerkin reduced models");
  AddCommon(pod, f);

  auto *dmd = app.add_subcommand("dmd", "exact DMD");
  AddCommon(dmd, f);
  dmd->add_option("--amplitudes", f.amplitudes, "projected, optimal or both");
  dmd->add_option("--forecast-steps", f.forecast_steps, "extra steps past the data");

  auto *mrdmd = app.add_subcommand("mrdmd", "multiresolution DMD");
  AddCommon(mrdmd, f);
  mrdmd->add_option("--levels", f.levels, "maximum number of levels");
  mrdmd->add_option("--branching", f.branching, "children per window");
  mrdmd->add_option("--rho", f.rho, "slow-mode cycle threshold");
  mrdmd->add_option("--rank-cap", f.rank_cap, "DMD rank cap per window");

  auto *opinf = app.add_subcommand("opinf", "operator inference");
  AddCommon(opinf, f);
  opinf->add_option("--variant", f.variant, "unconstrained or forces-informed");
  opinf->add_option("--lambda", f.lambda, "Tikhonov weight");
  opinf->add_option("--max-iters", f.max_iters, "optimizer iteration limit");
  opinf->add_option("--step-size", f.step_size, "optimizer step size");
  opinf->add_option("--gauge", f.gauge, "zero-force gauge: mass-floor, unit-mass or unit-trace");

  auto *evaluate = app.add_subcommand("evaluate", "consolidated error and timing report");
  AddCommon(evaluate, f);
  evaluate->add_option("--compare", f.compare, "other output directories to merge");

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError &e)
  {
    const int code = app.exit(e);
    return code == 0 ? 0 : pl::kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  Eigen::setNbThreads(ThreadsFromEnvironment());
  try
  {
    pl::Json root = f.config.empty() ? pl::Json::object() : pl::LoadConfigFile(f.config);
    Put(root, "output_dir", f.output_dir);
    Put(root, "time.tau", f.tau);
    Put(root, "seed", f.seed);
    Put(root, "method.integrator", f.integrator);
    Put(root, "mesh.h", f.h);
    Put(root, "problem.initial_velocity", f.initial_velocity);
    Put(root, "problem.snapshot_file", f.input);
    Put(root, "problem.file_format", f.format);
    Put(root, "problem.rows", f.rows);
    Put(root, "problem.time_column", f.time_column);
    Put(root, "problem.sensor_row", f.sensor_row);
    Put(root, "dmd.amplitudes", f.amplitudes);
    Put(root, "dmd.forecast_steps", f.forecast_steps);
    Put(root, "mrdmd.levels", f.levels);
    Put(root, "mrdmd.branching", f.branching);
    Put(root, "mrdmd.rho", f.rho);
    Put(root, "mrdmd.rank_cap", f.rank_cap);
    Put(root, "opinf.variant", f.variant);
    Put(root, "opinf.lambda", f.lambda);
    Put(root, "opinf.max_iterations", f.max_iters);
    Put(root, "opinf.step_size", f.step_size);
    Put(root, "opinf.gauge", f.gauge);
    if (!f.ranks.empty())
    {
      root["ranks"] = f.ranks;
    }
    if (!f.compare.empty())
    {
      root["method"]["compare_runs"] = f.compare;
    }
    if (command == "pod" || command == "dmd" || command == "mrdmd" || command == "opinf")
    {
      root["method"]["name"] = command;
    }
    for (const auto &s : f.sets)
    {
      pl::ApplyOverride(root, s);
    }
    const pl::RunConfig cfg = pl::ParseConfig(root);
    pl::Commands().at(command)(cfg);
  }
  catch (const pl::ConfigError &e)
  {
    std::cerr << "morwave " << command << ": " << e.what() << '\n';
    return pl::kExitConfig;
  }
  catch (const morwave::NumericalError &e)
  {
    std::cerr << "morwave " << command << ": numerical failure: " << e.what() << '\n';
    return pl::kExitNumerical;
  }
  catch (const morwave::InvalidArgument &e)
  {
    std::cerr << "morwave " << command << ": " << e.what() << '\n';
    return pl::kExitConfig;
  }
  catch (const morwave::FormatError &e)
  {
    std::cerr << "morwave " << command << ": " << e.what() << '\n';
    return pl::kExitConfig;
  }
  catch (const std::exception &e)
  {
    std::cerr << "morwave " << command << ": " << e.what() << '\n';
    return 1;
  }
  return pl::kExitOk;
}
