// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "morwave/dmd.hpp"
#include "morwave/error.hpp"
#include "morwave/integrate_rom.hpp"
#include "morwave/metrics.hpp"
#include "morwave/mrdmd.hpp"
#include "morwave/opinf.hpp"
#include "morwave/pod.hpp"
#include "morwave/snapshots.hpp"
#include "morwave/wave_fom.hpp"

namespace morwave::pipeline
{

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// Bad configuration or missing inputs; maps to exit code 2.
class ConfigError : public InvalidArgument
{
public:
  using InvalidArgument::InvalidArgument;
};

enum ExitCode
{
  kExitOk = 0,
  kExitConfig = 2,
  kExitNumerical = 3
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct IngestSettings
{
  std::string file;                 // empty: use the wave benchmark
  SnapshotFormat format = SnapshotFormat::binary;
  TextOptions text;
  int sensor_row = 0;
};

struct RunConfig
{
  WaveProblem problem;
  IngestSettings ingest;
  std::string method = "pod";
  std::string integrator = "newmark";  // or "trapezoidal"
  int spatial_rank = 40;               // rank whose eps_u(t) curve is written
  bool plots = true;
  std::vector<std::string> compare_runs;  // other output dirs merged by evaluate
  std::vector<int> ranks{20, 40, 60, 80};

  OpInfVariant opinf_variant = OpInfVariant::forces_informed;
  double opinf_lambda = 1.0e-8;
  OptimizerConfig optimizer;

  std::string dmd_amplitudes = "both";  // projected | optimal | both
  ProjectedAmplitudeVariant projected_variant = ProjectedAmplitudeVariant::first_snapshot;
  int forecast_steps = 0;

  int mrdmd_levels = 4;
  int mrdmd_branching = 2;
  double mrdmd_rho = 1.0;
  int mrdmd_rank_cap = 10;

  std::string output_dir = "out";
  std::uint64_t seed = 0;

  Json source;  // the effective configuration, echoed into manifests
};

namespace detail
{

// Reads keys from one JSON object and rejects whatever was not read.
class Section
{
public:
  Section(const Json &node, std::string path) : node_(node), path_(std::move(path))
  {
    if (!node_.is_object())
    {
      throw ConfigError("config: '" + path_ + "' must be an object");
    }
  }

  template <typename T>
  void Get(const char *key, T &target)
  {
    used_.insert(key);
    if (!node_.contains(key))
    {
      return;
    }
    try
    {
      target = node_.at(key).template get<T>();
    }
    catch (const nlohmann::json::exception &)
    {
      throw ConfigError("config: '" + Key(key) + "' has the wrong type (" +
                        node_.at(key).dump() + ")");
    }
  }

  template <typename T>
  void GetChoice(const char *key, T &target, const std::map<std::string, T> &choices)
  {
    std::string value;
    Get(key, value);
    if (!node_.contains(key))
    {
      return;
    }
    const auto it = choices.find(value);
    if (it == choices.end())
    {
      std::string allowed;
      for (const auto &[name, v] : choices)
      {
        allowed += (allowed.empty() ? "" : ", ") + name;
      }
      throw ConfigError("config: '" + Key(key) + "' = \"" + value + "\" is not one of {" +
                        allowed + "}");
    }
    target = it->second;
  }

  void GetPoint(const char *key, Point &target)
  {
    std::vector<double> xy;
    Get(key, xy);
    if (!node_.contains(key))
    {
      return;
    }
    if (xy.size() != 2)
    {
      throw ConfigError("config: '" + Key(key) + "' must be [x1, x2]");
    }
    target = {xy[0], xy[1]};
  }

  [[nodiscard]] bool Has(const char *key) const { return node_.contains(key); }
  [[nodiscard]] std::string Key(const char *key) const { return path_ + "." + key; }

  void Finish() const
  {
    for (auto it = node_.begin(); it != node_.end(); ++it)
    {
      if (used_.count(it.key()) == 0)
      {
        throw ConfigError("config: unknown key '" + path_ + "." + it.key() + "'");
      }
    }
  }

private:
  const Json &node_;
  std::string path_;
  std::set<std::string> used_;
};

inline void Check(bool ok, const std::string &msg)
{
  if (!ok)
  {
    throw ConfigError("config: " + msg);
  }
}

}  // namespace detail

// Builds a RunConfig from JSON; unknown keys and bad values throw ConfigError.
inline RunConfig ParseConfig(const Json &root)
{
  detail::Check(root.is_object(), "top level must be an object");
  static const std::set<std::string> sections{"problem", "mesh",  "time",  "damage",
                                              "method",  "ranks", "opinf", "dmd",
                                              "mrdmd",   "output_dir", "seed"};
  for (auto it = root.begin(); it != root.end(); ++it)
  {
    if (sections.count(it.key()) == 0)
    {
      throw ConfigError("config: unknown key '" + it.key() + "'");
    }
  }
  RunConfig cfg;
  const Json empty = Json::object();
  const auto section = [&](const char *name) -> const Json & {
    return root.contains(name) ? root.at(name) : empty;
  };

  {
    detail::Section s(section("problem"), "problem");
    s.Get("domain_length", cfg.problem.domain_length);
    s.Get("excitation_amplitude", cfg.problem.excitation_amplitude);
    s.GetPoint("sensor", cfg.problem.sensor_location);
    s.GetChoice<InitialVelocity>("initial_velocity", cfg.problem.initial_velocity,
                                 {{"derivative", InitialVelocity::derivative},
                                  {"zero", InitialVelocity::zero}});
    s.Get("snapshot_file", cfg.ingest.file);
    s.GetChoice<SnapshotFormat>("file_format", cfg.ingest.format,
                                {{"binary", SnapshotFormat::binary},
                                 {"text", SnapshotFormat::delimited_text}});
    s.GetChoice<RowOrientation>("rows", cfg.ingest.text.orientation,
                                {{"space", RowOrientation::space}, {"time", RowOrientation::time}});
    s.Get("time_column", cfg.ingest.text.time_column);
    s.Get("sensor_row", cfg.ingest.sensor_row);
    s.Finish();
  }
  {
    detail::Section s(section("mesh"), "mesh");
    s.Get("nodes_per_side", cfg.problem.nodes_per_side);
    if (s.Has("h"))
    {
      double h = 0.0;
      s.Get("h", h);
      detail::Check(h > 0.0, "'mesh.h' must be positive");
      const double cells = cfg.problem.domain_length / h;
      detail::Check(std::abs(cells - std::round(cells)) < 1.0e-9 * cells,
                    "'mesh.h' must divide the domain length");
      const int n = static_cast<int>(std::round(cells)) + 1;
      detail::Check(!s.Has("nodes_per_side") || n == cfg.problem.nodes_per_side,
                    "'mesh.h' and 'mesh.nodes_per_side' disagree");
      cfg.problem.nodes_per_side = n;
    }
    s.Finish();
  }
  {
    detail::Section s(section("time"), "time");
    s.Get("t0", cfg.problem.t0);
    s.Get("t_end", cfg.problem.t_end);
    s.Get("tau", cfg.problem.tau);
    s.Finish();
    cfg.ingest.text.t0 = cfg.problem.t0;
    cfg.ingest.text.dt = cfg.problem.tau;
  }
  {
    detail::Section s(section("damage"), "damage");
    s.GetPoint("location", cfg.problem.damage.location);
    s.Get("size", cfg.problem.damage.size);
    s.Get("depth", cfg.problem.damage.depth);
    s.Finish();
  }
  {
    detail::Section s(section("method"), "method");
    s.Get("name", cfg.method);
    s.Get("integrator", cfg.integrator);
    s.Get("spatial_rank", cfg.spatial_rank);
    s.Get("plots", cfg.plots);
    s.Get("compare_runs", cfg.compare_runs);
    s.Finish();
    detail::Check(cfg.method == "pod" || cfg.method == "dmd" || cfg.method == "mrdmd" ||
                      cfg.method == "opinf",
                  "'method.name' must be pod, dmd, mrdmd or opinf");
    detail::Check(cfg.integrator == "newmark" || cfg.integrator == "trapezoidal",
                  "'method.integrator' must be newmark or trapezoidal");
  }
  if (root.contains("ranks"))
  {
    try
    {
      cfg.ranks = root.at("ranks").get<std::vector<int>>();
    }
    catch (const nlohmann::json::exception &)
    {
      throw ConfigError("config: 'ranks' must be a list of integers");
    }
  }
  detail::Check(!cfg.ranks.empty(), "'ranks' must not be empty");
  for (int r : cfg.ranks)
  {
    detail::Check(r >= 1, "'ranks' entries must be >= 1");
  }
  {
    detail::Section s(section("opinf"), "opinf");
    s.GetChoice<OpInfVariant>("variant", cfg.opinf_variant,
                              {{"unconstrained", OpInfVariant::unconstrained},
                               {"forces-informed", OpInfVariant::forces_informed}});
    s.Get("lambda", cfg.opinf_lambda);
    s.Get("max_iterations", cfg.optimizer.max_iterations);
    s.Get("step_size", cfg.optimizer.step_size);
    s.Get("beta1", cfg.optimizer.beta1);
    s.Get("beta2", cfg.optimizer.beta2);
    s.Get("epsilon", cfg.optimizer.epsilon);
    s.Get("tolerance", cfg.optimizer.tolerance);
    s.Get("window", cfg.optimizer.window);
    s.Get("init_perturbation", cfg.optimizer.init_perturbation);
    s.GetChoice<ZeroForceGauge>("gauge", cfg.optimizer.gauge,
                                {{"mass-floor", ZeroForceGauge::mass_floor},
                                 {"unit-mass", ZeroForceGauge::unit_mass},
                                 {"unit-trace", ZeroForceGauge::unit_trace}});
    s.GetChoice<FactorInit>("init", cfg.optimizer.init,
                            {{"least-squares", FactorInit::least_squares},
                             {"scaled-identity", FactorInit::scaled_identity}});
    s.Finish();
    detail::Check(cfg.opinf_lambda >= 0.0, "'opinf.lambda' must be >= 0");
  }
  {
    detail::Section s(section("dmd"), "dmd");
    s.Get("amplitudes", cfg.dmd_amplitudes);
    s.GetChoice<ProjectedAmplitudeVariant>(
        "projected_variant", cfg.projected_variant,
        {{"first-snapshot", ProjectedAmplitudeVariant::first_snapshot},
         {"lambda-shifted", ProjectedAmplitudeVariant::lambda_shifted}});
    s.Get("forecast_steps", cfg.forecast_steps);
    s.Finish();
    detail::Check(cfg.dmd_amplitudes == "projected" || cfg.dmd_amplitudes == "optimal" ||
                      cfg.dmd_amplitudes == "both",
                  "'dmd.amplitudes' must be projected, optimal or both");
    detail::Check(cfg.forecast_steps >= 0, "'dmd.forecast_steps' must be >= 0");
  }
  {
    detail::Section s(section("mrdmd"), "mrdmd");
    s.Get("levels", cfg.mrdmd_levels);
    s.Get("branching", cfg.mrdmd_branching);
    s.Get("rho", cfg.mrdmd_rho);
    s.Get("rank_cap", cfg.mrdmd_rank_cap);
    s.Finish();
    detail::Check(cfg.mrdmd_levels >= 1, "'mrdmd.levels' must be >= 1");
    detail::Check(cfg.mrdmd_branching >= 2, "'mrdmd.branching' must be >= 2");
    detail::Check(cfg.mrdmd_rho > 0.0, "'mrdmd.rho' must be positive");
    detail::Check(cfg.mrdmd_rank_cap >= 1, "'mrdmd.rank_cap' must be >= 1");
  }
  if (root.contains("output_dir"))
  {
    detail::Check(root.at("output_dir").is_string(), "'output_dir' must be a string");
    cfg.output_dir = root.at("output_dir").get<std::string>();
  }
  if (root.contains("seed"))
  {
    detail::Check(root.at("seed").is_number_unsigned() || root.at("seed").is_number_integer(),
                  "'seed' must be an integer");
    cfg.seed = root.at("seed").get<std::uint64_t>();
  }
  cfg.optimizer.seed = cfg.seed;

  try
  {
    cfg.problem.Validate();
    cfg.optimizer.Validate();
  }
  catch (const InvalidArgument &e)
  {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.source = root;
  return cfg;
}

// Parses JSON text; syntax errors carry the line and column.
inline Json ParseJsonText(const std::string &text, const std::string &origin)
{
  try
  {
    return Json::parse(text, nullptr, true, true);
  }
  catch (const nlohmann::json::parse_error &e)
  {
    throw ConfigError(origin + ": " + e.what());
  }
}

inline Json LoadConfigFile(const fs::path &path)
{
  std::ifstream in(path);
  if (!in)
  {
    throw ConfigError("cannot open config file '" + path.string() + "'");
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseJsonText(ss.str(), path.string());
}

// Applies "a.b.c=value" overrides. The value is read as JSON when it parses,
// otherwise as a string.
inline void ApplyOverride(Json &root, const std::string &assignment)
{
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
  {
    throw ConfigError("override '" + assignment + "' must look like key.path=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try
  {
    value = Json::parse(text);
  }
  catch (const nlohmann::json::parse_error &)
  {
    value = text;
  }
  Json *node = &root;
  std::size_t start = 0;
  while (true)
  {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty())
    {
      throw ConfigError("override '" + assignment + "' has an empty key");
    }
    if (!node->is_object())
    {
      throw ConfigError("override '" + assignment + "' descends into a non-object");
    }
    if (dot == std::string::npos)
    {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key))
    {
      (*node)[key] = Json::object();
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

// ---------------------------------------------------------------------------
// Files, hashes, manifests
// ---------------------------------------------------------------------------

inline std::string Sha256File(const fs::path &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
  {
    throw FormatError("cannot read '" + path.string() + "' for hashing");
  }
  EVP_MD_CTX *ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in)
  {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0)
    {
      EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i)
  {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

// Collects the files one command writes and emits its manifest.
class Outputs
{
public:
  // The directory belongs to this command and is cleared first.
  Outputs(fs::path root, std::string command) : root_(std::move(root)), command_(std::move(command))
  {
    fs::remove_all(root_);
    fs::create_directories(root_);
  }

  [[nodiscard]] const fs::path &Root() const { return root_; }

  fs::path Text(const std::string &name, const std::string &content)
  {
    const fs::path p = root_ / name;
    morwave::detail::WriteText(p.string(), content);
    files_.push_back(name);
    return p;
  }

  fs::path Matrices(const std::string &name, const MatrixBundle &bundle)
  {
    const fs::path p = root_ / name;
    WriteMatrices(p, bundle);
    files_.push_back(name);
    return p;
  }

  fs::path Snapshots(const std::string &name, const SnapshotSet &set)
  {
    const fs::path p = root_ / name;
    WriteSnapshotsBinary(p, set);
    files_.push_back(name);
    return p;
  }

  Json &Info() { return info_; }

  void WriteManifest(const RunConfig &cfg)
  {
    Json manifest;
    manifest["command"] = command_;
    manifest["config"] = cfg.source;
    manifest["info"] = info_;
    Json files = Json::array();
    for (const auto &name : files_)
    {
      const fs::path p = root_ / name;
      files.push_back({{"path", name},
                       {"bytes", static_cast<std::uint64_t>(fs::file_size(p))},
                       {"sha256", Sha256File(p)}});
    }
    manifest["files"] = files;
    morwave::detail::WriteText((root_ / "manifest.json").string(), manifest.dump(2) + "\n");
  }

private:
  fs::path root_;
  std::string command_;
  std::vector<std::string> files_;
  Json info_ = Json::object();
};

inline double Seconds(std::chrono::steady_clock::time_point start)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline std::string SignalCsv(const Vector &times, const Vector &signal, const char *column)
{
  std::ostringstream os;
  os << "time_s," << column << '\n';
  for (Eigen::Index k = 0; k < times.size(); ++k)
  {
    os << morwave::detail::FormatNumber(times(k)) << ','
       << morwave::detail::FormatNumber(signal(k)) << '\n';
  }
  return os.str();
}

inline Vector ReadSignalCsv(const fs::path &path)
{
  std::ifstream in(path);
  if (!in)
  {
    throw ConfigError("missing input '" + path.string() + "'");
  }
  std::string header;
  std::getline(in, header);
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line))
  {
    const auto comma = line.find(',');
    if (comma == std::string::npos)
    {
      continue;
    }
    values.push_back(std::stod(line.substr(comma + 1)));
  }
  return Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

// ---------------------------------------------------------------------------
// Shared data loading
// ---------------------------------------------------------------------------

struct FomData
{
  SnapshotSet set;
  int sensor_row = 0;
  double fom_seconds = 0.0;
  bool from_wave = false;
  std::optional<WaveOperators> operators;  // wave runs only

  [[nodiscard]] Vector Sensor() const { return set.states.row(sensor_row).transpose(); }
  [[nodiscard]] double Tau() const { return set.TimeStep(); }
};

inline fs::path DataDir(const RunConfig &cfg) { return fs::path(cfg.output_dir) / "data"; }

inline FomData LoadFom(const RunConfig &cfg, bool need_operators)
{
  const fs::path dir = DataDir(cfg);
  const fs::path info_path = dir / "manifest.json";
  if (!fs::exists(dir / "snapshots.morw") || !fs::exists(info_path))
  {
    throw ConfigError("no snapshot data in '" + dir.string() +
                      "'; run simulate-wave or ingest first");
  }
  const Json manifest = LoadConfigFile(info_path);
  const Json &info = manifest.at("info");
  FomData out;
  out.set = ReadSnapshotsBinary(dir / "snapshots.morw");
  out.sensor_row = info.at("sensor_row").get<int>();
  out.fom_seconds = info.at("fom_seconds").get<double>();
  out.from_wave = info.at("source").get<std::string>() == "wave";
  if (out.sensor_row < 0 || out.sensor_row >= out.set.states.rows())
  {
    throw ConfigError("sensor row " + std::to_string(out.sensor_row) + " outside the data");
  }
  if (fs::exists(dir / "accelerations.morw"))
  {
    for (auto &[name, mat] : ReadMatrices(dir / "accelerations.morw"))
    {
      if (name == "UDD")
      {
        out.set.accelerations = std::move(mat);
      }
    }
  }
  if (need_operators && out.from_wave)
  {
    out.operators = AssembleWaveOperators(cfg.problem);
    if (out.operators->mass.rows() != out.set.states.rows())
    {
      throw ConfigError("config mesh does not match the stored snapshots (" +
                        std::to_string(out.operators->mass.rows()) + " vs " +
                        std::to_string(out.set.states.rows()) + " unknowns)");
    }
  }
  return out;
}

inline std::vector<int> CheckedRanks(const RunConfig &cfg, Eigen::Index limit, const char *what)
{
  for (int r : cfg.ranks)
  {
    if (r > limit)
    {
      throw ConfigError(std::string(what) + ": rank " + std::to_string(r) +
                        " exceeds the data rank limit " + std::to_string(limit));
    }
  }
  return cfg.ranks;
}

// Per-method bookkeeping shared by the reduce commands.
struct MethodReport
{
  std::vector<ErrorRecord> errors;
  std::vector<TimingRecord> timings;
};

inline void RecordRun(Outputs &out, MethodReport &report, const RunConfig &cfg, const FomData &fom,
                      const std::string &method, const std::string &slug, int rank,
                      const Vector &sensor, const DenseMatrix *field, double build_seconds,
                      double online_seconds)
{
  const double eps = SensorError(fom.Sensor(), sensor, fom.Tau());
  report.errors.push_back({method, rank, fom.Tau(), eps});
  report.timings.push_back({method, fom.Tau(), rank, fom.fom_seconds, build_seconds, online_seconds});
  out.Text("sensor_" + slug + "_r" + std::to_string(rank) + ".csv",
           SignalCsv(fom.set.times, sensor, "u_sensor"));
  if (field != nullptr && rank == cfg.spatial_rank)
  {
    const SparseMatrix *weight = fom.operators ? &fom.operators->mass : nullptr;
    const Vector eps_u = SpatialError(fom.set.states, *field, weight);
    out.Text("eps_u_" + slug + "_r" + std::to_string(rank) + ".csv",
             ErrorVsTimeCsv(fom.set.times, eps_u));
  }
}

inline void FinishMethod(Outputs &out, const MethodReport &report, const RunConfig &cfg)
{
  out.Text("errors.csv", ErrorVsRankCsv(report.errors));
  out.Text("timings.csv", TimingCsv(report.timings));
  out.WriteManifest(cfg);
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline void CmdSimulateWave(const RunConfig &cfg)
{
  Outputs out(DataDir(cfg), "simulate-wave");
  const auto start = std::chrono::steady_clock::now();
  WaveOperators ops;
  const FomSolution sol = SimulateWave(cfg.problem, &ops);
  const double fom_seconds = Seconds(start);
  if (sol.sensor_row < 0)
  {
    throw ConfigError("sensor location lies on the Dirichlet boundary");
  }
  SnapshotSet set;
  set.states = sol.displacements;
  set.velocities = sol.velocities;
  set.times = sol.times;
  out.Snapshots("snapshots.morw", set);
  out.Text("sensor_fom.csv", SignalCsv(sol.times, sol.sensor_signal, "u_sensor"));
  const Vector energy = DiscreteEnergy(ops.mass, ops.stiffness, sol.displacements, sol.velocities);
  const double drift = (energy.array() - energy(0)).abs().maxCoeff() / std::max(energy(0), 1.0e-300);
  const Point &p = ops.mesh.node_coords[static_cast<std::size_t>(sol.sensor_node)];
  Json &info = out.Info();
  info["source"] = "wave";
  info["unknowns"] = sol.displacements.rows();
  info["snapshots"] = sol.displacements.cols();
  info["nodes_per_side"] = cfg.problem.nodes_per_side;
  info["tau"] = cfg.problem.tau;
  info["sensor_node"] = sol.sensor_node;
  info["sensor_row"] = sol.sensor_row;
  info["sensor_coordinates"] = {p.x1, p.x2};
  info["fom_seconds"] = fom_seconds;
  info["assembly_seconds"] = sol.timings.assembly_seconds;
  info["factorization_seconds"] = sol.timings.factorization_seconds;
  info["stepping_seconds"] = sol.timings.stepping_seconds;
  info["energy_relative_drift"] = drift;
  out.WriteManifest(cfg);
}

inline void CmdIngest(const RunConfig &cfg)
{
  if (cfg.ingest.file.empty())
  {
    throw ConfigError("ingest needs 'problem.snapshot_file'");
  }
  if (!fs::exists(cfg.ingest.file))
  {
    throw ConfigError("snapshot file '" + cfg.ingest.file + "' does not exist");
  }
  Outputs out(DataDir(cfg), "ingest");
  SnapshotSet set;
  try
  {
    set = ReadSnapshots(cfg.ingest.file, cfg.ingest.format, cfg.ingest.text);
  }
  catch (const FormatError &e)
  {
    throw ConfigError(e.what());
  }
  if (cfg.ingest.sensor_row < 0 || cfg.ingest.sensor_row >= set.states.rows())
  {
    throw ConfigError("'problem.sensor_row' " + std::to_string(cfg.ingest.sensor_row) +
                      " outside [0, " + std::to_string(set.states.rows() - 1) + "]");
  }
  SnapshotSet stored = set;
  MatrixBundle acc;
  if (set.accelerations)
  {
    acc.emplace_back("UDD", *set.accelerations);
    acc.emplace_back("T", set.times.transpose());
    stored.accelerations.reset();
  }
  out.Snapshots("snapshots.morw", stored);
  if (!acc.empty())
  {
    out.Matrices("accelerations.morw", acc);
  }
  out.Text("sensor_fom.csv",
           SignalCsv(set.times, set.states.row(cfg.ingest.sensor_row).transpose(), "u_sensor"));
  Json &info = out.Info();
  info["source"] = "file";
  info["file"] = cfg.ingest.file;
  info["unknowns"] = set.states.rows();
  info["snapshots"] = set.states.cols();
  info["tau"] = set.TimeStep();
  info["sensor_row"] = cfg.ingest.sensor_row;
  info["fom_seconds"] = 0.0;
  info["has_inputs"] = set.inputs.has_value();
  info["has_forces"] = set.forces.has_value();
  out.WriteManifest(cfg);
}

inline void CmdDifferentiate(const RunConfig &cfg)
{
  const FomData fom = LoadFom(cfg, false);
  const auto start = std::chrono::steady_clock::now();
  const DenseMatrix udd = Differentiate8th(fom.set.states, fom.Tau());
  const double seconds = Seconds(start);
  // The data manifest is rewritten to include the new file.
  const fs::path dir = DataDir(cfg);
  Json manifest = LoadConfigFile(dir / "manifest.json");
  WriteMatrices(dir / "accelerations.morw", {{"UDD", udd}, {"T", fom.set.times.transpose()}});
  manifest["info"]["differentiate_seconds"] = seconds;
  Json files = Json::array();
  for (const auto &f : manifest["files"])
  {
    if (f["path"] != "accelerations.morw")
    {
      files.push_back(f);
    }
  }
  files.push_back({{"path", "accelerations.morw"},
                   {"bytes", static_cast<std::uint64_t>(fs::file_size(dir / "accelerations.morw"))},
                   {"sha256", Sha256File(dir / "accelerations.morw")}});
  manifest["files"] = files;
  morwave::detail::WriteText((dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

inline void CmdPod(const RunConfig &cfg)
{
  FomData fom = LoadFom(cfg, true);
  Outputs out(fs::path(cfg.output_dir) / "pod", "pod");
  const auto svd_start = std::chrono::steady_clock::now();
  const PodSpectrum spectrum(fom.set.states);
  const double svd_seconds = Seconds(svd_start);
  const Vector &sigma = spectrum.SingularValues();
  {
    std::ostringstream os;
    os << "r,sigma,c_r,c_r_squared\n";
    for (Eigen::Index r = 1; r <= sigma.size(); ++r)
    {
      os << r << ',' << morwave::detail::FormatNumber(sigma(r - 1)) << ','
         << morwave::detail::FormatNumber(CumulativeEnergy(sigma, r)) << ','
         << morwave::detail::FormatNumber(CumulativeEnergySquared(sigma, r)) << '\n';
    }
    out.Text("energy.csv", os.str());
  }
  out.Info()["rank_95"] = RankForEnergy(sigma, 0.95);
  out.Info()["rank_99"] = RankForEnergy(sigma, 0.99);

  MethodReport report;
  if (!fom.operators)
  {
    out.Info()["note"] = "no system operators for ingested data; basis and spectrum only";
    FinishMethod(out, report, cfg);
    return;
  }
  const Vector u0 = fom.set.states.col(0);
  const Vector v0 = fom.set.velocities ? Vector(fom.set.velocities->col(0))
                                       : Vector(DifferentiateTime(fom.set.states, fom.Tau(), 1, 8).col(0));
  const Eigen::Index count = fom.set.states.cols();
  for (int r : CheckedRanks(cfg, sigma.size(), "pod"))
  {
    const auto build = std::chrono::steady_clock::now();
    const ReducedBasis basis = spectrum.Basis(r);
    const PodRom rom = ProjectRom(fom.operators->mass, fom.operators->stiffness, basis.phi);
    const double build_seconds = svd_seconds + Seconds(build);

    const auto online = std::chrono::steady_clock::now();
    SecondOrderSystem sys{rom.mass, rom.stiffness, {}, {}, {}, basis.phi.transpose() * u0,
                          basis.phi.transpose() * v0};
    const ReducedTrajectory traj = cfg.integrator == "newmark" ? Newmark(sys, fom.Tau(), count)
                                                               : Trapezoidal(sys, fom.Tau(), count);
    const DenseMatrix field = Reconstruct(basis, traj.displacement);
    const double online_seconds = Seconds(online);
    RecordRun(out, report, cfg, fom, "POD", "pod", r, field.row(fom.sensor_row).transpose(), &field,
              build_seconds, online_seconds);
  }
  FinishMethod(out, report, cfg);
}

inline void CmdDmd(const RunConfig &cfg)
{
  FomData fom = LoadFom(cfg, true);
  Outputs out(fs::path(cfg.output_dir) / "dmd", "dmd");
  MethodReport report;
  const Eigen::Index count = fom.set.states.cols();
  const bool want_projected = cfg.dmd_amplitudes != "optimal";
  const bool want_optimal = cfg.dmd_amplitudes != "projected";
  Json warnings = Json::array();
  for (int r : CheckedRanks(cfg, std::min(fom.set.states.rows(), count - 1), "dmd"))
  {
    const auto fit_start = std::chrono::steady_clock::now();
    DmdModel model = FitDmd(fom.set.states, r, fom.Tau());
    const double fit_seconds = Seconds(fit_start);
    for (const auto &w : model.warnings)
    {
      warnings.push_back("rank " + std::to_string(r) + ": " + w);
    }
    ComplexVector optimal_b;
    const auto run = [&](const std::string &label, const std::string &slug, bool optimal) {
      const auto amp = std::chrono::steady_clock::now();
      model.amplitudes = optimal ? AmplitudesOptimal(model)
                                 : AmplitudesProjected(model, cfg.projected_variant);
      const double build_seconds = fit_seconds + Seconds(amp);
      const auto online = std::chrono::steady_clock::now();
      double imag = 0.0;
      const DenseMatrix field = ReconstructDmd(model, count, &imag);
      const double online_seconds = Seconds(online);
      RecordRun(out, report, cfg, fom, label, slug, r, field.row(fom.sensor_row).transpose(),
                &field, build_seconds, online_seconds);
      if (cfg.forecast_steps > 0)
      {
        const Vector ahead = ReconstructDmdRow(model, fom.sensor_row, count + cfg.forecast_steps);
        const Vector t = Vector::LinSpaced(count + cfg.forecast_steps, fom.set.times(0),
                                           fom.set.times(0) + (count + cfg.forecast_steps - 1) * fom.Tau());
        out.Text("forecast_" + slug + "_r" + std::to_string(r) + ".csv",
                 SignalCsv(t, ahead, "u_sensor"));
      }
      if (optimal)
      {
        optimal_b = model.amplitudes;
      }
    };
    if (want_projected)
    {
      run("DMD Projected", "dmd_projected", false);
    }
    if (want_optimal)
    {
      run("DMD Optimal", "dmd_optimal", true);
    }
    std::ostringstream os;
    os << "index,lambda_re,lambda_im,omega_re,omega_im,abs_b\n";
    for (Eigen::Index j = 0; j < model.ModeCount(); ++j)
    {
      const double ab = std::abs(model.amplitudes(j));
      os << j << ',' << morwave::detail::FormatNumber(model.eigenvalues(j).real()) << ','
         << morwave::detail::FormatNumber(model.eigenvalues(j).imag()) << ','
         << morwave::detail::FormatNumber(model.rates(j).real()) << ','
         << morwave::detail::FormatNumber(model.rates(j).imag()) << ','
         << morwave::detail::FormatNumber(ab) << '\n';
    }
    out.Text("eigenvalues_r" + std::to_string(r) + ".csv", os.str());
  }
  out.Info()["warnings"] = warnings;
  FinishMethod(out, report, cfg);
}

inline void CmdMrDmd(const RunConfig &cfg)
{
  FomData fom = LoadFom(cfg, true);
  Outputs out(fs::path(cfg.output_dir) / "mrdmd", "mrdmd");
  MethodReport report;
  const auto build = std::chrono::steady_clock::now();
  const MrDmdTree tree = FitMrDmd(fom.set.states, fom.Tau(), cfg.mrdmd_levels,
                                  cfg.mrdmd_branching, cfg.mrdmd_rho, cfg.mrdmd_rank_cap);
  const double build_seconds = Seconds(build);
  const auto online = std::chrono::steady_clock::now();
  const DenseMatrix field = ReconstructMrDmd(tree);
  const double online_seconds = Seconds(online);
  const int total = static_cast<int>(tree.TotalModes());
  RunConfig local = cfg;
  local.spatial_rank = total;
  RecordRun(out, report, local, fom, "mrDMD", "mrdmd", total,
            field.row(fom.sensor_row).transpose(), &field, build_seconds, online_seconds);
  std::ostringstream os;
  os << "level,window,first,last,omega_re,omega_im,abs_b\n";
  for (const auto &node : tree.nodes)
  {
    for (Eigen::Index k = 0; k < node.SlowCount(); ++k)
    {
      os << node.level << ',' << node.window << ',' << node.first << ',' << node.last << ','
         << morwave::detail::FormatNumber(node.rates(k).real()) << ','
         << morwave::detail::FormatNumber(node.rates(k).imag()) << ','
         << morwave::detail::FormatNumber(std::abs(node.amplitudes(k))) << '\n';
    }
  }
  out.Text("nodes.csv", os.str());
  out.Info()["total_modes"] = total;
  out.Info()["warnings"] = tree.warnings;
  FinishMethod(out, report, cfg);
}

inline void CmdOpInf(const RunConfig &cfg)
{
  FomData fom = LoadFom(cfg, true);
  if (!fom.set.accelerations)
  {
    throw ConfigError("opinf needs accelerations; run differentiate first");
  }
  const bool forces_informed = cfg.opinf_variant == OpInfVariant::forces_informed;
  Outputs out(fs::path(cfg.output_dir) / (forces_informed ? "opinf-forces-informed" : "opinf-unconstrained"),
              "opinf");
  MethodReport report;
  const Json data_manifest = LoadConfigFile(DataDir(cfg) / "manifest.json");
  const double diff_seconds = data_manifest["info"].value("differentiate_seconds", 0.0);
  const std::string label = forces_informed ? "OpInf FI" : "OpInf";
  const std::string slug = forces_informed ? "opinf_forces_informed" : "opinf_unconstrained";

  SnapshotSet set = fom.set;
  if (forces_informed)
  {
    set.inputs.reset();  // Z has no place in the forces-informed regression
  }
  else
  {
    set.forces.reset();
  }
  const auto scale_start = std::chrono::steady_clock::now();
  const auto [scaled, scaling] = Scale(set);
  const PodSpectrum spectrum(scaled.states);
  const double shared_seconds = diff_seconds + Seconds(scale_start);

  const Vector u0 = fom.set.states.col(0);
  const Vector v0 = fom.set.velocities ? Vector(fom.set.velocities->col(0))
                                       : Vector(DifferentiateTime(fom.set.states, fom.Tau(), 1, 8).col(0));
  const Eigen::Index count = fom.set.states.cols();
  Json runs = Json::array();
  for (int r : CheckedRanks(cfg, spectrum.SingularValues().size(), "opinf"))
  {
    const auto build = std::chrono::steady_clock::now();
    ReducedBasis basis = spectrum.Basis(r);
    basis.source_scaling = scaling;
    const ReducedData data = ReduceData(scaled, basis);
    OpInfModel model;
    model.variant = cfg.opinf_variant;
    model.scaling = scaling;
    model.basis = basis;
    model.lambda = cfg.opinf_lambda;
    Json run{{"rank", r}};
    if (forces_informed)
    {
      ForcesInformedResult res =
          InferForcesInformed(data.states, data.accelerations, data.inputs, cfg.opinf_lambda,
                              cfg.optimizer);
      model.mass = res.mass;
      model.stiffness = res.stiffness;
      model.l = res.l;
      model.w = res.w;
      run["initial_loss"] = res.initial_loss;
      run["final_loss"] = res.final_loss;
      run["iterations"] = res.iterations;
      run["converged"] = res.converged;
      std::ostringstream os;
      os << "iteration,loss\n";
      for (std::size_t k = 0; k < res.loss_history.size(); ++k)
      {
        os << k * static_cast<std::size_t>(cfg.optimizer.window) << ','
           << morwave::detail::FormatNumber(res.loss_history[k]) << '\n';
      }
      out.Text("loss_r" + std::to_string(r) + ".csv", os.str());
      model.optimizer = std::move(res);
    }
    else
    {
      const auto op = InferUnconstrained(data.states, data.accelerations, data.inputs,
                                         cfg.opinf_lambda);
      model.stiffness_m = op.stiffness;
      model.input_map_m = op.input_map;
    }
    const RomDescriptor rom = AssembleRom(model);
    const double build_seconds = shared_seconds + Seconds(build);
    MatrixBundle ops{{"mass", rom.mass}, {"stiffness", rom.stiffness}};
    if (rom.input_map.size() > 0)
    {
      ops.emplace_back("input_map", rom.input_map);
    }
    out.Matrices("operators_r" + std::to_string(r) + ".morw", ops);

    const auto online = std::chrono::steady_clock::now();
    SecondOrderSystem sys{rom.mass, rom.stiffness, {}, {}, {}, basis.phi.transpose() * u0,
                          basis.phi.transpose() * v0};
    if (rom.input_map.size() > 0)
    {
      sys.input_map = rom.input_map;
      sys.input_samples = forces_informed ? DenseMatrix(basis.phi.transpose() * *fom.set.forces)
                                          : DenseMatrix(*fom.set.inputs);
      sys.input_samples /= rom.input_scale;
    }
    const ReducedTrajectory traj = cfg.integrator == "newmark" ? Newmark(sys, fom.Tau(), count)
                                                               : Trapezoidal(sys, fom.Tau(), count);
    const DenseMatrix field = rom.lift_scale * (basis.phi * traj.displacement);
    const double online_seconds = Seconds(online);
    RecordRun(out, report, cfg, fom, label, slug, r, field.row(fom.sensor_row).transpose(), &field,
              build_seconds, online_seconds);
    runs.push_back(run);
  }
  out.Info()["runs"] = runs;
  out.Info()["scaling"] = {{"states", scaling.states},
                           {"accelerations", scaling.accelerations},
                           {"inputs", scaling.inputs}};
  FinishMethod(out, report, cfg);
}

namespace detail
{

struct CsvTable
{
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable ReadCsv(const fs::path &path)
{
  std::ifstream in(path);
  CsvTable t;
  std::string line;
  const auto split = [](const std::string &s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ','))
    {
      out.push_back(cell);
    }
    return out;
  };
  if (std::getline(in, line))
  {
    t.header = split(line);
  }
  while (std::getline(in, line))
  {
    if (!line.empty())
    {
      t.rows.push_back(split(line));
    }
  }
  return t;
}

}  // namespace detail

inline void CmdEvaluate(const RunConfig &cfg)
{
  const fs::path root(cfg.output_dir);
  if (!fs::exists(root / "data" / "sensor_fom.csv"))
  {
    throw ConfigError("no FOM data in '" + root.string() + "'; run simulate-wave or ingest first");
  }
  Outputs out(root / "report", "evaluate");
  const Vector fom_sensor = ReadSignalCsv(root / "data" / "sensor_fom.csv");
  const Json data_manifest = LoadConfigFile(root / "data" / "manifest.json");
  const double tau = data_manifest["info"]["tau"].get<double>();
  const Eigen::Index count = fom_sensor.size();
  const Vector times = Vector::LinSpaced(count, 0.0, (count - 1) * tau);

  std::vector<fs::path> runs{root};
  for (const auto &extra : cfg.compare_runs)
  {
    runs.emplace_back(extra);
  }
  std::ostringstream errors;
  errors << "rank,method,eps_s_percent\n";
  std::ostringstream timing;
  timing << "method,tau,rank,fom_s,build_s,offline_s,online_s\n";
  Json report;
  report["fom_self_eps_s_percent"] = SensorError(fom_sensor, fom_sensor, tau);
  Json flags = Json::object();
  std::vector<PlotSeries> rank_series;
  std::vector<PlotSeries> trace_series{{"FOM", times, fom_sensor}};
  std::vector<PlotSeries> eps_u_series;
  for (const auto &run : runs)
  {
    for (const char *method : {"pod", "dmd", "mrdmd", "opinf-unconstrained", "opinf-forces-informed"})
    {
      const fs::path dir = run / method;
      if (!fs::exists(dir / "errors.csv"))
      {
        continue;
      }
      const auto table = detail::ReadCsv(dir / "errors.csv");
      std::map<std::string, std::vector<std::pair<int, double>>> by_method;
      for (const auto &row : table.rows)
      {
        if (run == root)
        {
          errors << row[0] << ',' << row[1] << ',' << row[2] << '\n';
        }
        by_method[row[1]].emplace_back(std::stoi(row[0]), std::stod(row[2]));
      }
      if (fs::exists(dir / "timings.csv"))
      {
        for (const auto &row : detail::ReadCsv(dir / "timings.csv").rows)
        {
          for (std::size_t c = 0; c < row.size(); ++c)
          {
            timing << row[c] << (c + 1 < row.size() ? "," : "\n");
          }
        }
      }
      if (run != root)
      {
        continue;
      }
      for (const auto &[name, points] : by_method)
      {
        std::vector<double> eps;
        Vector x(static_cast<Eigen::Index>(points.size())), y(x.size());
        for (std::size_t i = 0; i < points.size(); ++i)
        {
          x(static_cast<Eigen::Index>(i)) = points[i].first;
          y(static_cast<Eigen::Index>(i)) = points[i].second;
          eps.push_back(points[i].second);
        }
        const auto bad = NonMonotoneSteps(eps);
        flags[name] = {{"non_monotone", !bad.empty()}, {"non_monotone_steps", bad.size()}};
        rank_series.push_back({name, x, y});
      }
      for (const auto &entry : fs::directory_iterator(dir))
      {
        const std::string name = entry.path().filename().string();
        const bool trace = name.rfind("sensor_", 0) == 0 &&
                           name.find("_r" + std::to_string(cfg.spatial_rank) + ".csv") != std::string::npos;
        const bool spatial = name.rfind("eps_u_", 0) == 0;
        if (trace)
        {
          trace_series.push_back({name.substr(7, name.size() - 11), times, ReadSignalCsv(entry.path())});
        }
        if (spatial)
        {
          eps_u_series.push_back({name.substr(6, name.size() - 10), times, ReadSignalCsv(entry.path())});
        }
      }
    }
  }
  out.Text("error_vs_rank.csv", errors.str());
  out.Text("timing.csv", timing.str());
  report["monotonicity"] = flags;
  if (cfg.plots)
  {
    std::sort(trace_series.begin() + 1, trace_series.end(),
              [](const PlotSeries &a, const PlotSeries &b) { return a.label < b.label; });
    std::sort(eps_u_series.begin(), eps_u_series.end(),
              [](const PlotSeries &a, const PlotSeries &b) { return a.label < b.label; });
    out.Text("sensor_traces.svg", LinePlotSvg(trace_series, "Sensor displacement", "t - t0 [s]", "u"));
    out.Text("error_vs_rank.svg",
             LinePlotSvg(rank_series, "Relative sensor error", "rank", "eps_s [%]", true));
    if (!eps_u_series.empty())
    {
      out.Text("eps_u.svg", LinePlotSvg(eps_u_series, "Relative spatial error", "t - t0 [s]",
                                        "eps_u [%]", true));
    }
  }
  out.Text("report.json", report.dump(2) + "\n");
  out.WriteManifest(cfg);
}

inline const std::map<std::string, std::function<void(const RunConfig &)>> &Commands()
{
  static const std::map<std::string, std::function<void(const RunConfig &)>> table{
      {"simulate-wave", CmdSimulateWave}, {"differentiate", CmdDifferentiate},
      {"pod", CmdPod},                    {"dmd", CmdDmd},
      {"mrdmd", CmdMrDmd},                {"opinf", CmdOpInf},
      {"evaluate", CmdEvaluate},          {"ingest", CmdIngest}};
  return table;
}

}  // namespace morwave::pipeline
