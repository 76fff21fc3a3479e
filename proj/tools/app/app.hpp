#pragma once

// Command implementations behind the pcmu executable. Each command reads its
// inputs, writes CSV/JSON artifacts plus a manifest into an output directory,
// and reports failures through the pcmu error hierarchy.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcmu/attacker.hpp"
#include "pcmu/core.hpp"
#include "pcmu/ddql.hpp"
#include "pcmu/env.hpp"
#include "pcmu/ingest.hpp"
#include "pcmu/metrics.hpp"
#include "pcmu/qtable.hpp"

namespace pcmu::app {

namespace fs = std::filesystem;

enum class AgentKind { Cql, Ddql };

std::string to_string(AgentKind a);
AgentKind parse_agent(const std::string& s);

/// Where the day episodes come from. Synthetic data and splits are derived
/// from `data_seed`; CSV inputs are split with the same seed.
struct DataOptions {
  std::optional<fs::path> path;
  bool synthetic = false;
  std::size_t synthetic_days = 1000;
  std::uint64_t data_seed = 1;
  double sampling_rate_hz = 1.0;
  SyntheticConfig synthetic_config;
};

void to_json(nlohmann::json& j, const DataOptions& d);
void from_json(const nlohmann::json& j, DataOptions& d);

struct DataBundle {
  Dataset dataset;
  /// Git-style SHA-1 of the serialized dataset.
  std::string hash;
};

/// Throws ConfigError when neither a path nor synthetic data is selected.
DataBundle load_data(const DataOptions& options);

struct ExperimentConfig {
  BatteryConfig battery;
  TariffSchedule tariff = TariffSchedule::ontario_winter();
  RewardConfig reward;
  SimulationConfig sim;
  CqlConfig cql;
  DdqlConfig ddql;
  MiEstimatorConfig mi;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Defaults, overridden by the JSON file when given.
ExperimentConfig load_experiment_config(const std::optional<fs::path>& file);

struct TrainOptions {
  AgentKind agent = AgentKind::Ddql;
  double lambda = 0.0;
  DataOptions data;
  std::uint64_t seed = 0;
  fs::path out;
  /// Overrides the agent's episode count.
  std::optional<std::size_t> episodes;
  std::optional<fs::path> config_file;
};

struct TrainResult {
  fs::path checkpoint_dir;
  std::vector<CurvePoint> curve;
};

/// Writes policy.qtb or policy.net, agent.json, curve_<agent>.csv and
/// manifest.json into `options.out`.
TrainResult cmd_train(const TrainOptions& options);

/// A trained agent read back from its checkpoint directory.
struct Checkpoint {
  fs::path dir;
  AgentKind agent = AgentKind::Ddql;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  ExperimentConfig config;
  DataOptions data;
  std::string data_hash;
  Environment env;
  Policy policy;
};

/// Throws DataError when the directory or its files are missing or corrupt.
Checkpoint load_checkpoint(const fs::path& dir);

struct SweepOptions {
  AgentKind agent = AgentKind::Ddql;
  std::vector<double> lambdas{0.0, 0.25, 0.5, 0.75, 1.0};
  DataOptions data;
  std::uint64_t seed = 0;
  fs::path out;
  std::optional<std::size_t> episodes;
  std::optional<fs::path> config_file;
  std::size_t jobs = 1;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::size_t failures = 0;
};

/// Trains one agent per lambda into `out/lambda_<value>/`, evaluates each on
/// the test split, and writes tradeoff.csv, sweep.json and manifest.json.
/// Failed jobs leave empty rows; throws only when every job failed.
SweepResult cmd_sweep(const SweepOptions& options);

struct AttackOptions {
  AttackKind kind = AttackKind::OccupancyClassifier;
  std::vector<fs::path> checkpoints;
  /// Required without checkpoints; otherwise taken from the first checkpoint.
  std::optional<DataOptions> data;
  fs::path out;
  std::uint64_t seed = 0;
  std::optional<std::size_t> epochs;
  /// Permutes label days within each split (no-signal control).
  bool shuffle_labels = false;
};

/// Scores the no-battery baseline and every checkpoint; writes
/// attack_<kind>.csv, attack_<kind>.json, attacker networks and manifest.json.
std::vector<AttackRow> cmd_attack(const AttackOptions& options);

struct MiOptions {
  std::optional<fs::path> checkpoint;
  /// Evaluate the idle battery (z = y) instead of a checkpoint.
  bool idle = false;
  std::optional<DataOptions> data;
  std::size_t k = 4;
  std::uint64_t seed = 0;
  std::optional<fs::path> out;
};

struct MiResult {
  double mi_nats = 0.0;
  std::size_t n_pairs = 0;
  std::optional<double> lambda;
};

/// KSG estimate over the pooled test-split (y, z) pairs.
MiResult cmd_mi(const MiOptions& options);

struct EvaluateOptions {
  fs::path checkpoint;
  std::optional<fs::path> out;
  Split split = Split::Test;
};

MetricsReport cmd_evaluate(const EvaluateOptions& options);

struct IngestOptionsCli {
  fs::path input;
  fs::path out;
  double sampling_rate_hz = 1.0;
  std::uint64_t split_seed = 1;
  std::array<double, 3> ratios{0.7, 0.1, 0.2};
};

/// Ingests and splits a CSV file or directory into a binary dataset cache.
Dataset cmd_ingest(const IngestOptionsCli& options);

/// Test-split rollout of `policy`, one grid-load vector per day.
std::vector<std::vector<double>> rollout_grid(const Policy& policy, const Environment& env,
                                              const std::vector<LoadProfile>& days, double initial_loc);

std::string git_blob_sha1(std::string_view bytes);
std::string file_sha1(const fs::path& path);

/// $PCMU_OUTPUT_ROOT, or "runs" when unset.
fs::path default_output_root();

Split parse_split(const std::string& s);

}  // namespace pcmu::app
