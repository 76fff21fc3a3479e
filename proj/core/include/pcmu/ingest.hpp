#pragma once

// Day-episode datasets: CSV ingestion with 15-minute resampling, a synthetic
// occupancy-driven load generator, train/validation/test splitting, and a
// binary cache format.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pcmu/core.hpp"
#include "pcmu/task.hpp"

namespace pcmu {

enum class Split : std::uint8_t { Unassigned = 0, Train = 1, Validation = 2, Test = 3 };

struct DayRecord {
  std::string date;    // YYYY-MM-DD, or "synthetic-<n>"
  std::string source;  // originating file
  LoadProfile demand;
  /// Per-step occupancy (1 = occupied), when the source provides it.
  std::optional<std::vector<std::uint8_t>> occupancy;
};

struct Dataset {
  std::size_t steps_per_day = 96;
  std::vector<DayRecord> days;
  std::vector<Split> splits;  // parallel to days

  std::vector<std::size_t> indices(Split s) const;
  std::vector<LoadProfile> profiles(Split s) const;
  std::vector<LoadProfile> all_profiles() const;
  bool has_occupancy() const;
};

struct IngestOptions {
  double sampling_rate_hz = 1.0;
  std::size_t block_seconds = 900;
  /// Days missing more than this fraction of samples are dropped; smaller
  /// gaps are forward-filled.
  double max_missing_fraction = 0.05;
};

/// Parses `timestamp,power_w[,occupancy]` rows from one stream. Timestamps are
/// Unix seconds or `YYYY-MM-DD[ T]HH:MM:SS` (UTC) and must increase strictly.
/// Throws DataError with the line number on unparseable rows.
Dataset parse_csv(std::istream& in, const std::string& source, const IngestOptions& options);

/// Reads one CSV file, or every `*.csv` in a directory (pooled, sorted by
/// name). Throws DataError when no complete day remains.
Dataset ingest_csv(const std::filesystem::path& path, double sampling_rate_hz);
Dataset ingest_csv(const std::filesystem::path& path, const IngestOptions& options);

struct SyntheticConfig {
  std::uint64_t seed = 1;
  std::size_t steps_per_day = 96;
  double base_load_kw = 0.15;
  /// Constant extra load while occupied.
  double occupied_load_kw = 0.0;
  /// Probability per occupied step that an appliance event starts.
  double event_rate = 0.3;
  double event_min_kw = 0.3;
  double event_max_kw = 1.5;
  std::size_t event_max_steps = 4;
  /// Standard deviation of the Gaussian noise, truncated at +-3 sigma.
  double noise_kw = 0.03;
  double p_initial_occupied = 0.3;
  double p_stay_vacant = 0.96;
  double p_stay_occupied = 0.94;

  void validate() const;
  /// Upper bound on any generated sample.
  double max_load_kw() const;

  bool operator==(const SyntheticConfig&) const = default;
};

/// `n_days` days of occupancy (two-state Markov chain per step) and demand:
/// base load + occupancy-gated rectangular appliance pulses + truncated
/// Gaussian noise, clamped at 0. Deterministic per seed.
Dataset generate_synthetic(const SyntheticConfig& config, std::size_t n_days);

/// Seeded shuffle of day indices, then contiguous assignment with
/// floor(ratio * n) days for train and validation and the rest for test.
Dataset split(Dataset dataset, const std::array<double, 3>& ratios, std::uint64_t seed);

/// Binary cache, little-endian:
///   "PCMUDST1" | u32 version=1 | u64 n_days | u64 steps_per_day |
///   f64 demand[n_days][steps] | u8 split[n_days] | u8 has_occupancy |
///   [u8 occupancy[n_days][steps]] | per day: u64 len + date bytes
void write_dataset(std::ostream& os, const Dataset& dataset);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const SyntheticConfig& c);
void from_json(const nlohmann::json& j, SyntheticConfig& c);

}  // namespace pcmu
