#pragma once

// Episodic decision task consumed by the tabular and deep agents. The battery
// environment and small test MDPs both implement it.

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace pcmu {

using Rng = std::mt19937_64;

struct TaskStep {
  double reward = 0.0;
  /// The episode is over after this step.
  bool done = false;
  /// True terminal state: no bootstrapping from the successor. A time-limit
  /// truncation sets `done` without `terminal`.
  bool terminal = false;
};

class EpisodicTask {
 public:
  virtual ~EpisodicTask() = default;

  virtual std::size_t action_count() const = 0;
  /// Maximum number of steps in one episode.
  virtual std::size_t episode_length() const = 0;
  /// Starts a new episode.
  virtual void reset(Rng& rng) = 0;
  /// Action indices allowed in the current state, ascending, never empty.
  virtual std::vector<std::size_t> feasible_actions() const = 0;
  virtual TaskStep step(std::size_t action) = 0;

  /// Discrete state index in [0, state_count()); tabular agents only.
  virtual std::size_t state_count() const = 0;
  virtual std::size_t state_index() const = 0;

  /// Real-valued state encoding; function-approximation agents only.
  virtual std::size_t feature_count() const = 0;
  virtual std::vector<double> features() const = 0;
};

/// Linear interpolation from `start` to `end` over `span` steps, then flat.
inline double linear_schedule(double start, double end, std::uint64_t span, std::uint64_t step) {
  if (span == 0 || step >= span) return end;
  const double frac = static_cast<double>(step) / static_cast<double>(span);
  return start + (end - start) * frac;
}

/// One row of a learning curve.
struct CurvePoint {
  std::size_t episode = 0;
  double total_reward = 0.0;
  double epsilon = 0.0;
  /// Mean training loss over the episode; NaN when no gradient step ran.
  double loss_mean = 0.0;
};

struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  /// Fraction of total training steps over which epsilon decays.
  double decay_fraction = 0.5;

  double at(std::uint64_t step, std::uint64_t total_steps) const {
    const auto span = static_cast<std::uint64_t>(decay_fraction * static_cast<double>(total_steps));
    return linear_schedule(start, end, span, step);
  }

  bool operator==(const EpsilonSchedule&) const = default;
};

}  // namespace pcmu
