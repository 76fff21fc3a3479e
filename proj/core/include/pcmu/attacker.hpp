#pragma once

// Non-causal adversaries that see one full day of grid load: a demand
// regressor and a per-step occupancy classifier.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "pcmu/neural.hpp"

namespace pcmu {

enum class AttackKind : std::uint8_t { DemandRegressor = 0, OccupancyClassifier = 1 };

std::string to_string(AttackKind k);
/// Accepts "demand", "demand_regressor", "occupancy", "occupancy_classifier".
AttackKind parse_attack_kind(const std::string& s);

struct AttackerConfig {
  AttackKind kind = AttackKind::OccupancyClassifier;
  std::vector<std::size_t> hidden{44, 44};
  std::size_t width = 96;
  double learning_rate = 0.001;
  std::size_t epochs = 200;
  std::size_t patience = 20;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;

  /// Defaults for the kind: demand {32,32,32}, occupancy {44,44}.
  static AttackerConfig for_kind(AttackKind kind);
  void validate() const;

  bool operator==(const AttackerConfig&) const = default;
};

/// Days as columns: inputs are grid-load vectors, labels are demand (kW) or
/// occupancy (0/1) vectors of the same width.
struct AttackData {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd labels;

  std::size_t days() const { return static_cast<std::size_t>(inputs.cols()); }
};

/// Throws DataError on ragged rows, mismatched day counts, or non-binary
/// occupancy labels.
AttackData make_attack_data(const std::vector<std::vector<double>>& grid_days,
                            const std::vector<std::vector<double>>& label_days, AttackKind kind);

struct TrainedAttacker {
  AttackerConfig config;
  /// Input standardization is folded into the first layer, so the network
  /// maps raw grid load straight to predictions.
  Mlp net;
  std::vector<double> train_loss;       // per epoch
  std::vector<double> validation_loss;  // per epoch, empty without validation data
  std::size_t best_epoch = 0;

  Eigen::MatrixXd predict(const Eigen::MatrixXd& grid_days) const;
};

/// Minibatch RMSProp on MSE (regressor) or binary cross-entropy (classifier).
/// With validation data, keeps the parameters of the best validation epoch
/// and stops after `patience` epochs without improvement. Needs >= 10 days.
TrainedAttacker train_attacker(const AttackData& train, const AttackData* validation, const AttackerConfig& config);

/// Mean of the per-class recalls with predictions thresholded at 0.5.
/// Throws UndefinedMetricError when the labels hold a single class.
double balanced_accuracy(std::span<const double> predictions, std::span<const double> labels);

struct DemandScore {
  double rmse = 0.0;
  /// MSE divided by the label variance.
  double nmse = 0.0;
};
DemandScore demand_score(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& labels);

struct AttackScore {
  AttackKind kind = AttackKind::OccupancyClassifier;
  /// Balanced accuracy for occupancy, normalized MSE for demand.
  double score = 0.0;
  double rmse = 0.0;  // demand only
  std::size_t n_days = 0;
};
AttackScore score_attacker(const TrainedAttacker& attacker, const AttackData& test);

/// One attacked condition; `lambda` is empty for the no-battery baseline.
struct AttackCondition {
  std::optional<double> lambda;
  AttackData train;
  std::optional<AttackData> validation;
  AttackData test;
};

struct AttackRow {
  std::optional<double> lambda;
  AttackScore score;
  TrainedAttacker attacker;
};

/// Trains one attacker per condition on its own training days and scores it
/// on that condition's test days. Conditions with no test days are skipped.
std::vector<AttackRow> attack_report(const std::vector<AttackCondition>& conditions, const AttackerConfig& config);

/// `lambda,score,n_days`; the baseline row has lambda `none`.
void write_attack_csv(std::ostream& os, const std::vector<AttackRow>& rows);

void to_json(nlohmann::json& j, const AttackerConfig& c);
void from_json(const nlohmann::json& j, AttackerConfig& c);

}  // namespace pcmu
