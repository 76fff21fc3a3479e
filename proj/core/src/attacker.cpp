#include "pcmu/attacker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pcmu/errors.hpp"

namespace pcmu {

namespace {

struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
};

Standardizer fit_standardizer(const Eigen::MatrixXd& x) {
  Standardizer s;
  const double n = static_cast<double>(x.cols());
  s.mean = x.rowwise().mean();
  const Eigen::MatrixXd centered = x.colwise() - s.mean;
  s.scale = (centered.array().square().rowwise().sum() / n).sqrt().matrix();
  for (Eigen::Index i = 0; i < s.scale.size(); ++i) {
    if (!(s.scale(i) > 1e-12)) s.scale(i) = 1.0;
  }
  return s;
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& x, const Standardizer& s) {
  return (x.colwise() - s.mean).array().colwise() / s.scale.array();
}

// W (x - m) / s + b  ==  (W diag(1/s)) x + (b - W (m / s))
void fold_standardizer(Mlp& net, const Standardizer& s) {
  auto& first = net.layers().front();
  const Eigen::VectorXd inv = s.scale.cwiseInverse();
  first.bias -= first.weight * s.mean.cwiseProduct(inv);
  first.weight = first.weight * inv.asDiagonal();
}

LossAndGradient attack_loss(AttackKind kind, const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  return kind == AttackKind::DemandRegressor ? mse_loss(pred, target) : bce_loss(pred, target);
}

double evaluate_loss(const Mlp& net, AttackKind kind, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  return attack_loss(kind, net.predict_batch(x), y).loss;
}

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& m, std::span<const std::size_t> cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = m.col(static_cast<Eigen::Index>(cols[i]));
  return out;
}

void check_data(const AttackData& d, const AttackerConfig& c, const char* what) {
  if (d.inputs.rows() != static_cast<Eigen::Index>(c.width) || d.labels.rows() != static_cast<Eigen::Index>(c.width) ||
      d.inputs.cols() != d.labels.cols()) {
    throw ShapeError(fmt::format("{} data must be {} x days for inputs and labels", what, c.width));
  }
}

}  // namespace

std::string to_string(AttackKind k) {
  return k == AttackKind::DemandRegressor ? "demand" : "occupancy";
}

AttackKind parse_attack_kind(const std::string& s) {
  if (s == "demand" || s == "demand_regressor") return AttackKind::DemandRegressor;
  if (s == "occupancy" || s == "occupancy_classifier") return AttackKind::OccupancyClassifier;
  throw ConfigError(fmt::format("attack kind must be demand or occupancy (got '{}')", s));
}

AttackerConfig AttackerConfig::for_kind(AttackKind kind) {
  AttackerConfig c;
  c.kind = kind;
  c.hidden = kind == AttackKind::DemandRegressor ? std::vector<std::size_t>{32, 32, 32} : std::vector<std::size_t>{44, 44};
  return c;
}

void AttackerConfig::validate() const {
  if (width == 0) throw ConfigError("attacker.width must be > 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("attacker.learning_rate must be > 0");
  if (epochs == 0) throw ConfigError("attacker.epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("attacker.batch_size must be >= 1");
  for (auto h : hidden) {
    if (h == 0) throw ConfigError("attacker.hidden sizes must be > 0");
  }
}

AttackData make_attack_data(const std::vector<std::vector<double>>& grid_days,
                            const std::vector<std::vector<double>>& label_days, AttackKind kind) {
  if (grid_days.size() != label_days.size()) {
    throw DataError(fmt::format("attack data: {} input days but {} label days", grid_days.size(), label_days.size()));
  }
  AttackData d;
  if (grid_days.empty()) return d;
  const std::size_t width = grid_days.front().size();
  d.inputs.resize(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(grid_days.size()));
  d.labels.resize(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(grid_days.size()));
  for (std::size_t j = 0; j < grid_days.size(); ++j) {
    if (grid_days[j].size() != width || label_days[j].size() != width) {
      throw DataError(fmt::format("attack data: day {} is not {} samples wide", j, width));
    }
    for (std::size_t i = 0; i < width; ++i) {
      const double label = label_days[j][i];
      if (kind == AttackKind::OccupancyClassifier && label != 0.0 && label != 1.0) {
        throw DataError(fmt::format("occupancy labels must be 0 or 1 (day {}, step {}: {})", j, i, label));
      }
      d.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = grid_days[j][i];
      d.labels(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = label;
    }
  }
  return d;
}

Eigen::MatrixXd TrainedAttacker::predict(const Eigen::MatrixXd& grid_days) const {
  return net.predict_batch(grid_days);
}

TrainedAttacker train_attacker(const AttackData& train, const AttackData* validation, const AttackerConfig& config) {
  config.validate();
  check_data(train, config, "training");
  if (train.days() < 10) throw DataError(fmt::format("attacker needs >= 10 training days (got {})", train.days()));
  if (validation != nullptr && validation->days() == 0) validation = nullptr;
  if (validation != nullptr) check_data(*validation, config, "validation");
  if (config.kind == AttackKind::OccupancyClassifier &&
      ((train.labels.array() != 0.0) && (train.labels.array() != 1.0)).any()) {
    throw DataError("occupancy labels must be 0 or 1");
  }

  Rng rng(config.seed);
  std::vector<std::size_t> sizes{config.width};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(config.width);
  const Activation out = config.kind == AttackKind::DemandRegressor ? Activation::Identity : Activation::Sigmoid;

  TrainedAttacker result;
  result.config = config;
  result.net = Mlp(sizes, out, rng);
  RmsPropState opt(result.net, config.learning_rate);

  const Standardizer st = fit_standardizer(train.inputs);
  const Eigen::MatrixXd x = standardize(train.inputs, st);
  Eigen::MatrixXd xv;
  if (validation != nullptr) xv = standardize(validation->inputs, st);

  std::vector<std::size_t> order(train.days());
  std::iota(order.begin(), order.end(), 0);
  Mlp best = result.net;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Eigen::MatrixXd xb = gather_columns(x, idx);
      const Eigen::MatrixXd yb = gather_columns(train.labels, idx);
      const ForwardCache cache = forward(result.net, xb);
      const LossAndGradient lg = attack_loss(config.kind, cache.output, yb);
      rmsprop_step(result.net, backward(result.net, cache, lg.gradient), opt);
      loss_sum += lg.loss * static_cast<double>(idx.size());
    }
    result.train_loss.push_back(loss_sum / static_cast<double>(order.size()));
    if (!std::isfinite(result.train_loss.back())) {
      throw NumericError(fmt::format("attacker training loss diverged at epoch {}", epoch));
    }
    if (validation == nullptr) continue;

    const double val = evaluate_loss(result.net, config.kind, xv, validation->labels);
    result.validation_loss.push_back(val);
    if (val < best_val) {
      best_val = val;
      best = result.net;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience && config.patience > 0) {
      break;
    }
  }
  if (validation != nullptr) {
    result.net = std::move(best);
  } else {
    result.best_epoch = result.train_loss.size() - 1;
  }
  fold_standardizer(result.net, st);
  return result;
}

double balanced_accuracy(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size()) {
    throw ShapeError(fmt::format("balanced_accuracy: {} predictions vs {} labels", predictions.size(), labels.size()));
  }
  std::size_t pos = 0;
  std::size_t neg = 0;
  std::size_t tp = 0;
  std::size_t tn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted = predictions[i] >= 0.5;
    if (labels[i] >= 0.5) {
      ++pos;
      tp += predicted ? 1 : 0;
    } else {
      ++neg;
      tn += predicted ? 0 : 1;
    }
  }
  if (pos == 0 || neg == 0) throw UndefinedMetricError("balanced accuracy needs both classes in the labels");
  return 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) + static_cast<double>(tn) / static_cast<double>(neg));
}

DemandScore demand_score(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& labels) {
  if (predictions.rows() != labels.rows() || predictions.cols() != labels.cols() || labels.size() == 0) {
    throw ShapeError("demand_score: predictions and labels must share a non-empty shape");
  }
  const double n = static_cast<double>(labels.size());
  const double mse = (predictions - labels).squaredNorm() / n;
  const double mean = labels.mean();
  const double var = (labels.array() - mean).square().sum() / n;
  if (!(var > 0.0)) throw UndefinedMetricError("normalized MSE is undefined for constant labels");
  return {std::sqrt(mse), mse / var};
}

AttackScore score_attacker(const TrainedAttacker& attacker, const AttackData& test) {
  check_data(test, attacker.config, "test");
  AttackScore s;
  s.kind = attacker.config.kind;
  s.n_days = test.days();
  const Eigen::MatrixXd pred = attacker.predict(test.inputs);
  if (s.kind == AttackKind::DemandRegressor) {
    const auto d = demand_score(pred, test.labels);
    s.score = d.nmse;
    s.rmse = d.rmse;
  } else {
    s.score = balanced_accuracy(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())),
                                std::span<const double>(test.labels.data(), static_cast<std::size_t>(test.labels.size())));
    s.rmse = std::numeric_limits<double>::quiet_NaN();
  }
  return s;
}

std::vector<AttackRow> attack_report(const std::vector<AttackCondition>& conditions, const AttackerConfig& config) {
  std::vector<AttackRow> rows;
  for (const auto& c : conditions) {
    if (c.test.days() == 0) continue;
    TrainedAttacker a = train_attacker(c.train, c.validation ? &*c.validation : nullptr, config);
    const AttackScore s = score_attacker(a, c.test);
    rows.push_back({c.lambda, s, std::move(a)});
  }
  return rows;
}

void write_attack_csv(std::ostream& os, const std::vector<AttackRow>& rows) {
  os << "lambda,score,n_days\n";
  for (const auto& r : rows) {
    os << (r.lambda ? fmt::format("{}", *r.lambda) : std::string("none")) << ',' << fmt::format("{}", r.score.score)
       << ',' << r.score.n_days << '\n';
  }
}

void to_json(nlohmann::json& j, const AttackerConfig& c) {
  j = {{"kind", to_string(c.kind)},   {"hidden", c.hidden},         {"width", c.width},
       {"learning_rate", c.learning_rate}, {"epochs", c.epochs},   {"patience", c.patience},
       {"batch_size", c.batch_size},  {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, AttackerConfig& c) {
  const AttackKind kind = j.contains("kind") ? parse_attack_kind(j.at("kind").get<std::string>()) : c.kind;
  const AttackerConfig d = AttackerConfig::for_kind(kind);
  c.kind = kind;
  c.hidden = j.value("hidden", d.hidden);
  c.width = j.value("width", d.width);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.epochs = j.value("epochs", d.epochs);
  c.patience = j.value("patience", d.patience);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
}

}  // namespace pcmu
