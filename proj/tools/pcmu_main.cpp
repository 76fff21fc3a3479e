// pcmu: train, sweep, attack, mi, evaluate, ingest.
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "app/app.hpp"
#include "pcmu/errors.hpp"

namespace {

using namespace pcmu;
using namespace pcmu::app;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct DataFlags {
  std::string path;
  bool synthetic = false;
  std::size_t days = DataOptions{}.synthetic_days;
  std::uint64_t data_seed = DataOptions{}.data_seed;
  double rate = 1.0;

  bool given() const { return synthetic || !path.empty(); }
  DataOptions options() const {
    DataOptions d;
    if (!path.empty()) d.path = path;
    d.synthetic = synthetic;
    d.synthetic_days = days;
    d.data_seed = data_seed;
    d.sampling_rate_hz = rate;
    return d;
  }
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
  auto* data = cmd->add_option("--data", f.path, "CSV file, directory of CSVs, or .bin dataset cache");
  auto* synth = cmd->add_flag("--synthetic", f.synthetic, "Use the synthetic occupancy-driven load generator");
  data->excludes(synth);
  cmd->add_option("--synthetic-days", f.days, "Number of synthetic days")->check(CLI::PositiveNumber);
  cmd->add_option("--data-seed", f.data_seed, "Seed for synthetic generation and the 70:10:20 split");
  cmd->add_option("--rate", f.rate, "Input sampling rate in Hz")->check(CLI::PositiveNumber);
}

fs::path out_or_default(const std::string& out, const std::string& name) {
  return out.empty() ? default_output_root() / name : fs::path(out);
}

std::vector<double> parse_lambdas(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("--lambdas: '{}' is not a number", item));
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("pcmu");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"Privacy-cost management unit: battery-based smart-meter privacy with reinforcement learning"};
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Only log errors");
  app.fallthrough();

  // train
  auto* train = app.add_subcommand("train", "Train a CQL or DDQL agent");
  train->fallthrough();
  std::string train_agent = "ddql";
  TrainOptions topt;
  DataFlags tdata;
  std::string tout;
  std::string tconfig;
  std::size_t tepisodes = 0;
  train->add_option("--agent", train_agent, "cql or ddql")->check(CLI::IsMember({"cql", "ddql"}));
  train->add_option("--lambda", topt.lambda, "Privacy-cost weight in [0, 1]");
  train->add_option("--seed", topt.seed, "Agent seed");
  train->add_option("--out", tout, "Checkpoint directory (default $PCMU_OUTPUT_ROOT/train-<agent>-l<lambda>-s<seed>)");
  train->add_option("--config", tconfig, "Experiment configuration JSON");
  train->add_option("--episodes", tepisodes, "Override the number of training episodes");
  add_data_flags(train, tdata);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate one agent per lambda");
  sweep->fallthrough();
  std::string sweep_agent = "ddql";
  std::string lambdas = "0,0.25,0.5,0.75,1";
  SweepOptions sopt;
  DataFlags sdata;
  std::string sout;
  std::string sconfig;
  std::size_t sepisodes = 0;
  sopt.jobs = std::max(1u, std::thread::hardware_concurrency());
  sweep->add_option("--agent", sweep_agent, "cql or ddql")->check(CLI::IsMember({"cql", "ddql"}));
  sweep->add_option("--lambdas", lambdas, "Comma-separated lambda values");
  sweep->add_option("--seed", sopt.seed, "Agent seed");
  sweep->add_option("--out", sout, "Sweep directory");
  sweep->add_option("--config", sconfig, "Experiment configuration JSON");
  sweep->add_option("--episodes", sepisodes, "Override the number of training episodes");
  sweep->add_option("--jobs", sopt.jobs, "Parallel training jobs (default: available cores)")->check(CLI::PositiveNumber);
  add_data_flags(sweep, sdata);

  // attack
  auto* attack = app.add_subcommand("attack", "Train and score inference attackers");
  attack->fallthrough();
  std::string kind = "occupancy";
  AttackOptions aopt;
  DataFlags adata;
  std::string aout;
  std::vector<std::string> acheckpoints;
  std::size_t aepochs = 0;
  attack->add_option("--kind", kind, "demand or occupancy")->check(CLI::IsMember({"demand", "occupancy"}));
  attack->add_option("--checkpoint", acheckpoints, "Agent checkpoint directory (repeatable)");
  attack->add_option("--seed", aopt.seed, "Attacker seed");
  attack->add_option("--epochs", aepochs, "Override the maximum number of epochs");
  attack->add_flag("--shuffle-labels", aopt.shuffle_labels, "Permute label days (no-signal control)");
  attack->add_option("--out", aout, "Output directory");
  add_data_flags(attack, adata);

  // mi
  auto* mi = app.add_subcommand("mi", "Estimate I(y; z) on the test split");
  mi->fallthrough();
  MiOptions mopt;
  DataFlags mdata;
  std::string mcheckpoint;
  std::string mout;
  mi->add_option("--checkpoint", mcheckpoint, "Agent checkpoint directory");
  mi->add_flag("--idle", mopt.idle, "Use the idle battery (z = y) instead of a checkpoint");
  mi->add_option("--k", mopt.k, "KSG neighbour count");
  mi->add_option("--seed", mopt.seed, "Tie-break noise seed");
  mi->add_option("--out", mout, "Write mi.json and a manifest here");
  add_data_flags(mi, mdata);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint's greedy policy");
  evaluate->fallthrough();
  std::string echeckpoint;
  std::string eout;
  std::string esplit = "test";
  evaluate->add_option("--checkpoint", echeckpoint, "Agent checkpoint directory")->required();
  evaluate->add_option("--split", esplit, "train, validation or test");
  evaluate->add_option("--out", eout, "Write metrics.json and a manifest here");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Convert ECO-style CSV into a split dataset cache");
  ingest->fallthrough();
  IngestOptionsCli iopt;
  std::string iin;
  std::string iout;
  ingest->add_option("--input", iin, "CSV file or directory")->required();
  ingest->add_option("--out", iout, "Output .bin cache")->required();
  ingest->add_option("--rate", iopt.sampling_rate_hz, "Input sampling rate in Hz")->check(CLI::PositiveNumber);
  ingest->add_option("--split-seed", iopt.split_seed, "Seed for the 70:10:20 split");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  spdlog::set_level(quiet ? spdlog::level::err : verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*train) {
      topt.agent = parse_agent(train_agent);
      topt.data = tdata.options();
      if (!tconfig.empty()) topt.config_file = tconfig;
      if (tepisodes > 0) topt.episodes = tepisodes;
      topt.out = out_or_default(tout, fmt::format("train-{}-l{}-s{}", train_agent, topt.lambda, topt.seed));
      const auto r = cmd_train(topt);
      spdlog::info("trained {} for {} episodes; checkpoint in {}", train_agent, r.curve.size(), r.checkpoint_dir.string());
    } else if (*sweep) {
      sopt.agent = parse_agent(sweep_agent);
      sopt.lambdas = parse_lambdas(lambdas);
      sopt.data = sdata.options();
      if (!sconfig.empty()) sopt.config_file = sconfig;
      if (sepisodes > 0) sopt.episodes = sepisodes;
      sopt.out = out_or_default(sout, fmt::format("sweep-{}-s{}", sweep_agent, sopt.seed));
      const auto r = cmd_sweep(sopt);
      for (const auto& row : r.rows) {
        if (row.report) {
          std::cout << fmt::format("lambda={} F={:.4f} C={:.4f} G={:.4f} MI={:.4f}\n", row.lambda, row.report->F_avg,
                                   row.report->C_avg, row.report->G_avg, row.report->mi_nats);
        } else {
          std::cout << fmt::format("lambda={} failed\n", row.lambda);
        }
      }
    } else if (*attack) {
      aopt.kind = parse_attack_kind(kind);
      for (const auto& c : acheckpoints) aopt.checkpoints.emplace_back(c);
      if (adata.given()) aopt.data = adata.options();
      if (aepochs > 0) aopt.epochs = aepochs;
      aopt.out = out_or_default(aout, fmt::format("attack-{}-s{}", kind, aopt.seed));
      for (const auto& r : cmd_attack(aopt)) {
        std::cout << fmt::format("lambda={} score={:.4f} n_days={}\n",
                                 r.lambda ? fmt::format("{}", *r.lambda) : std::string("none"), r.score.score,
                                 r.score.n_days);
      }
    } else if (*mi) {
      if (!mcheckpoint.empty()) mopt.checkpoint = mcheckpoint;
      if (mdata.given()) mopt.data = mdata.options();
      if (!mout.empty()) mopt.out = mout;
      const auto r = cmd_mi(mopt);
      std::cout << fmt::format("{:.4f}\n", r.mi_nats);
    } else if (*evaluate) {
      EvaluateOptions eopt;
      eopt.checkpoint = echeckpoint;
      eopt.split = parse_split(esplit);
      if (!eout.empty()) eopt.out = eout;
      const auto r = cmd_evaluate(eopt);
      std::cout << fmt::format("F={:.4f} C={:.4f} G={:.4f} MI={:.4f} mean|q|={:.4f} days={}\n", r.F_avg, r.C_avg,
                               r.G_avg, r.mi_nats, r.mean_abs_action_kw, r.episodes.size());
    } else if (*ingest) {
      iopt.input = iin;
      iopt.out = iout;
      const auto ds = cmd_ingest(iopt);
      std::cout << fmt::format("days={} train={} validation={} test={} occupancy={}\n", ds.days.size(),
                               ds.indices(Split::Train).size(), ds.indices(Split::Validation).size(),
                               ds.indices(Split::Test).size(), ds.has_occupancy() ? "yes" : "no");
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}
