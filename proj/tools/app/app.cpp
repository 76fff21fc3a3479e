#include "app.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "pcmu/errors.hpp"

namespace pcmu::app {

namespace {

using json = nlohmann::json;

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(now));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError(fmt::format("cannot write {}", path.string()));
  os << text;
  if (!os) throw DataError(fmt::format("write failed for {}", path.string()));
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError(fmt::format("cannot open {}", path.string()));
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
}

/// Records the run; every listed file must exist.
class Manifest {
 public:
  Manifest(std::string command, fs::path out) : out_(std::move(out)) {
    doc_["command"] = std::move(command);
    doc_["output_dir"] = fs::absolute(out_).lexically_normal().string();
    doc_["started_at"] = utc_now();
    doc_["files"] = json::array();
  }
  json& operator[](const char* key) { return doc_[key]; }
  void add_file(const std::string& name) { files_.push_back(name); }
  void write() {
    for (const auto& f : files_) {
      const fs::path p = out_ / f;
      if (!fs::exists(p)) throw DataError(fmt::format("manifest lists missing file {}", p.string()));
      doc_["files"].push_back({{"name", f}, {"sha1", file_sha1(p)}});
    }
    doc_["finished_at"] = utc_now();
    write_text(out_ / "manifest.json", doc_.dump(2) + "\n");
  }

 private:
  fs::path out_;
  json doc_;
  std::vector<std::string> files_;
};

std::string lambda_tag(double lambda) { return fmt::format("{}", lambda); }

Environment make_env(const ExperimentConfig& c, double lambda) {
  RewardConfig r = c.reward;
  r.lambda = lambda;
  return Environment::make(c.battery, c.tariff, r, c.sim.n_actions);
}

std::vector<LoadProfile> checked_profiles(const Dataset& ds, Split s, std::size_t length, const char* what) {
  auto p = ds.profiles(s);
  for (const auto& day : p) day.validate(length);
  if (p.empty()) throw DataError(fmt::format("the {} split has no days", what));
  return p;
}

struct TrainJob {
  AgentKind agent;
  double lambda;
  std::uint64_t seed;
  ExperimentConfig config;
  DataOptions data;
};

// Trains into `dir` and writes the checkpoint files; shared by train and sweep.
TrainResult train_into(const fs::path& dir, const TrainJob& job, const DataBundle& data, const std::string& command) {
  const Environment env = make_env(job.config, job.lambda);
  job.config.sim.validate();
  const auto train = checked_profiles(data.dataset, Split::Train, job.config.sim.episode_length, "train");
  ensure_dir(dir);
  Manifest manifest(command, dir);

  TrainResult result;
  result.checkpoint_dir = dir;
  json agent_doc = {{"agent", to_string(job.agent)},
                    {"lambda", job.lambda},
                    {"seed", job.seed},
                    {"config", job.config},
                    {"data", job.data},
                    {"data_hash", data.hash}};
  std::string policy_file;
  if (job.agent == AgentKind::Cql) {
    CqlResult r = train_cql(env, train, job.config.cql, job.seed);
    policy_file = "policy.qtb";
    save_qtable(dir / policy_file, r.table, r.quantizer, job.seed);
    result.curve = std::move(r.curve);
  } else {
    DdqlResult r = train_ddql(env, train, job.config.ddql, job.seed);
    policy_file = "policy.net";
    save_mlp(dir / policy_file, r.q_net, job.seed);
    agent_doc["demand_scale"] = r.demand_scale;
    result.curve = std::move(r.curve);
  }
  agent_doc["policy_file"] = policy_file;
  write_text(dir / "agent.json", agent_doc.dump(2) + "\n");

  const std::string curve_file = fmt::format("curve_{}.csv", to_string(job.agent));
  std::ostringstream curve;
  write_curve_csv(curve, result.curve);
  write_text(dir / curve_file, curve.str());

  manifest["config"] = agent_doc;
  manifest["seed"] = job.seed;
  manifest["data"] = {{"options", job.data}, {"hash", data.hash}};
  manifest.add_file(policy_file);
  manifest.add_file("agent.json");
  manifest.add_file(curve_file);
  manifest.write();
  return result;
}

const Dataset& require_occupancy(const Dataset& ds) {
  if (!ds.has_occupancy()) throw DataError("the dataset has no occupancy labels");
  return ds;
}

std::vector<std::vector<double>> label_days(const Dataset& ds, const std::vector<std::size_t>& idx, AttackKind kind) {
  std::vector<std::vector<double>> out;
  for (auto i : idx) {
    if (kind == AttackKind::DemandRegressor) {
      out.push_back(ds.days[i].demand.values);
    } else {
      const auto& occ = *ds.days[i].occupancy;
      out.emplace_back(occ.begin(), occ.end());
    }
  }
  return out;
}

std::vector<LoadProfile> profiles_at(const Dataset& ds, const std::vector<std::size_t>& idx) {
  std::vector<LoadProfile> out;
  for (auto i : idx) out.push_back(ds.days[i].demand);
  return out;
}

DataOptions resolve_data(const std::optional<DataOptions>& given, const std::vector<Checkpoint>& checkpoints) {
  if (given) return *given;
  if (!checkpoints.empty()) return checkpoints.front().data;
  throw ConfigError("no data source: pass --data PATH or --synthetic");
}

}  // namespace

std::string to_string(AgentKind a) { return a == AgentKind::Cql ? "cql" : "ddql"; }

AgentKind parse_agent(const std::string& s) {
  if (s == "cql") return AgentKind::Cql;
  if (s == "ddql") return AgentKind::Ddql;
  throw ConfigError(fmt::format("agent must be cql or ddql (got '{}')", s));
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "validation" || s == "val") return Split::Validation;
  if (s == "test") return Split::Test;
  throw ConfigError(fmt::format("split must be train, validation or test (got '{}')", s));
}

void to_json(json& j, const DataOptions& d) {
  j = {{"path", d.path ? json(d.path->string()) : json(nullptr)},
       {"synthetic", d.synthetic},
       {"synthetic_days", d.synthetic_days},
       {"data_seed", d.data_seed},
       {"sampling_rate_hz", d.sampling_rate_hz},
       {"synthetic_config", d.synthetic_config}};
}

void from_json(const json& j, DataOptions& d) {
  const DataOptions def;
  if (j.contains("path") && !j.at("path").is_null()) d.path = fs::path(j.at("path").get<std::string>());
  d.synthetic = j.value("synthetic", def.synthetic);
  d.synthetic_days = j.value("synthetic_days", def.synthetic_days);
  d.data_seed = j.value("data_seed", def.data_seed);
  d.sampling_rate_hz = j.value("sampling_rate_hz", def.sampling_rate_hz);
  if (j.contains("synthetic_config")) d.synthetic_config = j.at("synthetic_config").get<SyntheticConfig>();
}

DataBundle load_data(const DataOptions& options) {
  DataBundle b;
  if (options.synthetic) {
    SyntheticConfig cfg = options.synthetic_config;
    cfg.seed = options.data_seed;
    b.dataset = split(generate_synthetic(cfg, options.synthetic_days), {0.7, 0.1, 0.2}, options.data_seed);
  } else if (options.path) {
    const auto& p = *options.path;
    if (p.extension() == ".bin") {
      b.dataset = load_dataset(p);
      const bool unassigned = std::all_of(b.dataset.splits.begin(), b.dataset.splits.end(),
                                          [](Split s) { return s == Split::Unassigned; });
      if (unassigned) b.dataset = split(std::move(b.dataset), {0.7, 0.1, 0.2}, options.data_seed);
    } else {
      b.dataset = split(ingest_csv(p, options.sampling_rate_hz), {0.7, 0.1, 0.2}, options.data_seed);
    }
  } else {
    throw ConfigError("no data source: pass --data PATH or --synthetic");
  }
  std::ostringstream bytes;
  write_dataset(bytes, b.dataset);
  b.hash = git_blob_sha1(bytes.str());
  return b;
}

void to_json(json& j, const ExperimentConfig& c) {
  j = {{"battery", c.battery}, {"tariff", c.tariff}, {"reward", c.reward}, {"simulation", c.sim},
       {"cql", c.cql},         {"ddql", c.ddql},     {"mi", c.mi}};
}

void from_json(const json& j, ExperimentConfig& c) {
  if (j.contains("battery")) c.battery = j.at("battery").get<BatteryConfig>();
  if (j.contains("tariff")) c.tariff = tariff_from_json(j.at("tariff"));
  if (j.contains("reward")) c.reward = j.at("reward").get<RewardConfig>();
  if (j.contains("simulation")) c.sim = j.at("simulation").get<SimulationConfig>();
  if (j.contains("cql")) c.cql = j.at("cql").get<CqlConfig>();
  if (j.contains("ddql")) c.ddql = j.at("ddql").get<DdqlConfig>();
  if (j.contains("mi")) c.mi = j.at("mi").get<MiEstimatorConfig>();
}

ExperimentConfig load_experiment_config(const std::optional<fs::path>& file) {
  ExperimentConfig c;
  if (file) {
    std::ifstream is(*file);
    if (!is) throw ConfigError(fmt::format("cannot open config file {}", file->string()));
    try {
      c = json::parse(is).get<ExperimentConfig>();
    } catch (const json::exception& e) {
      throw ConfigError(fmt::format("{}: {}", file->string(), e.what()));
    }
  }
  c.battery.validate();
  c.reward.validate();
  c.sim.validate();
  c.cql.validate();
  c.ddql.validate();
  c.mi.validate();
  return c;
}

TrainResult cmd_train(const TrainOptions& options) {
  ExperimentConfig config = load_experiment_config(options.config_file);
  if (options.episodes) {
    config.cql.n_episodes = *options.episodes;
    config.ddql.n_episodes = *options.episodes;
  }
  config.reward.lambda = options.lambda;
  config.reward.validate();
  const DataBundle data = load_data(options.data);
  return train_into(options.out, {options.agent, options.lambda, options.seed, config, options.data}, data, "train");
}

Checkpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError(fmt::format("checkpoint directory not found: {}", dir.string()));
  const json doc = read_json(dir / "agent.json");
  Checkpoint c;
  c.dir = dir;
  try {
    c.agent = parse_agent(doc.at("agent").get<std::string>());
    c.lambda = doc.at("lambda").get<double>();
    c.seed = doc.at("seed").get<std::uint64_t>();
    c.config = doc.at("config").get<ExperimentConfig>();
    c.data = doc.at("data").get<DataOptions>();
    c.data_hash = doc.value("data_hash", std::string());
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: {}", (dir / "agent.json").string(), e.what()));
  }
  c.env = make_env(c.config, c.lambda);
  const fs::path policy_path = dir / doc.value("policy_file", c.agent == AgentKind::Cql ? "policy.qtb" : "policy.net");
  if (c.agent == AgentKind::Cql) {
    auto q = std::make_shared<LoadedQTable>(load_qtable(policy_path));
    Policy inner = greedy_policy(q->table, q->quantizer);
    c.policy = [q, inner](const EnvState& s, std::span<const std::size_t> f) { return inner(s, f); };
  } else {
    auto net = std::make_shared<LoadedMlp>(load_mlp(policy_path));
    if (net->net.output_size() != c.env.actions.size()) {
      throw DataError(fmt::format("{}: network has {} outputs but the action grid has {}", policy_path.string(),
                                  net->net.output_size(), c.env.actions.size()));
    }
    Policy inner = greedy_policy(net->net, doc.value("demand_scale", 1.0));
    c.policy = [net, inner](const EnvState& s, std::span<const std::size_t> f) { return inner(s, f); };
  }
  return c;
}

SweepResult cmd_sweep(const SweepOptions& options) {
  if (options.lambdas.empty()) throw ConfigError("sweep needs at least one lambda");
  ExperimentConfig config = load_experiment_config(options.config_file);
  if (options.episodes) {
    config.cql.n_episodes = *options.episodes;
    config.ddql.n_episodes = *options.episodes;
  }
  for (double l : options.lambdas) {
    RewardConfig r = config.reward;
    r.lambda = l;
    r.validate();
  }
  const DataBundle data = load_data(options.data);
  ensure_dir(options.out);
  Manifest manifest("sweep", options.out);

  const std::size_t n = options.lambdas.size();
  std::vector<std::optional<std::string>> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < n; i = next++) {
      const double l = options.lambdas[i];
      try {
        train_into(options.out / ("lambda_" + lambda_tag(l)), {options.agent, l, options.seed, config, options.data},
                   data, "sweep");
      } catch (const std::exception& e) {
        errors[i] = e.what();
        spdlog::error("sweep: lambda {} failed: {}", l, e.what());
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, n);
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<SweepInput> inputs;
  for (std::size_t i = 0; i < n; ++i) {
    SweepInput in;
    in.lambda = options.lambdas[i];
    if (!errors[i]) {
      const fs::path dir = options.out / ("lambda_" + lambda_tag(in.lambda));
      in.load = [dir]() -> std::optional<Policy> { return load_checkpoint(dir).policy; };
    }
    inputs.push_back(std::move(in));
  }
  const Environment env = make_env(config, 0.0);
  const auto test = checked_profiles(data.dataset, Split::Test, config.sim.episode_length, "test");

  SweepResult result;
  result.rows = sweep_report(inputs, env, test, config.sim.eval_initial_loc, config.mi);
  result.failures = static_cast<std::size_t>(std::count_if(errors.begin(), errors.end(), [](const auto& e) { return e.has_value(); }));

  std::ostringstream csv;
  write_tradeoff_csv(csv, result.rows);
  write_text(options.out / "tradeoff.csv", csv.str());
  json rows = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    json row = {{"lambda", result.rows[i].lambda}};
    if (result.rows[i].report) {
      json rep = *result.rows[i].report;
      rep.erase("episodes");
      row["report"] = rep;
    }
    if (errors[i]) row["error"] = *errors[i];
    rows.push_back(row);
  }
  write_text(options.out / "sweep.json", json{{"agent", to_string(options.agent)}, {"rows", rows}}.dump(2) + "\n");

  manifest["config"] = {{"agent", to_string(options.agent)}, {"lambdas", options.lambdas}, {"experiment", config}};
  manifest["seed"] = options.seed;
  manifest["data"] = {{"options", options.data}, {"hash", data.hash}};
  manifest.add_file("tradeoff.csv");
  manifest.add_file("sweep.json");
  manifest.write();
  if (result.failures == n) throw Error("every sweep job failed");
  return result;
}

std::vector<std::vector<double>> rollout_grid(const Policy& policy, const Environment& env,
                                              const std::vector<LoadProfile>& days, double initial_loc) {
  std::vector<std::vector<double>> out;
  out.reserve(days.size());
  for (const auto& d : days) {
    const EpisodeTrace trace = run_episode(policy, d, initial_loc, env);
    std::vector<double> z;
    z.reserve(trace.steps.size());
    for (const auto& s : trace.steps) z.push_back(s.grid_kw);
    out.push_back(std::move(z));
  }
  return out;
}

std::vector<AttackRow> cmd_attack(const AttackOptions& options) {
  std::vector<Checkpoint> checkpoints;
  for (const auto& c : options.checkpoints) checkpoints.push_back(load_checkpoint(c));
  const DataOptions data_opts = resolve_data(options.data, checkpoints);
  const DataBundle data = load_data(data_opts);
  for (const auto& c : checkpoints) {
    if (!c.data_hash.empty() && c.data_hash != data.hash) {
      throw ConfigError(fmt::format("checkpoint {} was trained on different data", c.dir.string()));
    }
  }
  const Dataset& ds = options.kind == AttackKind::OccupancyClassifier ? require_occupancy(data.dataset) : data.dataset;

  const std::array<Split, 3> splits{Split::Train, Split::Validation, Split::Test};
  std::array<std::vector<std::size_t>, 3> idx;
  std::array<std::vector<std::vector<double>>, 3> labels;
  Rng shuffle_rng(options.seed ^ 0x5eedULL);
  for (std::size_t s = 0; s < 3; ++s) {
    idx[s] = ds.indices(splits[s]);
    labels[s] = label_days(ds, idx[s], options.kind);
    if (options.shuffle_labels) std::shuffle(labels[s].begin(), labels[s].end(), shuffle_rng);
  }

  auto condition = [&](std::optional<double> lambda, const std::array<std::vector<std::vector<double>>, 3>& grid) {
    AttackCondition c;
    c.lambda = lambda;
    c.train = make_attack_data(grid[0], labels[0], options.kind);
    if (!grid[1].empty()) c.validation = make_attack_data(grid[1], labels[1], options.kind);
    c.test = make_attack_data(grid[2], labels[2], options.kind);
    return c;
  };

  std::vector<AttackCondition> conditions;
  {
    std::array<std::vector<std::vector<double>>, 3> grid;
    for (std::size_t s = 0; s < 3; ++s) {
      for (auto i : idx[s]) grid[s].push_back(ds.days[i].demand.values);
    }
    conditions.push_back(condition(std::nullopt, grid));
  }
  for (const auto& c : checkpoints) {
    std::array<std::vector<std::vector<double>>, 3> grid;
    for (std::size_t s = 0; s < 3; ++s) {
      grid[s] = rollout_grid(c.policy, c.env, profiles_at(ds, idx[s]), c.config.sim.eval_initial_loc);
    }
    conditions.push_back(condition(c.lambda, grid));
  }

  AttackerConfig cfg = AttackerConfig::for_kind(options.kind);
  cfg.seed = options.seed;
  if (options.epochs) cfg.epochs = *options.epochs;
  const std::vector<AttackRow> rows = attack_report(conditions, cfg);

  ensure_dir(options.out);
  Manifest manifest("attack", options.out);
  const std::string kind = to_string(options.kind);
  std::ostringstream csv;
  write_attack_csv(csv, rows);
  write_text(options.out / fmt::format("attack_{}.csv", kind), csv.str());
  manifest.add_file(fmt::format("attack_{}.csv", kind));

  json details = json::array();
  for (const auto& r : rows) {
    const std::string tag = r.lambda ? "lambda_" + lambda_tag(*r.lambda) : std::string("baseline");
    const std::string net_file = fmt::format("attacker_{}_{}.net", kind, tag);
    save_mlp(options.out / net_file, r.attacker.net, cfg.seed);
    manifest.add_file(net_file);
    json d = {{"lambda", r.lambda ? json(*r.lambda) : json("none")},
              {"score", r.score.score},
              {"n_days", r.score.n_days},
              {"best_epoch", r.attacker.best_epoch},
              {"epochs_run", r.attacker.train_loss.size()},
              {"network", net_file}};
    if (options.kind == AttackKind::DemandRegressor) d["rmse"] = r.score.rmse;
    details.push_back(d);
  }
  write_text(options.out / fmt::format("attack_{}.json", kind),
             json{{"kind", kind}, {"metric", options.kind == AttackKind::DemandRegressor ? "nmse" : "balanced_accuracy"},
                  {"shuffled_labels", options.shuffle_labels}, {"rows", details}}
                     .dump(2) + "\n");
  manifest.add_file(fmt::format("attack_{}.json", kind));

  json cps = json::array();
  for (const auto& c : options.checkpoints) cps.push_back(fs::absolute(c).lexically_normal().string());
  manifest["config"] = {{"kind", kind}, {"attacker", cfg}, {"checkpoints", cps}, {"shuffle_labels", options.shuffle_labels}};
  manifest["seed"] = options.seed;
  manifest["data"] = {{"options", data_opts}, {"hash", data.hash}};
  manifest.write();
  return rows;
}

MiResult cmd_mi(const MiOptions& options) {
  if (options.k == 0) throw ConfigError("mi.k_neighbors must be >= 1 (got 0)");
  if (options.idle == options.checkpoint.has_value()) {
    throw ConfigError("mi needs exactly one of --checkpoint or --idle");
  }
  std::vector<Checkpoint> cps;
  if (options.checkpoint) cps.push_back(load_checkpoint(*options.checkpoint));
  const DataOptions data_opts = resolve_data(options.data, cps);
  const DataBundle data = load_data(data_opts);

  const ExperimentConfig config = cps.empty() ? load_experiment_config(std::nullopt) : cps.front().config;
  const Environment env = cps.empty() ? make_env(config, 1.0) : cps.front().env;
  const Policy policy = cps.empty() ? idle_policy(env) : cps.front().policy;
  const auto test = checked_profiles(data.dataset, Split::Test, config.sim.episode_length, "test");

  MiEstimatorConfig mi = config.mi;
  mi.k_neighbors = options.k;
  mi.seed = options.seed;
  std::vector<double> ys;
  std::vector<double> zs;
  const auto grid = rollout_grid(policy, env, test, config.sim.eval_initial_loc);
  for (std::size_t d = 0; d < test.size(); ++d) {
    ys.insert(ys.end(), test[d].values.begin(), test[d].values.end());
    zs.insert(zs.end(), grid[d].begin(), grid[d].end());
  }
  MiResult r;
  r.mi_nats = ksg_mi(ys, zs, mi);
  r.n_pairs = ys.size();
  if (!cps.empty()) r.lambda = cps.front().lambda;

  if (options.out) {
    ensure_dir(*options.out);
    Manifest manifest("mi", *options.out);
    write_text(*options.out / "mi.json", json{{"mi_nats", r.mi_nats},
                                              {"n_pairs", r.n_pairs},
                                              {"k", options.k},
                                              {"lambda", r.lambda ? json(*r.lambda) : json(nullptr)},
                                              {"policy", cps.empty() ? "idle" : cps.front().dir.string()}}
                                             .dump(2) + "\n");
    manifest["config"] = {{"k", options.k}, {"idle", options.idle}};
    manifest["seed"] = options.seed;
    manifest["data"] = {{"options", data_opts}, {"hash", data.hash}};
    manifest.add_file("mi.json");
    manifest.write();
  }
  return r;
}

MetricsReport cmd_evaluate(const EvaluateOptions& options) {
  const Checkpoint c = load_checkpoint(options.checkpoint);
  const DataBundle data = load_data(c.data);
  const auto days = checked_profiles(data.dataset, options.split, c.config.sim.episode_length, "evaluation");
  MetricsReport report = evaluate_policy(c.policy, c.env, days, c.config.sim.eval_initial_loc, c.config.mi);
  if (options.out) {
    ensure_dir(*options.out);
    Manifest manifest("evaluate", *options.out);
    write_text(*options.out / "metrics.json", json(report).dump(2) + "\n");
    manifest["config"] = {{"checkpoint", fs::absolute(options.checkpoint).lexically_normal().string()}};
    manifest["seed"] = c.seed;
    manifest["data"] = {{"options", c.data}, {"hash", data.hash}};
    manifest.add_file("metrics.json");
    manifest.write();
  }
  return report;
}

Dataset cmd_ingest(const IngestOptionsCli& options) {
  Dataset ds = split(ingest_csv(options.input, options.sampling_rate_hz), options.ratios, options.split_seed);
  if (options.out.has_parent_path()) ensure_dir(options.out.parent_path());
  save_dataset(options.out, ds);
  return ds;
}

std::string git_blob_sha1(std::string_view bytes) {
  const std::string header = fmt::format("blob {}", bytes.size());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size() + 1) != 1 ||  // includes the NUL
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("SHA-1 digest failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string file_sha1(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << is.rdbuf();
  return git_blob_sha1(ss.str());
}

fs::path default_output_root() {
  const char* env = std::getenv("PCMU_OUTPUT_ROOT");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("runs");
}

}  // namespace pcmu::app
