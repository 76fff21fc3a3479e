#include "pcmu/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "binary_io.hpp"
#include "pcmu/errors.hpp"

namespace pcmu {

namespace {

constexpr std::string_view kDatasetMagic = "PCMUDST1";
constexpr std::uint32_t kDatasetVersion = 1;
constexpr std::int64_t kSecondsPerDay = 86400;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  // std::from_chars for double is locale-independent.
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

// Seconds since the Unix epoch (UTC), possibly fractional.
bool parse_timestamp(std::string_view s, double& seconds) {
  if (parse_double(s, seconds)) return true;
  int y = 0;
  unsigned mo = 0;
  unsigned d = 0;
  unsigned h = 0;
  unsigned mi = 0;
  double sec = 0.0;
  if (s.size() < 19 || s[4] != '-' || s[7] != '-' || (s[10] != ' ' && s[10] != 'T') || s[13] != ':' ||
      s[16] != ':') {
    return false;
  }
  auto num = [&](std::size_t pos, std::size_t len, auto& v) {
    const auto r = std::from_chars(s.data() + pos, s.data() + pos + len, v);
    return r.ec == std::errc() && r.ptr == s.data() + pos + len;
  };
  std::string_view tail = s.substr(17);
  if (!tail.empty() && tail.back() == 'Z') tail.remove_suffix(1);
  if (!num(0, 4, y) || !num(5, 2, mo) || !num(8, 2, d) || !num(11, 2, h) || !num(14, 2, mi) ||
      !parse_double(tail, sec)) {
    return false;
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{mo}, std::chrono::day{d}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec < 0.0 || sec >= 61.0) return false;
  const auto days = std::chrono::sys_days{ymd}.time_since_epoch().count();
  seconds = static_cast<double>(days) * kSecondsPerDay + h * 3600.0 + mi * 60.0 + sec;
  return true;
}

std::string date_string(std::int64_t day_number) {
  const std::chrono::sys_days sd{std::chrono::days{day_number}};
  const std::chrono::year_month_day ymd{sd};
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                     static_cast<unsigned>(ymd.day()));
}

struct DayBuffer {
  std::int64_t day = 0;
  std::vector<double> power_w;  // NaN = missing
  std::vector<std::int8_t> occupancy;  // -1 = missing
};

class DayAssembler {
 public:
  DayAssembler(const IngestOptions& opt, std::string source, bool with_occupancy)
      : opt_(opt), source_(std::move(source)), with_occupancy_(with_occupancy) {
    const double per_day = opt.sampling_rate_hz * kSecondsPerDay;
    const double per_block = opt.sampling_rate_hz * static_cast<double>(opt.block_seconds);
    if (!(opt.sampling_rate_hz > 0.0) || std::abs(per_block - std::round(per_block)) > 1e-9 || per_block < 1.0 ||
        kSecondsPerDay % static_cast<std::int64_t>(opt.block_seconds) != 0) {
      throw ConfigError(fmt::format("ingest: sampling rate {} Hz does not divide {} s blocks", opt.sampling_rate_hz,
                                    opt.block_seconds));
    }
    samples_per_day_ = static_cast<std::size_t>(std::llround(per_day));
    samples_per_block_ = static_cast<std::size_t>(std::llround(per_block));
  }

  void add(double ts, double power_w, std::optional<int> occ) {
    const auto day = static_cast<std::int64_t>(std::floor(ts / kSecondsPerDay));
    if (!current_ || current_->day != day) {
      flush();
      current_ = DayBuffer{day, std::vector<double>(samples_per_day_, std::numeric_limits<double>::quiet_NaN()),
                           std::vector<std::int8_t>(samples_per_day_, -1)};
    }
    const double sec_of_day = ts - static_cast<double>(day) * kSecondsPerDay;
    const auto slot = std::min(static_cast<std::size_t>(std::floor(sec_of_day * opt_.sampling_rate_hz)),
                               samples_per_day_ - 1);
    current_->power_w[slot] = power_w;
    if (occ) current_->occupancy[slot] = static_cast<std::int8_t>(*occ);
  }

  void flush() {
    if (!current_) return;
    DayBuffer buf = std::move(*current_);
    current_.reset();
    const auto missing = static_cast<std::size_t>(
        std::count_if(buf.power_w.begin(), buf.power_w.end(), [](double v) { return std::isnan(v); }));
    if (static_cast<double>(missing) > opt_.max_missing_fraction * static_cast<double>(samples_per_day_)) {
      ++dropped_;
      return;
    }
    // Forward fill; a leading gap takes the first observed value.
    const auto first = std::find_if(buf.power_w.begin(), buf.power_w.end(), [](double v) { return !std::isnan(v); });
    double last = *first;
    std::int8_t last_occ = 0;
    for (auto o : buf.occupancy) {
      if (o >= 0) {
        last_occ = o;
        break;
      }
    }
    for (std::size_t i = 0; i < samples_per_day_; ++i) {
      if (std::isnan(buf.power_w[i])) buf.power_w[i] = last;
      last = buf.power_w[i];
      if (buf.occupancy[i] < 0) buf.occupancy[i] = last_occ;
      last_occ = buf.occupancy[i];
    }
    const std::size_t blocks = samples_per_day_ / samples_per_block_;
    DayRecord rec;
    rec.date = date_string(buf.day);
    rec.source = source_;
    rec.demand.values.resize(blocks);
    std::vector<std::uint8_t> occ(blocks);
    for (std::size_t b = 0; b < blocks; ++b) {
      const auto begin = buf.power_w.begin() + static_cast<std::ptrdiff_t>(b * samples_per_block_);
      const double sum_w = std::accumulate(begin, begin + static_cast<std::ptrdiff_t>(samples_per_block_), 0.0);
      rec.demand.values[b] = std::max(sum_w / static_cast<double>(samples_per_block_), 0.0) / 1000.0;
      std::size_t occupied = 0;
      for (std::size_t i = 0; i < samples_per_block_; ++i) occupied += buf.occupancy[b * samples_per_block_ + i] > 0;
      occ[b] = 2 * occupied >= samples_per_block_ ? 1 : 0;
    }
    if (with_occupancy_) rec.occupancy = std::move(occ);
    days_.push_back(std::move(rec));
  }

  std::vector<DayRecord> take_days() { return std::move(days_); }
  std::size_t dropped() const { return dropped_; }
  std::size_t blocks_per_day() const { return samples_per_day_ / samples_per_block_; }

 private:
  IngestOptions opt_;
  std::string source_;
  bool with_occupancy_;
  std::size_t samples_per_day_ = 0;
  std::size_t samples_per_block_ = 0;
  std::optional<DayBuffer> current_;
  std::vector<DayRecord> days_;
  std::size_t dropped_ = 0;
};

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(fmt::format("synthetic.{} must be in [0, 1] (got {})", name, p));
}

}  // namespace

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == s) out.push_back(i);
  }
  return out;
}

std::vector<LoadProfile> Dataset::profiles(Split s) const {
  std::vector<LoadProfile> out;
  for (auto i : indices(s)) out.push_back(days[i].demand);
  return out;
}

std::vector<LoadProfile> Dataset::all_profiles() const {
  std::vector<LoadProfile> out;
  for (const auto& d : days) out.push_back(d.demand);
  return out;
}

bool Dataset::has_occupancy() const {
  return !days.empty() && std::all_of(days.begin(), days.end(), [](const DayRecord& d) { return d.occupancy.has_value(); });
}

Dataset parse_csv(std::istream& in, const std::string& source, const IngestOptions& options) {
  std::string line;
  std::size_t line_no = 0;
  bool with_occupancy = false;
  // Header.
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  const auto header = split_fields(line);
  if (header.size() < 2 || header[0] != "timestamp" || header[1] != "power_w" ||
      (header.size() == 3 && header[2] != "occupancy") || header.size() > 3) {
    throw DataError(fmt::format("{}:{}: expected header 'timestamp,power_w[,occupancy]'", source, line_no));
  }
  with_occupancy = header.size() == 3;

  DayAssembler assembler(options, source, with_occupancy);
  double prev_ts = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != header.size()) {
      throw DataError(fmt::format("{}:{}: expected {} fields, got {}", source, line_no, header.size(), f.size()));
    }
    double ts = 0.0;
    double power = 0.0;
    if (!parse_timestamp(f[0], ts)) throw DataError(fmt::format("{}:{}: bad timestamp '{}'", source, line_no, f[0]));
    if (!parse_double(f[1], power)) throw DataError(fmt::format("{}:{}: bad power '{}'", source, line_no, f[1]));
    if (ts <= prev_ts) throw DataError(fmt::format("{}:{}: timestamps must increase", source, line_no));
    prev_ts = ts;
    std::optional<int> occ;
    if (with_occupancy) {
      double o = 0.0;
      if (!parse_double(f[2], o) || (o != 0.0 && o != 1.0)) {
        throw DataError(fmt::format("{}:{}: occupancy must be 0 or 1, got '{}'", source, line_no, f[2]));
      }
      occ = static_cast<int>(o);
    }
    assembler.add(ts, power, occ);
  }
  assembler.flush();
  Dataset ds;
  ds.steps_per_day = assembler.blocks_per_day();
  ds.days = assembler.take_days();
  ds.splits.assign(ds.days.size(), Split::Unassigned);
  if (assembler.dropped() > 0) {
    spdlog::info("{}: dropped {} incomplete day(s)", source, assembler.dropped());
  }
  return ds;
}

Dataset ingest_csv(const std::filesystem::path& path, double sampling_rate_hz) {
  IngestOptions opt;
  opt.sampling_rate_hz = sampling_rate_hz;
  return ingest_csv(path, opt);
}

Dataset ingest_csv(const std::filesystem::path& path, const IngestOptions& options) {
  std::vector<std::filesystem::path> files;
  std::error_code ec;
  if (std::filesystem::is_directory(path, ec)) {
    for (const auto& e : std::filesystem::directory_iterator(path)) {
      if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else if (std::filesystem::is_regular_file(path, ec)) {
    files.push_back(path);
  } else {
    throw DataError(fmt::format("no such data file or directory: {}", path.string()));
  }
  Dataset pooled;
  bool first = true;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw DataError(fmt::format("cannot open {}", f.string()));
    Dataset part = parse_csv(in, f.filename().string(), options);
    if (first) {
      pooled.steps_per_day = part.steps_per_day;
      first = false;
    }
    for (auto& d : part.days) pooled.days.push_back(std::move(d));
  }
  if (pooled.days.empty()) throw DataError(fmt::format("no complete days in {}", path.string()));
  pooled.splits.assign(pooled.days.size(), Split::Unassigned);
  return pooled;
}

void SyntheticConfig::validate() const {
  check_probability(event_rate, "event_rate");
  check_probability(p_initial_occupied, "p_initial_occupied");
  check_probability(p_stay_vacant, "p_stay_vacant");
  check_probability(p_stay_occupied, "p_stay_occupied");
  if (steps_per_day == 0) throw ConfigError("synthetic.steps_per_day must be > 0");
  if (!(base_load_kw >= 0.0) || !(occupied_load_kw >= 0.0) || !(noise_kw >= 0.0)) {
    throw ConfigError("synthetic: loads and noise must be >= 0");
  }
  if (!(event_min_kw >= 0.0 && event_max_kw >= event_min_kw)) {
    throw ConfigError("synthetic: need 0 <= event_min_kw <= event_max_kw");
  }
  if (event_max_steps == 0) throw ConfigError("synthetic.event_max_steps must be >= 1");
}

double SyntheticConfig::max_load_kw() const {
  return base_load_kw + occupied_load_kw + 3.0 * noise_kw + static_cast<double>(event_max_steps) * event_max_kw;
}

Dataset generate_synthetic(const SyntheticConfig& config, std::size_t n_days) {
  config.validate();
  if (n_days == 0) throw ConfigError("generate_synthetic: n_days must be >= 1");
  Rng rng(config.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_real_distribution<double> amplitude(config.event_min_kw, config.event_max_kw);
  std::uniform_int_distribution<std::size_t> duration(1, config.event_max_steps);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t steps = config.steps_per_day;

  Dataset ds;
  ds.steps_per_day = steps;
  for (std::size_t day = 0; day < n_days; ++day) {
    std::vector<std::uint8_t> occ(steps);
    std::vector<double> events(steps, 0.0);
    bool occupied = coin(rng) < config.p_initial_occupied;
    for (std::size_t t = 0; t < steps; ++t) {
      if (t > 0) {
        const double stay = occupied ? config.p_stay_occupied : config.p_stay_vacant;
        if (coin(rng) >= stay) occupied = !occupied;
      }
      occ[t] = occupied ? 1 : 0;
      if (occupied && coin(rng) < config.event_rate) {
        const double amp = amplitude(rng);
        const std::size_t len = duration(rng);
        for (std::size_t u = t; u < std::min(steps, t + len); ++u) events[u] += amp;
      }
    }
    DayRecord rec;
    rec.date = fmt::format("synthetic-{:05d}", day);
    rec.source = "synthetic";
    rec.demand.values.resize(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      double noise = 0.0;
      if (config.noise_kw > 0.0) {
        double z = 0.0;
        do {
          z = gauss(rng);
        } while (std::abs(z) > 3.0);
        noise = config.noise_kw * z;
      }
      const double load = config.base_load_kw + (occ[t] != 0 ? config.occupied_load_kw : 0.0) + events[t] + noise;
      rec.demand.values[t] = std::max(load, 0.0);
    }
    rec.occupancy = std::move(occ);
    ds.days.push_back(std::move(rec));
  }
  ds.splits.assign(ds.days.size(), Split::Unassigned);
  return ds;
}

Dataset split(Dataset dataset, const std::array<double, 3>& ratios, std::uint64_t seed) {
  double sum = 0.0;
  std::size_t parts = 0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ConfigError("split ratios must be >= 0");
    sum += r;
    parts += r > 0.0 ? 1 : 0;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError(fmt::format("split ratios sum to {}, expected 1", sum));
  const std::size_t n = dataset.days.size();
  if (n < parts) throw DataError(fmt::format("cannot split {} day(s) into {} parts", n, parts));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    std::swap(order[i - 1], order[j]);
  }
  const auto n_train = static_cast<std::size_t>(std::floor(ratios[0] * static_cast<double>(n) + 1e-9));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(n) + 1e-9)));
  dataset.splits.assign(n, Split::Test);
  for (std::size_t i = 0; i < n; ++i) {
    Split s = Split::Test;
    if (i < n_train) {
      s = Split::Train;
    } else if (i < n_train + n_val) {
      s = Split::Validation;
    } else if (ratios[2] == 0.0) {
      // Remainder goes to the last non-empty part when test is disabled.
      s = ratios[1] > 0.0 ? Split::Validation : Split::Train;
    }
    dataset.splits[order[i]] = s;
  }
  return dataset;
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError(fmt::format("cannot write {}", path.string()));
  write_dataset(os, ds);
  if (!os) throw DataError(fmt::format("write failed for {}", path.string()));
}

void write_dataset(std::ostream& os, const Dataset& ds) {
  detail::write_magic(os, kDatasetMagic);
  detail::write_u32(os, kDatasetVersion);
  detail::write_u64(os, ds.days.size());
  detail::write_u64(os, ds.steps_per_day);
  for (const auto& d : ds.days) {
    if (d.demand.values.size() != ds.steps_per_day) throw DataError("save_dataset: ragged day");
    for (double v : d.demand.values) detail::write_f64(os, v);
  }
  for (std::size_t i = 0; i < ds.days.size(); ++i) {
    detail::write_u8(os, static_cast<std::uint8_t>(i < ds.splits.size() ? ds.splits[i] : Split::Unassigned));
  }
  const bool occ = ds.has_occupancy();
  detail::write_u8(os, occ ? 1 : 0);
  if (occ) {
    for (const auto& d : ds.days) {
      for (auto o : *d.occupancy) detail::write_u8(os, o);
    }
  }
  for (const auto& d : ds.days) {
    detail::write_u64(os, d.date.size());
    os.write(d.date.data(), static_cast<std::streamsize>(d.date.size()));
  }
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(fmt::format("cannot open dataset cache {}", path.string()));
  detail::expect_magic(is, kDatasetMagic);
  if (const auto v = detail::read_u32(is); v != kDatasetVersion) {
    throw DataError(fmt::format("unsupported dataset cache version {}", v));
  }
  Dataset ds;
  const auto n = detail::read_u64(is);
  ds.steps_per_day = detail::read_u64(is);
  if (n > (1u << 24) || ds.steps_per_day == 0 || ds.steps_per_day > (1u << 20)) {
    throw DataError("implausible dataset cache header");
  }
  ds.days.resize(n);
  for (auto& d : ds.days) {
    d.demand.values.resize(ds.steps_per_day);
    for (auto& v : d.demand.values) v = detail::read_f64(is);
  }
  ds.splits.resize(n);
  for (auto& s : ds.splits) {
    const auto tag = detail::read_u8(is);
    if (tag > 3) throw DataError("bad split tag in dataset cache");
    s = static_cast<Split>(tag);
  }
  if (detail::read_u8(is) != 0) {
    for (auto& d : ds.days) {
      std::vector<std::uint8_t> occ(ds.steps_per_day);
      for (auto& o : occ) o = detail::read_u8(is);
      d.occupancy = std::move(occ);
    }
  }
  for (auto& d : ds.days) {
    const auto len = detail::read_u64(is);
    if (len > 4096) throw DataError("implausible date length in dataset cache");
    d.date.resize(len);
    if (!is.read(d.date.data(), static_cast<std::streamsize>(len))) throw DataError("truncated dataset cache");
    d.source = path.filename().string();
  }
  return ds;
}

void to_json(nlohmann::json& j, const SyntheticConfig& c) {
  j = {{"seed", c.seed},
       {"steps_per_day", c.steps_per_day},
       {"base_load_kw", c.base_load_kw},
       {"occupied_load_kw", c.occupied_load_kw},
       {"event_rate", c.event_rate},
       {"event_min_kw", c.event_min_kw},
       {"event_max_kw", c.event_max_kw},
       {"event_max_steps", c.event_max_steps},
       {"noise_kw", c.noise_kw},
       {"p_initial_occupied", c.p_initial_occupied},
       {"p_stay_vacant", c.p_stay_vacant},
       {"p_stay_occupied", c.p_stay_occupied}};
}

void from_json(const nlohmann::json& j, SyntheticConfig& c) {
  const SyntheticConfig d;
  c.seed = j.value("seed", d.seed);
  c.steps_per_day = j.value("steps_per_day", d.steps_per_day);
  c.base_load_kw = j.value("base_load_kw", d.base_load_kw);
  c.occupied_load_kw = j.value("occupied_load_kw", d.occupied_load_kw);
  c.event_rate = j.value("event_rate", d.event_rate);
  c.event_min_kw = j.value("event_min_kw", d.event_min_kw);
  c.event_max_kw = j.value("event_max_kw", d.event_max_kw);
  c.event_max_steps = j.value("event_max_steps", d.event_max_steps);
  c.noise_kw = j.value("noise_kw", d.noise_kw);
  c.p_initial_occupied = j.value("p_initial_occupied", d.p_initial_occupied);
  c.p_stay_vacant = j.value("p_stay_vacant", d.p_stay_vacant);
  c.p_stay_occupied = j.value("p_stay_occupied", d.p_stay_occupied);
}

}  // namespace pcmu
