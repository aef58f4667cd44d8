#include "fragility/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "fragility/errors.hpp"
#include "fragility/rng.hpp"

namespace fragility {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Ingestion

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  std::string out = s.substr(b, e - b + 1);
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, delim)) out.push_back(trim(field));
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<long long> parse_int(const std::string& s) {
  if (s.empty()) return std::nullopt;
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string row_error(std::size_t row, const std::string& what) {
  return "row " + std::to_string(row) + ": " + what;
}

}  // namespace

std::vector<SignalRecord> ingest_signals(std::istream& in, const ColumnMapping& mapping) {
  std::string line;
  if (!std::getline(in, line)) throw DomainError("signal file is empty (header expected)");
  const auto header = split(line, mapping.delimiter);
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    if (name.empty()) return std::nullopt;
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto im_col = column(mapping.im);
  if (!im_col) throw DomainError("missing IM column '" + mapping.im + "'");
  const auto edp_col = column(mapping.edp);
  const auto outcome_col = column(mapping.outcome);
  const auto id_col = column(mapping.id);

  std::vector<SignalRecord> records;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split(line, mapping.delimiter);
    if (fields.size() != header.size()) {
      throw DomainError(row_error(row, "expected " + std::to_string(header.size()) + " fields, found " +
                                           std::to_string(fields.size())));
    }
    SignalRecord r;
    r.id = static_cast<std::int64_t>(row);
    const auto im = parse_double(fields[*im_col]);
    if (!im) throw DomainError(row_error(row, "invalid IM '" + fields[*im_col] + "'"));
    if (!(*im > 0.0)) throw DomainError(row_error(row, "IM must be positive, got " + fields[*im_col]));
    r.im = *im;
    if (edp_col && !fields[*edp_col].empty()) {
      const auto edp = parse_double(fields[*edp_col]);
      if (!edp) throw DomainError(row_error(row, "invalid EDP '" + fields[*edp_col] + "'"));
      if (*edp < 0.0) throw DomainError(row_error(row, "EDP must be nonnegative"));
      r.edp = *edp;
    }
    if (outcome_col && !fields[*outcome_col].empty()) {
      const auto& tok = fields[*outcome_col];
      if (tok != "0" && tok != "1") throw DomainError(row_error(row, "outcome must be 0 or 1, got '" + tok + "'"));
      r.outcome = tok == "1" ? 1 : 0;
    }
    if (id_col) {
      const auto id = parse_int(fields[*id_col]);
      if (!id) throw DomainError(row_error(row, "invalid id '" + fields[*id_col] + "'"));
      r.id = *id;
    }
    records.push_back(r);
  }
  return records;
}

std::vector<SignalRecord> ingest_signals(const std::filesystem::path& path, const ColumnMapping& mapping) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot read signal file " + path.string());
  return ingest_signals(in, mapping);
}

std::vector<SignalRecord> binarize(std::vector<SignalRecord> records, double threshold) {
  if (!(threshold > 0.0) || !std::isfinite(threshold)) throw DomainError("threshold must be positive");
  for (auto& r : records) {
    if (!r.edp) throw DomainError("record " + std::to_string(r.id) + " has no EDP to binarize");
    r.outcome = *r.edp > threshold ? 1 : 0;
  }
  return records;
}

Dataset to_dataset(const std::vector<SignalRecord>& records) {
  Dataset data;
  data.reserve(records.size());
  for (const auto& r : records) {
    if (!r.outcome) throw DomainError("record " + std::to_string(r.id) + " has no outcome");
    data.push_back({r.im, *r.outcome});
  }
  return data;
}

// ---------------------------------------------------------------------------
// Configuration

void RunConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 2.0)) throw DomainError("gamma must lie in [0,2)");
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0,1)");
  if (k0 < 1) throw DomainError("k0 must be at least 1");
  if (k_max <= k0) throw DomainError("k_max must exceed k0");
  if (threshold_c && !(*threshold_c > 0.0)) throw DomainError("threshold C must be positive");
  if (!(q1 > 0.0 && q1 < q2 && q2 < 1.0)) throw DomainError("metric bounds need 0 < q1 < q2 < 1");
  if (!(vi_threshold > 0.0) || !(vp_threshold > 0.0)) throw DomainError("stopping thresholds must be positive");
  if (replications < 1) throw DomainError("replications must be at least 1");
  if (reference_clusters < 0) throw DomainError("reference clusters must be nonnegative");
  if (index_grid == 1 || index_grid < 0) throw DomainError("index grid needs 0 (database IMs) or at least 2 points");
  if (threads < 0) throw DomainError("threads must be nonnegative");
  mh().validate();
}

MHConfig RunConfig::mh() const {
  MHConfig m = campaign_mh_defaults();
  m.chain_length = chain_length;
  m.burn_in = burn_in;
  m.thin = thin;
  return m;
}

std::vector<int> RunConfig::checkpoint_schedule() const {
  return checkpoints.empty() ? default_checkpoints(k_max) : checkpoints;
}

namespace {

double to_double(const std::string& key, const std::string& v) {
  const auto d = parse_double(v);
  if (!d) throw DomainError("config key '" + key + "': not a number '" + v + "'");
  return *d;
}

int to_int(const std::string& key, const std::string& v) {
  const auto i = parse_int(v);
  if (!i || *i < std::numeric_limits<int>::min() || *i > std::numeric_limits<int>::max()) {
    throw DomainError("config key '" + key + "': not an integer '" + v + "'");
  }
  return static_cast<int>(*i);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw DomainError("config key '" + key + "': not a boolean '" + v + "'");
}

}  // namespace

void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "mode") {
    cfg.mode = method_from_string(value);
  } else if (key == "gamma") {
    cfg.gamma = to_double(key, value);
  } else if (key == "delta") {
    cfg.delta = to_double(key, value);
  } else if (key == "k0") {
    cfg.k0 = to_int(key, value);
  } else if (key == "k_max") {
    cfg.k_max = to_int(key, value);
  } else if (key == "threshold_c") {
    cfg.threshold_c = to_double(key, value);
  } else if (key == "q1") {
    cfg.q1 = to_double(key, value);
  } else if (key == "q2") {
    cfg.q2 = to_double(key, value);
  } else if (key == "vi_threshold") {
    cfg.vi_threshold = to_double(key, value);
  } else if (key == "vp_threshold") {
    cfg.vp_threshold = to_double(key, value);
  } else if (key == "early_stop") {
    cfg.early_stop = to_bool(key, value);
  } else if (key == "chain_length") {
    cfg.chain_length = to_int(key, value);
  } else if (key == "burn_in") {
    cfg.burn_in = to_double(key, value);
  } else if (key == "thin") {
    cfg.thin = to_int(key, value);
  } else if (key == "replications") {
    cfg.replications = to_int(key, value);
  } else if (key == "seed") {
    const auto s = parse_int(value);
    if (!s || *s < 0) throw DomainError("config key 'seed': not a nonnegative integer '" + value + "'");
    cfg.seed = static_cast<std::uint64_t>(*s);
  } else if (key == "checkpoints") {
    cfg.checkpoints.clear();
    for (const auto& tok : split(value, ',')) cfg.checkpoints.push_back(to_int(key, tok));
  } else if (key == "reference_clusters") {
    cfg.reference_clusters = to_int(key, value);
  } else if (key == "index_grid") {
    cfg.index_grid = to_int(key, value);
  } else if (key == "threads") {
    cfg.threads = to_int(key, value);
  } else {
    throw DomainError("unknown config key '" + key + "'");
  }
}

void apply_config(RunConfig& cfg, std::istream& in) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DomainError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    apply_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot read config file " + path.string());
  apply_config(cfg, in);
}

// ---------------------------------------------------------------------------
// Signal database campaigns

DatabaseSource::DatabaseSource(const std::vector<SignalRecord>& records, int index_grid,
                               std::uint64_t campaign_seed)
    : pool_(records),
      init_rng_(mix_seed(campaign_seed, {stream::kInitial})),
      standard_rng_(mix_seed(campaign_seed, {stream::kStandard})) {
  if (pool_.empty()) throw DomainError("signal pool is empty");
  for (const auto& r : pool_) {
    if (!r.outcome) throw DomainError("record " + std::to_string(r.id) + " has no outcome");
    if (!(r.im > 0.0)) throw DomainError("record " + std::to_string(r.id) + " has a non-positive IM");
  }
  std::sort(pool_.begin(), pool_.end(), [](const SignalRecord& x, const SignalRecord& y) {
    return x.im != y.im ? x.im < y.im : x.id < y.id;
  });
  for (const auto& r : pool_) pool_set_.values.push_back(r.im);
  pool_set_.used.assign(pool_.size(), false);
  if (index_grid < 0 || index_grid == 1) throw DomainError("index grid needs 0 (database IMs) or at least 2 points");
  distinct_of_.resize(pool_.size());
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    if (i == 0 || pool_[i].im != pool_[i - 1].im) {
      distinct_.values.push_back(pool_[i].im);
      remaining_.push_back(0);
    }
    distinct_of_[i] = distinct_.values.size() - 1;
    ++remaining_.back();
  }
  distinct_.used.assign(distinct_.values.size(), false);
  grid_mode_ = index_grid > 0;
  if (grid_mode_) {
    if (!(pool_.front().im < pool_.back().im)) throw DomainError("signal pool IMs have no spread");
    grid_ = CandidateSet::from_values(log_uniform_grid(pool_.front().im, pool_.back().im, index_grid));
  }
}

Acquired DatabaseSource::take(std::size_t i) {
  pool_set_.used[i] = true;
  const std::size_t d = distinct_of_[i];
  if (--remaining_[d] == 0) distinct_.used[d] = true;
  Acquired e;
  e.id = pool_[i].id;
  e.a = pool_[i].im;
  e.z = *pool_[i].outcome;
  return e;
}

Acquired DatabaseSource::take_uniform(std::mt19937_64& rng) {
  const std::size_t n_unused = pool_set_.unused_count();
  if (n_unused == 0) throw ExhaustionError("signal database is exhausted");
  std::uniform_int_distribution<std::size_t> pick(0, n_unused - 1);
  std::size_t target = pick(rng);
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    if (pool_set_.used[i]) continue;
    if (target-- == 0) return take(i);
  }
  throw ExhaustionError("signal database is exhausted");
}

Acquired DatabaseSource::draw_initial() { return take_uniform(init_rng_); }
Acquired DatabaseSource::draw_standard() { return take_uniform(standard_rng_); }

Acquired DatabaseSource::acquire(double a_target) { return take(select_signal(pool_set_, a_target)); }

PoolReference pool_reference(const std::vector<SignalRecord>& records, const RunConfig& cfg) {
  PoolReference ref;
  if (records.empty()) throw DomainError("signal pool is empty");
  if (cfg.reference_clusters > 0) {
    const Dataset data = to_dataset(records);
    ref.curve = nonparametric_reference(data, cfg.reference_clusters);
    ref.bounds = resolve_bounds(*ref.curve, cfg.q1, cfg.q2);
  } else {
    const auto [lo, hi] = std::minmax_element(records.begin(), records.end(),
                                              [](const auto& x, const auto& y) { return x.im < y.im; });
    ref.bounds.q1 = cfg.q1;
    ref.bounds.q2 = cfg.q2;
    ref.bounds.a_min = lo->im;
    ref.bounds.a_max = hi->im;
  }
  return ref;
}

CampaignSettings campaign_settings(const std::vector<SignalRecord>& records, const RunConfig& cfg,
                                   const PoolReference& reference, std::uint64_t campaign_seed) {
  std::vector<double> ims;
  ims.reserve(records.size());
  for (const auto& r : records) ims.push_back(r.im);
  CampaignSettings s;
  s.method = cfg.mode;
  s.prior.gamma = cfg.gamma;
  s.prior.delta = cfg.delta;
  s.prior.im_stats = fit_lognormal_im(ims);
  s.k0 = cfg.k0;
  s.k_max = cfg.k_max;
  s.mh = cfg.mh();
  s.checkpoints = cfg.checkpoint_schedule();
  s.bounds = reference.bounds;
  if (reference.curve) {
    const ReferenceCurve curve = *reference.curve;
    s.reference = [curve](double a) { return curve(a); };
  }
  s.vi_threshold = cfg.vi_threshold;
  s.vp_threshold = cfg.vp_threshold;
  s.early_stop = cfg.early_stop;
  s.seed = campaign_seed;
  return s;
}

namespace {

void check_pool_size(const std::vector<SignalRecord>& records, const RunConfig& cfg) {
  if (records.size() < static_cast<std::size_t>(cfg.k_max)) {
    throw ExhaustionError("signal pool has " + std::to_string(records.size()) + " records, k_max is " +
                          std::to_string(cfg.k_max));
  }
}

}  // namespace

CampaignTrace run_campaign(const std::vector<SignalRecord>& records, const RunConfig& cfg) {
  cfg.validate();
  check_pool_size(records, cfg);
  const PoolReference ref = pool_reference(records, cfg);
  DatabaseSource source(records, cfg.index_grid, cfg.seed);
  return run_campaign(source, campaign_settings(records, cfg, ref, cfg.seed));
}

// ---------------------------------------------------------------------------
// Replications

std::uint64_t replication_seed(std::uint64_t master_seed, int rep) {
  return mix_seed(master_seed, {static_cast<std::uint64_t>(rep)});
}

MeanCI mean_ci(const std::vector<double>& values) {
  MeanCI out;
  out.n = static_cast<int>(values.size());
  if (values.empty()) return out;
  // Sorted summation makes the result independent of the input order.
  std::vector<double> v(values);
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() >= 2) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.half_width = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return out;
}

AggregatedTables aggregate(const std::vector<CampaignTrace>& traces, double vi_threshold,
                           double vp_threshold) {
  AggregatedTables t;
  t.replications = static_cast<int>(traces.size());
  t.vi_threshold = vi_threshold;
  t.vp_threshold = vp_threshold;
  if (traces.empty()) return t;
  std::set<std::string> methods;
  for (const auto& tr : traces) methods.insert(to_string(tr.method));
  t.method = methods.size() == 1 ? *methods.begin() : "mixed";

  std::size_t max_len = 0;
  for (const auto& tr : traces) max_len = std::max(max_len, tr.initial.size() + tr.steps.size());
  std::vector<int> reached(max_len + 1, 0), degenerate(max_len + 1, 0);
  std::vector<std::vector<double>> vi(max_len + 1), vp(max_len + 1);
  std::map<int, std::vector<double>> bias, error, width;
  std::map<int, std::pair<int, int>> cp_degenerate;  // k -> (degenerate, total)
  for (const auto& tr : traces) {
    const Dataset data = tr.dataset();
    for (std::size_t k = 1; k <= data.size(); ++k) {
      ++reached[k];
      if (is_degenerate(classify_degeneracy(std::span<const Observation>(data.data(), k)))) ++degenerate[k];
    }
    for (const auto& s : tr.steps) {
      if (s.vi) vi[static_cast<std::size_t>(s.k)].push_back(*s.vi);
      if (s.vp) vp[static_cast<std::size_t>(s.k)].push_back(*s.vp);
    }
    for (const auto& c : tr.checkpoints) {
      auto& d = cp_degenerate[c.k];
      d.first += is_degenerate(c.degeneracy) ? 1 : 0;
      d.second += 1;
      if (c.metrics) {
        bias[c.k].push_back(c.metrics->bias);
        error[c.k].push_back(c.metrics->error);
        width[c.k].push_back(c.metrics->width);
      }
    }
  }
  for (std::size_t k = 1; k <= max_len; ++k) {
    StepAggregate row;
    row.k = static_cast<int>(k);
    row.reached = reached[k];
    row.degeneracy_frequency = reached[k] > 0 ? static_cast<double>(degenerate[k]) / reached[k] : 0.0;
    if (!vi[k].empty()) row.vi = mean_ci(vi[k]);
    if (!vp[k].empty()) row.vp = mean_ci(vp[k]);
    t.steps.push_back(row);
  }
  for (const auto& [k, d] : cp_degenerate) {
    CheckpointAggregate row;
    row.k = k;
    row.degeneracy_frequency = static_cast<double>(d.first) / d.second;
    if (bias.count(k)) {
      row.bias = mean_ci(bias[k]);
      row.error = mean_ci(error[k]);
      row.width = mean_ci(width[k]);
    }
    t.checkpoints.push_back(row);
  }
  return t;
}

std::vector<CampaignTrace> run_replications(const std::function<CampaignTrace(int)>& campaign, int n_reps,
                                            int threads) {
  if (n_reps < 1) throw DomainError("replications must be at least 1");
  int workers = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, n_reps);
  std::vector<std::optional<CampaignTrace>> results(static_cast<std::size_t>(n_reps));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_reps));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int rep = next++; rep < n_reps; rep = next++) {
      try {
        results[static_cast<std::size_t>(rep)] = campaign(rep);
      } catch (...) {
        errors[static_cast<std::size_t>(rep)] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<CampaignTrace> out;
  out.reserve(results.size());
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

std::vector<CampaignTrace> run_replications(const std::vector<SignalRecord>& records, const RunConfig& cfg) {
  cfg.validate();
  check_pool_size(records, cfg);
  const PoolReference ref = pool_reference(records, cfg);
  return run_replications(
      [&](int rep) {
        const std::uint64_t seed = replication_seed(cfg.seed, rep);
        DatabaseSource source(records, cfg.index_grid, seed);
        return run_campaign(source, campaign_settings(records, cfg, ref, seed));
      },
      cfg.replications, cfg.threads);
}

std::vector<CampaignTrace> run_toy_replications(const ToyConfig& toy, Method method,
                                                const ToyRunOptions& options, int n_reps,
                                                std::uint64_t master_seed, int threads) {
  ToyRunOptions opts = options;
  if (!opts.im_stats) opts.im_stats = toy_im_stats(toy);
  return run_replications(
      [&](int rep) { return run_toy_campaign(toy, method, opts, replication_seed(master_seed, rep)); },
      n_reps, threads);
}

std::optional<int> first_crossing_vi(const AggregatedTables& tables) {
  for (const auto& row : tables.steps) {
    if (row.vi && row.vi->mean < tables.vi_threshold) return row.k;
  }
  return std::nullopt;
}

std::optional<int> first_crossing_vp(const AggregatedTables& tables) {
  for (const auto& row : tables.steps) {
    if (row.vp && row.vp->mean < tables.vp_threshold) return row.k;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Serialization and reports

namespace {

ordered_json to_json(const std::optional<MeanCI>& m) {
  if (!m) return nullptr;
  ordered_json j;
  j["mean"] = m->mean;
  j["half_width"] = m->half_width ? ordered_json(*m->half_width) : ordered_json(nullptr);
  j["n"] = m->n;
  return j;
}

std::optional<MeanCI> mean_ci_from_json(const ordered_json& j) {
  if (j.is_null()) return std::nullopt;
  MeanCI m;
  m.mean = j.at("mean").get<double>();
  if (!j.at("half_width").is_null()) m.half_width = j.at("half_width").get<double>();
  m.n = j.at("n").get<int>();
  return m;
}

ordered_json opt(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

void write_ci_columns(std::ostream& os, const std::optional<MeanCI>& m) {
  if (!m) {
    os << ",,";
    return;
  }
  os << fmt(m->mean) << ',' << fmt(m->half_width) << ',' << m->n;
}

std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw DomainError("cannot write " + p.string());
  return out;
}

}  // namespace

void write_tables_json(std::ostream& os, const AggregatedTables& tables) {
  ordered_json j;
  j["method"] = tables.method;
  j["replications"] = tables.replications;
  j["vi_threshold"] = tables.vi_threshold;
  j["vp_threshold"] = tables.vp_threshold;
  j["steps"] = ordered_json::array();
  for (const auto& s : tables.steps) {
    ordered_json r;
    r["k"] = s.k;
    r["reached"] = s.reached;
    r["degeneracy_frequency"] = s.degeneracy_frequency;
    r["vi"] = to_json(s.vi);
    r["vp"] = to_json(s.vp);
    j["steps"].push_back(r);
  }
  j["checkpoints"] = ordered_json::array();
  for (const auto& c : tables.checkpoints) {
    ordered_json r;
    r["k"] = c.k;
    r["degeneracy_frequency"] = c.degeneracy_frequency;
    r["bias"] = to_json(c.bias);
    r["error"] = to_json(c.error);
    r["width"] = to_json(c.width);
    j["checkpoints"].push_back(r);
  }
  os << j.dump(1) << '\n';
}

AggregatedTables read_tables_json(std::istream& in) {
  ordered_json j;
  try {
    in >> j;
    AggregatedTables t;
    t.method = j.at("method").get<std::string>();
    t.replications = j.at("replications").get<int>();
    t.vi_threshold = j.at("vi_threshold").get<double>();
    t.vp_threshold = j.at("vp_threshold").get<double>();
    for (const auto& r : j.at("steps")) {
      StepAggregate s;
      s.k = r.at("k").get<int>();
      s.reached = r.at("reached").get<int>();
      s.degeneracy_frequency = r.at("degeneracy_frequency").get<double>();
      s.vi = mean_ci_from_json(r.at("vi"));
      s.vp = mean_ci_from_json(r.at("vp"));
      t.steps.push_back(s);
    }
    for (const auto& r : j.at("checkpoints")) {
      CheckpointAggregate c;
      c.k = r.at("k").get<int>();
      c.degeneracy_frequency = r.at("degeneracy_frequency").get<double>();
      c.bias = mean_ci_from_json(r.at("bias"));
      c.error = mean_ci_from_json(r.at("error"));
      c.width = mean_ci_from_json(r.at("width"));
      t.checkpoints.push_back(c);
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("malformed tables file: ") + e.what());
  }
}

std::string summary_text(const AggregatedTables& tables) {
  std::ostringstream os;
  os << "method: " << tables.method << '\n';
  os << "replications: " << tables.replications << '\n';
  if (tables.replications < 2) os << "note: confidence intervals need at least 2 replications\n";
  const CheckpointAggregate* last = nullptr;
  for (const auto& c : tables.checkpoints) {
    if (c.bias) last = &c;
  }
  if (tables.checkpoints.empty()) {
    os << "no checkpoints\n";
  } else if (last == nullptr) {
    os << "checkpoints carry no metrics (no reference curve)\n";
  } else {
    auto line = [&](const char* name, const std::optional<MeanCI>& m) {
      os << "final " << name << " (k=" << last->k << "): " << fmt(m->mean);
      if (m->half_width) os << " +/- " << fmt(*m->half_width);
      os << '\n';
    };
    line("bias", last->bias);
    line("quadratic error", last->error);
    line("credibility width", last->width);
  }
  const auto vi = first_crossing_vi(tables);
  const auto vp = first_crossing_vp(tables);
  os << "mean VI below " << fmt(tables.vi_threshold) << " first at k: " << (vi ? std::to_string(*vi) : "never")
     << '\n';
  os << "mean VP below " << fmt(tables.vp_threshold) << " first at k: " << (vp ? std::to_string(*vp) : "never")
     << '\n';
  os << "degeneracy frequency:";
  for (const auto& c : tables.checkpoints) os << " k=" << c.k << ':' << fmt(c.degeneracy_frequency);
  if (tables.checkpoints.empty()) {
    for (const auto& s : tables.steps) {
      if (s.k % 10 == 0) os << " k=" << s.k << ':' << fmt(s.degeneracy_frequency);
    }
  }
  os << '\n';
  return os.str();
}

void report(const AggregatedTables& tables, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DomainError("cannot create output directory " + dir.string() + ": " + ec.message());
  {
    auto out = open_output(dir / "steps.csv");
    out << "k,reached,degeneracy_frequency,vi_mean,vi_half_width,vi_n,vp_mean,vp_half_width,vp_n\n";
    for (const auto& s : tables.steps) {
      out << s.k << ',' << s.reached << ',' << fmt(s.degeneracy_frequency) << ',';
      write_ci_columns(out, s.vi);
      out << ',';
      write_ci_columns(out, s.vp);
      out << '\n';
    }
  }
  {
    auto out = open_output(dir / "checkpoints.csv");
    out << "k,degeneracy_frequency,bias_mean,bias_half_width,bias_n,error_mean,error_half_width,error_n,"
           "width_mean,width_half_width,width_n\n";
    for (const auto& c : tables.checkpoints) {
      out << c.k << ',' << fmt(c.degeneracy_frequency) << ',';
      write_ci_columns(out, c.bias);
      out << ',';
      write_ci_columns(out, c.error);
      out << ',';
      write_ci_columns(out, c.width);
      out << '\n';
    }
  }
  auto out = open_output(dir / "summary.txt");
  out << summary_text(tables);
  if (!out) throw DomainError("cannot write " + (dir / "summary.txt").string());
}

void write_trace_jsonl(std::ostream& os, const CampaignTrace& trace) {
  ordered_json head;
  head["type"] = "campaign";
  head["method"] = to_string(trace.method);
  head["seed"] = trace.seed;
  head["stopped_early"] = trace.stopped_early;
  head["initial"] = ordered_json::array();
  for (const auto& e : trace.initial) {
    ordered_json r;
    r["id"] = e.id;
    r["a"] = e.a;
    r["z"] = e.z;
    head["initial"].push_back(r);
  }
  os << head.dump() << '\n';
  for (const auto& s : trace.steps) {
    ordered_json r;
    r["type"] = "step";
    r["k"] = s.k;
    r["signal_id"] = s.signal_id;
    r["a"] = s.a;
    r["z"] = s.z;
    r["clamped"] = s.clamped;
    r["degeneracy"] = std::string(to_string(s.degeneracy));
    r["index_value"] = opt(s.index_value);
    r["vi"] = opt(s.vi);
    r["vp"] = opt(s.vp);
    r["acceptance_rate"] = opt(s.acceptance_rate);
    os << r.dump() << '\n';
  }
}

void write_checkpoints_csv(std::ostream& os, const CampaignTrace& trace) {
  os << "k,degeneracy,bias,error,width\n";
  for (const auto& c : trace.checkpoints) {
    os << c.k << ',' << to_string(c.degeneracy) << ',';
    if (c.metrics) os << fmt(c.metrics->bias) << ',' << fmt(c.metrics->error) << ',' << fmt(c.metrics->width);
    else os << ",,";
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Interactive sessions

int parse_outcome_token(const std::string& token) {
  const std::string t = trim(token);
  if (t == "0") return 0;
  if (t == "1") return 1;
  throw DomainError("invalid outcome '" + t + "' (expected 0 or 1)");
}

InteractiveSession::InteractiveSession(std::filesystem::path path, Settings settings)
    : path_(std::move(path)), settings_(std::move(settings)) {}

namespace {

void validate_session(const InteractiveSession::Settings& s) {
  s.prior.validate();
  s.mh.validate();
  if (!(s.a_min > 0.0 && s.a_min < s.a_max)) throw DomainError("session domain needs 0 < a_min < a_max");
  if (s.k0 < 1) throw DomainError("k0 must be at least 1");
  if (s.index_grid < 2) throw DomainError("index grid needs at least 2 points");
}

}  // namespace

InteractiveSession InteractiveSession::create(const std::filesystem::path& path, const Settings& settings) {
  validate_session(settings);
  if (std::filesystem::exists(path)) throw DomainError("session file already exists: " + path.string());
  ordered_json j;
  j["type"] = "session";
  j["version"] = 1;
  j["gamma"] = settings.prior.gamma;
  j["delta"] = settings.prior.delta;
  j["im_mu"] = settings.prior.im_stats.mu;
  j["im_sigma"] = settings.prior.im_stats.sigma;
  j["a_min"] = settings.a_min;
  j["a_max"] = settings.a_max;
  j["k0"] = settings.k0;
  j["index_grid"] = settings.index_grid;
  j["chain_length"] = settings.mh.chain_length;
  j["burn_in"] = settings.mh.burn_in;
  j["thin"] = settings.mh.thin;
  j["seed"] = settings.seed;
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write session file " + path.string());
  out << j.dump() << '\n';
  if (!out) throw DomainError("cannot write session file " + path.string());
  return InteractiveSession(path, settings);
}

InteractiveSession InteractiveSession::open(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot read session file " + path.string());
  std::string line;
  int line_no = 0;
  std::optional<InteractiveSession> session;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      const auto j = ordered_json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (type == "session") {
        if (session) throw DomainError("duplicate session header");
        Settings s;
        s.prior.gamma = j.at("gamma").get<double>();
        s.prior.delta = j.at("delta").get<double>();
        s.prior.im_stats = {j.at("im_mu").get<double>(), j.at("im_sigma").get<double>()};
        s.a_min = j.at("a_min").get<double>();
        s.a_max = j.at("a_max").get<double>();
        s.k0 = j.at("k0").get<int>();
        s.index_grid = j.at("index_grid").get<int>();
        s.mh.chain_length = j.at("chain_length").get<int>();
        s.mh.burn_in = j.at("burn_in").get<double>();
        s.mh.thin = j.at("thin").get<int>();
        s.seed = j.at("seed").get<std::uint64_t>();
        validate_session(s);
        session.emplace(InteractiveSession(path, s));
      } else if (type == "observation") {
        if (!session) throw DomainError("observation before the session header");
        const Observation obs{j.at("a").get<double>(), j.at("z").get<int>()};
        obs.validate();
        session->data_.push_back(obs);
        const auto& iv = j.at("index_value");
        session->index_values_.push_back(iv.is_null() ? std::nullopt : std::optional<double>(iv.get<double>()));
      } else {
        throw DomainError("unknown record type '" + type + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DomainError("session file line " + std::to_string(line_no) + ": " + e.what());
  } catch (const DomainError& e) {
    throw DomainError("session file line " + std::to_string(line_no) + ": " + e.what());
  }
  if (!session) throw DomainError("session file has no header");
  return std::move(*session);
}

PosteriorSample InteractiveSession::posterior_at(int k) const {
  MHConfig mh = settings_.mh;
  mh.seed = mix_seed(settings_.seed, {stream::kMcmc, static_cast<std::uint64_t>(k)});
  return sample_posterior(std::span<const Observation>(data_.data(), static_cast<std::size_t>(k)),
                          settings_.prior, mh);
}

std::vector<double> InteractiveSession::median_at(int k, const SimpsonGrid& grid) {
  auto it = median_cache_.find(k);
  if (it == median_cache_.end()) it = median_cache_.emplace(k, median_curve(posterior_at(k), grid)).first;
  return it->second;
}

InteractiveSession::Suggestion InteractiveSession::suggest() {
  Suggestion s;
  const int k = static_cast<int>(data_.size());
  s.k = k;
  s.degeneracy = classify_degeneracy(data_);
  if (k < settings_.k0) {
    // The (k+1)-th draw of the initial stream, log-uniform on the domain.
    std::mt19937_64 rng(mix_seed(settings_.seed, {stream::kInitial}));
    std::uniform_real_distribution<double> unif(std::log(settings_.a_min), std::log(settings_.a_max));
    double x = 0.0;
    for (int i = 0; i <= k; ++i) x = unif(rng);
    s.a = std::exp(x);
    return s;
  }
  const PosteriorSample post = posterior_at(k);
  CandidateSet grid = CandidateSet::from_values(
      log_uniform_grid(settings_.a_min, settings_.a_max, settings_.index_grid));
  const Selection sel = select_next(grid, post.draws, settings_.prior.delta);
  s.a = sel.a;
  s.index_value = sel.index_value;
  if (!index_values_.empty() && index_values_.back() && *index_values_.back() != 0.0) {
    s.vi = std::abs(sel.index_value - *index_values_.back()) / std::abs(*index_values_.back());
  }
  // Same availability as in a campaign: from the second completed selection.
  if (k - 1 >= settings_.k0 + 1) {
    const SimpsonGrid metric_grid(settings_.a_min, settings_.a_max);
    median_cache_[k] = median_curve(post, metric_grid);
    s.vp = stopping_vp(median_at(k - 1, metric_grid), median_cache_[k], metric_grid);
  }
  return s;
}

InteractiveSession::Suggestion InteractiveSession::step(const std::string& outcome_token) {
  const int z = parse_outcome_token(outcome_token);
  const Suggestion current = suggest();
  ordered_json j;
  j["type"] = "observation";
  j["k"] = current.k + 1;
  j["a"] = current.a;
  j["z"] = z;
  j["index_value"] = opt(current.index_value);
  std::ofstream out(path_, std::ios::app);
  if (!out) throw DomainError("cannot append to session file " + path_.string());
  out << j.dump() << '\n';
  out.flush();
  if (!out) throw DomainError("cannot append to session file " + path_.string());
  data_.push_back({current.a, z});
  index_values_.push_back(current.index_value);
  return suggest();
}

}  // namespace fragility
