#pragma once

// Orchestration: signal ingestion, campaigns on signal databases, replication
// batches with aggregation, reports and interactive sessions.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fragility/campaign.hpp"
#include "fragility/metrics.hpp"
#include "fragility/synthetic.hpp"

namespace fragility {

struct SignalRecord {
  std::int64_t id = 0;
  double im = 0.0;
  std::optional<double> edp;
  std::optional<int> outcome;
};

/// Header names of the mapped columns; empty optional names mean "absent".
struct ColumnMapping {
  std::string im = "im";
  std::string edp = "edp";
  std::string outcome = "outcome";
  std::string id = "id";
  char delimiter = ',';
};

/// Parses a delimited file with a header. Missing optional columns are allowed;
/// ids default to the 1-based data row number.
std::vector<SignalRecord> ingest_signals(const std::filesystem::path& path,
                                         const ColumnMapping& mapping = {});
std::vector<SignalRecord> ingest_signals(std::istream& in, const ColumnMapping& mapping = {});

/// outcome = 1 iff edp > threshold.
std::vector<SignalRecord> binarize(std::vector<SignalRecord> records, double threshold);

/// Records with outcomes as observations (error on a missing outcome).
Dataset to_dataset(const std::vector<SignalRecord>& records);

struct RunConfig {
  Method mode = Method::Doe;
  double gamma = 0.5;
  double delta = 0.5;
  int k0 = 2;
  int k_max = 100;
  std::optional<double> threshold_c;
  double q1 = 1e-3;
  double q2 = 0.9;
  double vi_threshold = 1e-3;
  double vp_threshold = 0.05;
  bool early_stop = false;
  int chain_length = 4000;
  double burn_in = 0.25;
  int thin = 3;
  int replications = 1;
  std::uint64_t seed = 0;
  std::vector<int> checkpoints;  // empty: every 10 up to k_max
  int reference_clusters = 0;    // 0: no reference curve, bounds from the pool's IM range
  int index_grid = 0;  // 0: index over the unused database IMs; n > 0: n-point log grid
  int threads = 0;     // 0: hardware concurrency

  void validate() const;
  MHConfig mh() const;
  std::vector<int> checkpoint_schedule() const;
};

/// Applies `key = value` lines ('#' starts a comment). Unknown keys are errors.
void apply_config(RunConfig& cfg, std::istream& in);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);
void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// Signal database: records drawn without replacement. The design index runs either
/// on the distinct unused database IMs (index_grid = 0) or on an index_grid-point
/// log-uniform grid over the pool's IM range; the nearest unused signal is then taken.
class DatabaseSource : public ExperimentSource {
 public:
  DatabaseSource(const std::vector<SignalRecord>& records, int index_grid, std::uint64_t campaign_seed);

  Acquired draw_initial() override;
  Acquired draw_standard() override;
  const CandidateSet& index_candidates() const override { return grid_mode_ ? grid_ : distinct_; }
  Acquired acquire(double a_target) override;

 private:
  Acquired take(std::size_t pool_index);
  Acquired take_uniform(std::mt19937_64& rng);

  std::vector<SignalRecord> pool_;  // sorted by IM, then id
  CandidateSet pool_set_;           // IMs with used flags, same order as pool_
  CandidateSet distinct_;           // distinct IMs, used once every record there is used
  std::vector<std::size_t> distinct_of_;  // pool index -> distinct index
  std::vector<int> remaining_;            // unused records per distinct IM
  bool grid_mode_ = false;
  CandidateSet grid_;
  std::mt19937_64 init_rng_;
  std::mt19937_64 standard_rng_;
};

/// Reference curve and metric bounds for a pool, when requested and available.
struct PoolReference {
  std::optional<ReferenceCurve> curve;
  MetricBounds bounds{};
};
PoolReference pool_reference(const std::vector<SignalRecord>& records, const RunConfig& cfg);

CampaignSettings campaign_settings(const std::vector<SignalRecord>& records, const RunConfig& cfg,
                                   const PoolReference& reference, std::uint64_t campaign_seed);

CampaignTrace run_campaign(const std::vector<SignalRecord>& records, const RunConfig& cfg);

/// Seed of replication `rep`.
std::uint64_t replication_seed(std::uint64_t master_seed, int rep);

struct MeanCI {
  double mean = 0.0;
  std::optional<double> half_width;  // 1.96 sd/√n, empty when n < 2
  int n = 0;
};
MeanCI mean_ci(const std::vector<double>& values);

struct StepAggregate {
  int k = 0;
  int reached = 0;  // replications whose campaign reached k
  double degeneracy_frequency = 0.0;
  std::optional<MeanCI> vi;
  std::optional<MeanCI> vp;
};

struct CheckpointAggregate {
  int k = 0;
  std::optional<MeanCI> bias;
  std::optional<MeanCI> error;
  std::optional<MeanCI> width;
  double degeneracy_frequency = 0.0;
};

struct AggregatedTables {
  std::string method;
  int replications = 0;
  double vi_threshold = 1e-3;
  double vp_threshold = 0.05;
  std::vector<StepAggregate> steps;  // k = 1 .. longest campaign
  std::vector<CheckpointAggregate> checkpoints;
};

/// Per-k means ordered by k; the result does not depend on the order of `traces`.
AggregatedTables aggregate(const std::vector<CampaignTrace>& traces, double vi_threshold,
                           double vp_threshold);

/// Runs `campaign(rep)` for rep = 0..n-1 on up to `threads` workers; results in rep order.
std::vector<CampaignTrace> run_replications(const std::function<CampaignTrace(int)>& campaign, int n_reps,
                                            int threads = 0);

std::vector<CampaignTrace> run_replications(const std::vector<SignalRecord>& records, const RunConfig& cfg);
std::vector<CampaignTrace> run_toy_replications(const ToyConfig& toy, Method method,
                                                const ToyRunOptions& options, int n_reps,
                                                std::uint64_t master_seed, int threads = 0);

/// Smallest k whose mean index is below the threshold.
std::optional<int> first_crossing_vi(const AggregatedTables& tables);
std::optional<int> first_crossing_vp(const AggregatedTables& tables);

void write_tables_json(std::ostream& os, const AggregatedTables& tables);
AggregatedTables read_tables_json(std::istream& in);

/// Writes steps.csv, checkpoints.csv and summary.txt into `dir`.
void report(const AggregatedTables& tables, const std::filesystem::path& dir);
std::string summary_text(const AggregatedTables& tables);

/// One JSON object per line: a header line, then one line per step in fixed field order.
void write_trace_jsonl(std::ostream& os, const CampaignTrace& trace);
void write_checkpoints_csv(std::ostream& os, const CampaignTrace& trace);

/// Human-in-the-loop design campaign persisted as an append-only JSON-lines file.
class InteractiveSession {
 public:
  struct Settings {
    PriorConfig prior{};
    double a_min = 0.0;
    double a_max = 0.0;
    int k0 = 2;
    int index_grid = 512;
    MHConfig mh = campaign_mh_defaults();
    std::uint64_t seed = 0;
  };

  struct Suggestion {
    double a = 0.0;
    std::optional<double> index_value;
    std::optional<double> vi;
    std::optional<double> vp;
    Degeneracy degeneracy = Degeneracy::Type1;
    int k = 0;  // observations so far
  };

  /// Creates the session file (error if it exists).
  static InteractiveSession create(const std::filesystem::path& path, const Settings& settings);
  /// Loads an existing session file.
  static InteractiveSession open(const std::filesystem::path& path);

  const Settings& settings() const { return settings_; }
  const Dataset& observations() const { return data_; }
  /// Next IM to test; deterministic given the persisted state.
  Suggestion suggest();
  /// Records the outcome at the current suggestion and returns the next one.
  Suggestion step(const std::string& outcome_token);

 private:
  InteractiveSession(std::filesystem::path path, Settings settings);
  PosteriorSample posterior_at(int k) const;
  std::vector<double> median_at(int k, const SimpsonGrid& grid);

  std::filesystem::path path_;
  Settings settings_;
  Dataset data_;
  std::vector<std::optional<double>> index_values_;  // index at the time each point was suggested
  std::map<int, std::vector<double>> median_cache_;
};

/// Parses "0" or "1"; any other token is an error.
int parse_outcome_token(const std::string& token);

}  // namespace fragility
