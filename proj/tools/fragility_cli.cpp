// Command-line front end: fit, reference, campaign, replicate, toy, report.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fragility/errors.hpp"
#include "fragility/harness.hpp"
#include "fragility/metrics.hpp"
#include "fragility/posterior.hpp"
#include "fragility/synthetic.hpp"

namespace fs = std::filesystem;
using namespace fragility;
using ordered_json = nlohmann::ordered_json;

namespace {

struct InputOptions {
  std::string path;
  ColumnMapping columns;
  std::string delimiter = ",";
  std::optional<double> threshold;
  std::optional<double> threshold_quantile;

  void add(CLI::App* app, bool required) {
    auto* opt = app->add_option("-i,--input", path, "Delimited signal file with a header");
    if (required) opt->required();
    app->add_option("--im-col", columns.im, "IM column name")->capture_default_str();
    app->add_option("--edp-col", columns.edp, "EDP column name")->capture_default_str();
    app->add_option("--outcome-col", columns.outcome, "Outcome column name")->capture_default_str();
    app->add_option("--id-col", columns.id, "Id column name")->capture_default_str();
    app->add_option("--delimiter", delimiter, "Field delimiter")->capture_default_str();
    app->add_option("--threshold", threshold, "Failure when EDP > threshold");
    app->add_option("--threshold-quantile", threshold_quantile,
                    "Failure threshold at this sample quantile of the EDP");
  }

  std::vector<SignalRecord> load() const {
    if (delimiter.size() != 1) throw DomainError("delimiter must be a single character");
    ColumnMapping m = columns;
    m.delimiter = delimiter[0];
    auto records = ingest_signals(fs::path(path), m);
    if (threshold && threshold_quantile) throw DomainError("give --threshold or --threshold-quantile, not both");
    if (threshold_quantile) {
      std::vector<double> edp;
      for (const auto& r : records) {
        if (!r.edp) throw DomainError("record " + std::to_string(r.id) + " has no EDP");
        edp.push_back(*r.edp);
      }
      std::sort(edp.begin(), edp.end());
      if (!(*threshold_quantile > 0.0 && *threshold_quantile < 1.0)) {
        throw DomainError("threshold quantile must lie in (0,1)");
      }
      return binarize(std::move(records), sorted_quantile(edp, *threshold_quantile));
    }
    if (threshold) return binarize(std::move(records), *threshold);
    return records;
  }
};

// RunConfig flags, applied after the config file so that they override it.
struct RunOptions {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, std::string>> flags{
      {"mode", "standard or doe"},
      {"gamma", "prior exponent γ"},
      {"delta", "divergence order δ"},
      {"k0", "initial sample size"},
      {"k_max", "final sample size"},
      {"threshold_c", "EDP failure threshold"},
      {"q1", "lower metric bound quantile"},
      {"q2", "upper metric bound quantile"},
      {"vi_threshold", "stopping threshold on VI"},
      {"vp_threshold", "stopping threshold on VP"},
      {"early_stop", "stop when both indices are below threshold"},
      {"chain_length", "MCMC chain length per step"},
      {"burn_in", "discarded chain fraction"},
      {"thin", "chain thinning"},
      {"replications", "number of replications"},
      {"seed", "master seed"},
      {"checkpoints", "comma-separated k values"},
      {"reference_clusters", "K-means clusters of the reference curve (0: none)"},
      {"index_grid", "points of a log grid for the index (0: database IMs)"},
      {"threads", "worker threads (0: all cores)"},
  };

  void add(CLI::App* app, const std::vector<std::string>& keys) {
    app->add_option("-c,--config", config_path, "key = value configuration file");
    for (const auto& [key, help] : flags) {
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) continue;
      std::string flag = key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      app->add_option("--" + flag, values[key], help);
    }
  }

  RunConfig build(RunConfig cfg = {}) const {
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    for (const auto& [key, help] : flags) {
      const auto it = values.find(key);
      if (it != values.end() && !it->second.empty()) apply_config_value(cfg, key, it->second);
    }
    cfg.validate();
    return cfg;
  }
};

const std::vector<std::string> kCampaignKeys{
    "mode", "gamma", "delta", "k0", "k_max", "threshold_c", "q1", "q2", "vi_threshold", "vp_threshold",
    "early_stop", "chain_length", "burn_in", "thin", "seed", "checkpoints", "reference_clusters", "index_grid"};

std::ofstream open_file(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw DomainError("cannot write " + p.string());
  return out;
}

std::vector<SignalRecord> apply_threshold(std::vector<SignalRecord> records, const RunConfig& cfg) {
  if (cfg.threshold_c) return binarize(std::move(records), *cfg.threshold_c);
  return records;
}

// ---------------------------------------------------------------------------

int cmd_fit(const InputOptions& input, double gamma, double delta, int chain_length, double burn_in, int thin,
            std::uint64_t seed, double level, int points, const std::string& out_dir) {
  const auto records = input.load();
  const Dataset data = to_dataset(records);
  std::vector<double> ims;
  for (const auto& o : data) ims.push_back(o.im);
  PriorConfig prior;
  prior.gamma = gamma;
  prior.delta = delta;
  prior.im_stats = fit_lognormal_im(ims);
  MHConfig mh;
  mh.chain_length = chain_length;
  mh.burn_in = burn_in;
  mh.thin = thin;
  mh.seed = seed;

  ordered_json summary;
  summary["observations"] = data.size();
  const Degeneracy deg = classify_degeneracy(data);
  summary["degeneracy"] = std::string(to_string(deg));
  if (!is_degenerate(deg)) {
    const Theta mle = mle_fit(data);
    summary["mle"] = {{"alpha", mle.alpha}, {"beta", mle.beta}};
  } else {
    summary["mle"] = nullptr;
  }
  const PosteriorSample post = sample_posterior(data, prior, mh);
  double la = 0.0, b = 0.0;
  for (const auto& t : post.draws) {
    la += std::log(t.alpha);
    b += t.beta;
  }
  summary["posterior"] = {{"draws", post.draws.size()},
                          {"acceptance_rate", post.acceptance_rate},
                          {"mean_log_alpha", la / post.draws.size()},
                          {"mean_beta", b / post.draws.size()}};
  std::cout << summary.dump(2) << '\n';

  if (!out_dir.empty()) {
    const auto [lo, hi] = std::minmax_element(ims.begin(), ims.end());
    const auto grid = log_uniform_grid(*lo, *hi, points);
    const auto band = credibility_band(post, grid, level);
    auto out = open_file(fs::path(out_dir) / "band.csv");
    out.precision(12);
    out << "a,lower,median,upper\n";
    for (std::size_t j = 0; j < grid.size(); ++j) {
      out << band.a[j] << ',' << band.lower[j] << ',' << band.median[j] << ',' << band.upper[j] << '\n';
    }
    auto samples = open_file(fs::path(out_dir) / "posterior.csv");
    write_sample_table(samples, post);
    auto js = open_file(fs::path(out_dir) / "fit.json");
    js << summary.dump(2) << '\n';
  }
  return 0;
}

int cmd_reference(const InputOptions& input, int clusters, double level, double q1, double q2,
                  const std::string& out_path) {
  const auto records = input.load();
  const Dataset data = to_dataset(records);
  const ReferenceCurve ref = nonparametric_reference(data, clusters, level);
  if (out_path.empty()) {
    write_reference_table(std::cout, ref);
  } else {
    auto out = open_file(out_path);
    write_reference_table(out, ref);
  }
  ordered_json info;
  const MetricBounds bounds = resolve_bounds(ref, q1, q2);
  info["a_min"] = bounds.a_min;
  info["a_max"] = bounds.a_max;
  info["merged_clusters"] = ref.merged_clusters;
  if (!is_degenerate(classify_degeneracy(data))) {
    const Theta mle = mle_fit(data);
    info["mle"] = {{"alpha", mle.alpha}, {"beta", mle.beta}};
    info["model_bias"] = model_bias([&](double a) { return ref(a); }, mle, bounds);
  }
  std::cerr << info.dump() << '\n';
  return 0;
}

int run_interactive(const fs::path& session_path, const std::optional<std::string>& outcome,
                    const InteractiveSession::Settings* fresh) {
  InteractiveSession session = fs::exists(session_path) ? InteractiveSession::open(session_path)
                                                        : [&] {
                                                            if (!fresh) throw DomainError("no session to resume");
                                                            return InteractiveSession::create(session_path, *fresh);
                                                          }();
  auto print = [](const InteractiveSession::Suggestion& s) {
    ordered_json j;
    j["k"] = s.k;
    j["next_im"] = s.a;
    j["degeneracy"] = std::string(to_string(s.degeneracy));
    j["index_value"] = s.index_value ? ordered_json(*s.index_value) : ordered_json(nullptr);
    j["vi"] = s.vi ? ordered_json(*s.vi) : ordered_json(nullptr);
    j["vp"] = s.vp ? ordered_json(*s.vp) : ordered_json(nullptr);
    std::cout << j.dump() << std::endl;
  };
  if (outcome) {
    print(session.step(*outcome));
    return 0;
  }
  // Prompt loop: one outcome per line, "q" to quit.
  auto s = session.suggest();
  print(s);
  std::string line;
  while (std::cerr << "outcome at IM " << s.a << " (0/1, q to quit): " && std::getline(std::cin, line)) {
    if (line == "q" || line == "quit") break;
    try {
      s = session.step(line);
      print(s);
    } catch (const DomainError& e) {
      std::cerr << "error: " << e.what() << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probit-lognormal fragility curves: Bayesian fits and sequential designs"};
  app.require_subcommand(1);

  // fit
  auto* fit = app.add_subcommand("fit", "MLE and posterior fit of a dataset");
  InputOptions fit_in;
  fit_in.add(fit, true);
  double fit_gamma = 0.5, fit_delta = 0.5, fit_burn = 0.5, fit_level = 0.95;
  int fit_chain = 20000, fit_thin = 10, fit_points = 101;
  std::uint64_t fit_seed = 0;
  std::string fit_out;
  fit->add_option("--gamma", fit_gamma, "prior exponent γ")->capture_default_str();
  fit->add_option("--delta", fit_delta, "divergence order δ")->capture_default_str();
  fit->add_option("--chain-length", fit_chain, "MCMC chain length")->capture_default_str();
  fit->add_option("--burn-in", fit_burn, "discarded chain fraction")->capture_default_str();
  fit->add_option("--thin", fit_thin, "chain thinning")->capture_default_str();
  fit->add_option("--seed", fit_seed, "MCMC seed")->capture_default_str();
  fit->add_option("--level", fit_level, "credibility level of the band")->capture_default_str();
  fit->add_option("--points", fit_points, "band grid points")->capture_default_str();
  fit->add_option("-o,--out", fit_out, "output directory for band.csv, posterior.csv, fit.json");

  // reference
  auto* refc = app.add_subcommand("reference", "non-parametric reference curve from records");
  InputOptions ref_in;
  ref_in.add(refc, true);
  int ref_clusters = 30;
  double ref_level = 0.95, ref_q1 = 1e-3, ref_q2 = 0.9;
  std::string ref_out;
  refc->add_option("--clusters", ref_clusters, "K-means clusters")->capture_default_str();
  refc->add_option("--level", ref_level, "Wilson interval level")->capture_default_str();
  refc->add_option("--q1", ref_q1, "lower metric bound quantile")->capture_default_str();
  refc->add_option("--q2", ref_q2, "upper metric bound quantile")->capture_default_str();
  refc->add_option("-o,--out", ref_out, "output table (default stdout)");

  // campaign
  auto* camp = app.add_subcommand("campaign", "single campaign: standard, doe or interactive");
  InputOptions camp_in;
  camp_in.add(camp, false);
  RunOptions camp_run;
  camp_run.add(camp, kCampaignKeys);
  std::string camp_out, session_path;
  std::optional<std::string> outcome;
  std::optional<double> s_amin, s_amax;
  camp->add_option("-o,--out", camp_out, "output directory for trace.jsonl and checkpoints.csv");
  camp->add_option("--session", session_path, "interactive session file (created when missing)");
  camp->add_option("--outcome", outcome, "interactive: record this outcome (0/1) and exit");
  camp->add_option("--a-min", s_amin, "interactive: lower IM bound of the design domain");
  camp->add_option("--a-max", s_amax, "interactive: upper IM bound of the design domain");

  // replicate
  auto* rep = app.add_subcommand("replicate", "replicated campaigns on a signal database");
  InputOptions rep_in;
  rep_in.add(rep, true);
  RunOptions rep_run;
  auto rep_keys = kCampaignKeys;
  rep_keys.push_back("replications");
  rep_keys.push_back("threads");
  rep_run.add(rep, rep_keys);
  std::string rep_out;
  rep->add_option("-o,--out", rep_out, "output directory")->required();

  // toy
  auto* toy = app.add_subcommand("toy", "replicated campaigns on a synthetic toy case");
  double toy_alpha = 3.0, toy_beta = 0.3, toy_qcap = 1.0, toy_gamma = 0.5, toy_delta = 0.5, toy_sd = 1.0;
  int toy_reps = 10, toy_kmax = 250, toy_threads = 0, toy_grid = 512;
  std::string toy_method = "doe", toy_out;
  std::uint64_t toy_seed = 0;
  toy->add_option("--alpha", toy_alpha, "reference median α*")->capture_default_str();
  toy->add_option("--beta", toy_beta, "reference log-deviation β*")->capture_default_str();
  toy->add_option("--q-cap", toy_qcap, "domain cap quantile (1 means 1-1e-3)")->capture_default_str();
  toy->add_option("--method", toy_method, "standard or doe")->capture_default_str();
  toy->add_option("--gamma", toy_gamma, "prior exponent γ")->capture_default_str();
  toy->add_option("--delta", toy_delta, "divergence order δ")->capture_default_str();
  toy->add_option("--im-log-sd", toy_sd, "log-sd of the standard-mode IM law")->capture_default_str();
  toy->add_option("--reps", toy_reps, "replications")->capture_default_str();
  toy->add_option("--k-max", toy_kmax, "final sample size")->capture_default_str();
  toy->add_option("--grid", toy_grid, "candidate grid points")->capture_default_str();
  toy->add_option("--seed", toy_seed, "master seed")->capture_default_str();
  toy->add_option("--threads", toy_threads, "worker threads (0: all cores)")->capture_default_str();
  toy->add_option("-o,--out", toy_out, "output directory")->required();

  // report
  auto* rpt = app.add_subcommand("report", "tables and summary from aggregated results");
  std::string rpt_tables, rpt_out;
  rpt->add_option("-t,--tables", rpt_tables, "tables.json written by replicate or toy")->required();
  rpt->add_option("-o,--out", rpt_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (fit->parsed()) {
      return cmd_fit(fit_in, fit_gamma, fit_delta, fit_chain, fit_burn, fit_thin, fit_seed, fit_level,
                     fit_points, fit_out);
    }
    if (refc->parsed()) return cmd_reference(ref_in, ref_clusters, ref_level, ref_q1, ref_q2, ref_out);
    if (camp->parsed()) {
      const auto mode_it = camp_run.values.find("mode");
      const bool interactive = mode_it != camp_run.values.end() && mode_it->second == "interactive";
      if (interactive) {
        if (session_path.empty()) throw DomainError("interactive mode needs --session");
        RunOptions run = camp_run;
        run.values["mode"] = "doe";
        const RunConfig cfg = run.build();
        std::optional<InteractiveSession::Settings> fresh;
        if (!fs::exists(session_path)) {
          InteractiveSession::Settings s;
          s.prior.gamma = cfg.gamma;
          s.prior.delta = cfg.delta;
          s.k0 = cfg.k0;
          s.index_grid = cfg.index_grid > 0 ? cfg.index_grid : 512;
          s.mh = cfg.mh();
          s.seed = cfg.seed;
          if (!camp_in.path.empty()) {
            const auto records = camp_in.load();
            std::vector<double> ims;
            for (const auto& r : records) ims.push_back(r.im);
            s.prior.im_stats = fit_lognormal_im(ims);
            const auto [lo, hi] = std::minmax_element(ims.begin(), ims.end());
            s.a_min = s_amin.value_or(*lo);
            s.a_max = s_amax.value_or(*hi);
          } else {
            if (!s_amin || !s_amax) throw DomainError("a new session needs --input or both --a-min and --a-max");
            s.a_min = *s_amin;
            s.a_max = *s_amax;
            // Lognormal IM law spanning the domain over ±2 standard deviations.
            s.prior.im_stats = {0.5 * (std::log(s.a_min) + std::log(s.a_max)),
                                (std::log(s.a_max) - std::log(s.a_min)) / 4.0};
          }
          fresh = s;
        }
        return run_interactive(session_path, outcome, fresh ? &*fresh : nullptr);
      }
      if (camp_in.path.empty()) throw DomainError("campaign needs --input");
      const RunConfig cfg = camp_run.build();
      const auto records = apply_threshold(camp_in.load(), cfg);
      const CampaignTrace trace = run_campaign(records, cfg);
      if (camp_out.empty()) {
        write_trace_jsonl(std::cout, trace);
      } else {
        auto tr = open_file(fs::path(camp_out) / "trace.jsonl");
        write_trace_jsonl(tr, trace);
        auto cp = open_file(fs::path(camp_out) / "checkpoints.csv");
        write_checkpoints_csv(cp, trace);
      }
      return 0;
    }
    if (rep->parsed()) {
      const RunConfig cfg = rep_run.build();
      const auto records = apply_threshold(rep_in.load(), cfg);
      const auto traces = run_replications(records, cfg);
      const AggregatedTables tables = aggregate(traces, cfg.vi_threshold, cfg.vp_threshold);
      auto js = open_file(fs::path(rep_out) / "tables.json");
      write_tables_json(js, tables);
      report(tables, rep_out);
      std::cout << summary_text(tables);
      return 0;
    }
    if (toy->parsed()) {
      ToyConfig cfg;
      cfg.theta_star = {toy_alpha, toy_beta};
      cfg.q_cap = toy_qcap;
      cfg.im_log_sd = toy_sd;
      cfg.grid_size = toy_grid;
      cfg.validate();
      ToyRunOptions opts;
      opts.k_max = toy_kmax;
      opts.prior.gamma = toy_gamma;
      opts.prior.delta = toy_delta;
      opts.checkpoints = default_checkpoints(toy_kmax);
      const Method method = method_from_string(toy_method);
      const auto traces = run_toy_replications(cfg, method, opts, toy_reps, toy_seed, toy_threads);
      const AggregatedTables tables = aggregate(traces, 1e-3, 0.05);
      auto js = open_file(fs::path(toy_out) / "tables.json");
      write_tables_json(js, tables);
      auto sel = open_file(fs::path(toy_out) / "selections.csv");
      sel.precision(17);
      sel << "rep,k,a,z,clamped\n";
      for (std::size_t r = 0; r < traces.size(); ++r) {
        for (const auto& s : traces[r].steps) {
          sel << r << ',' << s.k << ',' << s.a << ',' << s.z << ',' << (s.clamped ? 1 : 0) << '\n';
        }
      }
      report(tables, toy_out);
      std::cout << summary_text(tables);
      return 0;
    }
    if (rpt->parsed()) {
      std::ifstream in(rpt_tables);
      if (!in) throw DomainError("cannot read " + rpt_tables);
      const AggregatedTables tables = read_tables_json(in);
      report(tables, rpt_out);
      std::cout << summary_text(tables);
      return 0;
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
