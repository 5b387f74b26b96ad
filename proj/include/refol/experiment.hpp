#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "refol/metrics.hpp"
#include "refol/orchestrator.hpp"
#include "refol/traffic_data.hpp"

namespace refol {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kCheckpointVersion = 1;

// Everything a run needs, parseable from `key = value` text. Field names
// match the config keys.
struct ExperimentConfig {
  // dataset
  std::string source = "synthetic";  // synthetic | csv
  std::string speeds_path;
  std::string adjacency_path;
  std::string adjacency_format = "dense";  // dense | edgelist
  bool csv_has_header = false;
  int synth_nodes = 8;
  int synth_rounds = 800;
  int synth_segment_length = 100;
  double synth_density = 0.3;
  std::uint64_t synth_seed = 0;  // 0 = use `seed`

  // learning
  std::string method = "refol";  // refol | vanilla | frozen-local | local-ol
  double q = 3e-4;
  double lr = 1e-3;
  int epochs = 5;
  int hidden_size = 128;
  int history_horizon = 12;
  int forecast_horizon = 1;
  int conv_layers = 2;
  std::uint64_t seed = 1;
  std::string split = "7:1:2";
  int select_count = 0;  // vanilla only

  // flags
  std::string hw_update = "trigger-window";  // trigger-window | forecast-window
  std::string warmup = "train-partition";    // train-partition | off
  bool normalize = false;
  bool pooled_rmse = false;
  int bytes_per_param = 4;
  double alpha = 0.05;
  int periodicity = 288;
  int threads = 1;
  int checkpoint_every = 0;  // rounds; 0 disables checkpointing
  std::string vanilla_aggregator = "average";  // average | graph
  int interval_min_history = 30;
  int interval_window = 288;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);
std::string render_config(const ExperimentConfig& cfg);

// All validation problems at once; empty means runnable.
std::vector<std::string> validate_config(const ExperimentConfig& cfg);

RunOptions to_run_options(const ExperimentConfig& cfg);
TrafficDataset load_dataset(const ExperimentConfig& cfg);

struct RunSummary {
  std::string method;
  int forecast_horizon = 0;
  int scored_rounds = 0;
  double rmse = 0.0;
  double mae = 0.0;
  double pooled_rmse = 0.0;
  std::optional<double> msis;
  std::int64_t participations = 0;
  double participation_fraction = 0.0;
  std::int64_t total_flops = 0;
  std::int64_t total_bytes = 0;
};

RunSummary summarize(const std::vector<RoundReport>& reports, const ExperimentConfig& cfg);

// Executes a run and writes the artifact directory: config.resolved,
// manifest.json, reports.ndjson, metrics.csv, cost_ledger.csv (and
// checkpoint.bin while running, when enabled). Refuses to reuse a non-empty
// directory unless force is set; resume continues from the checkpoint.
// stop_after_round > 0 stops the loop early at that round, leaving a
// resumable checkpoint behind (requires checkpoint_every > 0).
RunSummary run_to_directory(const ExperimentConfig& cfg, const std::string& out_dir,
                            bool force = false, bool resume = false,
                            int stop_after_round = 0);

// In-memory run (no files); used by sweeps, tests, and the bindings.
struct RunOutput {
  RunSummary summary;
  std::vector<RoundReport> reports;
};
RunOutput run_in_memory(const ExperimentConfig& cfg);

struct SweepRow {
  double value = 0.0;
  RunSummary summary;
  // Only for Q sweeps: fraction from re-thresholding the divergences of a
  // single full-participation reference run, guaranteed monotone in Q.
  std::optional<double> participation_fraction_replayed;
};

struct SweepResult {
  std::string parameter;
  std::vector<SweepRow> rows;
  std::vector<std::string> run_dirs;
};

// One artifact directory per value plus summary.csv in out_dir. A sub-run
// failure aborts the sweep after in-flight runs finish; the partial summary
// is still written.
SweepResult run_sweep(const ExperimentConfig& base, const std::string& parameter,
                      const std::vector<double>& values, const std::string& out_dir,
                      bool force = false);

// Reads reports.ndjson back (schema-checked).
std::vector<RoundReport> read_reports(const std::string& path);
ExperimentConfig read_manifest_config(const std::string& run_dir);

// metrics CSV over several run directories, one row per run. A finite
// congestion_threshold restricts the errors to horizons whose true speed
// does not exceed it.
void write_metrics_csv(
    const std::vector<std::string>& run_dirs, const std::string& out_path,
    double congestion_threshold = std::numeric_limits<double>::infinity());

struct CostTableRow {
  std::string method;
  std::int64_t compute_flops = -1;  // -1 renders as "-" (not modeled)
  std::int64_t comm_bytes = 0;
};

// Table-III-shaped analytic summary for REFOL / FOL-vanilla / FedOSTC given
// the run geometry and a measured (or assumed) participation fraction.
std::vector<CostTableRow> cost_table(int nodes, int rounds, double participation_fraction,
                                     const CostModel& cost);

}  // namespace refol
