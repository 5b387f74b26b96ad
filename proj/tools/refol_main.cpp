// refol — federated online traffic-flow forecasting simulator.
//
// Subcommands:
//   run        execute one experiment into an artifact directory
//   sweep      run a parameter sweep (one artifact dir per value + summary)
//   metrics    recompute the metrics CSV from finished run directories
//   cost-table print the analytic compute/communication comparison
//   synth      emit a synthetic drifting dataset as CSV files
//
// Exit codes: 0 success, 1 validation failure, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "refol/experiment.hpp"

namespace fs = std::filesystem;

namespace {

std::string human_bytes(std::int64_t bytes) {
  char buf[64];
  if (bytes >= (1LL << 30)) {
    std::snprintf(buf, sizeof(buf), "%.2f GB", static_cast<double>(bytes) / (1LL << 30));
  } else if (bytes >= (1LL << 20)) {
    std::snprintf(buf, sizeof(buf), "%.2f MB", static_cast<double>(bytes) / (1LL << 20));
  } else {
    std::snprintf(buf, sizeof(buf), "%lld B", static_cast<long long>(bytes));
  }
  return buf;
}

std::string human_flops(std::int64_t flops) {
  char buf[64];
  if (flops < 0) return "-";
  if (flops >= 1000000000LL) {
    std::snprintf(buf, sizeof(buf), "%.2f GFLOPs", static_cast<double>(flops) / 1e9);
  } else {
    std::snprintf(buf, sizeof(buf), "%lld FLOPs", static_cast<long long>(flops));
  }
  return buf;
}

void print_summary(const refol::RunSummary& s) {
  std::printf("method=%s F=%d scored_rounds=%d\n", s.method.c_str(), s.forecast_horizon,
              s.scored_rounds);
  std::printf("rmse=%.6f mae=%.6f", s.rmse, s.mae);
  if (s.msis) std::printf(" msis=%.6f", *s.msis);
  std::printf("\n");
  std::printf("participation=%lld (%.2f%%) flops=%lld bytes=%lld\n",
              static_cast<long long>(s.participations), 100.0 * s.participation_fraction,
              static_cast<long long>(s.total_flops), static_cast<long long>(s.total_bytes));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"REFOL federated online learning simulator for traffic-flow forecasting"};
  app.require_subcommand(1);

  // --- run ---
  auto* run_cmd = app.add_subcommand("run", "Execute one experiment");
  std::string run_config, run_out;
  bool run_force = false, run_resume = false;
  int run_stop_after = 0;
  run_cmd->add_option("--config", run_config, "Config file (key = value text, or a manifest.json)")
      ->required();
  run_cmd->add_option("--out", run_out, "Artifact directory")->required();
  run_cmd->add_flag("--force", run_force, "Overwrite an existing artifact directory");
  run_cmd->add_flag("--resume", run_resume, "Continue from the checkpoint in --out");
  run_cmd->add_option("--stop-after-round", run_stop_after,
                      "Stop early at this round, leaving a resumable checkpoint");

  // --- sweep ---
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a parameter sweep");
  std::string sweep_config, sweep_out, sweep_param;
  std::vector<double> sweep_values;
  bool sweep_force = false;
  sweep_cmd->add_option("--config", sweep_config, "Base config file")->required();
  sweep_cmd->add_option("--param", sweep_param, "Parameter to sweep: Q|conv_layers|F|E|lr|hs")
      ->required();
  sweep_cmd->add_option("--values", sweep_values, "Values to sweep over")
      ->required()
      ->delimiter(',');
  sweep_cmd->add_option("--out", sweep_out, "Sweep output directory")->required();
  sweep_cmd->add_flag("--force", sweep_force, "Overwrite existing run directories");

  // --- metrics ---
  auto* metrics_cmd = app.add_subcommand("metrics", "Metrics CSV from run directories");
  std::vector<std::string> metrics_runs;
  std::string metrics_out = "-";
  double metrics_congestion = std::numeric_limits<double>::infinity();
  metrics_cmd->add_option("--runs", metrics_runs, "Run directories")->required()->delimiter(',');
  metrics_cmd->add_option("--out", metrics_out, "Output CSV path ('-' for stdout)");
  metrics_cmd->add_option("--congestion-threshold", metrics_congestion,
                          "Restrict errors to true speeds at or below this value (km/h)");

  // --- cost-table ---
  auto* cost_cmd = app.add_subcommand("cost-table", "Analytic cost comparison");
  int ct_hs = 128, ct_h = 12, ct_f = 1, ct_e = 5, ct_nodes = 0, ct_rounds = 0, ct_bpp = 4;
  double ct_fraction = -1.0;
  std::string ct_run;
  cost_cmd->add_option("--hs", ct_hs, "Hidden size");
  cost_cmd->add_option("--H", ct_h, "History horizon");
  cost_cmd->add_option("--F", ct_f, "Forecast horizon");
  cost_cmd->add_option("--E", ct_e, "Local epochs");
  cost_cmd->add_option("--nodes", ct_nodes, "Client count N");
  cost_cmd->add_option("--rounds", ct_rounds, "Round count");
  cost_cmd->add_option("--participation-fraction", ct_fraction, "Assumed REFOL fraction");
  cost_cmd->add_option("--bytes-per-param", ct_bpp, "Bytes per parameter");
  cost_cmd->add_option("--run", ct_run, "Take geometry and fraction from a finished run dir");

  // --- synth ---
  auto* synth_cmd = app.add_subcommand("synth", "Emit a synthetic dataset as CSV");
  int sy_nodes = 8, sy_rounds = 800, sy_segment = 100;
  double sy_density = 0.3;
  std::uint64_t sy_seed = 1;
  std::string sy_out;
  synth_cmd->add_option("--nodes", sy_nodes, "Node count");
  synth_cmd->add_option("--rounds", sy_rounds, "Time steps");
  synth_cmd->add_option("--segment-length", sy_segment, "Rounds per stationary segment");
  synth_cmd->add_option("--density", sy_density, "Directed edge density in [0,1]");
  synth_cmd->add_option("--seed", sy_seed, "RNG seed");
  synth_cmd->add_option("--out", sy_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      const auto cfg = refol::load_config_file(run_config);
      const auto summary =
          refol::run_to_directory(cfg, run_out, run_force, run_resume, run_stop_after);
      print_summary(summary);
      std::printf("artifacts: %s\n", run_out.c_str());
    } else if (*sweep_cmd) {
      const auto cfg = refol::load_config_file(sweep_config);
      const auto result = refol::run_sweep(cfg, sweep_param, sweep_values, sweep_out, sweep_force);
      for (const auto& row : result.rows) {
        std::printf("%s=%g rmse=%.6f mae=%.6f participation=%.4f", result.parameter.c_str(),
                    row.value, row.summary.rmse, row.summary.mae,
                    row.summary.participation_fraction);
        if (row.participation_fraction_replayed) {
          std::printf(" replayed=%.4f", *row.participation_fraction_replayed);
        }
        std::printf("\n");
      }
      std::printf("summary: %s/summary.csv\n", sweep_out.c_str());
    } else if (*metrics_cmd) {
      refol::write_metrics_csv(metrics_runs, metrics_out, metrics_congestion);
      if (metrics_out != "-") std::printf("wrote %s\n", metrics_out.c_str());
    } else if (*cost_cmd) {
      refol::CostModel cost;
      double fraction = ct_fraction;
      int nodes = ct_nodes, rounds = ct_rounds;
      if (!ct_run.empty()) {
        const auto cfg = refol::read_manifest_config(ct_run);
        const auto reports = refol::read_reports((fs::path(ct_run) / "reports.ndjson").string());
        const auto s = refol::summarize(reports, cfg);
        cost.hidden_size = cfg.hidden_size;
        cost.history_horizon = cfg.history_horizon;
        cost.forecast_horizon = cfg.forecast_horizon;
        cost.epochs = cfg.epochs;
        cost.bytes_per_param = cfg.bytes_per_param;
        if (fraction < 0) fraction = s.participation_fraction;
        if (nodes == 0 && !reports.empty()) {
          nodes = static_cast<int>(reports.front().clients.size());
        }
        if (rounds == 0) rounds = s.scored_rounds;
      } else {
        cost.hidden_size = ct_hs;
        cost.history_horizon = ct_h;
        cost.forecast_horizon = ct_f;
        cost.epochs = ct_e;
        cost.bytes_per_param = ct_bpp;
        if (nodes == 0 || rounds == 0 || fraction < 0) {
          throw refol::ValidationError(
              "cost-table needs --nodes, --rounds and --participation-fraction (or --run)");
        }
      }
      const auto rows = refol::cost_table(nodes, rounds, fraction, cost);
      std::printf("%-12s  %-18s  %-14s\n", "Method", "Computational Cost", "Communication Cost");
      for (const auto& row : rows) {
        std::printf("%-12s  %-18s  %-14s\n", row.method.c_str(),
                    human_flops(row.compute_flops).c_str(), human_bytes(row.comm_bytes).c_str());
      }
      std::printf("(N=%d rounds=%d fraction=%.4f hs=%d H=%d F=%d E=%d)\n", nodes, rounds, fraction,
                  cost.hidden_size, cost.history_horizon, cost.forecast_horizon, cost.epochs);
    } else if (*synth_cmd) {
      const auto ds = refol::synthesize_drift(sy_seed, sy_nodes, sy_rounds, sy_segment,
                                              sy_density);
      fs::create_directories(sy_out);
      const auto speeds = (fs::path(sy_out) / "speeds.csv").string();
      const auto adjacency = (fs::path(sy_out) / "adjacency.csv").string();
      refol::write_speeds_csv(ds, speeds);
      refol::write_adjacency_csv(ds, adjacency);
      std::printf("wrote %s and %s (N=%d, T=%d)\n", speeds.c_str(), adjacency.c_str(),
                  ds.node_count, ds.time_count);
    }
  } catch (const refol::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
