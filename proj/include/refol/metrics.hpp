#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "refol/common.hpp"
#include "refol/gru.hpp"
#include "refol/orchestrator.hpp"
#include "refol/traffic_data.hpp"

namespace refol {

// Raw per-(node, round) per-horizon errors; the aggregates are always
// recomputed from these.
struct ErrorTable {
  int forecast_horizon = 0;

  struct Entry {
    int node = 0;
    int round = 0;
    std::vector<double> squared;   // F entries
    std::vector<double> absolute;  // F entries
  };
  std::vector<Entry> entries;

  void add(int node, int round, std::span<const double> prediction,
           std::span<const double> target);
};

// congestion_threshold keeps only the horizons whose true speed does not
// exceed it (jam-conditional slicing); entries that lose every
// horizon are dropped. Infinity keeps everything.
ErrorTable error_table_from_reports(
    const std::vector<RoundReport>& reports, int forecast_horizon,
    double congestion_threshold = std::numeric_limits<double>::infinity());

// Mean over (n,t) of the per-window RMSE sqrt(sum_tau sq / F). This is the
// nested form, not a pooled root-mean-square.
double rmse(const ErrorTable& table);

// Mean over (n,t) of the per-window mean absolute error.
double mae(const ErrorTable& table);

// sqrt of the grand mean of squared errors; kept for external comparison.
double pooled_rmse(const ErrorTable& table);

struct IntervalSet {
  double alpha = 0.05;

  struct Entry {
    int node = 0;
    int round = 0;    // 1-based position within the evaluated series
    int horizon = 0;  // tau, 0-based
    double lower = 0.0;
    double upper = 0.0;
  };
  std::vector<Entry> entries;
};

// Mean scaled interval score. truth_per_node[n][t-1] is the actual series
// the intervals refer to (used both for penalties and for the seasonal
// scale); width and penalties average over the interval entries, the scale
// over all t > periodicity. Throws RunError when the seasonal scale is 0.
double msis(const std::vector<std::vector<double>>& truth_per_node, const IntervalSet& intervals,
            int periodicity);

// Symmetric intervals prediction +/- q_{1-alpha/2}(|trailing residuals|).
// For each node, residuals and predictions are aligned series; an interval
// is emitted for every index with at least min_history prior residuals,
// using at most `window` of the most recent ones.
IntervalSet interval_from_residuals(const std::vector<std::vector<double>>& residuals_per_node,
                                    const std::vector<std::vector<double>>& predictions_per_node,
                                    double alpha, int min_history = 30, int window = 288);

// Empirical quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double p);

struct OracleResult {
  ModelParams params;
  double mean_loss = 0.0;
  int iterations = 0;
  bool improved = false;
};

// Approximate local (single node) or global (node = -1) optimal model:
// full-batch gradient descent with backtracking over the complete window
// set of [first_round, last_round], 3 seeded restarts, stopping when the
// relative improvement drops below 1e-6 or the iteration budget runs out.
// Desk-scale only (N <= 16, admissible rounds <= 2000).
OracleResult offline_oracle(const TrafficDataset& ds, int node, int hs, int budget,
                            std::uint64_t seed, int first_round = 0, int last_round = 0);

// Sum of actual per-round losses minus the summed loss of the fixed
// reference model over the same windows.
double regret(std::span<const double> actual_losses, const ModelParams& reference,
              const TrafficDataset& ds, int node, int first_round, int last_round);

}  // namespace refol
