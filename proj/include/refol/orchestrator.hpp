#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "refol/cost_model.hpp"
#include "refol/drift_detector.hpp"
#include "refol/graph_aggregator.hpp"
#include "refol/gru.hpp"
#include "refol/traffic_data.hpp"

namespace refol {

enum class Method { kRefol, kVanilla, kFrozenLocal, kLocalOl };

// hw := the window that triggered the update (default), or the forecast
// window (only legal when F == H).
enum class HwUpdateMode { kTriggerWindow, kForecastWindow };

enum class VanillaAggregator { kAverage, kGraph };

struct RunOptions {
  Method method = Method::kRefol;
  double q_threshold = 3e-4;
  double learning_rate = 1e-3;
  int epochs = 5;
  int hidden_size = 128;
  int conv_layers = 2;
  std::uint64_t seed = 1;
  int select_count = 0;  // vanilla only; must be in [1, N]
  HwUpdateMode hw_update = HwUpdateMode::kTriggerWindow;
  VanillaAggregator vanilla_aggregator = VanillaAggregator::kAverage;
  bool normalize = false;  // per-node z-score fitted on the train partition
  int threads = 1;
  int bytes_per_param = 4;
};

struct ClientState {
  int node_index = 0;
  ModelParams local_model;
  DriftState drift;
  std::int64_t participation_count = 0;
};

struct ServerState {
  ModelParams global_model;
  int round = 0;
  std::mt19937_64 selection_rng;  // vanilla client selection only
};

struct ClientRecord {
  int node = 0;
  bool participated = false;
  // NaN when no gate ran this round (bootstrap, or methods without one).
  double divergence = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> prediction;  // F, de-normalized units
  std::vector<double> target;      // F
  std::int64_t flops = 0;
  std::int64_t bytes_up = 0;
  std::int64_t bytes_down = 0;
};

struct RoundReport {
  int round = 0;
  std::vector<ClientRecord> clients;
  std::vector<double> weights;  // empty when no aggregation happened
};

struct ClientStepResult {
  ClientRecord record;
  std::optional<ModelParams> upload;
};

// Normalization parameters fitted on the train partition (identity when
// disabled); applied to model inputs/targets, inverted for reports. Drift
// detection always sees raw speeds.
struct Normalizer {
  bool enabled = false;
  std::vector<double> mean, std;

  double to_model(double raw, int node) const {
    return enabled ? (raw - mean[node]) / std[node] : raw;
  }
  double to_raw(double scaled, int node) const {
    return enabled ? scaled * std[node] + mean[node] : scaled;
  }
};

Normalizer fit_normalizer(const TrafficDataset& ds, const SplitRounds& split, bool enabled);

// One client round: gate on drift, predict (always before any optimization),
// optimize and upload only on participation. Pure in server_model; mutates
// only the owning client's state. The window carries raw speeds.
ClientStepResult refol_client_step(ClientState& client, const ModelParams& server_model,
                                   const Window& window, const RunOptions& opts,
                                   const Normalizer& norm = {});

// Whole simulation state; clients are keyed by node index.
struct SimulationState {
  ServerState server;
  std::vector<ClientState> clients;
  Normalizer normalizer;
};

SimulationState init_simulation(const TrafficDataset& ds, const RunOptions& opts,
                                const SplitRounds& split);

// One REFOL round: all clients step (possibly in parallel), then the server
// builds the participant graph and aggregates. Zero participants leave the
// global model bit-identical.
RoundReport refol_round(SimulationState& state, const TrafficDataset& ds, int round,
                        const RunOptions& opts);

// Server-driven baseline: uniform random selection without replacement; selected
// clients always download/optimize/upload; the server averages the uploads
// (or, behind VanillaAggregator::kGraph, reuses the REFOL aggregation).
// Non-selected clients still predict with their stale models at zero cost.
RoundReport vanilla_round(SimulationState& state, const TrafficDataset& ds, int round,
                          const RunOptions& opts);

// frozen-local: predict with the bootstrap model forever.
// local-ol: predict, then optimize locally every round; no communication.
RoundReport baseline_round(SimulationState& state, const TrafficDataset& ds, int round,
                           const RunOptions& opts);

// Dispatch on opts.method.
RoundReport run_round(SimulationState& state, const TrafficDataset& ds, int round,
                      const RunOptions& opts);

struct ExperimentResult {
  std::vector<RoundReport> reports;  // scored rounds only, temporal order
  SplitRounds split;
};

// Full simulation loop: optional warmup over all admissible rounds before
// the test partition, then the scored test rounds. Deterministic in
// (dataset, split, opts). The sink, when set, receives each scored report
// as it completes; reports are also returned.
ExperimentResult run_experiment(const TrafficDataset& ds, const SplitRounds& split,
                                const RunOptions& opts, bool warmup = true,
                                const std::function<void(const RoundReport&)>& sink = nullptr);

// Replay helper: participation count (gated rounds only) if the logged
// divergences were re-thresholded at q. Bootstraps and non-gated rounds
// never enter the count.
std::int64_t replayed_participation_count(const std::vector<RoundReport>& reports, double q);

}  // namespace refol
