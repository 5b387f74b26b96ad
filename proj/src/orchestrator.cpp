#include "refol/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <thread>

namespace refol {
namespace {

CostModel cost_model_for(const RunOptions& opts, const TrafficDataset& ds) {
  CostModel m;
  m.hidden_size = opts.hidden_size;
  m.history_horizon = ds.history_horizon;
  m.forecast_horizon = ds.forecast_horizon;
  m.epochs = opts.epochs;
  m.bytes_per_param = opts.bytes_per_param;
  return m;
}

Window normalized_window(const Window& raw, const Normalizer& norm) {
  if (!norm.enabled) return raw;
  Window w = raw;
  for (double& v : w.input) v = norm.to_model(v, raw.node_index);
  for (double& v : w.target) v = norm.to_model(v, raw.node_index);
  return w;
}

std::vector<double> denormalized(const std::vector<double>& pred, int node,
                                 const Normalizer& norm) {
  if (!norm.enabled) return pred;
  std::vector<double> out = pred;
  for (double& v : out) v = norm.to_raw(v, node);
  return out;
}

// Uniform integer in [0, bound) by rejection; keeps selection free of
// modulo bias and of distribution-implementation details.
std::uint64_t bounded_rand(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

std::vector<int> sample_without_replacement(int n, int k, std::mt19937_64& rng) {
  std::vector<int> pool(n);
  for (int i = 0; i < n; ++i) pool[i] = i;
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(bounded_rand(rng, static_cast<std::uint64_t>(n - i)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

// Full participant path: download the server model, predict, optimize for E
// epochs, store and upload. `gated` controls whether the KLD cost applies.
ClientStepResult participant_step(ClientState& client, const ModelParams& server_model,
                                  const Window& window, const RunOptions& opts,
                                  const Normalizer& norm, const CostModel& cost,
                                  double divergence, bool count_kld) {
  ClientStepResult res;
  res.record.node = client.node_index;
  res.record.participated = true;
  res.record.divergence = divergence;

  const Window model_window = normalized_window(window, norm);
  client.local_model = server_model;
  res.record.bytes_down = comm_bytes(cost);

  const ForwardTrace tr = forward(client.local_model, model_window.input);
  res.record.prediction = denormalized(tr.prediction, client.node_index, norm);
  res.record.target = window.target;

  client.local_model = ogd_update(client.local_model, model_window, opts.learning_rate,
                                  opts.epochs);
  client.participation_count += 1;
  res.upload = client.local_model;
  res.record.bytes_up = comm_bytes(cost);

  res.record.flops = (count_kld ? kld_flops(cost) : 0) + forward_flops(cost) +
                     static_cast<std::int64_t>(opts.epochs) *
                         (forward_flops(cost) + backward_flops(cost));
  return res;
}

// Predict with the locally saved model; no communication, no optimization.
ClientStepResult stale_step(ClientState& client, const Window& window, const RunOptions& opts,
                            const Normalizer& norm, const CostModel& cost, double divergence,
                            bool count_kld) {
  (void)opts;
  ClientStepResult res;
  res.record.node = client.node_index;
  res.record.participated = false;
  res.record.divergence = divergence;
  const Window model_window = normalized_window(window, norm);
  const ForwardTrace tr = forward(client.local_model, model_window.input);
  res.record.prediction = denormalized(tr.prediction, client.node_index, norm);
  res.record.target = window.target;
  res.record.flops = (count_kld ? kld_flops(cost) : 0) + forward_flops(cost);
  return res;
}

void commit_drift_window(ClientState& client, const Window& window, const RunOptions& opts) {
  if (opts.hw_update == HwUpdateMode::kForecastWindow) {
    // Only legal when F == H (validated upstream): the literal reading in
    // which hw becomes the forecast window S^F.
    commit_update(client.drift, window.target, window.round_index);
  } else {
    commit_update(client.drift, window.input, window.round_index);
  }
}

}  // namespace

Normalizer fit_normalizer(const TrafficDataset& ds, const SplitRounds& split, bool enabled) {
  Normalizer norm;
  norm.enabled = enabled;
  if (!enabled) return norm;
  // Fit on the raw steps the train partition can see; falls back to the
  // history prefix when the train segment is empty.
  const int last_step = std::max(split.train_end, ds.first_round());
  norm.mean.assign(ds.node_count, 0.0);
  norm.std.assign(ds.node_count, 1.0);
  for (int n = 0; n < ds.node_count; ++n) {
    double sum = 0.0, sq = 0.0;
    for (int t = 1; t <= last_step; ++t) {
      const double v = ds.speed_at(t, n);
      sum += v;
      sq += v * v;
    }
    const double mean = sum / last_step;
    const double var = std::max(0.0, sq / last_step - mean * mean);
    norm.mean[n] = mean;
    norm.std[n] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  return norm;
}

ClientStepResult refol_client_step(ClientState& client, const ModelParams& server_model,
                                   const Window& window, const RunOptions& opts,
                                   const Normalizer& norm) {
  CostModel cost;
  cost.hidden_size = opts.hidden_size;
  cost.history_horizon = static_cast<int>(window.input.size());
  cost.forecast_horizon = static_cast<int>(window.target.size());
  cost.epochs = opts.epochs;
  cost.bytes_per_param = opts.bytes_per_param;

  if (!client.drift.bootstrapped()) {
    // First admissible round: participation is forced and hw is committed.
    auto res = participant_step(client, server_model, window, opts, norm, cost,
                                std::numeric_limits<double>::quiet_NaN(), /*count_kld=*/false);
    commit_drift_window(client, window, opts);
    return res;
  }

  const GateResult gate = should_participate(client.drift, window.input);
  if (!gate.participate) {
    return stale_step(client, window, opts, norm, cost, gate.divergence, /*count_kld=*/true);
  }
  auto res = participant_step(client, server_model, window, opts, norm, cost, gate.divergence,
                              /*count_kld=*/true);
  commit_drift_window(client, window, opts);
  return res;
}

SimulationState init_simulation(const TrafficDataset& ds, const RunOptions& opts,
                                const SplitRounds& split) {
  SimulationState state;
  state.server.global_model = init_params(opts.seed, opts.hidden_size, ds.forecast_horizon);
  state.server.round = 0;
  state.server.selection_rng.seed(opts.seed);
  state.normalizer = fit_normalizer(ds, split, opts.normalize);
  state.clients.resize(ds.node_count);
  for (int n = 0; n < ds.node_count; ++n) {
    state.clients[n].node_index = n;
    // One shared initialization: every client starts from the same model
    // the server holds.
    state.clients[n].local_model = state.server.global_model;
    state.clients[n].drift.threshold = opts.q_threshold;
  }
  return state;
}

namespace {

// Runs fn(i) for every client index, splitting into contiguous chunks when
// opts.threads > 1. Client steps are independent, so scheduling cannot
// change results.
template <typename Fn>
void for_each_client(int count, int threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  const int workers = std::min(threads, count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr error;
  std::mutex error_mu;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < count; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

RoundReport collect_and_aggregate(SimulationState& state, int round, const RunOptions& opts,
                                  std::vector<ClientStepResult>& results, bool graph_weights,
                                  const TrafficDataset& ds) {
  RoundReport report;
  report.round = round;
  report.clients.reserve(results.size());

  std::vector<int> participant_ids;
  std::vector<ModelParams> uploads;
  for (auto& r : results) {
    if (r.upload.has_value()) {
      participant_ids.push_back(r.record.node);
      uploads.push_back(std::move(*r.upload));
    }
    report.clients.push_back(std::move(r.record));
  }

  if (!participant_ids.empty()) {
    AggregationWeights weights;
    if (graph_weights) {
      const ParticipantGraph graph = build_participant_graph(ds.adjacency, participant_ids);
      weights = aggregation_weights_k(graph, opts.conv_layers);
      state.server.global_model =
          aggregate(state.server.global_model, uploads, weights);
    } else {
      // Plain average of the uploads; no previous-global term.
      weights.weights.assign(participant_ids.size() + 1, 0.0);
      const double inv = 1.0 / static_cast<double>(participant_ids.size());
      for (std::size_t i = 0; i < participant_ids.size(); ++i) weights.weights[i] = inv;
      state.server.global_model = aggregate(state.server.global_model, uploads, weights);
    }
    report.weights = weights.weights;
  }
  state.server.round = round;
  return report;
}

}  // namespace

RoundReport refol_round(SimulationState& state, const TrafficDataset& ds, int round,
                        const RunOptions& opts) {
  const int n = ds.node_count;
  std::vector<ClientStepResult> results(n);
  const ModelParams& server_model = state.server.global_model;
  for_each_client(n, opts.threads, [&](int i) {
    const Window window = make_window(ds, i, round);
    results[i] = refol_client_step(state.clients[i], server_model, window, opts,
                                   state.normalizer);
  });
  return collect_and_aggregate(state, round, opts, results, /*graph_weights=*/true, ds);
}

RoundReport vanilla_round(SimulationState& state, const TrafficDataset& ds, int round,
                          const RunOptions& opts) {
  const int n = ds.node_count;
  if (opts.select_count < 1 || opts.select_count > n) {
    throw ValidationError("vanilla select_count must be in [1, N]");
  }
  const std::vector<int> selected =
      sample_without_replacement(n, opts.select_count, state.server.selection_rng);
  std::vector<std::uint8_t> is_selected(n, 0);
  for (int id : selected) is_selected[id] = 1;

  std::vector<ClientStepResult> results(n);
  const ModelParams& server_model = state.server.global_model;
  for_each_client(n, opts.threads, [&](int i) {
    const Window window = make_window(ds, i, round);
    CostModel cost = cost_model_for(opts, ds);
    if (is_selected[i]) {
      results[i] = participant_step(state.clients[i], server_model, window, opts,
                                    state.normalizer, cost,
                                    std::numeric_limits<double>::quiet_NaN(),
                                    /*count_kld=*/false);
    } else {
      results[i] = stale_step(state.clients[i], window, opts, state.normalizer, cost,
                              std::numeric_limits<double>::quiet_NaN(), /*count_kld=*/false);
    }
  });
  const bool graph = opts.vanilla_aggregator == VanillaAggregator::kGraph;
  return collect_and_aggregate(state, round, opts, results, graph, ds);
}

RoundReport baseline_round(SimulationState& state, const TrafficDataset& ds, int round,
                           const RunOptions& opts) {
  const int n = ds.node_count;
  std::vector<ClientStepResult> results(n);
  for_each_client(n, opts.threads, [&](int i) {
    const Window window = make_window(ds, i, round);
    CostModel cost = cost_model_for(opts, ds);
    ClientStepResult res;
    ClientState& client = state.clients[i];
    const Window model_window = normalized_window(window, state.normalizer);
    const ForwardTrace tr = forward(client.local_model, model_window.input);
    res.record.node = i;
    res.record.prediction = denormalized(tr.prediction, i, state.normalizer);
    res.record.target = window.target;
    res.record.flops = forward_flops(cost);
    if (opts.method == Method::kLocalOl) {
      client.local_model =
          ogd_update(client.local_model, model_window, opts.learning_rate, opts.epochs);
      client.participation_count += 1;
      res.record.participated = true;  // local update, still zero bytes
      res.record.flops += static_cast<std::int64_t>(opts.epochs) *
                          (forward_flops(cost) + backward_flops(cost));
    }
    results[i] = res;
  });
  RoundReport report;
  report.round = round;
  for (auto& r : results) report.clients.push_back(std::move(r.record));
  state.server.round = round;
  return report;
}

RoundReport run_round(SimulationState& state, const TrafficDataset& ds, int round,
                      const RunOptions& opts) {
  switch (opts.method) {
    case Method::kRefol:
      return refol_round(state, ds, round, opts);
    case Method::kVanilla:
      return vanilla_round(state, ds, round, opts);
    case Method::kFrozenLocal:
    case Method::kLocalOl:
      return baseline_round(state, ds, round, opts);
  }
  throw ValidationError("unknown method");
}

ExperimentResult run_experiment(const TrafficDataset& ds, const SplitRounds& split,
                                const RunOptions& opts, bool warmup,
                                const std::function<void(const RoundReport&)>& sink) {
  ExperimentResult out;
  out.split = split;
  SimulationState state = init_simulation(ds, opts, split);
  if (warmup) {
    for (int t = ds.first_round(); t < split.test_begin; ++t) {
      run_round(state, ds, t, opts);
    }
  }
  out.reports.reserve(static_cast<std::size_t>(std::max(0, split.test_count())));
  for (int t = split.test_begin; t <= split.test_end; ++t) {
    RoundReport report = run_round(state, ds, t, opts);
    if (sink) sink(report);
    out.reports.push_back(std::move(report));
  }
  return out;
}

std::int64_t replayed_participation_count(const std::vector<RoundReport>& reports, double q) {
  std::int64_t count = 0;
  for (const auto& report : reports) {
    for (const auto& c : report.clients) {
      if (std::isfinite(c.divergence) && c.divergence >= q) ++count;
    }
  }
  return count;
}

}  // namespace refol
