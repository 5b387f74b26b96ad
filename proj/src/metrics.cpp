#include "refol/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace refol {

void ErrorTable::add(int node, int round, std::span<const double> prediction,
                     std::span<const double> target) {
  if (prediction.size() != target.size() ||
      prediction.size() != static_cast<std::size_t>(forecast_horizon)) {
    throw ValidationError("ErrorTable::add: prediction/target length must equal F");
  }
  Entry e;
  e.node = node;
  e.round = round;
  e.squared.resize(prediction.size());
  e.absolute.resize(prediction.size());
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double d = prediction[i] - target[i];
    if (!std::isfinite(d)) throw RunError("ErrorTable::add: non-finite error");
    e.squared[i] = d * d;
    e.absolute[i] = std::abs(d);
  }
  entries.push_back(std::move(e));
}

ErrorTable error_table_from_reports(const std::vector<RoundReport>& reports,
                                    int forecast_horizon, double congestion_threshold) {
  ErrorTable table;
  table.forecast_horizon = forecast_horizon;
  for (const auto& report : reports) {
    for (const auto& c : report.clients) {
      if (congestion_threshold == std::numeric_limits<double>::infinity()) {
        table.add(c.node, report.round, c.prediction, c.target);
        continue;
      }
      ErrorTable::Entry e;
      e.node = c.node;
      e.round = report.round;
      for (std::size_t i = 0; i < c.target.size(); ++i) {
        if (c.target[i] > congestion_threshold) continue;
        const double d = c.prediction[i] - c.target[i];
        e.squared.push_back(d * d);
        e.absolute.push_back(std::abs(d));
      }
      if (!e.squared.empty()) table.entries.push_back(std::move(e));
    }
  }
  return table;
}

double rmse(const ErrorTable& table) {
  if (table.entries.empty()) throw ValidationError("rmse: empty error table");
  double acc = 0.0;
  for (const auto& e : table.entries) {
    double sq = 0.0;
    for (double s : e.squared) sq += s;
    acc += std::sqrt(sq / static_cast<double>(e.squared.size()));
  }
  return acc / static_cast<double>(table.entries.size());
}

double mae(const ErrorTable& table) {
  if (table.entries.empty()) throw ValidationError("mae: empty error table");
  double acc = 0.0;
  for (const auto& e : table.entries) {
    double ab = 0.0;
    for (double a : e.absolute) ab += a;
    acc += ab / static_cast<double>(e.absolute.size());
  }
  return acc / static_cast<double>(table.entries.size());
}

double pooled_rmse(const ErrorTable& table) {
  if (table.entries.empty()) throw ValidationError("pooled_rmse: empty error table");
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& e : table.entries) {
    for (double s : e.squared) {
      acc += s;
      ++count;
    }
  }
  return std::sqrt(acc / static_cast<double>(count));
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw ValidationError("quantile: empty sample");
  std::sort(values.begin(), values.end());
  p = std::clamp(p, 0.0, 1.0);
  const double pos = p * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  if (lo == hi) return values[lo];
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

double msis(const std::vector<std::vector<double>>& truth_per_node, const IntervalSet& intervals,
            int periodicity) {
  if (!(intervals.alpha > 0 && intervals.alpha < 1)) {
    throw ValidationError("msis: alpha must be in (0, 1)");
  }
  if (periodicity < 1) throw ValidationError("msis: periodicity must be >= 1");
  if (intervals.entries.empty()) throw ValidationError("msis: no intervals");

  // Seasonal scale over every node's truth series.
  double scale_acc = 0.0;
  std::int64_t scale_count = 0;
  for (const auto& series : truth_per_node) {
    if (static_cast<int>(series.size()) <= periodicity) {
      throw ValidationError("msis: series length must exceed the periodicity");
    }
    for (std::size_t t = static_cast<std::size_t>(periodicity); t < series.size(); ++t) {
      scale_acc += std::abs(series[t] - series[t - periodicity]);
      ++scale_count;
    }
  }
  const double scale = scale_acc / static_cast<double>(scale_count);
  if (scale <= 0.0) {
    throw RunError("msis: seasonal scale is zero (constant seasonal series)");
  }

  double width = 0.0, p_lower = 0.0, p_upper = 0.0;
  for (const auto& e : intervals.entries) {
    if (e.lower > e.upper) throw ValidationError("msis: interval with lower > upper");
    const auto& series = truth_per_node.at(static_cast<std::size_t>(e.node));
    const std::size_t idx = static_cast<std::size_t>(e.round - 1 + e.horizon);
    if (e.round < 1 || idx >= series.size()) {
      throw ValidationError("msis: interval references a point outside the truth series");
    }
    const double truth = series[idx];
    width += e.upper - e.lower;
    if (truth < e.lower) p_lower += e.lower - truth;
    if (truth > e.upper) p_upper += truth - e.upper;
  }
  const double inv = 1.0 / static_cast<double>(intervals.entries.size());
  width *= inv;
  p_lower *= inv;
  p_upper *= inv;
  return (width + 2.0 / intervals.alpha * (p_lower + p_upper)) / scale;
}

IntervalSet interval_from_residuals(const std::vector<std::vector<double>>& residuals_per_node,
                                    const std::vector<std::vector<double>>& predictions_per_node,
                                    double alpha, int min_history, int window) {
  if (!(alpha > 0 && alpha <= 1)) {
    throw ValidationError("interval_from_residuals: alpha must be in (0, 1]");
  }
  if (residuals_per_node.size() != predictions_per_node.size()) {
    throw ValidationError("interval_from_residuals: node count mismatch");
  }
  if (min_history < 1 || window < 1) {
    throw ValidationError("interval_from_residuals: history parameters must be positive");
  }
  IntervalSet out;
  out.alpha = alpha;
  for (std::size_t n = 0; n < residuals_per_node.size(); ++n) {
    const auto& res = residuals_per_node[n];
    const auto& pred = predictions_per_node[n];
    if (res.size() != pred.size()) {
      throw ValidationError("interval_from_residuals: residual/prediction length mismatch");
    }
    if (static_cast<int>(res.size()) <= min_history) {
      throw ValidationError("interval_from_residuals: node " + std::to_string(n) +
                            " has only " + std::to_string(res.size()) +
                            " residuals, need more than " + std::to_string(min_history));
    }
    for (std::size_t k = static_cast<std::size_t>(min_history); k < res.size(); ++k) {
      const std::size_t begin = k > static_cast<std::size_t>(window) ? k - window : 0;
      std::vector<double> trailing;
      trailing.reserve(k - begin);
      for (std::size_t i = begin; i < k; ++i) trailing.push_back(std::abs(res[i]));
      const double half = quantile(std::move(trailing), 1.0 - alpha / 2.0);
      IntervalSet::Entry e;
      e.node = static_cast<int>(n);
      e.round = static_cast<int>(k) + 1;
      e.horizon = 0;
      e.lower = pred[k] - half;
      e.upper = pred[k] + half;
      out.entries.push_back(e);
    }
  }
  return out;
}

namespace {

struct Objective {
  const TrafficDataset& ds;
  std::vector<std::pair<int, int>> windows;  // (node, round)

  double loss(const ModelParams& p) const {
    double acc = 0.0;
    for (const auto& [node, round] : windows) {
      const Window w = make_window(ds, node, round);
      const ForwardTrace tr = forward(p, w.input);
      acc += mse_loss(tr.prediction, w.target);
    }
    return acc / static_cast<double>(windows.size());
  }

  Gradients gradient(const ModelParams& p) const {
    Gradients sum = zeros_like(p);
    for (const auto& [node, round] : windows) {
      const Window w = make_window(ds, node, round);
      const ForwardTrace tr = forward(p, w.input);
      const Gradients g = backward(p, tr, w.target);
      auto acc = [](std::vector<double>& d, const std::vector<double>& s) {
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
      };
      acc(sum.w_update, g.w_update);
      acc(sum.w_reset, g.w_reset);
      acc(sum.w_cand, g.w_cand);
      acc(sum.u_update, g.u_update);
      acc(sum.u_reset, g.u_reset);
      acc(sum.u_cand, g.u_cand);
      acc(sum.b_update, g.b_update);
      acc(sum.b_reset, g.b_reset);
      acc(sum.b_cand, g.b_cand);
      acc(sum.v_out, g.v_out);
      acc(sum.b_out, g.b_out);
    }
    const double inv = 1.0 / static_cast<double>(windows.size());
    for_each_field(sum, [inv](std::vector<double>& v) {
      for (double& x : v) x *= inv;
    });
    return sum;
  }
};

ModelParams apply_step(const ModelParams& p, const Gradients& g, double lr) {
  ModelParams out = p;
  auto step = [lr](std::vector<double>& d, const std::vector<double>& s) {
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= lr * s[i];
  };
  step(out.w_update, g.w_update);
  step(out.w_reset, g.w_reset);
  step(out.w_cand, g.w_cand);
  step(out.u_update, g.u_update);
  step(out.u_reset, g.u_reset);
  step(out.u_cand, g.u_cand);
  step(out.b_update, g.b_update);
  step(out.b_reset, g.b_reset);
  step(out.b_cand, g.b_cand);
  step(out.v_out, g.v_out);
  step(out.b_out, g.b_out);
  return out;
}

}  // namespace

OracleResult offline_oracle(const TrafficDataset& ds, int node, int hs, int budget,
                            std::uint64_t seed, int first_round, int last_round) {
  if (first_round == 0) first_round = ds.first_round();
  if (last_round == 0) last_round = ds.last_round();
  if (first_round < ds.first_round() || last_round > ds.last_round() ||
      first_round > last_round) {
    throw ValidationError("offline_oracle: round range outside the admissible rounds");
  }
  const int rounds = last_round - first_round + 1;
  if (node == -1 && ds.node_count > 16) {
    throw ValidationError("offline_oracle: desk-scale only (N <= 16 for the global oracle)");
  }
  if (rounds > 2000) {
    throw ValidationError("offline_oracle: desk-scale only (<= 2000 rounds)");
  }
  if (node < -1 || node >= ds.node_count) {
    throw ValidationError("offline_oracle: bad node index");
  }
  if (budget < 1) throw ValidationError("offline_oracle: budget must be >= 1");

  Objective obj{ds, {}};
  for (int t = first_round; t <= last_round; ++t) {
    if (node == -1) {
      for (int n = 0; n < ds.node_count; ++n) obj.windows.emplace_back(n, t);
    } else {
      obj.windows.emplace_back(node, t);
    }
  }

  OracleResult best;
  bool have_best = false;
  constexpr int kRestarts = 3;
  for (int restart = 0; restart < kRestarts; ++restart) {
    ModelParams p = init_params(seed + static_cast<std::uint64_t>(restart), hs,
                                ds.forecast_horizon);
    double loss = obj.loss(p);
    const double initial_loss = loss;
    double lr = 0.1;
    int iters = 0;
    while (iters < budget) {
      const Gradients g = obj.gradient(p);
      ++iters;
      bool accepted = false;
      double trial_lr = lr;
      while (trial_lr > 1e-14) {
        const ModelParams trial = apply_step(p, g, trial_lr);
        const double trial_loss = obj.loss(trial);
        if (std::isfinite(trial_loss) && trial_loss <= loss) {
          const double rel_improvement = (loss - trial_loss) / std::max(loss, 1e-300);
          p = trial;
          loss = trial_loss;
          accepted = true;
          if (trial_lr == lr) lr = std::min(lr * 1.1, 1.0);  // clean accept, be bolder
          else lr = trial_lr;
          if (rel_improvement < 1e-6) iters = budget;  // converged
          break;
        }
        trial_lr /= 2.0;
      }
      if (!accepted) break;  // no descent direction at any step size
    }
    if (!have_best || loss < best.mean_loss) {
      best.params = p;
      best.mean_loss = loss;
      best.iterations = iters;
      best.improved = loss < initial_loss;
      have_best = true;
    }
  }
  if (!best.improved) {
    // Reported, not thrown mid-pipeline: the caller decides whether an
    // unimproved oracle is fatal.
    best.iterations = std::max(best.iterations, budget);
  }
  return best;
}

double regret(std::span<const double> actual_losses, const ModelParams& reference,
              const TrafficDataset& ds, int node, int first_round, int last_round) {
  const int rounds = last_round - first_round + 1;
  if (rounds < 1 || static_cast<int>(actual_losses.size()) != rounds) {
    throw ValidationError("regret: trajectory length must equal the round range");
  }
  double actual = 0.0;
  for (double l : actual_losses) actual += l;
  double ref = 0.0;
  for (int t = first_round; t <= last_round; ++t) {
    const Window w = make_window(ds, node, t);
    const ForwardTrace tr = forward(reference, w.input);
    ref += mse_loss(tr.prediction, w.target);
  }
  return actual - ref;
}

}  // namespace refol
