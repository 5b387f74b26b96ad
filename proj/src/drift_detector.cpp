#include "refol/drift_detector.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace refol {

std::vector<double> to_distribution(std::span<const double> window) {
  if (window.empty()) throw ValidationError("to_distribution: empty window");
  double sum = 0.0;
  for (double v : window) {
    if (!(v >= 0)) {
      throw ValidationError("to_distribution: negative entry " + std::to_string(v));
    }
    sum += v + kDistributionEpsilon;
  }
  std::vector<double> p(window.size());
  for (std::size_t i = 0; i < window.size(); ++i) {
    p[i] = (window[i] + kDistributionEpsilon) / sum;
  }
  return p;
}

double kld(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw ValidationError("kld: length mismatch (" + std::to_string(p.size()) + " vs " +
                          std::to_string(q.size()) + ")");
  }
  if (p.empty()) throw ValidationError("kld: empty distributions");
  double p_sum = 0.0, q_sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] > 0) || !(q[i] > 0)) {
      throw ValidationError("kld: distributions must be strictly positive");
    }
    p_sum += p[i];
    q_sum += q[i];
  }
  if (std::abs(p_sum - 1.0) > 1e-9 || std::abs(q_sum - 1.0) > 1e-9) {
    throw ValidationError("kld: inputs do not sum to 1");
  }
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    d += p[i] * std::log(p[i] / q[i]);
  }
  return d;
}

GateResult should_participate(const DriftState& state, std::span<const double> current_window) {
  if (!state.bootstrapped()) {
    throw RunError("should_participate: drift state not bootstrapped");
  }
  const auto p = to_distribution(current_window);
  const auto q = to_distribution(state.hw);
  // KLD is nonnegative up to rounding; clamping keeps the Q = 0 gate open.
  const double divergence = std::max(0.0, kld(p, q));
  return GateResult{divergence >= state.threshold, divergence};
}

void commit_update(DriftState& state, std::span<const double> window, int round) {
  state.hw.assign(window.begin(), window.end());
  state.last_update_round = round;
}

}  // namespace refol
