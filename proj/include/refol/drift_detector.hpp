#pragma once

#include <span>
#include <vector>

#include "refol/common.hpp"

namespace refol {

// Per-client drift detector state: the historical window hw stored at the
// last model update, compared against the sliding current window.
struct DriftState {
  std::vector<double> hw;     // empty until bootstrap
  int last_update_round = 0;  // u
  double threshold = 0.0;     // Q

  bool bootstrapped() const { return !hw.empty(); }
};

// Additive smoothing before sum-normalization so the divergence is defined
// even for all-zero windows (jammed traffic).
inline constexpr double kDistributionEpsilon = 1e-8;

// entry i = (w_i + eps) / sum_j (w_j + eps); strictly positive, sums to 1.
std::vector<double> to_distribution(std::span<const double> window);

// sum_i p_i * ln(p_i / q_i). Natural log; inputs must be equal-length
// strict distributions.
double kld(std::span<const double> p, std::span<const double> q);

struct GateResult {
  bool participate = false;
  double divergence = 0.0;
};

// Pure query: divergence of the current window from the stored hw,
// decision = divergence >= Q. Negative divergences within numerical slack
// are clamped to zero so the Q = 0 gate is always open.
GateResult should_participate(const DriftState& state, std::span<const double> current_window);

// Store the window that triggered this update and advance u.
void commit_update(DriftState& state, std::span<const double> window, int round);

}  // namespace refol
