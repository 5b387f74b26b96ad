#pragma once

#include <cstdint>

#include "refol/common.hpp"

namespace refol {

// Analytic FLOP and byte accounting, independent of wall clock. All
// functions are pure and integer-valued.
struct CostModel {
  int hidden_size = 0;       // hs
  int history_horizon = 0;   // H
  int forecast_horizon = 0;  // F
  int epochs = 0;            // E
  int bytes_per_param = 4;
};

// Per-window forward pass: H * 6*hs*(1+hs) for the gates plus 2*hs*F for
// the linear head. Gate biases are deliberately not counted.
std::int64_t forward_flops(const CostModel& m);

// Twice the forward cost.
std::int64_t backward_flops(const CostModel& m);

// 7*H: two sums, two normalizations, and the divergence accumulation.
std::int64_t kld_flops(const CostModel& m);

// One direction of one model transfer: parameter_count * bytes_per_param.
// A participation costs two transfers (download + upload).
std::int64_t comm_bytes(const CostModel& m);

// hs + [3*(2hs)*(2hs+2) + (2hs+1)]: the hidden-state/GNN side channel.
std::int64_t fedostc_extra_params(int hs);

// Per client per round: encoder + decoder GRU models plus the extra
// parameters above. Analytic comparison only; every client transfers every
// round in that scheme.
std::int64_t fedostc_comm_bytes(const CostModel& m);

}  // namespace refol
