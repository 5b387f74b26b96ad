#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "refol/common.hpp"
#include "refol/traffic_data.hpp"

namespace refol {

// One client's forecaster: single-layer GRU over a scalar series plus a
// linear head mapping the final hidden state to F outputs. All training
// arithmetic is double precision; the wire format (serialize) is float32.
struct ModelParams {
  int hidden_size = 0;       // hs
  int forecast_horizon = 0;  // F

  // Input weights are [hs] (the per-step input is a scalar), recurrent
  // weights [hs x hs] row-major, biases [hs].
  std::vector<double> w_update, w_reset, w_cand;
  std::vector<double> u_update, u_reset, u_cand;
  std::vector<double> b_update, b_reset, b_cand;
  std::vector<double> v_out;  // [hs x F] row-major
  std::vector<double> b_out;  // [F]
};

// Gradients share the parameter layout.
using Gradients = ModelParams;

// 3*hs*(hs+2) + F*(hs+1); equals 3*hs*(hs+2) + hs + 1 at F = 1.
std::int64_t parameter_count(int hs, int forecast_horizon);

// Weights uniform in [-1/sqrt(hs), +1/sqrt(hs)], biases zero.
ModelParams init_params(std::uint64_t seed, int hs, int forecast_horizon);

ModelParams zeros_like(const ModelParams& p);

struct ForwardTrace {
  std::vector<double> input;  // H entries
  // hidden has H+1 entries with hidden[0] = 0; the gate arrays have H.
  std::vector<std::vector<double>> hidden;
  std::vector<std::vector<double>> update_gate;  // u^a
  std::vector<std::vector<double>> reset_gate;   // r^a
  std::vector<std::vector<double>> candidate;    // h'^a
  std::vector<std::vector<double>> cand_recur;   // U_h * h^{a-1}, reused by backward
  std::vector<double> prediction;                // F
};

// u = sigmoid(W_u s + U_u h + b_u), r = sigmoid(W_r s + U_r h + b_r),
// h' = tanh(W_h s + r .* (U_h h) + b_h), h = u .* h_prev + (1-u) .* h',
// prediction = V_out^T h^H + b_out. Throws RunError on non-finite values
// with the offending step index.
ForwardTrace forward(const ModelParams& p, std::span<const double> input);

// (1/F) * sum of squared errors.
double mse_loss(std::span<const double> prediction, std::span<const double> target);

// Exact gradients of mse_loss w.r.t. every parameter, full backpropagation
// through time (no truncation).
Gradients backward(const ModelParams& p, const ForwardTrace& trace,
                   std::span<const double> target);

// epochs full-gradient steps on this single window's loss; returns w^(E).
ModelParams ogd_update(const ModelParams& p, const Window& window, double learning_rate,
                       int epochs);

// Wire format: 16-byte header (magic "RFWT", u16 version, u16 reserved,
// u32 hs, u32 F) followed by parameter_count little-endian float32 values
// in field order W_u W_r W_h, U_u U_r U_h, b_u b_r b_h, V_out, b_out.
inline constexpr std::uint16_t kWireVersion = 1;
inline constexpr std::size_t kWireHeaderBytes = 16;

std::vector<std::uint8_t> serialize(const ModelParams& p);
ModelParams deserialize(std::span<const std::uint8_t> bytes);

// Payload length excluding the header: parameter_count * 4. This is the
// byte count the cost ledger charges per transfer.
std::int64_t payload_bytes(int hs, int forecast_horizon);

// Visit all parameter arrays in serialization order.
template <typename P, typename Fn>
void for_each_field(P& p, Fn&& fn) {
  fn(p.w_update);
  fn(p.w_reset);
  fn(p.w_cand);
  fn(p.u_update);
  fn(p.u_reset);
  fn(p.u_cand);
  fn(p.b_update);
  fn(p.b_reset);
  fn(p.b_cand);
  fn(p.v_out);
  fn(p.b_out);
}

}  // namespace refol
