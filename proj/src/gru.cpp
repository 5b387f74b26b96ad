#include "refol/gru.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <random>

namespace refol {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y = U * h, U is [hs x hs] row-major.
void matvec(std::span<const double> u, std::span<const double> h, std::span<double> y, int hs) {
  for (int i = 0; i < hs; ++i) {
    double acc = 0.0;
    const double* row = u.data() + static_cast<std::size_t>(i) * hs;
    for (int j = 0; j < hs; ++j) acc += row[j] * h[j];
    y[i] = acc;
  }
}

void check_shape(const ModelParams& p) {
  const std::size_t hs = static_cast<std::size_t>(p.hidden_size);
  const std::size_t f = static_cast<std::size_t>(p.forecast_horizon);
  const bool ok = p.hidden_size >= 1 && p.forecast_horizon >= 1 && p.w_update.size() == hs &&
                  p.w_reset.size() == hs && p.w_cand.size() == hs &&
                  p.u_update.size() == hs * hs && p.u_reset.size() == hs * hs &&
                  p.u_cand.size() == hs * hs && p.b_update.size() == hs &&
                  p.b_reset.size() == hs && p.b_cand.size() == hs && p.v_out.size() == hs * f &&
                  p.b_out.size() == f;
  if (!ok) throw ValidationError("model parameter arrays do not match (hs, F)");
}

}  // namespace

std::int64_t parameter_count(int hs, int forecast_horizon) {
  return 3LL * hs * (hs + 2) + static_cast<std::int64_t>(forecast_horizon) * (hs + 1);
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z;
  z.hidden_size = p.hidden_size;
  z.forecast_horizon = p.forecast_horizon;
  const std::size_t hs = static_cast<std::size_t>(p.hidden_size);
  const std::size_t f = static_cast<std::size_t>(p.forecast_horizon);
  z.w_update.assign(hs, 0.0);
  z.w_reset.assign(hs, 0.0);
  z.w_cand.assign(hs, 0.0);
  z.u_update.assign(hs * hs, 0.0);
  z.u_reset.assign(hs * hs, 0.0);
  z.u_cand.assign(hs * hs, 0.0);
  z.b_update.assign(hs, 0.0);
  z.b_reset.assign(hs, 0.0);
  z.b_cand.assign(hs, 0.0);
  z.v_out.assign(hs * f, 0.0);
  z.b_out.assign(f, 0.0);
  return z;
}

ModelParams init_params(std::uint64_t seed, int hs, int forecast_horizon) {
  if (hs < 1 || forecast_horizon < 1) {
    throw ValidationError("init_params: hs and F must be >= 1");
  }
  ModelParams p;
  p.hidden_size = hs;
  p.forecast_horizon = forecast_horizon;
  p = zeros_like(p);
  p.hidden_size = hs;
  p.forecast_horizon = forecast_horizon;

  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hs));
  auto fill_uniform = [&](std::vector<double>& v) {
    for (auto& x : v) x = (2.0 * uniform01(rng()) - 1.0) * bound;
  };
  fill_uniform(p.w_update);
  fill_uniform(p.w_reset);
  fill_uniform(p.w_cand);
  fill_uniform(p.u_update);
  fill_uniform(p.u_reset);
  fill_uniform(p.u_cand);
  fill_uniform(p.v_out);
  // biases stay zero
  return p;
}

ForwardTrace forward(const ModelParams& p, std::span<const double> input) {
  check_shape(p);
  const int hs = p.hidden_size;
  const int f = p.forecast_horizon;
  const int steps = static_cast<int>(input.size());
  if (steps < 1) throw ValidationError("forward: empty input window");

  ForwardTrace tr;
  tr.input.assign(input.begin(), input.end());
  tr.hidden.assign(steps + 1, std::vector<double>(hs, 0.0));
  tr.update_gate.assign(steps, std::vector<double>(hs, 0.0));
  tr.reset_gate.assign(steps, std::vector<double>(hs, 0.0));
  tr.candidate.assign(steps, std::vector<double>(hs, 0.0));
  tr.cand_recur.assign(steps, std::vector<double>(hs, 0.0));

  std::vector<double> uz(hs), rz(hs);
  for (int a = 0; a < steps; ++a) {
    const double s = input[a];
    if (!std::isfinite(s)) throw RunError("forward: non-finite input at step " + std::to_string(a + 1));
    const auto& h_prev = tr.hidden[a];
    matvec(p.u_update, h_prev, uz, hs);
    matvec(p.u_reset, h_prev, rz, hs);
    matvec(p.u_cand, h_prev, tr.cand_recur[a], hs);
    for (int i = 0; i < hs; ++i) {
      const double u = sigmoid(p.w_update[i] * s + uz[i] + p.b_update[i]);
      const double r = sigmoid(p.w_reset[i] * s + rz[i] + p.b_reset[i]);
      const double hc = std::tanh(p.w_cand[i] * s + r * tr.cand_recur[a][i] + p.b_cand[i]);
      const double h = u * h_prev[i] + (1.0 - u) * hc;
      if (!std::isfinite(h)) {
        throw RunError("forward: non-finite hidden state at step " + std::to_string(a + 1));
      }
      tr.update_gate[a][i] = u;
      tr.reset_gate[a][i] = r;
      tr.candidate[a][i] = hc;
      tr.hidden[a + 1][i] = h;
    }
  }

  tr.prediction.assign(f, 0.0);
  const auto& h_last = tr.hidden[steps];
  for (int j = 0; j < f; ++j) {
    double acc = p.b_out[j];
    for (int i = 0; i < hs; ++i) acc += p.v_out[static_cast<std::size_t>(i) * f + j] * h_last[i];
    if (!std::isfinite(acc)) throw RunError("forward: non-finite prediction");
    tr.prediction[j] = acc;
  }
  return tr;
}

double mse_loss(std::span<const double> prediction, std::span<const double> target) {
  if (prediction.size() != target.size()) {
    throw ValidationError("mse_loss: length mismatch (" + std::to_string(prediction.size()) +
                          " vs " + std::to_string(target.size()) + ")");
  }
  if (prediction.empty()) throw ValidationError("mse_loss: empty vectors");
  double acc = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double d = prediction[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(prediction.size());
}

Gradients backward(const ModelParams& p, const ForwardTrace& trace,
                   std::span<const double> target) {
  check_shape(p);
  const int hs = p.hidden_size;
  const int f = p.forecast_horizon;
  const int steps = static_cast<int>(trace.input.size());
  if (static_cast<int>(target.size()) != f) {
    throw ValidationError("backward: target length does not match F");
  }

  Gradients g = zeros_like(p);

  // Output head: dL/dy_j = (2/F)(y_j - t_j).
  std::vector<double> dh(hs, 0.0);
  const auto& h_last = trace.hidden[steps];
  for (int j = 0; j < f; ++j) {
    const double dy = 2.0 / f * (trace.prediction[j] - target[j]);
    g.b_out[j] = dy;
    for (int i = 0; i < hs; ++i) {
      g.v_out[static_cast<std::size_t>(i) * f + j] = dy * h_last[i];
      dh[i] += p.v_out[static_cast<std::size_t>(i) * f + j] * dy;
    }
  }

  std::vector<double> dh_prev(hs), dzu(hs), dzr(hs), dzh(hs);
  for (int a = steps - 1; a >= 0; --a) {
    const double s = trace.input[a];
    const auto& h_prev = trace.hidden[a];
    const auto& u = trace.update_gate[a];
    const auto& r = trace.reset_gate[a];
    const auto& hc = trace.candidate[a];
    const auto& uh = trace.cand_recur[a];  // U_h * h_prev

    std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
    for (int i = 0; i < hs; ++i) {
      const double du = dh[i] * (h_prev[i] - hc[i]);
      const double dhc = dh[i] * (1.0 - u[i]);
      dh_prev[i] += dh[i] * u[i];

      dzh[i] = dhc * (1.0 - hc[i] * hc[i]);
      const double dr = dzh[i] * uh[i];
      dzr[i] = dr * r[i] * (1.0 - r[i]);
      dzu[i] = du * u[i] * (1.0 - u[i]);

      g.w_cand[i] += dzh[i] * s;
      g.b_cand[i] += dzh[i];
      g.w_reset[i] += dzr[i] * s;
      g.b_reset[i] += dzr[i];
      g.w_update[i] += dzu[i] * s;
      g.b_update[i] += dzu[i];
    }
    // Recurrent weights and the h_prev paths. d(U_h h)_i = dzh_i * r_i.
    for (int i = 0; i < hs; ++i) {
      const double duh = dzh[i] * r[i];
      const std::size_t row = static_cast<std::size_t>(i) * hs;
      for (int j = 0; j < hs; ++j) {
        g.u_cand[row + j] += duh * h_prev[j];
        g.u_reset[row + j] += dzr[i] * h_prev[j];
        g.u_update[row + j] += dzu[i] * h_prev[j];
        dh_prev[j] += p.u_cand[row + j] * duh + p.u_reset[row + j] * dzr[i] +
                      p.u_update[row + j] * dzu[i];
      }
    }
    dh.swap(dh_prev);
  }

  for_each_field(g, [](const std::vector<double>& v) {
    for (double x : v) {
      if (!std::isfinite(x)) throw RunError("backward: non-finite gradient");
    }
  });
  return g;
}

ModelParams ogd_update(const ModelParams& p, const Window& window, double learning_rate,
                       int epochs) {
  if (learning_rate < 0) throw ValidationError("ogd_update: learning rate must be >= 0");
  if (epochs < 1) throw ValidationError("ogd_update: epochs must be >= 1");
  ModelParams w = p;
  for (int e = 0; e < epochs; ++e) {
    const ForwardTrace tr = forward(w, window.input);
    const double loss = mse_loss(tr.prediction, window.target);
    if (!std::isfinite(loss)) {
      throw RunError("ogd_update: non-finite loss at epoch " + std::to_string(e + 1));
    }
    const Gradients g = backward(w, tr, window.target);
    auto step = [learning_rate](std::vector<double>& dst, const std::vector<double>& grad) {
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= learning_rate * grad[i];
    };
    step(w.w_update, g.w_update);
    step(w.w_reset, g.w_reset);
    step(w.w_cand, g.w_cand);
    step(w.u_update, g.u_update);
    step(w.u_reset, g.u_reset);
    step(w.u_cand, g.u_cand);
    step(w.b_update, g.b_update);
    step(w.b_reset, g.b_reset);
    step(w.b_cand, g.b_cand);
    step(w.v_out, g.v_out);
    step(w.b_out, g.b_out);
  }
  return w;
}

std::int64_t payload_bytes(int hs, int forecast_horizon) {
  return parameter_count(hs, forecast_horizon) * 4;
}

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> serialize(const ModelParams& p) {
  check_shape(p);
  std::vector<std::uint8_t> out;
  out.reserve(kWireHeaderBytes + static_cast<std::size_t>(payload_bytes(p.hidden_size, p.forecast_horizon)));
  out.push_back('R');
  out.push_back('F');
  out.push_back('W');
  out.push_back('T');
  put_u16(out, kWireVersion);
  put_u16(out, 0);
  put_u32(out, static_cast<std::uint32_t>(p.hidden_size));
  put_u32(out, static_cast<std::uint32_t>(p.forecast_horizon));
  for_each_field(const_cast<ModelParams&>(p), [&out](const std::vector<double>& field) {
    for (double x : field) {
      const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(x));
      put_u32(out, bits);
    }
  });
  return out;
}

ModelParams deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kWireHeaderBytes) throw RunError("deserialize: truncated header");
  if (bytes[0] != 'R' || bytes[1] != 'F' || bytes[2] != 'W' || bytes[3] != 'T') {
    throw RunError("deserialize: bad magic");
  }
  const std::uint16_t version =
      static_cast<std::uint16_t>(bytes[4]) | (static_cast<std::uint16_t>(bytes[5]) << 8);
  if (version != kWireVersion) {
    throw RunError("deserialize: unsupported wire version " + std::to_string(version));
  }
  const int hs = static_cast<int>(get_u32(bytes, 8));
  const int f = static_cast<int>(get_u32(bytes, 12));
  if (hs < 1 || f < 1 || hs > (1 << 20) || f > (1 << 20)) {
    throw RunError("deserialize: implausible header dimensions");
  }
  const std::size_t expected =
      kWireHeaderBytes + static_cast<std::size_t>(payload_bytes(hs, f));
  if (bytes.size() != expected) {
    throw RunError("deserialize: payload is " + std::to_string(bytes.size() - kWireHeaderBytes) +
                   " bytes, expected " + std::to_string(expected - kWireHeaderBytes));
  }

  ModelParams p;
  p.hidden_size = hs;
  p.forecast_horizon = f;
  p = zeros_like(p);
  std::size_t at = kWireHeaderBytes;
  for_each_field(p, [&bytes, &at](std::vector<double>& field) {
    for (double& x : field) {
      x = static_cast<double>(std::bit_cast<float>(get_u32(bytes, at)));
      at += 4;
    }
  });
  return p;
}

}  // namespace refol
