#include "refol/cost_model.hpp"

#include "refol/gru.hpp"

namespace refol {
namespace {

void check(const CostModel& m) {
  if (m.hidden_size < 1 || m.history_horizon < 1 || m.forecast_horizon < 1 || m.epochs < 1 ||
      m.bytes_per_param < 1) {
    throw ValidationError("cost model fields must all be positive");
  }
}

}  // namespace

std::int64_t forward_flops(const CostModel& m) {
  check(m);
  const std::int64_t hs = m.hidden_size;
  const std::int64_t per_step = (1 + hs) * hs * 3 * 2;
  const std::int64_t fc = 2 * hs * m.forecast_horizon;
  return m.history_horizon * per_step + fc;
}

std::int64_t backward_flops(const CostModel& m) { return 2 * forward_flops(m); }

std::int64_t kld_flops(const CostModel& m) {
  check(m);
  return 7LL * m.history_horizon;
}

std::int64_t comm_bytes(const CostModel& m) {
  check(m);
  return parameter_count(m.hidden_size, m.forecast_horizon) * m.bytes_per_param;
}

std::int64_t fedostc_extra_params(int hs) {
  if (hs < 1) throw ValidationError("fedostc_extra_params: hs must be >= 1");
  const std::int64_t h2 = 2LL * hs;
  return hs + (3 * h2 * (h2 + 2) + (h2 + 1));
}

std::int64_t fedostc_comm_bytes(const CostModel& m) {
  check(m);
  const std::int64_t encoder_decoder = 2 * parameter_count(m.hidden_size, m.forecast_horizon);
  return (encoder_decoder + fedostc_extra_params(m.hidden_size)) * m.bytes_per_param;
}

}  // namespace refol
