#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "refol/common.hpp"

namespace refol {

// Square boolean adjacency, row-major. at(m, n) == true means a directed
// edge m -> n exists.
struct BoolMatrix {
  int n = 0;
  std::vector<std::uint8_t> cells;

  BoolMatrix() = default;
  explicit BoolMatrix(int size) : n(size), cells(static_cast<std::size_t>(size) * size, 0) {}

  bool at(int i, int j) const { return cells[static_cast<std::size_t>(i) * n + j] != 0; }
  void set(int i, int j, bool v) { cells[static_cast<std::size_t>(i) * n + j] = v ? 1 : 0; }
};

struct WindowConfig {
  int history_horizon = 12;  // H
  int forecast_horizon = 1;  // F
  int periodicity = 288;     // time steps per seasonal cycle
};

// The simulator's world state. Immutable after construction; time is
// 1-indexed so round t covers speeds at steps t-H+1..t (input) and
// t+1..t+F (target).
struct TrafficDataset {
  int node_count = 0;  // N
  int time_count = 0;  // total time steps
  std::vector<double> speeds;  // row-major [time][node]
  BoolMatrix adjacency;
  // Raw adjacency weights as loaded, kept for provenance only; empty when the
  // source was already boolean. Aggregation always uses the binarized matrix.
  std::vector<double> raw_weights;
  int history_horizon = 1;
  int forecast_horizon = 1;
  int periodicity = 288;

  // t is 1-based.
  double speed_at(int t, int node) const {
    return speeds[static_cast<std::size_t>(t - 1) * node_count + node];
  }
  int first_round() const { return history_horizon; }
  int last_round() const { return time_count - forecast_horizon; }
  int admissible_rounds() const { return last_round() - first_round() + 1; }
};

struct Window {
  std::vector<double> input;   // length H
  std::vector<double> target;  // length F
  int node_index = 0;
  int round_index = 0;  // 1-based t
};

// 1-based inclusive round ranges; an empty segment has begin > end.
struct SplitRounds {
  int train_begin = 0, train_end = -1;
  int val_begin = 0, val_end = -1;
  int test_begin = 0, test_end = -1;

  int train_count() const { return train_end - train_begin + 1; }
  int val_count() const { return val_end - val_begin + 1; }
  int test_count() const { return test_end - test_begin + 1; }
};

struct CsvOptions {
  bool has_header = false;
  bool adjacency_edge_list = false;  // adjacency file is `src,dst,weight` rows
};

TrafficDataset load_csv(const std::string& speeds_path, const std::string& adjacency_path,
                        const WindowConfig& cfg, const CsvOptions& opts = {});

// Validates the dataset invariants; throws ValidationError on the first
// violation with its location.
void validate_dataset(const TrafficDataset& ds);

Window make_window(const TrafficDataset& ds, int node, int round);

SplitRounds split_rounds(const TrafficDataset& ds, double train_ratio, double val_ratio,
                         double test_ratio);

// Piecewise-stationary AR(1) traffic surrogate: each segment_length-step
// segment has its own mean level, so segment boundaries are distribution
// shifts. Adjacency is a directed random graph of the given density with
// self-loops always present. Pure function of its arguments.
TrafficDataset synthesize_drift(std::uint64_t seed, int nodes, int rounds, int segment_length,
                                double graph_density, const WindowConfig& cfg = {});

// Thresholded Gaussian kernel adjacency: edge (m,n) iff
// exp(-dist(m,n)^2 / sigma^2) >= threshold, sigma = population std of the
// off-diagonal distances. Diagonal is always true. When sigma == 0 the
// kernel degenerates to dist == 0.
BoolMatrix gaussian_threshold_adjacency(std::span<const double> distances, int n,
                                        double threshold);
BoolMatrix gaussian_threshold_adjacency(const std::vector<std::vector<double>>& coordinates,
                                        double threshold);

void write_speeds_csv(const TrafficDataset& ds, const std::string& path);
void write_adjacency_csv(const TrafficDataset& ds, const std::string& path);

// Uniform double in [0,1) from the top 53 bits; keeps dataset synthesis
// reproducible without depending on distribution internals.
inline double uniform01(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace refol
