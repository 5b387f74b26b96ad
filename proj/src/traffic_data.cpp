#include "refol/traffic_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace refol {
namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  // Trailing blank lines are tolerated, interior ones are not (caught as
  // short rows by the rectangle check).
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, const std::string& file, int row, int col) {
  const std::string cell = trim(raw);
  if (cell.empty()) {
    throw ValidationError(file + ": empty cell at row " + std::to_string(row) + ", column " +
                          std::to_string(col) + " (missing values are rejected, not imputed)");
  }
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ValidationError(file + ": non-numeric cell '" + cell + "' at row " +
                          std::to_string(row) + ", column " + std::to_string(col));
  }
  return value;
}

// Rectangular numeric table; `row0` is the 1-based file row of the first
// data line (for error messages).
std::vector<std::vector<double>> parse_table(const std::vector<std::string>& lines,
                                             const std::string& file, int row0) {
  std::vector<std::vector<double>> table;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const int file_row = row0 + static_cast<int>(i);
    auto cells = split_cells(lines[i]);
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      row.push_back(parse_cell(cells[j], file, file_row, static_cast<int>(j) + 1));
    }
    if (!table.empty() && row.size() != table[0].size()) {
      throw ValidationError(file + ": row " + std::to_string(file_row) + " has " +
                            std::to_string(row.size()) + " columns, expected " +
                            std::to_string(table[0].size()));
    }
    table.push_back(std::move(row));
  }
  return table;
}

}  // namespace

void validate_dataset(const TrafficDataset& ds) {
  if (ds.node_count <= 0) throw ValidationError("dataset has no nodes (N = 0)");
  if (ds.time_count <= 0) throw ValidationError("dataset has no time steps");
  if (ds.history_horizon < 1) throw ValidationError("history horizon H must be >= 1");
  if (ds.forecast_horizon < 1) throw ValidationError("forecast horizon F must be >= 1");
  if (ds.history_horizon + ds.forecast_horizon > ds.time_count) {
    throw ValidationError("H + F = " +
                          std::to_string(ds.history_horizon + ds.forecast_horizon) +
                          " exceeds the series length " + std::to_string(ds.time_count));
  }
  if (ds.adjacency.n != ds.node_count) {
    throw ValidationError("adjacency is " + std::to_string(ds.adjacency.n) + "x" +
                          std::to_string(ds.adjacency.n) + " but the speeds table has " +
                          std::to_string(ds.node_count) + " columns");
  }
  for (int t = 1; t <= ds.time_count; ++t) {
    for (int n = 0; n < ds.node_count; ++n) {
      const double v = ds.speed_at(t, n);
      if (!std::isfinite(v)) {
        throw ValidationError("non-finite speed at row " + std::to_string(t) + ", column " +
                              std::to_string(n + 1));
      }
      if (v < 0) {
        throw ValidationError("negative speed " + std::to_string(v) + " at row " +
                              std::to_string(t) + ", column " + std::to_string(n + 1));
      }
    }
  }
}

TrafficDataset load_csv(const std::string& speeds_path, const std::string& adjacency_path,
                        const WindowConfig& cfg, const CsvOptions& opts) {
  auto speed_lines = split_lines(read_file(speeds_path));
  int row0 = 1;
  if (opts.has_header && !speed_lines.empty()) {
    speed_lines.erase(speed_lines.begin());
    row0 = 2;
  }
  if (speed_lines.empty()) throw ValidationError(speeds_path + ": no data rows");
  auto speeds = parse_table(speed_lines, speeds_path, row0);
  const int time_count = static_cast<int>(speeds.size());
  const int node_count = static_cast<int>(speeds[0].size());
  if (node_count == 0) throw ValidationError(speeds_path + ": zero columns");

  TrafficDataset ds;
  ds.node_count = node_count;
  ds.time_count = time_count;
  ds.history_horizon = cfg.history_horizon;
  ds.forecast_horizon = cfg.forecast_horizon;
  ds.periodicity = cfg.periodicity;
  ds.speeds.reserve(static_cast<std::size_t>(time_count) * node_count);
  for (const auto& row : speeds) {
    ds.speeds.insert(ds.speeds.end(), row.begin(), row.end());
  }

  auto adj_lines = split_lines(read_file(adjacency_path));
  if (adj_lines.empty()) throw ValidationError(adjacency_path + ": empty adjacency file");
  ds.adjacency = BoolMatrix(node_count);
  if (opts.adjacency_edge_list) {
    for (std::size_t i = 0; i < adj_lines.size(); ++i) {
      const int file_row = static_cast<int>(i) + 1;
      auto cells = split_cells(adj_lines[i]);
      if (cells.size() != 2 && cells.size() != 3) {
        throw ValidationError(adjacency_path + ": row " + std::to_string(file_row) +
                              " has " + std::to_string(cells.size()) +
                              " columns, expected src,dst[,weight]");
      }
      const double src_d = parse_cell(cells[0], adjacency_path, file_row, 1);
      const double dst_d = parse_cell(cells[1], adjacency_path, file_row, 2);
      const double weight =
          cells.size() == 3 ? parse_cell(cells[2], adjacency_path, file_row, 3) : 1.0;
      const int src = static_cast<int>(src_d);
      const int dst = static_cast<int>(dst_d);
      if (src_d != src || dst_d != dst || src < 0 || dst < 0 || src >= node_count ||
          dst >= node_count) {
        throw ValidationError(adjacency_path + ": row " + std::to_string(file_row) +
                              " has node ids outside [0, " + std::to_string(node_count - 1) +
                              "]");
      }
      if (weight != 0.0) ds.adjacency.set(src, dst, true);
    }
  } else {
    auto adj = parse_table(adj_lines, adjacency_path, 1);
    const int rows = static_cast<int>(adj.size());
    const int cols = static_cast<int>(adj[0].size());
    if (rows != node_count || cols != node_count) {
      throw ValidationError("dimension mismatch: speeds has " + std::to_string(node_count) +
                            " columns but adjacency is " + std::to_string(rows) + "x" +
                            std::to_string(cols));
    }
    bool weighted = false;
    ds.raw_weights.assign(static_cast<std::size_t>(node_count) * node_count, 0.0);
    for (int i = 0; i < node_count; ++i) {
      for (int j = 0; j < node_count; ++j) {
        const double w = adj[i][j];
        ds.raw_weights[static_cast<std::size_t>(i) * node_count + j] = w;
        if (w != 0.0) {
          ds.adjacency.set(i, j, true);
          if (w != 1.0) weighted = true;
        }
      }
    }
    if (!weighted) ds.raw_weights.clear();  // nothing beyond the boolean matrix
  }

  validate_dataset(ds);
  return ds;
}

Window make_window(const TrafficDataset& ds, int node, int round) {
  if (node < 0 || node >= ds.node_count) {
    throw ValidationError("node index " + std::to_string(node) + " outside [0, " +
                          std::to_string(ds.node_count - 1) + "]");
  }
  if (round < ds.first_round() || round > ds.last_round()) {
    throw ValidationError("round " + std::to_string(round) + " outside the admissible range [" +
                          std::to_string(ds.first_round()) + ", " +
                          std::to_string(ds.last_round()) + "]");
  }
  Window w;
  w.node_index = node;
  w.round_index = round;
  const int h = ds.history_horizon;
  const int f = ds.forecast_horizon;
  w.input.resize(h);
  w.target.resize(f);
  for (int i = 0; i < h; ++i) w.input[i] = ds.speed_at(round - h + 1 + i, node);
  for (int j = 0; j < f; ++j) w.target[j] = ds.speed_at(round + 1 + j, node);
  return w;
}

SplitRounds split_rounds(const TrafficDataset& ds, double train_ratio, double val_ratio,
                         double test_ratio) {
  const double ratios[3] = {train_ratio, val_ratio, test_ratio};
  double sum = 0.0;
  for (double r : ratios) {
    if (r < 0 || !std::isfinite(r)) throw ValidationError("split ratios must be nonnegative");
    sum += r;
  }
  if (sum <= 0) throw ValidationError("split ratios must sum to a positive value");

  const int total = ds.admissible_rounds();
  int counts[3];
  for (int i = 0; i < 3; ++i) {
    counts[i] = static_cast<int>(std::floor(total * ratios[i] / sum));
  }
  int assigned = counts[0] + counts[1] + counts[2];
  // Leftover rounds go to the last segment with a nonzero ratio, keeping
  // zero-ratio segments exactly empty.
  for (int i = 2; i >= 0 && assigned < total; --i) {
    if (ratios[i] > 0) {
      counts[i] += total - assigned;
      assigned = total;
    }
  }
  for (int i = 0; i < 3; ++i) {
    if (ratios[i] > 0 && counts[i] < 1) {
      throw ValidationError("split leaves segment " + std::to_string(i) +
                            " empty although its ratio is nonzero (only " +
                            std::to_string(total) + " admissible rounds)");
    }
  }

  SplitRounds s;
  const int first = ds.first_round();
  s.train_begin = first;
  s.train_end = first + counts[0] - 1;
  s.val_begin = s.train_end + 1;
  s.val_end = s.train_end + counts[1];
  s.test_begin = s.val_end + 1;
  s.test_end = s.val_end + counts[2];
  return s;
}

TrafficDataset synthesize_drift(std::uint64_t seed, int nodes, int rounds, int segment_length,
                                double graph_density, const WindowConfig& cfg) {
  if (nodes <= 0 || rounds <= 0 || segment_length <= 0) {
    throw ValidationError("synthesize_drift: nodes, rounds and segment_length must be positive");
  }
  if (graph_density < 0 || graph_density > 1) {
    throw ValidationError("synthesize_drift: graph density must be in [0, 1]");
  }

  std::mt19937_64 rng(seed);
  auto next_u01 = [&rng] { return uniform01(rng()); };
  auto next_gauss = [&] {
    // Box-Muller on explicit uniform bits; u1 shifted into (0, 1].
    const double u1 = 1.0 - next_u01();
    const double u2 = next_u01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  };

  const int segments = (rounds + segment_length - 1) / segment_length;
  std::vector<double> means(static_cast<std::size_t>(nodes) * segments);
  for (auto& m : means) m = 30.0 + 40.0 * next_u01();

  TrafficDataset ds;
  ds.node_count = nodes;
  ds.time_count = rounds;
  ds.history_horizon = cfg.history_horizon;
  ds.forecast_horizon = cfg.forecast_horizon;
  ds.periodicity = cfg.periodicity;
  ds.adjacency = BoolMatrix(nodes);
  for (int i = 0; i < nodes; ++i) {
    for (int j = 0; j < nodes; ++j) {
      if (i == j) {
        ds.adjacency.set(i, j, true);
      } else {
        ds.adjacency.set(i, j, next_u01() < graph_density);
      }
    }
  }

  constexpr double kAr = 0.6;
  constexpr double kSigma = 1.5;
  ds.speeds.assign(static_cast<std::size_t>(rounds) * nodes, 0.0);
  for (int n = 0; n < nodes; ++n) {
    double prev = means[static_cast<std::size_t>(n) * segments] + kSigma * next_gauss();
    for (int t = 0; t < rounds; ++t) {
      const int seg = t / segment_length;
      const double mu = means[static_cast<std::size_t>(n) * segments + seg];
      double x = mu + kAr * (prev - mu) + kSigma * next_gauss();
      x = std::max(0.0, x);
      ds.speeds[static_cast<std::size_t>(t) * nodes + n] = x;
      prev = x;
    }
  }

  validate_dataset(ds);
  return ds;
}

BoolMatrix gaussian_threshold_adjacency(std::span<const double> distances, int n,
                                        double threshold) {
  if (n <= 0) throw ValidationError("gaussian_threshold_adjacency: empty input");
  if (distances.size() != static_cast<std::size_t>(n) * n) {
    throw ValidationError("gaussian_threshold_adjacency: distance matrix is not n x n");
  }
  double sum = 0.0, sq_sum = 0.0;
  int count = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double d = distances[static_cast<std::size_t>(i) * n + j];
      if (!std::isfinite(d) || d < 0) {
        throw ValidationError("gaussian_threshold_adjacency: negative or non-finite distance at (" +
                              std::to_string(i) + ", " + std::to_string(j) + ")");
      }
      if (i == j) {
        if (d != 0) {
          throw ValidationError("gaussian_threshold_adjacency: nonzero diagonal at " +
                                std::to_string(i));
        }
        continue;
      }
      sum += d;
      sq_sum += d * d;
      ++count;
    }
  }
  // Population std over the off-diagonal entries; the structural zero
  // diagonal is not data.
  double sigma = 0.0;
  if (count > 0) {
    const double mean = sum / count;
    sigma = std::sqrt(std::max(0.0, sq_sum / count - mean * mean));
  }

  BoolMatrix adj(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) {
        adj.set(i, j, true);
        continue;
      }
      const double d = distances[static_cast<std::size_t>(i) * n + j];
      const double weight = sigma > 0 ? std::exp(-(d * d) / (sigma * sigma)) : (d == 0 ? 1.0 : 0.0);
      adj.set(i, j, weight >= threshold);
    }
  }
  return adj;
}

BoolMatrix gaussian_threshold_adjacency(const std::vector<std::vector<double>>& coordinates,
                                        double threshold) {
  const int n = static_cast<int>(coordinates.size());
  if (n == 0) throw ValidationError("gaussian_threshold_adjacency: empty input");
  const std::size_t dim = coordinates[0].size();
  std::vector<double> dist(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    if (coordinates[i].size() != dim) {
      throw ValidationError("gaussian_threshold_adjacency: coordinate " + std::to_string(i) +
                            " has inconsistent dimension");
    }
    for (int j = 0; j < n; ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double d = coordinates[i][k] - coordinates[j][k];
        sq += d * d;
      }
      dist[static_cast<std::size_t>(i) * n + j] = std::sqrt(sq);
    }
  }
  return gaussian_threshold_adjacency(dist, n, threshold);
}

void write_speeds_csv(const TrafficDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RunError("cannot write " + path);
  char buf[64];
  for (int t = 1; t <= ds.time_count; ++t) {
    for (int n = 0; n < ds.node_count; ++n) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.speed_at(t, n));
      out << buf << (n + 1 < ds.node_count ? "," : "\n");
    }
  }
}

void write_adjacency_csv(const TrafficDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RunError("cannot write " + path);
  for (int i = 0; i < ds.node_count; ++i) {
    for (int j = 0; j < ds.node_count; ++j) {
      out << (ds.adjacency.at(i, j) ? '1' : '0') << (j + 1 < ds.node_count ? "," : "\n");
    }
  }
}

}  // namespace refol
