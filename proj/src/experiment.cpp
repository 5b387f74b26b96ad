#include "refol/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace refol {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") {
    out = true;
    return true;
  }
  if (v == "false" || v == "0" || v == "off" || v == "no") {
    out = false;
    return true;
  }
  return false;
}

bool parse_double(const std::string& v, double& out) {
  if (v == "inf" || v == "+inf") {
    out = std::numeric_limits<double>::infinity();
    return true;
  }
  try {
    std::size_t pos = 0;
    out = std::stod(v, &pos);
    return pos == v.size();
  } catch (...) {
    return false;
  }
}

bool parse_int(const std::string& v, int& out) {
  const char* first = v.data();
  const char* last = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool parse_u64(const std::string& v, std::uint64_t& out) {
  const char* first = v.data();
  const char* last = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

ExperimentConfig config_from_json(const json& j);

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::vector<std::string> problems;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    bool ok = true;
    if (key == "source") cfg.source = value;
    else if (key == "speeds_path") cfg.speeds_path = value;
    else if (key == "adjacency_path") cfg.adjacency_path = value;
    else if (key == "adjacency_format") cfg.adjacency_format = value;
    else if (key == "csv_has_header") ok = parse_bool(value, cfg.csv_has_header);
    else if (key == "synth_nodes") ok = parse_int(value, cfg.synth_nodes);
    else if (key == "synth_rounds") ok = parse_int(value, cfg.synth_rounds);
    else if (key == "synth_segment_length") ok = parse_int(value, cfg.synth_segment_length);
    else if (key == "synth_density") ok = parse_double(value, cfg.synth_density);
    else if (key == "synth_seed") ok = parse_u64(value, cfg.synth_seed);
    else if (key == "method") cfg.method = value;
    else if (key == "Q") ok = parse_double(value, cfg.q);
    else if (key == "lr") ok = parse_double(value, cfg.lr);
    else if (key == "E") ok = parse_int(value, cfg.epochs);
    else if (key == "hs") ok = parse_int(value, cfg.hidden_size);
    else if (key == "H") ok = parse_int(value, cfg.history_horizon);
    else if (key == "F") ok = parse_int(value, cfg.forecast_horizon);
    else if (key == "conv_layers") ok = parse_int(value, cfg.conv_layers);
    else if (key == "seed") ok = parse_u64(value, cfg.seed);
    else if (key == "split") cfg.split = value;
    else if (key == "select_count") ok = parse_int(value, cfg.select_count);
    else if (key == "hw_update") cfg.hw_update = value;
    else if (key == "warmup") cfg.warmup = value;
    else if (key == "normalize") ok = parse_bool(value, cfg.normalize);
    else if (key == "pooled_rmse") ok = parse_bool(value, cfg.pooled_rmse);
    else if (key == "bytes_per_param") ok = parse_int(value, cfg.bytes_per_param);
    else if (key == "alpha") ok = parse_double(value, cfg.alpha);
    else if (key == "periodicity") ok = parse_int(value, cfg.periodicity);
    else if (key == "threads") ok = parse_int(value, cfg.threads);
    else if (key == "checkpoint_every") ok = parse_int(value, cfg.checkpoint_every);
    else if (key == "vanilla_aggregator") cfg.vanilla_aggregator = value;
    else if (key == "interval_min_history") ok = parse_int(value, cfg.interval_min_history);
    else if (key == "interval_window") ok = parse_int(value, cfg.interval_window);
    else {
      problems.push_back("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
      continue;
    }
    if (!ok) {
      problems.push_back("line " + std::to_string(lineno) + ": bad value '" + value +
                         "' for key '" + key + "'");
    }
  }
  if (!problems.empty()) {
    std::string msg = "config parse errors:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ValidationError(msg);
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  // A manifest.json is accepted anywhere a config is: re-execution from the
  // manifest alone is part of the contract.
  const std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json j = json::parse(text);
    if (j.contains("config")) return config_from_json(j["config"]);
    return config_from_json(j);
  }
  return parse_config_text(text);
}

std::string render_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "# refol experiment config (schema " << kConfigSchemaVersion << ")\n";
  out << "source = " << c.source << "\n";
  out << "speeds_path = " << c.speeds_path << "\n";
  out << "adjacency_path = " << c.adjacency_path << "\n";
  out << "adjacency_format = " << c.adjacency_format << "\n";
  out << "csv_has_header = " << (c.csv_has_header ? "true" : "false") << "\n";
  out << "synth_nodes = " << c.synth_nodes << "\n";
  out << "synth_rounds = " << c.synth_rounds << "\n";
  out << "synth_segment_length = " << c.synth_segment_length << "\n";
  out << "synth_density = " << fmt_double(c.synth_density) << "\n";
  out << "synth_seed = " << c.synth_seed << "\n";
  out << "method = " << c.method << "\n";
  out << "Q = " << fmt_double(c.q) << "\n";
  out << "lr = " << fmt_double(c.lr) << "\n";
  out << "E = " << c.epochs << "\n";
  out << "hs = " << c.hidden_size << "\n";
  out << "H = " << c.history_horizon << "\n";
  out << "F = " << c.forecast_horizon << "\n";
  out << "conv_layers = " << c.conv_layers << "\n";
  out << "seed = " << c.seed << "\n";
  out << "split = " << c.split << "\n";
  out << "select_count = " << c.select_count << "\n";
  out << "hw_update = " << c.hw_update << "\n";
  out << "warmup = " << c.warmup << "\n";
  out << "normalize = " << (c.normalize ? "true" : "false") << "\n";
  out << "pooled_rmse = " << (c.pooled_rmse ? "true" : "false") << "\n";
  out << "bytes_per_param = " << c.bytes_per_param << "\n";
  out << "alpha = " << fmt_double(c.alpha) << "\n";
  out << "periodicity = " << c.periodicity << "\n";
  out << "threads = " << c.threads << "\n";
  out << "checkpoint_every = " << c.checkpoint_every << "\n";
  out << "vanilla_aggregator = " << c.vanilla_aggregator << "\n";
  out << "interval_min_history = " << c.interval_min_history << "\n";
  out << "interval_window = " << c.interval_window << "\n";
  return out.str();
}

namespace {

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["source"] = c.source;
  j["speeds_path"] = c.speeds_path;
  j["adjacency_path"] = c.adjacency_path;
  j["adjacency_format"] = c.adjacency_format;
  j["csv_has_header"] = c.csv_has_header;
  j["synth_nodes"] = c.synth_nodes;
  j["synth_rounds"] = c.synth_rounds;
  j["synth_segment_length"] = c.synth_segment_length;
  j["synth_density"] = c.synth_density;
  j["synth_seed"] = c.synth_seed;
  j["method"] = c.method;
  j["Q"] = std::isinf(c.q) ? json("inf") : json(c.q);
  j["lr"] = c.lr;
  j["E"] = c.epochs;
  j["hs"] = c.hidden_size;
  j["H"] = c.history_horizon;
  j["F"] = c.forecast_horizon;
  j["conv_layers"] = c.conv_layers;
  j["seed"] = c.seed;
  j["split"] = c.split;
  j["select_count"] = c.select_count;
  j["hw_update"] = c.hw_update;
  j["warmup"] = c.warmup;
  j["normalize"] = c.normalize;
  j["pooled_rmse"] = c.pooled_rmse;
  j["bytes_per_param"] = c.bytes_per_param;
  j["alpha"] = c.alpha;
  j["periodicity"] = c.periodicity;
  j["threads"] = c.threads;
  j["checkpoint_every"] = c.checkpoint_every;
  j["vanilla_aggregator"] = c.vanilla_aggregator;
  j["interval_min_history"] = c.interval_min_history;
  j["interval_window"] = c.interval_window;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  auto get = [&j](const char* key, auto& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
  };
  get("source", c.source);
  get("speeds_path", c.speeds_path);
  get("adjacency_path", c.adjacency_path);
  get("adjacency_format", c.adjacency_format);
  get("csv_has_header", c.csv_has_header);
  get("synth_nodes", c.synth_nodes);
  get("synth_rounds", c.synth_rounds);
  get("synth_segment_length", c.synth_segment_length);
  get("synth_density", c.synth_density);
  get("synth_seed", c.synth_seed);
  get("method", c.method);
  if (j.contains("Q")) {
    if (j.at("Q").is_string()) {
      c.q = std::numeric_limits<double>::infinity();
    } else {
      c.q = j.at("Q").get<double>();
    }
  }
  get("lr", c.lr);
  get("E", c.epochs);
  get("hs", c.hidden_size);
  get("H", c.history_horizon);
  get("F", c.forecast_horizon);
  get("conv_layers", c.conv_layers);
  get("seed", c.seed);
  get("split", c.split);
  get("select_count", c.select_count);
  get("hw_update", c.hw_update);
  get("warmup", c.warmup);
  get("normalize", c.normalize);
  get("pooled_rmse", c.pooled_rmse);
  get("bytes_per_param", c.bytes_per_param);
  get("alpha", c.alpha);
  get("periodicity", c.periodicity);
  get("threads", c.threads);
  get("checkpoint_every", c.checkpoint_every);
  get("vanilla_aggregator", c.vanilla_aggregator);
  get("interval_min_history", c.interval_min_history);
  get("interval_window", c.interval_window);
  return c;
}

bool parse_split(const std::string& text, double out[3]) {
  std::istringstream in(text);
  std::string part;
  int i = 0;
  while (std::getline(in, part, ':')) {
    if (i >= 3) return false;
    if (!parse_double(trim(part), out[i])) return false;
    ++i;
  }
  return i == 3;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::vector<std::string> validate_config(const ExperimentConfig& c) {
  std::vector<std::string> errs;
  auto err = [&errs](const std::string& m) { errs.push_back(m); };

  if (c.source != "synthetic" && c.source != "csv") {
    err("source must be 'synthetic' or 'csv', got '" + c.source + "'");
  }
  if (c.source == "csv") {
    if (c.speeds_path.empty()) err("speeds_path is required when source = csv");
    else if (!fs::exists(c.speeds_path)) err("speeds_path does not exist: " + c.speeds_path);
    if (c.adjacency_path.empty()) err("adjacency_path is required when source = csv");
    else if (!fs::exists(c.adjacency_path)) {
      err("adjacency_path does not exist: " + c.adjacency_path);
    }
    if (c.adjacency_format != "dense" && c.adjacency_format != "edgelist") {
      err("adjacency_format must be 'dense' or 'edgelist'");
    }
  } else {
    if (c.synth_nodes < 1) err("synth_nodes must be >= 1");
    if (c.synth_rounds < 1) err("synth_rounds must be >= 1");
    if (c.synth_segment_length < 1) err("synth_segment_length must be >= 1");
    if (c.synth_density < 0 || c.synth_density > 1) err("synth_density must be in [0, 1]");
  }
  if (c.method != "refol" && c.method != "vanilla" && c.method != "frozen-local" &&
      c.method != "local-ol") {
    err("method must be one of refol|vanilla|frozen-local|local-ol, got '" + c.method + "'");
  }
  if (std::isnan(c.q) || c.q < 0) err("Q must be >= 0");
  if (!(c.lr > 0) || !std::isfinite(c.lr)) err("lr must be > 0");
  if (c.epochs < 1) err("E must be >= 1");
  if (c.hidden_size < 1) err("hs must be >= 1");
  if (c.history_horizon < 1) err("H must be >= 1");
  if (c.forecast_horizon < 1) err("F must be >= 1");
  if (c.conv_layers < 0) err("conv_layers must be >= 0");
  double ratios[3];
  if (!parse_split(c.split, ratios)) {
    err("split must be 'a:b:c', got '" + c.split + "'");
  } else {
    if (ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0) err("split ratios must be nonnegative");
    if (ratios[0] + ratios[1] + ratios[2] <= 0) err("split ratios must sum to > 0");
    if (ratios[2] <= 0) err("split test ratio must be > 0 (online evaluation needs test rounds)");
  }
  if (c.method == "vanilla" && c.select_count < 1) {
    err("select_count must be >= 1 for method = vanilla");
  }
  if (c.hw_update != "trigger-window" && c.hw_update != "forecast-window") {
    err("hw_update must be 'trigger-window' or 'forecast-window'");
  }
  if (c.hw_update == "forecast-window" && c.forecast_horizon != c.history_horizon) {
    err("hw_update = forecast-window is only legal when F = H");
  }
  if (c.warmup != "train-partition" && c.warmup != "off") {
    err("warmup must be 'train-partition' or 'off'");
  }
  if (c.bytes_per_param < 1) err("bytes_per_param must be >= 1");
  if (!(c.alpha > 0 && c.alpha < 1)) err("alpha must be in (0, 1)");
  if (c.periodicity < 1) err("periodicity must be >= 1");
  if (c.threads < 1) err("threads must be >= 1");
  if (c.checkpoint_every < 0) err("checkpoint_every must be >= 0");
  if (c.vanilla_aggregator != "average" && c.vanilla_aggregator != "graph") {
    err("vanilla_aggregator must be 'average' or 'graph'");
  }
  if (c.interval_min_history < 1) err("interval_min_history must be >= 1");
  if (c.interval_window < 1) err("interval_window must be >= 1");
  return errs;
}

RunOptions to_run_options(const ExperimentConfig& c) {
  RunOptions o;
  if (c.method == "refol") o.method = Method::kRefol;
  else if (c.method == "vanilla") o.method = Method::kVanilla;
  else if (c.method == "frozen-local") o.method = Method::kFrozenLocal;
  else o.method = Method::kLocalOl;
  o.q_threshold = c.q;
  o.learning_rate = c.lr;
  o.epochs = c.epochs;
  o.hidden_size = c.hidden_size;
  o.conv_layers = c.conv_layers;
  o.seed = c.seed;
  o.select_count = c.select_count;
  o.hw_update = c.hw_update == "forecast-window" ? HwUpdateMode::kForecastWindow
                                                 : HwUpdateMode::kTriggerWindow;
  o.vanilla_aggregator = c.vanilla_aggregator == "graph" ? VanillaAggregator::kGraph
                                                         : VanillaAggregator::kAverage;
  o.normalize = c.normalize;
  o.threads = c.threads;
  o.bytes_per_param = c.bytes_per_param;
  return o;
}

TrafficDataset load_dataset(const ExperimentConfig& c) {
  WindowConfig wc;
  wc.history_horizon = c.history_horizon;
  wc.forecast_horizon = c.forecast_horizon;
  wc.periodicity = c.periodicity;
  if (c.source == "csv") {
    CsvOptions opts;
    opts.has_header = c.csv_has_header;
    opts.adjacency_edge_list = c.adjacency_format == "edgelist";
    return load_csv(c.speeds_path, c.adjacency_path, wc, opts);
  }
  const std::uint64_t seed = c.synth_seed != 0 ? c.synth_seed : c.seed;
  return synthesize_drift(seed, c.synth_nodes, c.synth_rounds, c.synth_segment_length,
                          c.synth_density, wc);
}

RunSummary summarize(const std::vector<RoundReport>& reports, const ExperimentConfig& cfg) {
  RunSummary s;
  s.method = cfg.method;
  s.forecast_horizon = cfg.forecast_horizon;
  s.scored_rounds = static_cast<int>(reports.size());
  if (reports.empty()) return s;

  const ErrorTable table = error_table_from_reports(reports, cfg.forecast_horizon);
  s.rmse = rmse(table);
  s.mae = mae(table);
  s.pooled_rmse = pooled_rmse(table);

  const int n = static_cast<int>(reports.front().clients.size());
  for (const auto& report : reports) {
    for (const auto& c : report.clients) {
      if (c.participated) ++s.participations;
      s.total_flops += c.flops;
      s.total_bytes += c.bytes_up + c.bytes_down;
    }
  }
  s.participation_fraction =
      static_cast<double>(s.participations) /
      (static_cast<double>(n) * static_cast<double>(reports.size()));

  // MSIS on the one-step-ahead stream; skipped when the scored segment is
  // too short for the seasonal scale or the residual burn-in.
  try {
    std::vector<std::vector<double>> truth(n), preds(n), residuals(n);
    for (const auto& report : reports) {
      for (const auto& c : report.clients) {
        truth[c.node].push_back(c.target[0]);
        preds[c.node].push_back(c.prediction[0]);
        residuals[c.node].push_back(c.target[0] - c.prediction[0]);
      }
    }
    const IntervalSet intervals = interval_from_residuals(
        residuals, preds, cfg.alpha, cfg.interval_min_history, cfg.interval_window);
    s.msis = msis(truth, intervals, cfg.periodicity);
  } catch (const std::exception&) {
    s.msis.reset();
  }
  return s;
}

namespace {

json report_to_json(const RoundReport& r) {
  json j;
  j["v"] = kReportSchemaVersion;
  j["round"] = r.round;
  json clients = json::array();
  for (const auto& c : r.clients) {
    json cj;
    cj["node"] = c.node;
    cj["participated"] = c.participated;
    if (std::isfinite(c.divergence)) {
      cj["divergence"] = c.divergence;
    } else {
      cj["divergence"] = nullptr;
    }
    cj["prediction"] = c.prediction;
    cj["target"] = c.target;
    cj["flops"] = c.flops;
    cj["bytes_up"] = c.bytes_up;
    cj["bytes_down"] = c.bytes_down;
    clients.push_back(std::move(cj));
  }
  j["clients"] = std::move(clients);
  if (!r.weights.empty()) j["weights"] = r.weights;
  return j;
}

RoundReport report_from_json(const json& j) {
  if (j.contains("v") && j.at("v").get<int>() != kReportSchemaVersion) {
    throw RunError("unsupported report schema version " + j.at("v").dump());
  }
  RoundReport r;
  r.round = j.at("round").get<int>();
  for (const auto& cj : j.at("clients")) {
    ClientRecord c;
    c.node = cj.at("node").get<int>();
    c.participated = cj.at("participated").get<bool>();
    c.divergence = cj.at("divergence").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                 : cj.at("divergence").get<double>();
    c.prediction = cj.at("prediction").get<std::vector<double>>();
    c.target = cj.at("target").get<std::vector<double>>();
    c.flops = cj.at("flops").get<std::int64_t>();
    c.bytes_up = cj.at("bytes_up").get<std::int64_t>();
    c.bytes_down = cj.at("bytes_down").get<std::int64_t>();
    r.clients.push_back(std::move(c));
  }
  if (j.contains("weights")) r.weights = j.at("weights").get<std::vector<double>>();
  return r;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RunError("cannot write " + path);
  out << content;
  if (!out) throw RunError("failed writing " + path);
}

void write_metrics_file(const std::string& path, const RunSummary& s, bool pooled_flag) {
  std::ostringstream out;
  out << "# schema=1\n";
  out << "method,F,scored_rounds,rmse,mae,pooled_rmse,msis,participations,"
         "participation_fraction,total_flops,total_bytes\n";
  out << s.method << "," << s.forecast_horizon << "," << s.scored_rounds << ","
      << fmt_double(s.rmse) << "," << fmt_double(s.mae) << ","
      << (pooled_flag ? fmt_double(s.pooled_rmse) : std::string()) << ","
      << (s.msis ? fmt_double(*s.msis) : std::string()) << "," << s.participations << ","
      << fmt_double(s.participation_fraction) << "," << s.total_flops << "," << s.total_bytes
      << "\n";
  write_text_file(path, out.str());
}

void write_cost_ledger(const std::string& path, const std::vector<RoundReport>& reports) {
  std::ostringstream out;
  out << "# schema=1\n";
  out << "round,participants,flops,bytes_up,bytes_down,cum_flops,cum_bytes\n";
  std::int64_t cum_flops = 0, cum_bytes = 0;
  for (const auto& r : reports) {
    std::int64_t flops = 0, up = 0, down = 0;
    int participants = 0;
    for (const auto& c : r.clients) {
      flops += c.flops;
      up += c.bytes_up;
      down += c.bytes_down;
      if (c.participated) ++participants;
    }
    cum_flops += flops;
    cum_bytes += up + down;
    out << r.round << "," << participants << "," << flops << "," << up << "," << down << ","
        << cum_flops << "," << cum_bytes << "\n";
  }
  write_text_file(path, out.str());
}

// ---- checkpointing ---------------------------------------------------

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(out, bits);
}

struct ByteReader {
  const std::string& data;
  std::size_t at = 0;

  void need(std::size_t n) const {
    if (at + n > data.size()) throw RunError("checkpoint: truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[at + i])) << (8 * i);
    at += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[at + i])) << (8 * i);
    at += 8;
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
};

void put_params(std::string& out, const ModelParams& p) {
  for_each_field(const_cast<ModelParams&>(p), [&out](const std::vector<double>& field) {
    for (double x : field) put_f64(out, x);
  });
}

void read_params(ByteReader& in, ModelParams& p) {
  for_each_field(p, [&in](std::vector<double>& field) {
    for (double& x : field) x = in.f64();
  });
}

std::string checkpoint_bytes(const SimulationState& state, int next_round,
                             std::uint64_t config_hash, std::int64_t reports_written) {
  std::string out;
  out += "RFCK";
  put_u32(out, kCheckpointVersion);
  put_u64(out, config_hash);
  put_u64(out, static_cast<std::uint64_t>(next_round));
  put_u64(out, static_cast<std::uint64_t>(reports_written));
  put_u32(out, static_cast<std::uint32_t>(state.clients.size()));
  put_u32(out, static_cast<std::uint32_t>(state.server.global_model.hidden_size));
  put_u32(out, static_cast<std::uint32_t>(state.server.global_model.forecast_horizon));
  put_params(out, state.server.global_model);
  std::ostringstream rng;
  rng << state.server.selection_rng;
  const std::string rng_state = rng.str();
  put_u32(out, static_cast<std::uint32_t>(rng_state.size()));
  out += rng_state;
  for (const auto& c : state.clients) {
    put_params(out, c.local_model);
    put_u32(out, static_cast<std::uint32_t>(c.drift.hw.size()));
    for (double x : c.drift.hw) put_f64(out, x);
    put_u64(out, static_cast<std::uint64_t>(c.drift.last_update_round));
    put_u64(out, static_cast<std::uint64_t>(c.participation_count));
  }
  return out;
}

struct CheckpointData {
  int next_round = 0;
  std::int64_t reports_written = 0;
};

CheckpointData restore_checkpoint(const std::string& bytes, SimulationState& state,
                                  std::uint64_t config_hash) {
  if (bytes.size() < 8 || bytes.compare(0, 4, "RFCK") != 0) {
    throw RunError("checkpoint: bad magic");
  }
  ByteReader in{bytes, 4};
  const std::uint32_t version = in.u32();
  if (version != static_cast<std::uint32_t>(kCheckpointVersion)) {
    throw RunError("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint64_t hash = in.u64();
  if (hash != config_hash) {
    throw ValidationError("checkpoint does not match this config (refusing to resume)");
  }
  CheckpointData data;
  data.next_round = static_cast<int>(in.u64());
  data.reports_written = static_cast<std::int64_t>(in.u64());
  const std::uint32_t clients = in.u32();
  if (clients != state.clients.size()) throw RunError("checkpoint: client count mismatch");
  const std::uint32_t hs = in.u32();
  const std::uint32_t f = in.u32();
  if (hs != static_cast<std::uint32_t>(state.server.global_model.hidden_size) ||
      f != static_cast<std::uint32_t>(state.server.global_model.forecast_horizon)) {
    throw RunError("checkpoint: model shape mismatch");
  }
  read_params(in, state.server.global_model);
  const std::uint32_t rng_len = in.u32();
  in.need(rng_len);
  std::istringstream rng(bytes.substr(in.at, rng_len));
  in.at += rng_len;
  rng >> state.server.selection_rng;
  for (auto& c : state.clients) {
    read_params(in, c.local_model);
    const std::uint32_t hw_len = in.u32();
    c.drift.hw.resize(hw_len);
    for (auto& x : c.drift.hw) x = in.f64();
    c.drift.last_update_round = static_cast<int>(in.u64());
    c.participation_count = static_cast<std::int64_t>(in.u64());
  }
  return data;
}

json build_manifest(const ExperimentConfig& cfg, const TrafficDataset& ds,
                    const SplitRounds& split) {
  json m;
  m["schema_versions"] = {{"config", kConfigSchemaVersion},
                          {"report", kReportSchemaVersion},
                          {"checkpoint", kCheckpointVersion},
                          {"wire", kWireVersion}};
  m["config"] = config_to_json(cfg);
  json eff;
  eff["nodes"] = ds.node_count;
  eff["time_steps"] = ds.time_count;
  eff["admissible_rounds"] = ds.admissible_rounds();
  eff["split"] = {{"train", {split.train_begin, split.train_end}},
                  {"val", {split.val_begin, split.val_end}},
                  {"test", {split.test_begin, split.test_end}}};
  eff["kld_log_base"] = "e";
  eff["kld_smoothing_epsilon"] = kDistributionEpsilon;
  eff["drift_inputs"] = "raw-speeds";
  eff["bootstrap"] = "forced-participation-at-first-round";
  eff["participant_self_loops"] = "forced";
  eff["virtual_node_edges"] = "inbound-plus-self-loop";
  eff["payload_bytes_per_transfer"] =
      parameter_count(cfg.hidden_size, cfg.forecast_horizon) * cfg.bytes_per_param;
  eff["parameter_count"] = parameter_count(cfg.hidden_size, cfg.forecast_horizon);
  eff["interval_construction"] = "prediction +/- q_{1-alpha/2}(|trailing residuals|)";
  m["effective"] = eff;
  m["files"] = {{"reports", "reports.ndjson"},
                {"metrics", "metrics.csv"},
                {"cost_ledger", "cost_ledger.csv"},
                {"resolved_config", "config.resolved"}};
  return m;
}

}  // namespace

std::vector<RoundReport> read_reports(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RunError("cannot open reports file: " + path);
  std::vector<RoundReport> reports;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      reports.push_back(report_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw RunError(path + ": bad report line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return reports;
}

ExperimentConfig read_manifest_config(const std::string& run_dir) {
  const std::string path = (fs::path(run_dir) / "manifest.json").string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RunError("cannot open " + path);
  json m = json::parse(in);
  return config_from_json(m.at("config"));
}

RunOutput run_in_memory(const ExperimentConfig& cfg) {
  const auto errs = validate_config(cfg);
  if (!errs.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ValidationError(msg);
  }
  const TrafficDataset ds = load_dataset(cfg);
  double ratios[3];
  parse_split(cfg.split, ratios);
  const SplitRounds split = split_rounds(ds, ratios[0], ratios[1], ratios[2]);
  RunOptions opts = to_run_options(cfg);
  if (opts.method == Method::kVanilla && opts.select_count > ds.node_count) {
    throw ValidationError("select_count exceeds the node count");
  }
  RunOutput out;
  auto result = run_experiment(ds, split, opts, cfg.warmup == "train-partition");
  out.reports = std::move(result.reports);
  out.summary = summarize(out.reports, cfg);
  return out;
}

RunSummary run_to_directory(const ExperimentConfig& cfg, const std::string& out_dir, bool force,
                            bool resume, int stop_after_round) {
  if (stop_after_round > 0 && cfg.checkpoint_every <= 0) {
    throw ValidationError("stop_after_round needs checkpoint_every > 0 to stay resumable");
  }
  const auto errs = validate_config(cfg);
  if (!errs.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ValidationError(msg);
  }

  const fs::path dir(out_dir);
  const fs::path report_path = dir / "reports.ndjson";
  const fs::path checkpoint_path = dir / "checkpoint.bin";
  if (fs::exists(dir) && !fs::is_directory(dir)) {
    throw ValidationError(out_dir + " exists and is not a directory");
  }
  const bool dir_in_use = fs::exists(dir) && !fs::is_empty(dir);
  if (dir_in_use && !force && !resume) {
    throw ValidationError("artifact directory " + out_dir +
                          " is not empty (use --force to overwrite or --resume to continue)");
  }
  fs::create_directories(dir);

  const TrafficDataset ds = load_dataset(cfg);
  double ratios[3];
  parse_split(cfg.split, ratios);
  const SplitRounds split = split_rounds(ds, ratios[0], ratios[1], ratios[2]);
  RunOptions opts = to_run_options(cfg);
  if (opts.method == Method::kVanilla && opts.select_count > ds.node_count) {
    throw ValidationError("select_count exceeds the node count");
  }

  const std::uint64_t config_hash = fnv1a(render_config(cfg));
  SimulationState state = init_simulation(ds, opts, split);
  const bool warmup = cfg.warmup == "train-partition";
  const int loop_begin = warmup ? ds.first_round() : split.test_begin;

  int next_round = loop_begin;
  std::vector<RoundReport> reports;
  if (resume) {
    if (!fs::exists(checkpoint_path)) {
      throw ValidationError("nothing to resume: no checkpoint in " + out_dir);
    }
    std::ifstream in(checkpoint_path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    const CheckpointData data = restore_checkpoint(ss.str(), state, config_hash);
    next_round = data.next_round;
    // Keep only the reports the checkpoint vouches for.
    if (fs::exists(report_path)) {
      auto existing = read_reports(report_path.string());
      if (static_cast<std::int64_t>(existing.size()) < data.reports_written) {
        throw RunError("reports.ndjson is shorter than the checkpoint expects");
      }
      existing.resize(static_cast<std::size_t>(data.reports_written));
      reports = std::move(existing);
      std::ostringstream rewrite;
      for (const auto& r : reports) rewrite << report_to_json(r).dump() << "\n";
      write_text_file(report_path.string(), rewrite.str());
    } else if (data.reports_written > 0) {
      throw RunError("checkpoint expects reports.ndjson to exist");
    }
  } else {
    // Fresh start: clear whatever the directory held.
    for (const auto* name :
         {"reports.ndjson", "metrics.csv", "cost_ledger.csv", "manifest.json",
          "config.resolved", "checkpoint.bin"}) {
      fs::remove(dir / name);
    }
  }

  write_text_file((dir / "config.resolved").string(), render_config(cfg));
  write_text_file((dir / "manifest.json").string(),
                  build_manifest(cfg, ds, split).dump(2) + "\n");

  std::ofstream report_out(report_path, std::ios::binary | std::ios::app);
  if (!report_out) throw RunError("cannot write " + report_path.string());

  auto save_checkpoint = [&](int upcoming_round) {
    report_out.flush();
    const std::string bytes = checkpoint_bytes(state, upcoming_round, config_hash,
                                               static_cast<std::int64_t>(reports.size()));
    const fs::path tmp = dir / "checkpoint.bin.tmp";
    write_text_file(tmp.string(), bytes);
    fs::rename(tmp, checkpoint_path);
  };

  int rounds_done_since_checkpoint = 0;
  bool stopped_early = false;
  for (int t = next_round; t <= split.test_end; ++t) {
    RoundReport report = run_round(state, ds, t, opts);
    if (t >= split.test_begin) {
      report_out << report_to_json(report).dump() << "\n";
      reports.push_back(std::move(report));
    }
    ++rounds_done_since_checkpoint;
    if (stop_after_round > 0 && t >= stop_after_round && t < split.test_end) {
      save_checkpoint(t + 1);
      stopped_early = true;
      break;
    }
    if (cfg.checkpoint_every > 0 && rounds_done_since_checkpoint >= cfg.checkpoint_every &&
        t < split.test_end) {
      save_checkpoint(t + 1);
      rounds_done_since_checkpoint = 0;
    }
  }
  report_out.close();

  const RunSummary summary = summarize(reports, cfg);
  write_metrics_file((dir / "metrics.csv").string(), summary, cfg.pooled_rmse);
  write_cost_ledger((dir / "cost_ledger.csv").string(), reports);
  if (!stopped_early) fs::remove(checkpoint_path);
  return summary;
}

namespace {

void apply_sweep_value(ExperimentConfig& cfg, const std::string& parameter, double value) {
  if (parameter == "Q") cfg.q = value;
  else if (parameter == "conv_layers") cfg.conv_layers = static_cast<int>(value);
  else if (parameter == "F") cfg.forecast_horizon = static_cast<int>(value);
  else if (parameter == "E") cfg.epochs = static_cast<int>(value);
  else if (parameter == "lr") cfg.lr = value;
  else if (parameter == "hs") cfg.hidden_size = static_cast<int>(value);
  else throw ValidationError("sweep parameter must be one of Q|conv_layers|F|E|lr|hs");
}

std::string value_label(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& base, const std::string& parameter,
                      const std::vector<double>& values, const std::string& out_dir, bool force) {
  if (values.empty()) throw ValidationError("sweep needs at least one value");
  {
    ExperimentConfig probe = base;
    apply_sweep_value(probe, parameter, values.front());  // validates the name
  }
  fs::create_directories(out_dir);

  SweepResult result;
  result.parameter = parameter;

  // For Q sweeps, one full-participation reference run provides the
  // divergence stream that offline re-thresholding is defined on.
  std::vector<RoundReport> reference_reports;
  if (parameter == "Q") {
    ExperimentConfig ref = base;
    ref.q = 0.0;
    reference_reports = run_in_memory(ref).reports;
  }

  std::string failure;
  for (double value : values) {
    ExperimentConfig cfg = base;
    apply_sweep_value(cfg, parameter, value);
    const std::string run_dir =
        (fs::path(out_dir) / (parameter + "=" + value_label(value))).string();
    SweepRow row;
    row.value = value;
    try {
      row.summary = run_to_directory(cfg, run_dir, force, /*resume=*/false);
    } catch (const std::exception& e) {
      failure = "sweep " + parameter + "=" + value_label(value) + " failed: " + e.what();
      break;
    }
    if (parameter == "Q" && !reference_reports.empty()) {
      const auto& first = reference_reports.front();
      const double denom = static_cast<double>(reference_reports.size()) *
                           static_cast<double>(first.clients.size());
      row.participation_fraction_replayed =
          static_cast<double>(replayed_participation_count(reference_reports, value)) / denom;
    }
    result.rows.push_back(std::move(row));
    result.run_dirs.push_back(run_dir);
  }

  std::ostringstream out;
  out << "# schema=1\n";
  out << "parameter,value,rmse,mae,participation_fraction,participation_fraction_replayed,"
         "total_flops,total_bytes\n";
  for (const auto& row : result.rows) {
    out << parameter << "," << fmt_double(row.value) << "," << fmt_double(row.summary.rmse) << ","
        << fmt_double(row.summary.mae) << "," << fmt_double(row.summary.participation_fraction)
        << ","
        << (row.participation_fraction_replayed
                ? fmt_double(*row.participation_fraction_replayed)
                : std::string())
        << "," << row.summary.total_flops << "," << row.summary.total_bytes << "\n";
  }
  write_text_file((fs::path(out_dir) / "summary.csv").string(), out.str());

  if (!failure.empty()) throw RunError(failure + " (partial summary written)");
  return result;
}

void write_metrics_csv(const std::vector<std::string>& run_dirs, const std::string& out_path,
                       double congestion_threshold) {
  const bool filtered = std::isfinite(congestion_threshold);
  std::ostringstream out;
  out << "# schema=1\n";
  out << "run_dir,method,F,scored_rounds,rmse,mae,pooled_rmse,msis,participations,"
         "participation_fraction,total_flops,total_bytes,congestion_threshold\n";
  for (const auto& dir : run_dirs) {
    const ExperimentConfig cfg = read_manifest_config(dir);
    const auto reports = read_reports((fs::path(dir) / "reports.ndjson").string());
    RunSummary s = summarize(reports, cfg);
    if (filtered) {
      // Jam-conditional slice: errors only where the true speed stays at or
      // below the threshold. Totals and participation are left run-wide.
      const ErrorTable sliced =
          error_table_from_reports(reports, cfg.forecast_horizon, congestion_threshold);
      if (sliced.entries.empty()) {
        s.rmse = s.mae = s.pooled_rmse = std::numeric_limits<double>::quiet_NaN();
      } else {
        s.rmse = rmse(sliced);
        s.mae = mae(sliced);
        s.pooled_rmse = pooled_rmse(sliced);
      }
      s.msis.reset();
    }
    out << dir << "," << s.method << "," << s.forecast_horizon << "," << s.scored_rounds << ","
        << fmt_double(s.rmse) << "," << fmt_double(s.mae) << ","
        << (cfg.pooled_rmse ? fmt_double(s.pooled_rmse) : std::string()) << ","
        << (s.msis ? fmt_double(*s.msis) : std::string()) << "," << s.participations << ","
        << fmt_double(s.participation_fraction) << "," << s.total_flops << "," << s.total_bytes
        << "," << (filtered ? fmt_double(congestion_threshold) : std::string()) << "\n";
  }
  if (out_path == "-") {
    std::fputs(out.str().c_str(), stdout);
  } else {
    write_text_file(out_path, out.str());
  }
}

std::vector<CostTableRow> cost_table(int nodes, int rounds, double participation_fraction,
                                     const CostModel& cost) {
  if (nodes < 1 || rounds < 1) throw ValidationError("cost_table: nodes and rounds must be >= 1");
  if (participation_fraction < 0 || participation_fraction > 1) {
    throw ValidationError("cost_table: participation fraction must be in [0, 1]");
  }
  const std::int64_t per_client_rounds = static_cast<std::int64_t>(nodes) * rounds;
  const std::int64_t update_flops =
      forward_flops(cost) +
      static_cast<std::int64_t>(cost.epochs) * (forward_flops(cost) + backward_flops(cost));

  const std::int64_t refol_participations =
      std::llround(participation_fraction * static_cast<double>(per_client_rounds));
  const int vanilla_select = static_cast<int>(std::max<std::int64_t>(
      1, std::llround(participation_fraction * static_cast<double>(nodes))));
  const std::int64_t vanilla_participations = static_cast<std::int64_t>(vanilla_select) * rounds;

  std::vector<CostTableRow> rows;
  {
    CostTableRow r;
    r.method = "FedOSTC";
    r.compute_flops = -1;  // training loop of a different architecture, not modeled
    r.comm_bytes = per_client_rounds * fedostc_comm_bytes(cost);
    rows.push_back(r);
  }
  {
    CostTableRow r;
    r.method = "FOL-vanilla";
    r.compute_flops = vanilla_participations * update_flops +
                      (per_client_rounds - vanilla_participations) * forward_flops(cost);
    r.comm_bytes = vanilla_participations * 2 * comm_bytes(cost);
    rows.push_back(r);
  }
  {
    CostTableRow r;
    r.method = "REFOL";
    r.compute_flops = per_client_rounds * kld_flops(cost) + refol_participations * update_flops +
                      (per_client_rounds - refol_participations) * forward_flops(cost);
    r.comm_bytes = refol_participations * 2 * comm_bytes(cost);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace refol
