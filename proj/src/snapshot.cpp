#include "smadd/snapshot.hpp"

#include <fstream>
#include <utility>

#include "json.hpp"

namespace smadd {

using json = nlohmann::json;

const char* const kRunLogSchema = "v1";

namespace {

// Accessors that insist on the JSON type instead of letting nlohmann coerce,
// so a 2.5 where an int belongs is reported instead of truncated.
const json& need(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw std::runtime_error(std::string("missing field '") + key + "'");
  return *it;
}

int get_int(const json& j, const char* key) {
  const json& v = need(j, key);
  if (!v.is_number_integer()) throw std::runtime_error(std::string("field '") + key + "' is not an integer");
  return v.get<int>();
}

std::uint64_t get_u64(const json& j, const char* key) {
  const json& v = need(j, key);
  if (!v.is_number_integer()) throw std::runtime_error(std::string("field '") + key + "' is not an integer");
  return v.get<std::uint64_t>();
}

double get_num(const json& j, const char* key) {
  const json& v = need(j, key);
  if (!v.is_number()) throw std::runtime_error(std::string("field '") + key + "' is not a number");
  return v.get<double>();
}

std::string get_str(const json& j, const char* key) {
  const json& v = need(j, key);
  if (!v.is_string()) throw std::runtime_error(std::string("field '") + key + "' is not a string");
  return v.get<std::string>();
}

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows; ++r) rows.push_back(std::vector<double>(m.row(r), m.row(r) + m.cols));
  return rows;
}

Vec vec_from_json(const json& v, const char* key) {
  if (!v.is_array()) throw std::runtime_error(std::string("field '") + key + "' is not an array");
  Vec out;
  out.reserve(v.size());
  for (const json& x : v) {
    if (!x.is_number()) throw std::runtime_error(std::string("non-numeric entry in '") + key + "'");
    out.push_back(x.get<double>());
  }
  return out;
}

Mat mat_from_json(const json& j, const char* key) {
  const json& v = need(j, key);
  if (!v.is_array() || v.empty()) {
    throw std::runtime_error(std::string("field '") + key + "' is not a non-empty array of rows");
  }
  Mat m;
  m.rows = static_cast<int>(v.size());
  for (const json& row : v) {
    Vec r = vec_from_json(row, key);
    if (m.cols == 0) m.cols = static_cast<int>(r.size());
    if (static_cast<int>(r.size()) != m.cols || r.empty()) {
      throw std::runtime_error(std::string("ragged or empty row in '") + key + "'");
    }
    m.a.insert(m.a.end(), r.begin(), r.end());
  }
  return m;
}

json params_to_json(const ModelParams& p) {
  return json{{"E", mat_to_json(p.E)}, {"P", mat_to_json(p.P)}, {"q", p.q},
              {"V", mat_to_json(p.V)}, {"W", mat_to_json(p.W)}, {"U", mat_to_json(p.U)}};
}

ModelParams params_from_json(const json& j) {
  ModelParams p;
  p.E = mat_from_json(j, "E");
  p.P = mat_from_json(j, "P");
  p.q = vec_from_json(need(j, "q"), "q");
  p.V = mat_from_json(j, "V");
  p.W = mat_from_json(j, "W");
  p.U = mat_from_json(j, "U");
  int d = p.E.cols;
  bool consistent = p.P.cols == d && static_cast<int>(p.q.size()) == d && p.V.rows == d &&
                    p.V.cols == d && p.W.cols == d && p.U.rows == d && p.U.cols == p.W.rows;
  if (!consistent) throw std::runtime_error("parameter shapes disagree on d or h");
  return p;
}

json metrics_to_json(const MetricsRow& r) {
  return json{{"epoch", r.epoch},
              {"train_loss", r.train_loss},
              {"test_loss", r.test_loss},
              {"train_acc", r.train_acc},
              {"test_acc", r.test_acc},
              {"grad_E", r.grad_E},
              {"grad_P", r.grad_P},
              {"grad_q", r.grad_q},
              {"grad_V", r.grad_V},
              {"grad_W", r.grad_W},
              {"grad_U", r.grad_U},
              {"error_term", r.error_term},
              {"bound", r.bound}};
}

MetricsRow metrics_from_json(const json& j) {
  MetricsRow r;
  r.epoch = get_int(j, "epoch");
  r.train_loss = get_num(j, "train_loss");
  r.test_loss = get_num(j, "test_loss");
  r.train_acc = get_num(j, "train_acc");
  r.test_acc = get_num(j, "test_acc");
  r.grad_E = get_num(j, "grad_E");
  r.grad_P = get_num(j, "grad_P");
  r.grad_q = get_num(j, "grad_q");
  r.grad_V = get_num(j, "grad_V");
  r.grad_W = get_num(j, "grad_W");
  r.grad_U = get_num(j, "grad_U");
  r.error_term = get_num(j, "error_term");
  r.bound = get_num(j, "bound");
  return r;
}

json config_to_json_obj(const TrainConfig& c) {
  return json{{"p", c.hyper.task.p},
              {"L", c.hyper.task.L},
              {"k", c.hyper.task.k},
              {"d", c.hyper.d},
              {"h", c.hyper.h},
              {"norm", to_string(c.hyper.norm)},
              {"n_train", c.n_train},
              {"n_test", c.n_test},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"lr", c.lr},
              {"mlp_lr_discount", c.mlp_lr_discount},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"adam_eps", c.adam_eps},
              {"train", to_string(c.mask)},
              {"seed", c.seed},
              {"snapshot_every", c.snapshot_every},
              {"grad_log", to_string(c.grad_log)}};
}

TrainConfig config_from_json_obj(const json& j, TrainConfig c) {
  if (!j.is_object()) throw InvalidConfig("config must be a JSON object");
  for (const auto& item : j.items()) {
    const std::string& key = item.key();
    try {
      if (key == "p") c.hyper.task.p = get_int(j, "p");
      else if (key == "L") c.hyper.task.L = get_int(j, "L");
      else if (key == "k") c.hyper.task.k = get_int(j, "k");
      else if (key == "d") c.hyper.d = get_int(j, "d");
      else if (key == "h") c.hyper.h = get_int(j, "h");
      else if (key == "norm") c.hyper.norm = norm_variant_from_string(get_str(j, "norm"));
      else if (key == "n_train") c.n_train = get_int(j, "n_train");
      else if (key == "n_test") c.n_test = get_int(j, "n_test");
      else if (key == "epochs") c.epochs = get_int(j, "epochs");
      else if (key == "batch_size") c.batch_size = get_int(j, "batch_size");
      else if (key == "lr") c.lr = get_num(j, "lr");
      else if (key == "mlp_lr_discount") c.mlp_lr_discount = get_num(j, "mlp_lr_discount");
      else if (key == "beta1") c.beta1 = get_num(j, "beta1");
      else if (key == "beta2") c.beta2 = get_num(j, "beta2");
      else if (key == "adam_eps") c.adam_eps = get_num(j, "adam_eps");
      else if (key == "train") c.mask = train_mask_from_string(get_str(j, "train"));
      else if (key == "seed") c.seed = get_u64(j, "seed");
      else if (key == "snapshot_every") c.snapshot_every = get_int(j, "snapshot_every");
      else if (key == "grad_log") c.grad_log = grad_log_mode_from_string(get_str(j, "grad_log"));
      else throw InvalidConfig("unknown config key '" + key + "'");
    } catch (const InvalidConfig&) {
      throw;
    } catch (const std::exception& e) {
      throw InvalidConfig("config key '" + key + "': " + e.what());
    }
  }
  return c;
}

json header_to_json(const RunLogHeader& h) {
  return json{{"schema", h.schema},
              {"config", config_to_json_obj(h.config)},
              {"probe_suffixes", h.probe_suffixes}};
}

RunLogHeader header_from_json(const json& j) {
  RunLogHeader h;
  h.schema = get_str(j, "schema");
  if (h.schema != kRunLogSchema) {
    throw SchemaVersionMismatch("run log schema '" + h.schema + "', this reader understands '" +
                                kRunLogSchema + "'");
  }
  h.config = config_from_json_obj(need(j, "config"), TrainConfig{});
  const json& sfx = need(j, "probe_suffixes");
  if (!sfx.is_array()) throw std::runtime_error("field 'probe_suffixes' is not an array");
  for (const json& s : sfx) {
    if (!s.is_array()) throw std::runtime_error("probe suffix is not an array");
    TokenSequence seq;
    for (const json& t : s) {
      if (!t.is_number_integer()) throw std::runtime_error("non-integer token in probe suffix");
      seq.push_back(t.get<int>());
    }
    h.probe_suffixes.push_back(std::move(seq));
  }
  return h;
}

json snapshot_to_json(const Snapshot& s) {
  json xi = json::array(), attn = json::array(), mu = json::array();
  for (const ProbeTrace& t : s.probe) {
    xi.push_back(t.xi);
    attn.push_back(t.attn);
    mu.push_back(t.mu);
  }
  return json{{"epoch", s.epoch},
              {"params", params_to_json(s.params)},
              {"probe", json{{"xi", xi}, {"attn", attn}, {"mu", mu}}},
              {"metrics", metrics_to_json(s.metrics)}};
}

Snapshot snapshot_from_json(const json& j) {
  Snapshot s;
  s.epoch = get_int(j, "epoch");
  s.params = params_from_json(need(j, "params"));
  const json& probe = need(j, "probe");
  const json& xi = need(probe, "xi");
  const json& attn = need(probe, "attn");
  const json& mu = need(probe, "mu");
  if (!xi.is_array() || !attn.is_array() || !mu.is_array() || xi.size() != attn.size() ||
      xi.size() != mu.size()) {
    throw std::runtime_error("probe arrays missing or of unequal length");
  }
  for (std::size_t i = 0; i < xi.size(); ++i) {
    ProbeTrace t;
    t.xi = vec_from_json(xi[i], "xi");
    t.attn = vec_from_json(attn[i], "attn");
    t.mu = vec_from_json(mu[i], "mu");
    bool shaped = static_cast<int>(t.xi.size()) == s.params.d() &&
                  static_cast<int>(t.attn.size()) == s.params.L() &&
                  static_cast<int>(t.mu.size()) == s.params.p();
    if (!shaped) throw std::runtime_error("probe trace shapes disagree with the parameters");
    s.probe.push_back(std::move(t));
  }
  s.metrics = metrics_from_json(need(j, "metrics"));
  if (s.metrics.epoch != s.epoch) {
    throw std::runtime_error("metrics epoch " + std::to_string(s.metrics.epoch) +
                             " does not match snapshot epoch " + std::to_string(s.epoch));
  }
  return s;
}

json parse_line(const std::string& line) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw std::runtime_error(e.what());
  }
}

RunLog read_impl(const std::string& path, bool strict) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("run log: cannot open " + path);
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line)) throw CorruptLine("run log line 1: missing header");
  lineno = 1;
  RunLog log;
  try {
    log.header = header_from_json(parse_line(line));
  } catch (const SchemaVersionMismatch&) {
    throw;
  } catch (const std::exception& e) {
    throw CorruptLine("run log line 1: " + std::string(e.what()));
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      log.append(snapshot_from_json(parse_line(line)));
    } catch (const std::exception& e) {
      if (!strict) return log;
      throw CorruptLine("run log line " + std::to_string(lineno) + ": " + std::string(e.what()));
    }
  }
  return log;
}

}  // namespace

RunLogHeader make_run_log_header(const TrainConfig& config,
                                 const std::vector<TokenSequence>& probe_suffixes) {
  return RunLogHeader{kRunLogSchema, config, probe_suffixes};
}

void RunLog::append(Snapshot snap) {
  if (!snapshots.empty() && snap.epoch <= snapshots.back().epoch) {
    throw OutOfOrderSnapshot("snapshot epoch " + std::to_string(snap.epoch) +
                             " after epoch " + std::to_string(snapshots.back().epoch));
  }
  snapshots.push_back(std::move(snap));
}

Snapshot record_snapshot(int epoch, const ModelParams& params, const ProbeSet& probe,
                         const HyperParams& hyper, const MetricsRow& metrics) {
  if (metrics.epoch != epoch) {
    throw std::invalid_argument("metrics row is for epoch " + std::to_string(metrics.epoch) +
                                ", snapshot is for epoch " + std::to_string(epoch));
  }
  Snapshot s;
  s.epoch = epoch;
  s.params = params;
  s.metrics = metrics;
  s.probe.reserve(probe.size());
  ForwardTrace tr;
  for (const TokenSequence& x : probe.xs) {
    forward_into(params, x, hyper, tr);
    s.probe.push_back(ProbeTrace{tr.xi, tr.attn, tr.mu});
  }
  return s;
}

void write_run_log(const RunLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("run log: cannot open " + path + " for writing");
  out << header_to_json(log.header).dump() << '\n';
  for (const Snapshot& s : log.snapshots) out << snapshot_to_json(s).dump() << '\n';
  if (!out) throw std::runtime_error("run log: write to " + path + " failed");
}

RunLog read_run_log(const std::string& path) { return read_impl(path, true); }

RunLog read_run_log_lenient(const std::string& path) { return read_impl(path, false); }

void write_params_json(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("params file: cannot open " + path + " for writing");
  json j{{"schema", kRunLogSchema}, {"params", params_to_json(params)}};
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("params file: write to " + path + " failed");
}

ModelParams read_params_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("params file: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    json j = json::parse(text);
    std::string schema = get_str(j, "schema");
    if (schema != kRunLogSchema) {
      throw SchemaVersionMismatch("params file schema '" + schema + "', this reader understands '" +
                                  kRunLogSchema + "'");
    }
    return params_from_json(need(j, "params"));
  } catch (const SchemaVersionMismatch&) {
    throw;
  } catch (const std::exception& e) {
    throw CorruptLine("params file " + path + ": " + std::string(e.what()));
  }
}

std::string to_json(const TrainConfig& config) { return config_to_json_obj(config).dump(2); }

TrainConfig train_config_from_json(const std::string& text, const TrainConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidConfig(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json_obj(j, base);
}

}  // namespace smadd
