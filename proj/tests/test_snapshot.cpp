#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "smadd/snapshot.hpp"

using namespace smadd;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Small enough that a hundred snapshots stay cheap to write and parse.
TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.hyper.task = TaskSpec{2, 6, 2};
  cfg.hyper.h = 4;
  cfg.n_train = 16;
  cfg.n_test = 16;
  cfg.epochs = 10;
  cfg.batch_size = 8;
  cfg.seed = 11;
  return cfg;
}

MetricsRow row_for(int epoch) {
  MetricsRow r;
  r.epoch = epoch;
  r.train_loss = 0.5 / (epoch + 1);
  r.test_loss = 0.6 / (epoch + 1);
  r.train_acc = 1.0 - r.train_loss;
  r.test_acc = 1.0 - r.test_loss;
  r.grad_E = 0.1;
  r.grad_P = 0.2;
  r.grad_q = 0.3;
  r.grad_V = 0.4;
  r.grad_W = 0.5;
  r.grad_U = 0.6;
  r.error_term = r.train_loss;
  r.bound = 10.0 * std::sqrt(r.error_term);
  return r;
}

RunLog small_log(int n_snapshots, int stride = 1) {
  TrainConfig cfg = tiny_config();
  ProbeSet probe = build_probe_set(cfg.hyper.task, default_probe_suffixes(cfg.hyper.task));
  RunLog log;
  log.header = make_run_log_header(cfg, default_probe_suffixes(cfg.hyper.task));
  ModelParams params = init_params(cfg.hyper, cfg.seed);
  for (int i = 0; i < n_snapshots; ++i) {
    int epoch = i * stride;
    log.append(record_snapshot(epoch, params, probe, cfg.hyper, row_for(epoch)));
  }
  return log;
}

bool same_bits(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

// Runs f, expects it to throw E, and hands back the message for inspection.
template <class E, class F>
std::string thrown_message(F&& f) {
  try {
    f();
  } catch (const E& e) {
    return e.what();
  } catch (...) {
  }
  return "<no exception of the expected type>";
}

}  // namespace

TEST_CASE("train mask round-trips through its string form") {
  CHECK(to_string(TrainMask{}) == "EPqVWU");
  CHECK(to_string(theory_mask()) == "qVWU");
  CHECK(train_mask_from_string("qVWU") == theory_mask());
  CHECK(train_mask_from_string("WUqV") == theory_mask());  // order does not matter
  CHECK(train_mask_from_string("") == TrainMask{false, false, false, false, false, false});
  CHECK_THROWS_AS(train_mask_from_string("X"), std::invalid_argument);
  CHECK_THROWS_AS(train_mask_from_string("qq"), std::invalid_argument);
  CHECK_THROWS_AS(train_mask_from_string("e"), std::invalid_argument);
}

TEST_CASE("train config json echoes every field and applies overrides") {
  TrainConfig cfg = tiny_config();
  cfg.hyper.norm = NormVariant::smoothed;
  cfg.mask = theory_mask();
  cfg.lr = 0.125;
  cfg.mlp_lr_discount = 0.5;
  cfg.grad_log = GradLogMode::minibatch_norms;
  cfg.seed = 0xdeadbeefcafe;

  TrainConfig back = train_config_from_json(to_json(cfg));
  CHECK(back.hyper == cfg.hyper);
  CHECK(back.mask == cfg.mask);
  CHECK(back.n_train == cfg.n_train);
  CHECK(back.n_test == cfg.n_test);
  CHECK(back.epochs == cfg.epochs);
  CHECK(back.batch_size == cfg.batch_size);
  CHECK(back.lr == cfg.lr);
  CHECK(back.mlp_lr_discount == cfg.mlp_lr_discount);
  CHECK(back.beta1 == cfg.beta1);
  CHECK(back.beta2 == cfg.beta2);
  CHECK(back.adam_eps == cfg.adam_eps);
  CHECK(back.seed == cfg.seed);
  CHECK(back.snapshot_every == cfg.snapshot_every);
  CHECK(back.grad_log == cfg.grad_log);

  SUBCASE("partial object only touches the named keys") {
    TrainConfig patched = train_config_from_json(R"({"epochs": 77, "lr": 0.25})", cfg);
    CHECK(patched.epochs == 77);
    CHECK(patched.lr == 0.25);
    CHECK(patched.hyper == cfg.hyper);
    CHECK(patched.seed == cfg.seed);
  }
  SUBCASE("unknown keys and wrong types are rejected") {
    CHECK_THROWS_AS(train_config_from_json(R"({"epcohs": 5})"), InvalidConfig);
    CHECK_THROWS_AS(train_config_from_json(R"({"epochs": 2.5})"), InvalidConfig);
    CHECK_THROWS_AS(train_config_from_json(R"({"norm": "fancy"})"), InvalidConfig);
    CHECK_THROWS_AS(train_config_from_json(R"({"train": "Xq"})"), InvalidConfig);
    CHECK_THROWS_AS(train_config_from_json("not json"), InvalidConfig);
    CHECK_THROWS_AS(train_config_from_json("[1,2]"), InvalidConfig);
  }
}

TEST_CASE("record_snapshot deep-copies and matches a fresh forward pass") {
  TrainConfig cfg = tiny_config();
  ProbeSet probe = build_probe_set(cfg.hyper.task, default_probe_suffixes(cfg.hyper.task));
  ModelParams params = init_params(cfg.hyper, cfg.seed);

  Snapshot snap = record_snapshot(0, params, probe, cfg.hyper, row_for(0));
  REQUIRE(snap.probe.size() == probe.size());
  for (std::size_t i = 0; i < probe.size(); i += probe.size() - 1) {
    ForwardTrace tr = forward(params, probe.xs[i], cfg.hyper);
    CHECK(snap.probe[i].xi == tr.xi);
    CHECK(snap.probe[i].attn == tr.attn);
    CHECK(snap.probe[i].mu == tr.mu);
  }

  ModelParams before = snap.params;
  params.E.fill(123.0);
  params.q[0] = -7.0;
  CHECK(snap.params == before);

  SUBCASE("identical across reruns from the same seed") {
    ModelParams again = init_params(cfg.hyper, cfg.seed);
    Snapshot snap2 = record_snapshot(0, again, probe, cfg.hyper, row_for(0));
    CHECK(snap2 == snap);
  }
  SUBCASE("metrics row must carry the snapshot epoch") {
    CHECK_THROWS_AS(record_snapshot(4, params, probe, cfg.hyper, row_for(3)),
                    std::invalid_argument);
  }
}

TEST_CASE("run log append insists on strictly increasing epochs") {
  RunLog log = small_log(3, 10);  // epochs 0, 10, 20
  Snapshot tail = log.snapshots.back();
  CHECK_THROWS_AS(log.append(tail), OutOfOrderSnapshot);
  tail.epoch = 19;
  CHECK_THROWS_AS(log.append(tail), OutOfOrderSnapshot);
  tail.epoch = 21;
  log.append(tail);
  CHECK(log.snapshots.size() == 4);
}

TEST_CASE("run log round-trips bit for bit including awkward doubles") {
  RunLog log = small_log(3, 5);
  // Values that expose any formatting shortcut: a subnormal, a huge value,
  // a signed zero, and a repeating fraction.
  log.snapshots[1].params.V(0, 0) = 5e-324;
  log.snapshots[1].params.W(2, 1) = 2e300;
  log.snapshots[1].params.q[1] = -0.0;
  log.snapshots[1].metrics.bound = 1.0 / 3.0;
  log.snapshots[2].metrics.test_loss = 0.1 + 0.2;

  std::string path = temp_path("smadd_runlog_rt.jsonl");
  write_run_log(log, path);
  RunLog back = read_run_log(path);

  CHECK(back.header == log.header);
  REQUIRE(back.snapshots.size() == log.snapshots.size());
  CHECK(back == log);
  CHECK(same_bits(back.snapshots[1].params.V(0, 0), 5e-324));
  CHECK(same_bits(back.snapshots[1].params.W(2, 1), 2e300));
  CHECK(same_bits(back.snapshots[1].params.q[1], -0.0));
  CHECK(same_bits(back.snapshots[1].metrics.bound, 1.0 / 3.0));
  CHECK(same_bits(back.snapshots[2].metrics.test_loss, 0.1 + 0.2));
  std::remove(path.c_str());
}

TEST_CASE("truncated last line fails strict read but salvages in lenient read") {
  RunLog log = small_log(3);
  std::string path = temp_path("smadd_runlog_trunc.jsonl");
  write_run_log(log, path);
  std::string text = read_text(path);
  write_text(path, text.substr(0, text.size() - text.size() / 7));

  CHECK(thrown_message<CorruptLine>([&] { read_run_log(path); }).find("line 4") != std::string::npos);
  RunLog salvaged = read_run_log_lenient(path);
  CHECK(salvaged.header == log.header);
  REQUIRE(salvaged.snapshots.size() == 2);
  CHECK(salvaged.snapshots[0] == log.snapshots[0]);
  CHECK(salvaged.snapshots[1] == log.snapshots[1]);
  std::remove(path.c_str());
}

TEST_CASE("reader rejects bad headers, schemas, shapes, and ordering") {
  RunLog log = small_log(2);
  std::string path = temp_path("smadd_runlog_bad.jsonl");

  SUBCASE("empty file") {
    write_text(path, "");
    CHECK_THROWS_AS(read_run_log(path), CorruptLine);
  }
  SUBCASE("garbage header line") {
    write_text(path, "not json at all\n");
    CHECK(thrown_message<CorruptLine>([&] { read_run_log(path); }).find("line 1") != std::string::npos);
  }
  SUBCASE("future schema") {
    write_run_log(log, path);
    std::string text = read_text(path);
    std::string from = "\"schema\":\"v1\"";
    auto at = text.find(from);
    REQUIRE(at != std::string::npos);
    text.replace(at, from.size(), "\"schema\":\"v2\"");
    write_text(path, text);
    CHECK_THROWS_AS(read_run_log(path), SchemaVersionMismatch);
    // a schema problem is not salvageable either
    CHECK_THROWS_AS(read_run_log_lenient(path), SchemaVersionMismatch);
  }
  SUBCASE("ragged parameter matrix") {
    write_run_log(log, path);
    std::string text = read_text(path);
    // clip one entry out of the first V row of the first snapshot line
    auto at = text.find("\"V\":[[");
    REQUIRE(at != std::string::npos);
    auto comma = text.find(',', at + 6);
    auto close = text.find(']', at + 6);
    REQUIRE(comma < close);
    text.erase(comma, close - comma);
    write_text(path, text);
    CHECK(thrown_message<CorruptLine>([&] { read_run_log(path); }).find("line 2") != std::string::npos);
  }
  SUBCASE("out-of-order epochs") {
    RunLog twisted = log;
    std::swap(twisted.snapshots[0], twisted.snapshots[1]);
    // bypass append by writing the twisted vector directly
    write_run_log(twisted, path);
    CHECK(thrown_message<CorruptLine>([&] { read_run_log(path); }).find("line 3") != std::string::npos);
    RunLog salvaged = read_run_log_lenient(path);
    CHECK(salvaged.snapshots.size() == 1);
  }
  std::remove(path.c_str());
}

TEST_CASE("params file round-trips and checks its schema") {
  TrainConfig cfg = tiny_config();
  ModelParams params = init_params(cfg.hyper, 5);
  params.U(1, 2) = 5e-324;
  std::string path = temp_path("smadd_params.json");

  write_params_json(params, path);
  ModelParams back = read_params_json(path);
  CHECK(back == params);
  CHECK(same_bits(back.U(1, 2), 5e-324));

  SUBCASE("wrong schema tag") {
    std::string text = read_text(path);
    auto at = text.find("\"v1\"");
    REQUIRE(at != std::string::npos);
    text.replace(at, 4, "\"v9\"");
    write_text(path, text);
    CHECK_THROWS_AS(read_params_json(path), SchemaVersionMismatch);
  }
  SUBCASE("mangled content") {
    write_text(path, "{\"schema\": \"v1\", \"params\": 3}");
    CHECK_THROWS_AS(read_params_json(path), CorruptLine);
  }
  std::remove(path.c_str());
}

TEST_CASE("hundred-snapshot log parses as line-delimited json elsewhere") {
  RunLog log = small_log(100);
  std::string path = temp_path("smadd_runlog_100.jsonl");
  write_run_log(log, path);

  std::string cmd = "python3 -c \"import json,sys\n"
                    "lines = [l for l in open(sys.argv[1]) if l.strip()]\n"
                    "assert len(lines) == 101, len(lines)\n"
                    "for l in lines: json.loads(l)\n\" " + path;
  REQUIRE(std::system(cmd.c_str()) == 0);

  RunLog back = read_run_log(path);
  CHECK(back == log);
  std::remove(path.c_str());
}
