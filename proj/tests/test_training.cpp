#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "smadd/training.hpp"

using namespace smadd;

namespace {

// A configuration small enough that a full run costs milliseconds.
TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.hyper.task = TaskSpec{2, 8, 3};
  cfg.hyper.d = 2;
  cfg.hyper.h = 8;
  cfg.n_train = 64;
  cfg.n_test = 64;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  cfg.seed = 7;
  cfg.snapshot_every = 2;
  return cfg;
}

}  // namespace

TEST_CASE("config validation rejects out-of-range fields") {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
  cfg = tiny_config();
  cfg.batch_size = cfg.n_train + 1;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
  cfg = tiny_config();
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
  cfg = tiny_config();
  cfg.beta2 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
  CHECK_THROWS_AS(grad_log_mode_from_string("sometimes"), InvalidConfig);
  CHECK(grad_log_mode_from_string("minibatch_norms") == GradLogMode::minibatch_norms);
  CHECK(to_string(GradLogMode::full_batch_norms) == "full_batch_norms");
}

TEST_CASE("adam: zero gradient leaves parameters untouched") {
  TrainConfig cfg = tiny_config();
  ModelParams m = init_params(cfg.hyper, 1);
  ModelParams before = m;
  AdamState st = init_adam_state(m);
  GradientSet g = zero_gradients(m);
  adam_update(st, m, g, cfg);
  CHECK(st.step == 1);
  CHECK(m == before);
}

TEST_CASE("adam: first step is a signed unit step scaled by lr") {
  TrainConfig cfg = tiny_config();
  cfg.lr = 1e-3;
  cfg.mlp_lr_discount = 0.25;
  ModelParams m = init_params(cfg.hyper, 2);
  ModelParams before = m;
  AdamState st = init_adam_state(m);
  GradientSet g = zero_gradients(m);
  for (std::size_t i = 0; i < g.dE.size(); ++i) g.dE.a[i] = 0.3 * (i % 5) - 0.6;
  g.dq = {1.5, -2.0};
  for (std::size_t i = 0; i < g.dW.size(); ++i) g.dW.a[i] = 0.01 * (i + 1);
  adam_update(st, m, g, cfg);

  // With bias correction the first step reduces to -lr * g / (|g| + eps).
  for (std::size_t i = 0; i < g.dE.size(); ++i) {
    double expect = before.E.a[i] - cfg.lr * g.dE.a[i] / (std::fabs(g.dE.a[i]) + cfg.adam_eps);
    CHECK(m.E.a[i] == doctest::Approx(expect).epsilon(1e-12));
  }
  for (std::size_t i = 0; i < g.dq.size(); ++i) {
    double expect = before.q[i] - cfg.lr * g.dq[i] / (std::fabs(g.dq[i]) + cfg.adam_eps);
    CHECK(m.q[i] == doctest::Approx(expect).epsilon(1e-12));
  }
  // W uses the discounted rate.
  for (std::size_t i = 0; i < g.dW.size(); ++i) {
    double expect = before.W.a[i] -
                    cfg.lr * cfg.mlp_lr_discount * g.dW.a[i] / (std::fabs(g.dW.a[i]) + cfg.adam_eps);
    CHECK(m.W.a[i] == doctest::Approx(expect).epsilon(1e-12));
  }
  // Zero-gradient tensors must not move even though moments updated.
  CHECK(m.V == before.V);
  CHECK(m.U == before.U);
}

TEST_CASE("training is deterministic and logs every epoch") {
  TrainConfig cfg = tiny_config();
  RunArtifacts a = train(cfg);
  RunArtifacts b = train(cfg);

  CHECK(a.metrics.size() == static_cast<std::size_t>(cfg.epochs) + 1);
  CHECK(a.metrics == b.metrics);
  CHECK(a.final_params == b.final_params);
  CHECK(a.snapshot_epochs == std::vector<int>{0, 2, 4, 5});
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].epoch == static_cast<int>(i));
    CHECK(a.metrics[i].train_loss >= 0.0);
    CHECK(a.metrics[i].train_acc >= 0.0);
    CHECK(a.metrics[i].test_acc <= 1.0);
  }
}

TEST_CASE("the loss moves and the bound dominates full-batch gradient norms") {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 30;
  RunArtifacts art = train(cfg);
  CHECK(art.metrics.back().train_loss < art.metrics.front().train_loss);
  for (const MetricsRow& r : art.metrics) {
    double qvwu = std::sqrt(r.grad_q * r.grad_q + r.grad_V * r.grad_V + r.grad_W * r.grad_W +
                            r.grad_U * r.grad_U);
    CHECK(qvwu <= r.bound + 1e-9);
  }
}

TEST_CASE("masked tensors never move during a run") {
  TrainConfig cfg = tiny_config();
  cfg.mask = theory_mask();
  cfg.epochs = 10;
  ModelParams at_init = init_params(cfg.hyper, cfg.seed);
  RunArtifacts art = train(cfg);
  CHECK(art.final_params.E == at_init.E);
  CHECK(art.final_params.P == at_init.P);
  CHECK(!(art.final_params.q == at_init.q));
  for (const MetricsRow& r : art.metrics) {
    CHECK(r.grad_E == 0.0);
    CHECK(r.grad_P == 0.0);
  }
}

TEST_CASE("mlp discount zero freezes receptors and assemblers") {
  TrainConfig cfg = tiny_config();
  cfg.mlp_lr_discount = 0.0;
  ModelParams at_init = init_params(cfg.hyper, cfg.seed);
  RunArtifacts art = train(cfg);
  CHECK(art.final_params.W == at_init.W);
  CHECK(art.final_params.U == at_init.U);
  CHECK(!(art.final_params.E == at_init.E));
}

TEST_CASE("snapshot sink receives the logged state at the right epochs") {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 6;
  cfg.snapshot_every = 3;
  std::vector<int> seen;
  RunArtifacts art = train(cfg, [&](int epoch, const ModelParams& p, const MetricsRow& row) {
    seen.push_back(epoch);
    CHECK(row.epoch == epoch);
    CHECK(p.p() == cfg.hyper.task.p);
  });
  CHECK(seen == std::vector<int>{0, 3, 6});
  CHECK(art.snapshot_epochs == seen);
}

TEST_CASE("grad log modes differ only in the logged norms") {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 8;
  RunArtifacts full = train(cfg);
  cfg.grad_log = GradLogMode::minibatch_norms;
  RunArtifacts mini = train(cfg);

  // The observation mode must not feed back into the trajectory.
  CHECK(full.final_params == mini.final_params);
  for (std::size_t i = 0; i < full.metrics.size(); ++i) {
    CHECK(full.metrics[i].train_loss == mini.metrics[i].train_loss);
    CHECK(full.metrics[i].test_acc == mini.metrics[i].test_acc);
  }
  // Epoch 0 is full-batch in both modes by definition.
  CHECK(full.metrics[0].grad_q == mini.metrics[0].grad_q);
  bool any_diff = false;
  for (std::size_t i = 1; i < full.metrics.size(); ++i) {
    if (full.metrics[i].grad_q != mini.metrics[i].grad_q) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("full-batch configurations shuffle but sum in dataset order") {
  TrainConfig cfg = tiny_config();
  cfg.batch_size = 0;
  RunArtifacts a = train(cfg);
  cfg.batch_size = cfg.n_train;
  RunArtifacts b = train(cfg);
  // One pass, one update in both cases; the bs=0 run averages in dataset
  // order while bs=n averages in shuffled order, so results agree only up to
  // rounding. Losses stay within float-accumulation distance.
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].train_loss ==
          doctest::Approx(b.metrics[i].train_loss).epsilon(1e-8));
  }
}

TEST_CASE("non-finite parameters surface as NonFiniteLoss with epoch context") {
  TrainConfig cfg = tiny_config();
  ModelParams bad = init_params(cfg.hyper, 3);
  bad.q[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    finetune(bad, 3, cfg);
    FAIL("expected NonFiniteLoss");
  } catch (const NonFiniteLoss& e) {
    CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
  }
}

TEST_CASE("finetune expands the vocabulary and trains on the new task") {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 3;
  RunArtifacts pre = train(cfg);

  TrainConfig fcfg = tiny_config();
  fcfg.epochs = 3;
  RunArtifacts fine = finetune(pre.final_params, 3, fcfg);
  CHECK(fine.final_params.p() == 3);
  CHECK(fine.config.hyper.task.p == 3);
  CHECK(fine.metrics.size() == 4);

  CHECK_THROWS_AS(finetune(pre.final_params, 2, fcfg), InvalidExpansion);

  TrainConfig mismatched = fcfg;
  mismatched.hyper.h = 13;
  CHECK_THROWS_AS(finetune(pre.final_params, 3, mismatched), InvalidConfig);
}

TEST_CASE("sweep: one cell, one seed reproduces a plain run") {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 4;
  SweepGrid grid;
  SweepTable table = hyper_sweep(cfg, grid, {cfg.seed});
  REQUIRE(table.cells.size() == 1);
  REQUIRE(table.cells[0].final_test_acc.size() == 1);
  RunArtifacts plain = train(cfg);
  CHECK(table.cells[0].final_test_acc[0] == plain.metrics.back().test_acc);
  CHECK(table.cells[0].mean_acc == plain.metrics.back().test_acc);
  CHECK(table.cells[0].std_acc == 0.0);
  CHECK(table.cells[0].errors[0].empty());
}

TEST_CASE("sweep cells sharing a seed share initialization") {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 2;
  SweepGrid grid;
  grid.lr = {1e-2, 1e-3};
  SweepTable table = hyper_sweep(cfg, grid, {11, 12});
  REQUIRE(table.cells.size() == 2);

  // Same seed, different lr: identical starting point means identical
  // epoch-0 metrics, which a direct run exposes.
  TrainConfig c1 = cfg;
  c1.lr = 1e-2;
  c1.seed = 11;
  TrainConfig c2 = cfg;
  c2.lr = 1e-3;
  c2.seed = 11;
  CHECK(train(c1).metrics[0] == train(c2).metrics[0]);
}

TEST_CASE("sweep table does not depend on the worker count") {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 3;
  SweepGrid grid;
  grid.lr = {1e-2, 3e-3};
  grid.batch_size = {8, 16};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  SweepTable serial = hyper_sweep(cfg, grid, seeds, 1);
  SweepTable pooled = hyper_sweep(cfg, grid, seeds, 3);
  REQUIRE(pooled.cells.size() == serial.cells.size());
  for (std::size_t c = 0; c < serial.cells.size(); ++c) {
    CHECK(pooled.cells[c].final_test_acc == serial.cells[c].final_test_acc);
    CHECK(pooled.cells[c].mean_acc == serial.cells[c].mean_acc);
    CHECK(pooled.cells[c].std_acc == serial.cells[c].std_acc);
    CHECK(pooled.cells[c].errors == serial.cells[c].errors);
  }
  CHECK_THROWS_AS(hyper_sweep(cfg, grid, seeds, 0), InvalidConfig);
}

TEST_CASE("sweep survives failing cells and records the error") {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 2;
  SweepGrid grid;
  grid.h = {8, -1};  // the second cell cannot initialize
  SweepTable table = hyper_sweep(cfg, grid, {1});
  REQUIRE(table.cells.size() == 2);
  CHECK(table.cells[0].errors[0].empty());
  CHECK(!table.cells[1].errors[0].empty());
  CHECK(std::isnan(table.cells[1].final_test_acc[0]));
  CHECK(table.cells[1].mean_acc == 0.0);
}

TEST_CASE("sweep csv layout") {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 2;
  SweepGrid grid;
  grid.batch_size = {16, 32};
  SweepTable table = hyper_sweep(cfg, grid, {5, 6});
  std::string path = (std::filesystem::temp_directory_path() / "smadd_sweep.csv").string();
  write_sweep_csv(path, table);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "batch_size,h,lr,mlp_lr_discount,acc_seed_5,acc_seed_6,mean,std");
  int lines = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ++lines;
  }
  CHECK(lines == 2);
  std::remove(path.c_str());
}
