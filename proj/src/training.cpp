#include "smadd/training.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <thread>

#include "smadd/rng.hpp"

namespace smadd {

std::string to_string(GradLogMode mode) {
  return mode == GradLogMode::full_batch_norms ? "full_batch_norms" : "minibatch_norms";
}

GradLogMode grad_log_mode_from_string(const std::string& s) {
  if (s == "full_batch_norms") return GradLogMode::full_batch_norms;
  if (s == "minibatch_norms") return GradLogMode::minibatch_norms;
  throw InvalidConfig("unknown grad_log mode '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidConfig("epochs must be at least 1");
  if (n_train < 1 || n_test < 1) throw InvalidConfig("n_train and n_test must be at least 1");
  if (batch_size < 0 || batch_size > n_train) {
    throw InvalidConfig("batch_size must lie in [0, n_train]");
  }
  if (!(lr > 0.0)) throw InvalidConfig("lr must be positive");
  if (mlp_lr_discount < 0.0) throw InvalidConfig("mlp_lr_discount must be nonnegative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidConfig("betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw InvalidConfig("adam_eps must be positive");
  if (snapshot_every < 1) throw InvalidConfig("snapshot_every must be at least 1");
  if (hyper.d < 1 || hyper.h < 1) throw InvalidConfig("model dimensions must be at least 1");
  smadd::validate(hyper.task);
}

AdamState init_adam_state(const ModelParams& params) {
  AdamState st;
  st.m1 = zero_gradients(params);
  st.m2 = zero_gradients(params);
  return st;
}

namespace {

void adam_tensor(double* theta, const double* g, double* m1, double* m2, std::size_t n,
                 double lr, double beta1, double beta2, double eps, double c1, double c2) {
  for (std::size_t i = 0; i < n; ++i) {
    m1[i] = beta1 * m1[i] + (1.0 - beta1) * g[i];
    m2[i] = beta2 * m2[i] + (1.0 - beta2) * g[i] * g[i];
    theta[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps);
  }
}

}  // namespace

void adam_update(AdamState& state, ModelParams& params, const GradientSet& grads,
                 const TrainConfig& config) {
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const double mlp_lr = config.lr * config.mlp_lr_discount;
  const TrainMask& mask = config.mask;

  auto step_mat = [&](bool on, Mat& th, const Mat& g, Mat& m1, Mat& m2, double lr) {
    if (!on) return;
    adam_tensor(th.data(), g.data(), m1.data(), m2.data(), th.size(), lr, config.beta1,
                config.beta2, config.adam_eps, c1, c2);
  };
  step_mat(mask.E, params.E, grads.dE, state.m1.dE, state.m2.dE, config.lr);
  step_mat(mask.P, params.P, grads.dP, state.m1.dP, state.m2.dP, config.lr);
  if (mask.q) {
    adam_tensor(params.q.data(), grads.dq.data(), state.m1.dq.data(), state.m2.dq.data(),
                params.q.size(), config.lr, config.beta1, config.beta2, config.adam_eps, c1, c2);
  }
  step_mat(mask.V, params.V, grads.dV, state.m1.dV, state.m2.dV, config.lr);
  step_mat(mask.W, params.W, grads.dW, state.m1.dW, state.m2.dW, mlp_lr);
  step_mat(mask.U, params.U, grads.dU, state.m1.dU, state.m2.dU, mlp_lr);
}

namespace {

// The body shared by train() and finetune(): everything after the initial
// parameters exist.
RunArtifacts run_loop(ModelParams params, const TrainConfig& cfg, const SnapshotSink& sink) {
  const HyperParams& hy = cfg.hyper;
  Dataset train_ds = sample_dataset(cfg.n_train, hy.task, cfg.seed, Stream::train_data);
  Dataset test_ds = sample_dataset(cfg.n_test, hy.task, cfg.seed, Stream::test_data);
  Rng shuffle_rng(cfg.seed, Stream::shuffle);
  AdamState opt = init_adam_state(params);

  RunArtifacts art;
  art.config = cfg;

  const bool assert_bound =
      cfg.mask == theory_mask() && cfg.grad_log == GradLogMode::full_batch_norms;

  auto log_epoch = [&](int epoch, const GradientSet& logged) {
    MetricsRow row;
    row.epoch = epoch;
    EvalResult train_ev = batch_eval(params, train_ds, hy);
    EvalResult test_ev = batch_eval(params, test_ds, hy);
    row.train_loss = train_ev.loss;
    row.test_loss = test_ev.loss;
    row.train_acc = train_ev.accuracy;
    row.test_acc = test_ev.accuracy;
    row.error_term = train_ev.error_term;

    std::map<std::string, double> norms = per_layer_grad_norms(logged);
    row.grad_E = norms["E"];
    row.grad_P = norms["P"];
    row.grad_q = norms["q"];
    row.grad_V = norms["V"];
    row.grad_W = norms["W"];
    row.grad_U = norms["U"];

    double b_tilde;
    try {
      b_tilde = bound_constant(max_abs(params.E), operator_norm(params.V),
                               operator_norm(params.W), operator_norm(params.U), hy.task.L,
                               hy.d);
    } catch (const ConvergenceFailure& e) {
      throw ConvergenceFailure(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")");
    }
    row.bound = b_tilde * std::sqrt(row.error_term);

    if (!std::isfinite(row.train_loss) || !std::isfinite(row.test_loss)) {
      throw NonFiniteLoss("loss is not finite at epoch " + std::to_string(epoch));
    }
    if (assert_bound) {
      double gn = qvwu_norm(logged);
      if (gn > row.bound + 1e-9) {
        throw BoundViolation("gradient norm " + std::to_string(gn) + " exceeds bound " +
                             std::to_string(row.bound) + " at epoch " + std::to_string(epoch));
      }
    }
    art.metrics.push_back(row);
  };

  auto snapshot = [&](int epoch) {
    art.snapshot_epochs.push_back(epoch);
    if (sink) sink(epoch, params, art.metrics.back());
  };

  // Epoch 0 describes the untrained model. Gradient norms here are always
  // full-batch: there is no mini-batch yet to report.
  log_epoch(0, backprop_loss_gradient(params, train_ds, hy, cfg.mask));
  snapshot(0);

  std::vector<std::uint32_t> order(static_cast<std::size_t>(cfg.n_train));
  std::iota(order.begin(), order.end(), 0u);
  const int bs = cfg.batch_size == 0 ? cfg.n_train : cfg.batch_size;

  GradientSet batch_grad;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    std::span<const std::uint32_t> perm(order);
    for (int start = 0; start < cfg.n_train; start += bs) {
      int len = std::min(bs, cfg.n_train - start);
      batch_grad = backprop_loss_gradient(params, train_ds, hy, cfg.mask,
                                          perm.subspan(static_cast<std::size_t>(start),
                                                       static_cast<std::size_t>(len)));
      adam_update(opt, params, batch_grad, cfg);
    }
    if (cfg.grad_log == GradLogMode::full_batch_norms) {
      batch_grad = backprop_loss_gradient(params, train_ds, hy, cfg.mask);
    }
    log_epoch(epoch, batch_grad);
    if (epoch % cfg.snapshot_every == 0 || epoch == cfg.epochs) snapshot(epoch);
  }

  art.final_params = std::move(params);
  return art;
}

}  // namespace

RunArtifacts train(const TrainConfig& config, const SnapshotSink& sink) {
  config.validate();
  return run_loop(init_params(config.hyper, config.seed), config, sink);
}

RunArtifacts finetune(const ModelParams& pretrained, int new_p, TrainConfig config,
                      const SnapshotSink& sink) {
  config.hyper.task.p = new_p;
  config.validate();
  if (config.hyper.d != pretrained.d() || config.hyper.h != pretrained.h()) {
    throw InvalidConfig("finetune: config dimensions do not match the pretrained model");
  }
  ModelParams params = expand_vocab(pretrained, new_p, config.seed);
  return run_loop(std::move(params), config, sink);
}

namespace {

template <typename T>
std::vector<T> axis_or(const std::vector<T>& axis, T base) {
  return axis.empty() ? std::vector<T>{base} : axis;
}

void append_double_field(std::string& out, double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  out.append(buf, res.ptr);
}

}  // namespace

SweepTable hyper_sweep(const TrainConfig& base, const SweepGrid& grid,
                       const std::vector<std::uint64_t>& seeds, int workers) {
  if (seeds.empty()) throw InvalidConfig("hyper_sweep: need at least one seed");
  if (workers < 1) throw InvalidConfig("hyper_sweep: workers must be >= 1");
  SweepTable table;
  table.seeds = seeds;
  for (int bs : axis_or(grid.batch_size, base.batch_size)) {
    for (int h : axis_or(grid.h, base.hyper.h)) {
      for (double lr : axis_or(grid.lr, base.lr)) {
        for (double disc : axis_or(grid.mlp_lr_discount, base.mlp_lr_discount)) {
          SweepCell cell;
          cell.batch_size = bs;
          cell.h = h;
          cell.lr = lr;
          cell.mlp_lr_discount = disc;
          table.cells.push_back(std::move(cell));
        }
      }
    }
  }

  // Every (cell, seed) run is an independent job writing its own slot, so the
  // worker count changes wall time and nothing else.
  struct Outcome {
    double acc = std::numeric_limits<double>::quiet_NaN();
    std::string error;
  };
  std::size_t n_jobs = table.cells.size() * seeds.size();
  std::vector<Outcome> slots(n_jobs);
  auto run_job = [&](std::size_t job) {
    const SweepCell& cell = table.cells[job / seeds.size()];
    TrainConfig cfg = base;
    cfg.batch_size = cell.batch_size;
    cfg.hyper.h = cell.h;
    cfg.lr = cell.lr;
    cfg.mlp_lr_discount = cell.mlp_lr_discount;
    cfg.seed = seeds[job % seeds.size()];
    try {
      RunArtifacts art = train(cfg);
      slots[job].acc = art.metrics.back().test_acc;
    } catch (const std::exception& e) {
      slots[job].error = e.what();
    }
  };
  if (workers == 1) {
    for (std::size_t job = 0; job < n_jobs; ++job) run_job(job);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t job = next.fetch_add(1); job < n_jobs; job = next.fetch_add(1)) {
          run_job(job);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }

  // Ordered reduction over the slots, independent of which worker ran what.
  for (std::size_t c = 0; c < table.cells.size(); ++c) {
    SweepCell& cell = table.cells[c];
    double acc_sum = 0.0, acc_sumsq = 0.0;
    int ok = 0;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const Outcome& got = slots[c * seeds.size() + s];
      cell.final_test_acc.push_back(got.acc);
      cell.errors.push_back(got.error);
      if (got.error.empty()) {
        acc_sum += got.acc;
        acc_sumsq += got.acc * got.acc;
        ++ok;
      }
    }
    if (ok > 0) {
      cell.mean_acc = acc_sum / ok;
      cell.std_acc = std::sqrt(std::max(0.0, acc_sumsq / ok - cell.mean_acc * cell.mean_acc));
    }
  }
  return table;
}

void write_sweep_csv(const std::string& path, const SweepTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("sweep csv: cannot open " + path + " for writing");
  std::string line = "batch_size,h,lr,mlp_lr_discount";
  for (std::uint64_t seed : table.seeds) line += ",acc_seed_" + std::to_string(seed);
  line += ",mean,std";
  out << line << '\n';
  for (const SweepCell& cell : table.cells) {
    line = std::to_string(cell.batch_size) + ',' + std::to_string(cell.h) + ',';
    append_double_field(line, cell.lr);
    line += ',';
    append_double_field(line, cell.mlp_lr_discount);
    for (double acc : cell.final_test_acc) {
      line += ',';
      append_double_field(line, acc);
    }
    line += ',';
    append_double_field(line, cell.mean_acc);
    line += ',';
    append_double_field(line, cell.std_acc);
    out << line << '\n';
  }
}

}  // namespace smadd
