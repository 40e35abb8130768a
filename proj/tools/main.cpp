#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "smadd/diagnostics.hpp"
#include "smadd/render.hpp"
#include "smadd/rng.hpp"
#include "smadd/snapshot.hpp"
#include "smadd/training.hpp"

namespace fs = std::filesystem;
using namespace smadd;

namespace {

// One optional per config field so a flag given on the command line overrides
// the config file, which in turn overrides the built-in defaults.
struct ConfigCli {
  std::string config_path;
  bool theory_mode = false;
  std::optional<int> p, L, k, d, h, n_train, n_test, epochs, batch_size, snapshot_every;
  std::optional<double> lr, mlp_lr_discount, beta1, beta2, adam_eps;
  std::optional<std::string> norm, train, grad_log;
  std::optional<std::uint64_t> seed;
};

void add_config_flags(CLI::App* cmd, ConfigCli& c) {
  cmd->add_option("--config", c.config_path, "JSON config file; flags override its values")
      ->check(CLI::ExistingFile);
  cmd->add_option("--p", c.p, "vocabulary size, tokens are 0..p-1");
  cmd->add_option("--L", c.L, "sequence length");
  cmd->add_option("--k", c.k, "number of summed prefix positions");
  cmd->add_option("--d", c.d, "embedding dimension");
  cmd->add_option("--h", c.h, "MLP width");
  cmd->add_option("--norm", c.norm, "normalization variant: standard or smoothed");
  cmd->add_option("--n_train", c.n_train, "training set size");
  cmd->add_option("--n_test", c.n_test, "test set size");
  cmd->add_option("--epochs", c.epochs, "training epochs");
  cmd->add_option("--batch_size", c.batch_size, "mini-batch size, 0 means full batch");
  cmd->add_option("--lr", c.lr, "Adam base learning rate");
  cmd->add_option("--mlp_lr_discount", c.mlp_lr_discount, "learning-rate multiplier for W and U");
  cmd->add_option("--beta1", c.beta1, "Adam beta1");
  cmd->add_option("--beta2", c.beta2, "Adam beta2");
  cmd->add_option("--adam_eps", c.adam_eps, "Adam epsilon");
  CLI::Option* mask =
      cmd->add_option("--train", c.train, "trainable tensors, a subset of EPqVWU, e.g. qVWU");
  cmd->add_flag("--theory-mode", c.theory_mode, "freeze E and P, shorthand for --train qVWU")
      ->excludes(mask);
  cmd->add_option("--seed", c.seed, "master seed; derived streams cover data, init, shuffle");
  cmd->add_option("--snapshot_every", c.snapshot_every, "epochs between run-log snapshots");
  cmd->add_option("--grad_log", c.grad_log,
                  "gradient-norm logging: full_batch_norms or minibatch_norms");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

TrainConfig resolve_config(const ConfigCli& c) {
  TrainConfig cfg;
  if (!c.config_path.empty()) cfg = train_config_from_json(read_text_file(c.config_path), cfg);
  if (c.p) cfg.hyper.task.p = *c.p;
  if (c.L) cfg.hyper.task.L = *c.L;
  if (c.k) cfg.hyper.task.k = *c.k;
  if (c.d) cfg.hyper.d = *c.d;
  if (c.h) cfg.hyper.h = *c.h;
  if (c.norm) cfg.hyper.norm = norm_variant_from_string(*c.norm);
  if (c.n_train) cfg.n_train = *c.n_train;
  if (c.n_test) cfg.n_test = *c.n_test;
  if (c.epochs) cfg.epochs = *c.epochs;
  if (c.batch_size) cfg.batch_size = *c.batch_size;
  if (c.lr) cfg.lr = *c.lr;
  if (c.mlp_lr_discount) cfg.mlp_lr_discount = *c.mlp_lr_discount;
  if (c.beta1) cfg.beta1 = *c.beta1;
  if (c.beta2) cfg.beta2 = *c.beta2;
  if (c.adam_eps) cfg.adam_eps = *c.adam_eps;
  if (c.train) cfg.mask = train_mask_from_string(*c.train);
  if (c.theory_mode) cfg.mask = theory_mask();
  if (c.seed) cfg.seed = *c.seed;
  if (c.snapshot_every) cfg.snapshot_every = *c.snapshot_every;
  if (c.grad_log) cfg.grad_log = grad_log_mode_from_string(*c.grad_log);
  cfg.validate();
  return cfg;
}

// Accepts a run directory or a run log file.
std::string resolve_run_file(const std::string& path) {
  fs::path p(path);
  if (fs::is_directory(p)) {
    fs::path file = p / "run.jsonl";
    if (!fs::exists(file)) throw std::runtime_error("no run.jsonl under " + path);
    return file.string();
  }
  if (!fs::exists(p)) throw std::runtime_error("no such run: " + path);
  return path;
}

ModelParams load_pretrained(const std::string& src) {
  fs::path p(src);
  if (fs::is_directory(p)) {
    if (fs::exists(p / "params.json")) return read_params_json((p / "params.json").string());
    p /= "run.jsonl";
    if (!fs::exists(p)) throw std::runtime_error("no params.json or run.jsonl under " + src);
  }
  if (p.extension() == ".jsonl") {
    RunLog log = read_run_log(p.string());
    if (log.snapshots.empty()) throw std::runtime_error("run log holds no snapshots: " + src);
    return log.snapshots.back().params;
  }
  return read_params_json(p.string());
}

// Runs n jobs on a small pool; each job writes only its own slot, so the
// worker count never changes the results.
void run_jobs(std::size_t n, int workers, const std::function<void(std::size_t)>& job) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) job(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

std::vector<double> log_spaced(double lo, double hi, int points) {
  if (points < 2 || lo <= 0.0 || hi <= lo) {
    throw InvalidConfig("epsilon grid needs 0 < min < max and at least 2 points");
  }
  std::vector<double> out;
  double a = std::log10(lo), b = std::log10(hi);
  for (int i = 0; i < points; ++i) {
    out.push_back(std::pow(10.0, a + (b - a) * i / (points - 1)));
  }
  return out;
}

// --------------------------------------------------------------- commands

int cmd_train(const ConfigCli& cc, const std::string& out_dir, const std::string& from) {
  TrainConfig cfg = resolve_config(cc);
  fs::create_directories(out_dir);

  std::vector<TokenSequence> suffixes = default_probe_suffixes(cfg.hyper.task);
  ProbeSet probe = build_probe_set(cfg.hyper.task, suffixes);
  RunLog log;
  log.header = make_run_log_header(cfg, suffixes);
  SnapshotSink sink = [&](int epoch, const ModelParams& params, const MetricsRow& row) {
    log.append(record_snapshot(epoch, params, probe, cfg.hyper, row));
  };

  RunArtifacts art;
  if (from.empty()) {
    art = train(cfg, sink);
  } else {
    ModelParams pretrained = load_pretrained(from);
    std::printf("expanding vocabulary %d -> %d from %s\n", pretrained.p(), cfg.hyper.task.p,
                from.c_str());
    art = finetune(pretrained, cfg.hyper.task.p, cfg, sink);
  }

  fs::path out(out_dir);
  write_metrics_csv((out / "metrics.csv").string(), art.metrics);
  write_run_log(log, (out / "run.jsonl").string());
  write_params_json(art.final_params, (out / "params.json").string());
  write_text_file(out / "config.echo", to_json(art.config) + "\n");

  const MetricsRow& last = art.metrics.back();
  std::printf("epoch %d: train loss %.6g, test loss %.6g, train acc %.4f, test acc %.4f\n",
              last.epoch, last.train_loss, last.test_loss, last.train_acc, last.test_acc);
  std::printf("wrote %s/{metrics.csv, run.jsonl, params.json, config.echo}\n", out_dir.c_str());
  return 0;
}

struct GradCheckOpts {
  int seeds = 20;
  int batch = 64;
  CheckTolerances tol;
};

int cmd_grad_check(const ConfigCli& cc, const GradCheckOpts& o) {
  TrainConfig cfg = resolve_config(cc);
  if (o.seeds < 1 || o.batch < 1) throw InvalidConfig("grad-check needs seeds >= 1, batch >= 1");

  std::vector<std::string> order;
  std::map<std::string, CheckReport::Entry> worst;
  auto fold = [](double& acc, double x) {
    if (std::isnan(acc)) {
      acc = x;
    } else if (!std::isnan(x)) {
      acc = std::max(acc, x);
    }
  };
  bool all_pass = true;
  for (int s = 0; s < o.seeds; ++s) {
    std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(s);
    ModelParams params = init_params(cfg.hyper, seed);
    Dataset ds = sample_dataset(o.batch, cfg.hyper.task, seed, Stream::train_data);
    CheckReport rep = gradient_check(params, ds, cfg.hyper, o.tol, cfg.mask);
    all_pass = all_pass && rep.pass;
    for (const CheckReport::Entry& e : rep.entries) {
      auto [it, fresh] = worst.try_emplace(e.tensor, e);
      if (fresh) {
        order.push_back(e.tensor);
      } else {
        fold(it->second.cf_vs_bp, e.cf_vs_bp);
        fold(it->second.cf_vs_fd, e.cf_vs_fd);
        fold(it->second.bp_vs_fd, e.bp_vs_fd);
      }
    }
  }

  auto cell = [](double v) {
    char buf[24];
    if (std::isnan(v)) {
      std::snprintf(buf, sizeof buf, "%14s", "n/a");
    } else {
      std::snprintf(buf, sizeof buf, "%14.3e", v);
    }
    return std::string(buf);
  };
  std::printf("max relative error over %d seeds, batch %d, d=%d:\n", o.seeds, o.batch,
              cfg.hyper.d);
  std::printf("%8s %14s %14s %14s\n", "tensor", "closed|bp", "closed|fd", "bp|fd");
  for (const std::string& t : order) {
    const CheckReport::Entry& e = worst.at(t);
    std::printf("%8s %s %s %s\n", t.c_str(), cell(e.cf_vs_bp).c_str(), cell(e.cf_vs_fd).c_str(),
                cell(e.bp_vs_fd).c_str());
  }
  std::printf("tolerances: engine pair %.1e, finite differences %.1e (step %.1e)\n",
              o.tol.engine_pair, o.tol.fd, o.tol.fd_step);
  std::printf("grad-check: %s\n", all_pass ? "PASS" : "FAIL");
  return all_pass ? 0 : 1;
}

int cmd_bound_check(const std::string& run_path, double tol) {
  RunLog log = read_run_log(resolve_run_file(run_path));
  if (log.snapshots.empty()) throw std::runtime_error("run log holds no snapshots");
  const TrainConfig& cfg = log.header.config;
  Dataset ds = sample_dataset(cfg.n_train, cfg.hyper.task, cfg.seed, Stream::train_data);

  bool ok = true;
  std::printf("%8s %16s %16s %16s\n", "epoch", "grad_norm", "bound", "slack");
  for (const Snapshot& snap : log.snapshots) {
    BoundReport r = gradient_bound(snap.params, ds, cfg.hyper);
    bool pass = r.grad_norm <= r.b_tilde * std::sqrt(r.error_term) + tol;
    ok = ok && pass;
    std::printf("%8d %16.8e %16.8e %16.8e%s\n", snap.epoch, r.grad_norm,
                r.b_tilde * std::sqrt(r.error_term), r.slack, pass ? "" : "  VIOLATION");
  }
  std::printf("bound-check: %s (tolerance %.1e, %zu snapshots)\n", ok ? "PASS" : "FAIL", tol,
              log.snapshots.size());
  return ok ? 0 : 1;
}

struct SweepOpts {
  std::vector<int> grid_batch_size, grid_h;
  std::vector<double> grid_lr, grid_mlp_lr_discount;
  int seeds = 1;
  int workers = 1;
};

int cmd_sweep(const ConfigCli& cc, const SweepOpts& o, const std::string& out_dir) {
  TrainConfig cfg = resolve_config(cc);
  if (o.seeds < 1) throw InvalidConfig("sweep needs seeds >= 1");
  SweepGrid grid;
  grid.batch_size = o.grid_batch_size;
  grid.h = o.grid_h;
  grid.lr = o.grid_lr;
  grid.mlp_lr_discount = o.grid_mlp_lr_discount;
  std::vector<std::uint64_t> seeds;
  for (int s = 0; s < o.seeds; ++s) seeds.push_back(cfg.seed + static_cast<std::uint64_t>(s));

  SweepTable table = hyper_sweep(cfg, grid, seeds, o.workers);

  fs::create_directories(out_dir);
  fs::path out(out_dir);
  write_sweep_csv((out / "sweep.csv").string(), table);
  write_text_file(out / "config.echo", to_json(cfg) + "\n");
  int failures = 0;
  for (const SweepCell& cell : table.cells) {
    for (const std::string& err : cell.errors) failures += err.empty() ? 0 : 1;
  }
  std::printf("swept %zu cells x %zu seeds (%d failed runs), wrote %s/sweep.csv\n",
              table.cells.size(), seeds.size(), failures, out_dir.c_str());
  return 0;
}

struct SparsityOpts {
  int seeds = 20;
  double eps_min = 1e-5;
  double eps_max = 1e2;
  int eps_points = 29;
  int workers = 1;
};

int cmd_sparsity_sweep(const ConfigCli& cc, const SparsityOpts& o, const std::string& out_dir) {
  TrainConfig cfg = resolve_config(cc);
  if (o.seeds < 1) throw InvalidConfig("sparsity-sweep needs seeds >= 1");
  std::vector<double> eps = log_spaced(o.eps_min, o.eps_max, o.eps_points);

  struct SeedResult {
    double test_acc = 0.0;
    std::vector<double> sparsity;
  };
  std::vector<SeedResult> results(o.seeds);
  run_jobs(results.size(), o.workers, [&](std::size_t i) {
    TrainConfig run_cfg = cfg;
    run_cfg.seed = cfg.seed + i;
    RunArtifacts art = train(run_cfg);
    Dataset train_ds =
        sample_dataset(run_cfg.n_train, run_cfg.hyper.task, run_cfg.seed, Stream::train_data);
    results[i].test_acc = art.metrics.back().test_acc;
    for (double e : eps) {
      results[i].sparsity.push_back(
          activation_sparsity(art.final_params, train_ds, run_cfg.hyper, e));
    }
  });

  fs::create_directories(out_dir);
  fs::path out(out_dir);
  {
    std::ofstream csv(out / "sparsity.csv", std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write " + (out / "sparsity.csv").string());
    csv << "seed,test_acc,epsilon,sparsity\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
      for (std::size_t j = 0; j < eps.size(); ++j) {
        char line[128];
        std::snprintf(line, sizeof line, "%llu,%.17g,%.17g,%.17g\n",
                      static_cast<unsigned long long>(cfg.seed + i), results[i].test_acc, eps[j],
                      results[i].sparsity[j]);
        csv << line;
      }
    }
  }
  write_text_file(out / "config.echo", to_json(cfg) + "\n");

  // closest grid point to epsilon = 1, where success and failure separate
  std::size_t mid = 0;
  for (std::size_t j = 1; j < eps.size(); ++j) {
    if (std::fabs(std::log10(eps[j])) < std::fabs(std::log10(eps[mid]))) mid = j;
  }
  std::vector<double> ok_s, bad_s;
  for (const SeedResult& r : results) {
    (r.test_acc >= 0.9 ? ok_s : bad_s).push_back(r.sparsity[mid]);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  std::printf("%zu runs: %zu reached test acc >= 0.9, %zu did not\n", results.size(),
              ok_s.size(), bad_s.size());
  if (!ok_s.empty() && !bad_s.empty()) {
    std::printf("median sparsity at eps=%.3g: successful %.4f, failed %.4f\n", eps[mid],
                median(ok_s), median(bad_s));
  } else {
    std::printf("note: only one outcome population, no success/failure sparsity contrast\n");
  }
  std::printf("wrote %s/sparsity.csv\n", out_dir.c_str());
  return 0;
}

int cmd_render(const std::string& run_path, int every, std::string out_dir) {
  if (every < 1) throw InvalidConfig("render needs --every >= 1");
  std::string file = resolve_run_file(run_path);
  RunLog log = read_run_log(file);
  if (log.snapshots.empty()) throw std::runtime_error("run log holds no snapshots");
  if (out_dir.empty()) out_dir = (fs::path(file).parent_path() / "frames").string();
  fs::create_directories(out_dir);

  const HyperParams& hyper = log.header.config.hyper;
  int frames = 0;
  for (std::size_t i = 0; i < log.snapshots.size(); ++i) {
    const Snapshot& snap = log.snapshots[i];
    bool endpoint = i == 0 || i + 1 == log.snapshots.size();
    if (!endpoint && snap.epoch % every != 0) continue;
    char name[32];
    std::snprintf(name, sizeof name, "frame_%06d.svg", snap.epoch);
    write_text_file(fs::path(out_dir) / name, render_frame(snap, hyper));
    ++frames;
  }
  if (log.snapshots.size() >= 2) {
    write_text_file(fs::path(out_dir) / "metrics.svg", render_metrics(log));
    std::printf("wrote %d frames + metrics.svg to %s\n", frames, out_dir.c_str());
  } else {
    std::printf("wrote %d frames to %s (metrics figure needs at least 2 snapshots)\n", frames,
                out_dir.c_str());
  }
  return 0;
}

int cmd_report(const std::string& run_path, const SparsityOpts& grid_opts, std::string out_dir) {
  std::string file = resolve_run_file(run_path);
  RunLog log = read_run_log(file);
  if (log.snapshots.empty()) throw std::runtime_error("run log holds no snapshots");
  const TrainConfig& cfg = log.header.config;
  if (out_dir.empty()) out_dir = fs::path(file).parent_path().string();
  fs::create_directories(out_dir);

  Dataset ds = sample_dataset(cfg.n_train, cfg.hyper.task, cfg.seed, Stream::train_data);

  // loss events prefer the per-epoch csv over the sparser snapshot rows
  std::vector<MetricsRow> rows;
  fs::path csv = fs::path(file).parent_path() / "metrics.csv";
  if (fs::exists(csv)) {
    rows = read_metrics_csv(csv.string());
  } else {
    for (const Snapshot& s : log.snapshots) rows.push_back(s.metrics);
  }
  LossEvents events = detect_loss_events(rows);

  const Snapshot& last = log.snapshots.back();
  BoundReport bound = gradient_bound(last.params, ds, cfg.hyper);
  ProbeSet probe = build_probe_set(cfg.hyper.task, log.header.probe_suffixes);
  ClusterReport clusters = cluster_report(last.params, probe, cfg.hyper);

  std::vector<double> eps = log_spaced(grid_opts.eps_min, grid_opts.eps_max, grid_opts.eps_points);
  std::vector<std::pair<double, double>> curve;
  for (double e : eps) curve.emplace_back(e, activation_sparsity(last.params, ds, cfg.hyper, e));

  nlohmann::json j =
      nlohmann::json::parse(diagnostics_report_json(bound, clusters, events, curve));
  nlohmann::json series = nlohmann::json::array();
  for (const Snapshot& snap : log.snapshots) {
    BoundReport r = gradient_bound(snap.params, ds, cfg.hyper);
    series.push_back({{"epoch", snap.epoch},
                      {"grad_norm", r.grad_norm},
                      {"bound", r.b_tilde * std::sqrt(r.error_term)},
                      {"slack", r.slack}});
  }
  j["bound_slack_series"] = std::move(series);

  fs::path out_file = fs::path(out_dir) / "report.json";
  write_text_file(out_file, j.dump(2) + "\n");
  std::printf("final epoch %d: %d clusters, bound slack %.6g\n", last.epoch,
              clusters.detected_count, bound.slack);
  std::printf("wrote %s\n", out_file.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"training sandbox for a one-layer transformer on sparse modular addition"};
  app.require_subcommand(1);
  // --h is the MLP width, so help lives on --help alone
  app.set_help_flag("--help", "print help and exit");
  // a repeated flag keeps its last value, so appending to a command overrides
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  auto sub = [&app](const std::string& name, const std::string& desc) {
    CLI::App* cmd = app.add_subcommand(name, desc);
    cmd->set_help_flag("--help", "print help and exit");
    return cmd;
  };
  int rc = 0;

  ConfigCli train_cfg;
  std::string train_out = "run";
  CLI::App* train_cmd = sub("train", "train a model and write run artifacts");
  add_config_flags(train_cmd, train_cfg);
  train_cmd->add_option("--out", train_out, "output directory");
  train_cmd->callback([&] { rc = cmd_train(train_cfg, train_out, ""); });

  ConfigCli ft_cfg;
  std::string ft_out = "finetuned";
  std::string ft_from;
  CLI::App* ft_cmd =
      sub("finetune", "expand a pretrained model's vocabulary to --p and keep training");
  add_config_flags(ft_cmd, ft_cfg);
  ft_cmd->add_option("--from", ft_from, "pretrained source: run directory, run.jsonl, or params.json")
      ->required();
  ft_cmd->add_option("--out", ft_out, "output directory");
  ft_cmd->callback([&] { rc = cmd_train(ft_cfg, ft_out, ft_from); });

  ConfigCli gc_cfg;
  GradCheckOpts gc_opts;
  CLI::App* gc_cmd =
      sub("grad-check", "compare closed-form, backprop, and finite-difference gradients");
  add_config_flags(gc_cmd, gc_cfg);
  gc_cmd->add_option("--seeds", gc_opts.seeds, "number of random models to check");
  gc_cmd->add_option("--batch", gc_opts.batch, "samples per check batch");
  gc_cmd->add_option("--tol_pair", gc_opts.tol.engine_pair, "closed form vs backprop tolerance");
  gc_cmd->add_option("--tol_fd", gc_opts.tol.fd, "finite-difference tolerance");
  gc_cmd->add_option("--fd_step", gc_opts.tol.fd_step, "finite-difference step");
  gc_cmd->callback([&] { rc = cmd_grad_check(gc_cfg, gc_opts); });

  std::string bc_run;
  double bc_tol = 1e-9;
  CLI::App* bc_cmd =
      sub("bound-check", "verify the gradient-norm bound on every snapshot of a run");
  bc_cmd->add_option("run", bc_run, "run directory or run.jsonl")->required();
  bc_cmd->add_option("--tol", bc_tol, "absolute slack tolerance");
  bc_cmd->callback([&] { rc = cmd_bound_check(bc_run, bc_tol); });

  ConfigCli sw_cfg;
  SweepOpts sw_opts;
  std::string sw_out = "sweep";
  CLI::App* sw_cmd = sub("sweep", "train over a hyperparameter grid");
  add_config_flags(sw_cmd, sw_cfg);
  sw_cmd->add_option("--grid_batch_size", sw_opts.grid_batch_size, "batch sizes, comma separated")
      ->delimiter(',');
  sw_cmd->add_option("--grid_h", sw_opts.grid_h, "MLP widths, comma separated")->delimiter(',');
  sw_cmd->add_option("--grid_lr", sw_opts.grid_lr, "learning rates, comma separated")
      ->delimiter(',');
  sw_cmd->add_option("--grid_mlp_lr_discount", sw_opts.grid_mlp_lr_discount,
                     "MLP lr discounts, comma separated")
      ->delimiter(',');
  sw_cmd->add_option("--seeds", sw_opts.seeds, "seeds per cell, starting at --seed");
  sw_cmd->add_option("--workers", sw_opts.workers, "parallel workers; never changes results");
  sw_cmd->add_option("--out", sw_out, "output directory");
  sw_cmd->callback([&] { rc = cmd_sweep(sw_cfg, sw_opts, sw_out); });

  ConfigCli sp_cfg;
  SparsityOpts sp_opts;
  std::string sp_out = "sparsity";
  CLI::App* sp_cmd =
      sub("sparsity-sweep", "train several seeds and trace MLP activation sparsity over epsilon");
  add_config_flags(sp_cmd, sp_cfg);
  sp_cmd->add_option("--seeds", sp_opts.seeds, "number of trained models");
  sp_cmd->add_option("--eps_min", sp_opts.eps_min, "smallest epsilon");
  sp_cmd->add_option("--eps_max", sp_opts.eps_max, "largest epsilon");
  sp_cmd->add_option("--eps_points", sp_opts.eps_points, "log-spaced grid size");
  sp_cmd->add_option("--workers", sp_opts.workers, "parallel workers; never changes results");
  sp_cmd->add_option("--out", sp_out, "output directory");
  sp_cmd->callback([&] { rc = cmd_sparsity_sweep(sp_cfg, sp_opts, sp_out); });

  std::string rd_run, rd_out;
  int rd_every = 1;
  CLI::App* rd_cmd = sub("render", "draw SVG frames and the metrics figure");
  rd_cmd->add_option("run", rd_run, "run directory or run.jsonl")->required();
  rd_cmd->add_option("--every", rd_every,
                     "only frame snapshots whose epoch is a multiple of this");
  rd_cmd->add_option("--out", rd_out, "output directory, default <run>/frames");
  rd_cmd->callback([&] { rc = cmd_render(rd_run, rd_every, rd_out); });

  std::string rp_run, rp_out;
  SparsityOpts rp_grid;
  CLI::App* rp_cmd = sub("report", "aggregate a finished run into one diagnostics JSON");
  rp_cmd->add_option("run", rp_run, "run directory or run.jsonl")->required();
  rp_cmd->add_option("--eps_min", rp_grid.eps_min, "smallest sparsity epsilon");
  rp_cmd->add_option("--eps_max", rp_grid.eps_max, "largest sparsity epsilon");
  rp_cmd->add_option("--eps_points", rp_grid.eps_points, "sparsity grid size");
  rp_cmd->add_option("--out", rp_out, "output directory, default alongside the run log");
  rp_cmd->callback([&] { rc = cmd_report(rp_run, rp_grid, rp_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const InvalidConfig& e) {
    std::fprintf(stderr, "smadd: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "smadd: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "smadd: error: %s\n", e.what());
    return 1;
  }
  return rc;
}
