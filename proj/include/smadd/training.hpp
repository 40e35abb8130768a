#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "smadd/diagnostics.hpp"
#include "smadd/gradients.hpp"
#include "smadd/metrics.hpp"

namespace smadd {

struct InvalidConfig : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BoundViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class GradLogMode {
  full_batch_norms,  // recompute the gradient on the whole training set per epoch
  minibatch_norms,   // log the last mini-batch gradient of the epoch
};

std::string to_string(GradLogMode mode);
GradLogMode grad_log_mode_from_string(const std::string& s);

struct TrainConfig {
  HyperParams hyper;
  int n_train = 2048;
  int n_test = 2048;
  int epochs = 1000;
  int batch_size = 256;  // 0 = full batch
  double lr = 1e-2;
  double mlp_lr_discount = 1.0;  // multiplier on lr for W and U only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  TrainMask mask;
  std::uint64_t seed = 0;
  int snapshot_every = 10;
  GradLogMode grad_log = GradLogMode::full_batch_norms;

  bool operator==(const TrainConfig&) const = default;

  // Throws InvalidConfig when a field is out of range.
  void validate() const;
};

struct AdamState {
  GradientSet m1;  // first moments, shape-matched to the parameters
  GradientSet m2;  // second moments
  long step = 0;
};

AdamState init_adam_state(const ModelParams& params);

// One bias-corrected Adam step. W and U use lr * mlp_lr_discount, everything
// else the base lr. Masked tensors are untouched, moments included.
void adam_update(AdamState& state, ModelParams& params, const GradientSet& grads,
                 const TrainConfig& config);

struct RunArtifacts {
  std::vector<MetricsRow> metrics;  // one row per epoch, 0 through epochs
  ModelParams final_params;
  TrainConfig config;
  std::vector<int> snapshot_epochs;
};

// Called at every snapshot epoch with the parameters and the metrics row
// just logged for that epoch. Wire a run-log writer in here; training itself
// does not touch the filesystem.
using SnapshotSink = std::function<void(int epoch, const ModelParams&, const MetricsRow&)>;

// Deterministic per (config, seed): data, init, and shuffle order each come
// from their own seed stream. Epoch 0 logs the untrained model, with
// full-batch gradient norms in either logging mode; every later epoch is one
// shuffled pass over the training set. Snapshots fire at epoch 0, every
// snapshot_every epochs, and the final epoch. In theory mode (E and P both
// masked out) with full-batch logging, the gradient-norm bound is asserted
// at every epoch and its violation throws BoundViolation.
RunArtifacts train(const TrainConfig& config, const SnapshotSink& sink = {});

// Vocabulary-expansion curriculum: grows the embedding table of a trained
// model to new_p rows (fresh rows from the init distribution) and trains on
// the new task. The task inside config is taken with p = new_p; everything
// else in config applies as in train().
RunArtifacts finetune(const ModelParams& pretrained, int new_p, TrainConfig config,
                      const SnapshotSink& sink = {});

struct SweepGrid {
  // An empty axis means: keep the base config's value.
  std::vector<int> batch_size;
  std::vector<int> h;
  std::vector<double> lr;
  std::vector<double> mlp_lr_discount;
};

struct SweepCell {
  int batch_size = 0;
  int h = 0;
  double lr = 0.0;
  double mlp_lr_discount = 0.0;
  std::vector<double> final_test_acc;  // per seed, NaN where the run failed
  std::vector<std::string> errors;     // per seed, empty when the run succeeded
  double mean_acc = 0.0;               // over successful seeds
  double std_acc = 0.0;                // population deviation over successful seeds
};

struct SweepTable {
  std::vector<std::uint64_t> seeds;
  std::vector<SweepCell> cells;  // batch_size-major, then h, lr, discount
};

// One train() per cell and seed. Cells sharing a seed share token/position
// initial weights and batch order because those come from seed streams the
// swept knobs never touch. A failed run records its error and the sweep
// continues. Cell-seed jobs are independent; with workers > 1 they run on a
// thread pool into per-job slots and are reduced in a fixed order, so the
// table is bit-identical for any worker count.
SweepTable hyper_sweep(const TrainConfig& base, const SweepGrid& grid,
                       const std::vector<std::uint64_t>& seeds, int workers = 1);

// Columns: the four knobs, one accuracy column per seed, then mean and std.
void write_sweep_csv(const std::string& path, const SweepTable& table);

}  // namespace smadd
