#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace smadd {

struct CorruptLine : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TooFewRows : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One logged epoch. grad_* hold the Euclidean norm of that epoch's logged
// gradient per tensor (full training batch or last mini-batch depending on
// the run's logging mode). bound is b_tilde * sqrt(error_term) evaluated on
// the full training set at the same parameters.
struct MetricsRow {
  int epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double grad_E = 0.0;
  double grad_P = 0.0;
  double grad_q = 0.0;
  double grad_V = 0.0;
  double grad_W = 0.0;
  double grad_U = 0.0;
  double error_term = 0.0;
  double bound = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

extern const char* const kMetricsHeader;

// Doubles are written with the shortest representation that round-trips, so
// write followed by read reproduces the rows bit for bit.
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

// Throws CorruptLine on a wrong header, a wrong field count, or an
// unparseable number.
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

}  // namespace smadd
