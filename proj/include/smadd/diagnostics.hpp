#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "smadd/gradients.hpp"
#include "smadd/metrics.hpp"

namespace smadd {

// Euclidean norm of each gradient tensor, keyed "E","P","q","V","W","U".
std::map<std::string, double> per_layer_grad_norms(const GradientSet& g);

// Mean over the dataset of the total-variation distance between the predicted
// distribution mu and the one-hot target. For deterministic targets this
// equals the mean of 1 - mu_y.
double classification_error(const ModelParams& params, const Dataset& ds,
                            const HyperParams& hyper);

// The gradient-norm bound constant:
//   b_tilde^2 = 4 d B^2 [ (2 L sqrt(d) v_op (1 + sqrt(2/pi) w_op^2 u_op))^2
//                         + d (1 + 2 w_op u_op)^2 + 4 u_op^2 + w_op^2 ]
// with B the largest embedding entry in absolute value. Split out from
// gradient_bound so callers can ask what the constant would be for a
// different B or set of operator norms.
double bound_constant(double embed_bound, double v_op, double w_op, double u_op, int L, int d);

struct BoundReport {
  double grad_norm = 0.0;    // norm of the loss gradient over {q,V,W,U}
  double error_term = 0.0;
  double embed_bound = 0.0;  // max |E entry|
  double v_op = 0.0;
  double w_op = 0.0;
  double u_op = 0.0;
  double b_tilde = 0.0;
  double slack = 0.0;  // b_tilde * sqrt(error_term) - grad_norm
};

// Evaluates everything on the full dataset: the gradient through the closed
// form, the error term, and the bound constant from the current parameters.
// Propagates ConvergenceFailure from the operator norms and DegenerateXi from
// the closed form.
BoundReport gradient_bound(const ModelParams& params, const Dataset& ds,
                           const HyperParams& hyper);

// Fraction of MLP activation entries gelu(W xi_bar) across the dataset with
// absolute value below epsilon. 1 means everything is epsilon-close to zero.
double activation_sparsity(const ModelParams& params, const Dataset& ds,
                           const HyperParams& hyper, double epsilon);

struct ClusterReport {
  std::vector<int> class_ids;  // ascending prefix-class ids present in the probe set
  Mat centroids;               // centroid of xi per class, rows follow class_ids
  double within_max = 0.0;     // pairwise xi distances inside one class
  double within_mean = 0.0;
  double between_min = 0.0;  // distances between class centroids
  double between_mean = 0.0;
  int detected_count = 0;          // single-linkage components over all probe xi
  double linkage_threshold = 0.0;  // 0.1 * max pairwise xi distance
};

ClusterReport cluster_report(const ModelParams& params, const ProbeSet& probe,
                             const HyperParams& hyper);

struct EventThresholds {
  int window = 5;
  double drop_frac = 0.25;   // of the total train-loss range
  double spike_frac = 0.20;  // of the total train-loss range
};

struct LossEvents {
  std::vector<int> drops;   // epochs, ascending
  std::vector<int> spikes;  // epochs, ascending
};

// A drop at epoch e means the mean train loss over the window before e
// exceeds the mean over the window starting at e by more than drop_frac of
// the loss range, and that decrease is a local maximum, so a staircase step
// is reported once, at the step epoch. A spike is any epoch whose raw train
// loss exceeds the running minimum by at least spike_frac of the range. The
// range is measured on the window-averaged series so that a one-epoch
// transient does not inflate the scale both events are judged against.
// Throws TooFewRows below 3 rows.
LossEvents detect_loss_events(const std::vector<MetricsRow>& rows,
                              const EventThresholds& thr = {});

std::string to_json(const BoundReport& r);
std::string to_json(const ClusterReport& r);
std::string to_json(const LossEvents& e);

// The `report` command payload: bound + clusters + events + sparsity curve
// as (epsilon, sparsity) pairs.
std::string diagnostics_report_json(const BoundReport& bound, const ClusterReport& clusters,
                                    const LossEvents& events,
                                    const std::vector<std::pair<double, double>>& sparsity_curve);

}  // namespace smadd
