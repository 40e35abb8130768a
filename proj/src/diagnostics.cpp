#include "smadd/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "json.hpp"

namespace smadd {

std::map<std::string, double> per_layer_grad_norms(const GradientSet& g) {
  auto mat_norm = [](const Mat& m) { return norm2(m.data(), m.size()); };
  return {
      {"E", mat_norm(g.dE)}, {"P", mat_norm(g.dP)}, {"q", norm2(g.dq)},
      {"V", mat_norm(g.dV)}, {"W", mat_norm(g.dW)}, {"U", mat_norm(g.dU)},
  };
}

double classification_error(const ModelParams& params, const Dataset& ds,
                            const HyperParams& hyper) {
  if (ds.xs.empty()) throw EmptyDataset("classification_error: dataset has no samples");
  ForwardTrace tr;
  Vec onehot(static_cast<std::size_t>(hyper.task.p), 0.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < ds.xs.size(); ++i) {
    forward_into(params, ds.xs[i], hyper, tr);
    onehot.assign(onehot.size(), 0.0);
    onehot[static_cast<std::size_t>(ds.ys[i])] = 1.0;
    acc += tv_distance(tr.mu, onehot);
  }
  return acc / static_cast<double>(ds.xs.size());
}

double bound_constant(double embed_bound, double v_op, double w_op, double u_op, int L, int d) {
  const double sd = std::sqrt(static_cast<double>(d));
  const double sqrt_2_over_pi = std::sqrt(2.0 / std::numbers::pi);
  const double attn_term = 2.0 * L * sd * v_op * (1.0 + sqrt_2_over_pi * w_op * w_op * u_op);
  const double resid_term = 1.0 + 2.0 * w_op * u_op;
  const double bracket =
      attn_term * attn_term + d * resid_term * resid_term + 4.0 * u_op * u_op + w_op * w_op;
  return 2.0 * embed_bound * sd * std::sqrt(bracket);
}

BoundReport gradient_bound(const ModelParams& params, const Dataset& ds,
                           const HyperParams& hyper) {
  if (ds.xs.empty()) throw EmptyDataset("gradient_bound: dataset has no samples");
  BoundReport r;
  r.embed_bound = max_abs(params.E);
  r.v_op = operator_norm(params.V);
  r.w_op = operator_norm(params.W);
  r.u_op = operator_norm(params.U);
  r.b_tilde = bound_constant(r.embed_bound, r.v_op, r.w_op, r.u_op, hyper.task.L, hyper.d);
  r.error_term = classification_error(params, ds, hyper);
  r.grad_norm = qvwu_norm(closed_form_loss_gradient(params, ds, hyper));
  r.slack = r.b_tilde * std::sqrt(r.error_term) - r.grad_norm;
  return r;
}

double activation_sparsity(const ModelParams& params, const Dataset& ds,
                           const HyperParams& hyper, double epsilon) {
  if (epsilon <= 0.0) throw std::invalid_argument("activation_sparsity: epsilon must be positive");
  if (ds.xs.empty()) throw EmptyDataset("activation_sparsity: dataset has no samples");
  ForwardTrace tr;
  std::size_t below = 0;
  for (const TokenSequence& x : ds.xs) {
    forward_into(params, x, hyper, tr);
    for (double a : tr.act) {
      if (std::fabs(a) < epsilon) ++below;
    }
  }
  return static_cast<double>(below) /
         (static_cast<double>(ds.xs.size()) * static_cast<double>(hyper.h));
}

namespace {

double row_distance(const Mat& pts, int i, int j) {
  double acc = 0.0;
  for (int c = 0; c < pts.cols; ++c) {
    double dif = pts(i, c) - pts(j, c);
    acc += dif * dif;
  }
  return std::sqrt(acc);
}

int uf_find(std::vector<int>& parent, int i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

}  // namespace

ClusterReport cluster_report(const ModelParams& params, const ProbeSet& probe,
                             const HyperParams& hyper) {
  if (probe.xs.empty()) throw EmptyProbeSet("cluster_report: probe set has no sequences");
  const int n = static_cast<int>(probe.xs.size());
  const int d = hyper.d;

  Mat xi(n, d);
  ForwardTrace tr;
  for (int i = 0; i < n; ++i) {
    forward_into(params, probe.xs[i], hyper, tr);
    std::copy(tr.xi.begin(), tr.xi.end(), xi.row(i));
  }

  ClusterReport rep;
  rep.class_ids = probe.class_ids;
  std::sort(rep.class_ids.begin(), rep.class_ids.end());
  rep.class_ids.erase(std::unique(rep.class_ids.begin(), rep.class_ids.end()),
                      rep.class_ids.end());
  const int nc = static_cast<int>(rep.class_ids.size());

  rep.centroids = Mat(nc, d);
  std::vector<std::vector<int>> members(nc);
  for (int i = 0; i < n; ++i) {
    int ci = static_cast<int>(std::lower_bound(rep.class_ids.begin(), rep.class_ids.end(),
                                               probe.class_ids[i]) -
                              rep.class_ids.begin());
    members[ci].push_back(i);
    for (int c = 0; c < d; ++c) rep.centroids(ci, c) += xi(i, c);
  }
  for (int ci = 0; ci < nc; ++ci) {
    for (int c = 0; c < d; ++c) {
      rep.centroids(ci, c) /= static_cast<double>(members[ci].size());
    }
  }

  double within_sum = 0.0;
  std::size_t within_pairs = 0;
  for (int ci = 0; ci < nc; ++ci) {
    const std::vector<int>& mem = members[ci];
    for (std::size_t a = 0; a < mem.size(); ++a) {
      for (std::size_t b = a + 1; b < mem.size(); ++b) {
        double dist = row_distance(xi, mem[a], mem[b]);
        rep.within_max = std::max(rep.within_max, dist);
        within_sum += dist;
        ++within_pairs;
      }
    }
  }
  if (within_pairs > 0) rep.within_mean = within_sum / static_cast<double>(within_pairs);

  if (nc > 1) {
    double between_sum = 0.0;
    std::size_t between_pairs = 0;
    rep.between_min = std::numeric_limits<double>::infinity();
    for (int a = 0; a < nc; ++a) {
      for (int b = a + 1; b < nc; ++b) {
        double dist = row_distance(rep.centroids, a, b);
        rep.between_min = std::min(rep.between_min, dist);
        between_sum += dist;
        ++between_pairs;
      }
    }
    rep.between_mean = between_sum / static_cast<double>(between_pairs);
  }

  // Single-linkage at a relative threshold: components of the graph whose
  // edges are point pairs at distance <= 0.1 * (max pairwise distance).
  double max_dist = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) max_dist = std::max(max_dist, row_distance(xi, i, j));
  }
  rep.linkage_threshold = 0.1 * max_dist;
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (row_distance(xi, i, j) <= rep.linkage_threshold) {
        parent[uf_find(parent, i)] = uf_find(parent, j);
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    if (uf_find(parent, i) == i) ++rep.detected_count;
  }
  return rep;
}

LossEvents detect_loss_events(const std::vector<MetricsRow>& rows, const EventThresholds& thr) {
  const int n = static_cast<int>(rows.size());
  if (n < 3) {
    throw TooFewRows("detect_loss_events: need at least 3 metric rows, got " + std::to_string(n));
  }
  LossEvents ev;
  const int w = thr.window;
  // The reference scale is the range of the window-averaged loss, not the raw
  // loss. A one-epoch transient (for example the spike that rides on top of a
  // sudden drop) would otherwise stretch the range and raise the drop
  // threshold against the very event it belongs to. Series shorter than one
  // window fall back to the raw range; no drop can fire there anyway.
  double lo, hi;
  if (n >= w) {
    double acc = 0.0;
    for (int i = 0; i < w; ++i) acc += rows[i].train_loss;
    lo = hi = acc / static_cast<double>(w);
    for (int i = w; i < n; ++i) {
      acc += rows[i].train_loss - rows[i - w].train_loss;
      double m = acc / static_cast<double>(w);
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
  } else {
    lo = hi = rows[0].train_loss;
    for (const MetricsRow& r : rows) {
      lo = std::min(lo, r.train_loss);
      hi = std::max(hi, r.train_loss);
    }
  }
  const double range = hi - lo;
  if (range <= 0.0) return ev;
  auto window_mean = [&](int first) {
    double acc = 0.0;
    for (int i = first; i < first + w; ++i) acc += rows[i].train_loss;
    return acc / static_cast<double>(w);
  };
  // Decrease across epoch i: window mean just before i minus window mean
  // starting at i. Defined for i in [w, n-w].
  auto decrease = [&](int i) { return window_mean(i - w) - window_mean(i); };
  for (int i = w; i + w <= n; ++i) {
    double dec = decrease(i);
    if (dec <= thr.drop_frac * range) continue;
    double left = (i - 1 >= w) ? decrease(i - 1) : -std::numeric_limits<double>::infinity();
    double right = (i + 1 + w <= n) ? decrease(i + 1) : -std::numeric_limits<double>::infinity();
    // Leftmost epoch of a tied plateau wins.
    if (dec > left && dec >= right) ev.drops.push_back(rows[i].epoch);
  }

  double running_min = std::numeric_limits<double>::infinity();
  for (const MetricsRow& r : rows) {
    running_min = std::min(running_min, r.train_loss);
    if (r.train_loss - running_min >= thr.spike_frac * range) ev.spikes.push_back(r.epoch);
  }
  return ev;
}

namespace {

nlohmann::json bound_json(const BoundReport& r) {
  return {
      {"grad_norm", r.grad_norm}, {"error_term", r.error_term}, {"embed_bound", r.embed_bound},
      {"v_op", r.v_op},           {"w_op", r.w_op},             {"u_op", r.u_op},
      {"b_tilde", r.b_tilde},     {"slack", r.slack},
  };
}

nlohmann::json cluster_json(const ClusterReport& r) {
  nlohmann::json centroids = nlohmann::json::array();
  for (int i = 0; i < r.centroids.rows; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < r.centroids.cols; ++c) row.push_back(r.centroids(i, c));
    centroids.push_back(std::move(row));
  }
  return {
      {"class_ids", r.class_ids},
      {"centroids", std::move(centroids)},
      {"within_max", r.within_max},
      {"within_mean", r.within_mean},
      {"between_min", r.between_min},
      {"between_mean", r.between_mean},
      {"detected_count", r.detected_count},
      {"linkage_threshold", r.linkage_threshold},
  };
}

nlohmann::json events_json(const LossEvents& e) {
  return {{"drops", e.drops}, {"spikes", e.spikes}};
}

}  // namespace

std::string to_json(const BoundReport& r) { return bound_json(r).dump(2); }
std::string to_json(const ClusterReport& r) { return cluster_json(r).dump(2); }
std::string to_json(const LossEvents& e) { return events_json(e).dump(2); }

std::string diagnostics_report_json(const BoundReport& bound, const ClusterReport& clusters,
                                    const LossEvents& events,
                                    const std::vector<std::pair<double, double>>& sparsity_curve) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& [eps, frac] : sparsity_curve) {
    curve.push_back({{"epsilon", eps}, {"sparsity", frac}});
  }
  nlohmann::json doc = {
      {"bound", bound_json(bound)},
      {"clusters", cluster_json(clusters)},
      {"loss_events", events_json(events)},
      {"sparsity_curve", std::move(curve)},
  };
  return doc.dump(2);
}

}  // namespace smadd
