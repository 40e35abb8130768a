#pragma once
// Three independent routes to the loss gradient, kept around to check each
// other:
//
//   backprop_loss_gradient    reverse-mode by hand through the exact forward
//   closed_form_*             the per-logit factored form assembled from the
//                             reusable blocks below
//   finite_difference_gradient  central differences on the batch loss
//
// The closed form only covers q, V, W and U: it treats the per-position
// embeddings z as constants, which they are with respect to those four
// tensors. Backprop and finite differences additionally cover E and P.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "smadd/model.hpp"

namespace smadd {

// The pooled embedding xi collapsed to (numerically) zero, so the projection
// block 1/||xi|| (I - xibar xibar^T) is undefined.
struct DegenerateXi : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Which parameter tensors receive gradient (and, downstream, updates).
struct TrainMask {
  bool E = true, P = true, q = true, V = true, W = true, U = true;

  bool operator==(const TrainMask&) const = default;
};

// Frozen embeddings: only the four tensors the closed form covers train.
inline TrainMask theory_mask() { return TrainMask{false, false, true, true, true, true}; }

// Subset-of-"EPqVWU" notation: to_string lists the trainable tensors in
// canonical order, the parser accepts them in any order and throws
// std::invalid_argument on an unknown or repeated letter. The empty string
// is the all-frozen mask.
std::string to_string(const TrainMask& mask);
TrainMask train_mask_from_string(const std::string& s);

struct GradientSet {
  Mat dE, dP;
  Vec dq;
  Mat dV, dW, dU;
};

GradientSet zero_gradients(const ModelParams& params);

// Euclidean norm of the flattened {q,V,W,U} part, the quantity the gradient
// bound speaks about.
double qvwu_norm(const GradientSet& g);

// Per-sample building blocks of the closed form, all functions of one
// forward trace:
//   delta_z  (z / sqrt(d)) (I - attn 1^T), d x L
//   a_z      diag(attn), stored as the vector
//   sigma    diag(gelu'(W xibar)), stored as the vector
//   m_proj   1/||xi|| (I - xibar xibar^T)
//   q_mat    U diag(sigma) W m_proj
//   c_x      sum_j (mu_j - [y==j]) E(j), the error-weighted unembedding
//
// m_proj is the Jacobian of the standard normalization; under the smoothed
// variant these blocks are only exact when ||xi|| >= 1, where the variants
// coincide. Throws DegenerateXi when ||xi|| <= 1e-9.
struct LemmaBlocks {
  Mat delta_z;
  Vec a_z;
  Vec sigma;
  Mat m_proj;
  Mat q_mat;
  Vec c_x;
};

LemmaBlocks lemma_blocks(const ModelParams& params, const ForwardTrace& tr, int y);

// Gradient of a single logit zeta_j with respect to q, V, W, U:
//   d_q zeta_j = delta_z a_z (Vz)^T (I + Q^T) E(j)
//   d_V zeta_j = (I + Q^T) E(j) (z attn)^T
//   d_W zeta_j = diag(sigma) U^T E(j) xibar^T
//   d_U zeta_j = E(j) act^T
struct LogitGrads {
  Vec dq;
  Mat dV, dW, dU;
};

LogitGrads closed_form_logit_grads(const ModelParams& params, const ForwardTrace& tr, int j);

// Mean over the batch of sum_j (mu_j - [y==j]) * closed_form_logit_grads(j).
// dE and dP come back zero. An empty index span means the whole dataset.
GradientSet closed_form_loss_gradient(const ModelParams& params, const Dataset& ds,
                                      const HyperParams& hyper,
                                      std::span<const std::uint32_t> idx = {});

// Reverse mode through forward_into, respecting the norm variant and the
// guard, so it differentiates exactly what the forward computes. Masked
// tensors come back zero.
GradientSet backprop_loss_gradient(const ModelParams& params, const Dataset& ds,
                                   const HyperParams& hyper, const TrainMask& mask = {},
                                   std::span<const std::uint32_t> idx = {});

// Central differences with the given step on the mean batch loss, one
// coordinate at a time. When E and P are masked out, the per-position
// embeddings are precomputed once per sample; a q/V/W/U perturbation cannot
// move them, which makes the quadratic-cost check affordable.
GradientSet finite_difference_gradient(const ModelParams& params, const Dataset& ds,
                                       const HyperParams& hyper, double step = 1e-5,
                                       const TrainMask& mask = {},
                                       std::span<const std::uint32_t> idx = {});

// max_i |a_i - b_i| / max(max|a|, max|b|, 1e-8), the scale-aware discrepancy
// used for every engine comparison.
double tensor_rel_err(const Vec& a, const Vec& b);
double tensor_rel_err(const Mat& a, const Mat& b);

struct CheckTolerances {
  double engine_pair = 1e-10;  // closed form vs backprop
  double fd = 1e-6;            // either engine vs finite differences
  double fd_step = 1e-5;
};

struct CheckReport {
  struct Entry {
    std::string tensor;
    double cf_vs_bp;  // NaN where an engine does not produce the tensor
    double cf_vs_fd;
    double bp_vs_fd;
  };
  std::vector<Entry> entries;
  CheckTolerances tol;
  bool pass = false;
};

// Runs all three engines on the batch and compares: closed form vs backprop
// on {q,V,W,U} against tol.engine_pair, both against finite differences with
// tol.fd, and backprop vs finite differences additionally on E and P when the
// mask includes them.
CheckReport gradient_check(const ModelParams& params, const Dataset& ds, const HyperParams& hyper,
                           const CheckTolerances& tol = {}, const TrainMask& mask = {});

std::string to_json(const CheckReport& report);

}  // namespace smadd
