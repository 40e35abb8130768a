#pragma once
// The one-layer attention + MLP model, written out exactly as it is
// differentiated by hand in gradients.hpp. Position t of a sequence embeds
// to the normalized E(x_t) + P(t); a single softmax attention head with
// query q pools those into xi; a GELU MLP with a normalized input and a
// residual connection produces psi; logits come from tied embeddings,
// zeta_v = E(v) . psi.

#include <cstdint>
#include <stdexcept>

#include "smadd/numerics.hpp"
#include "smadd/task.hpp"

namespace smadd {

// Two distinct prefix classes mapped to (nearly) the same pooled embedding
// in the idealized construction, so the clusters would not be separable.
struct ClusterCollision : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Vocabulary expansion that does not actually grow the vocabulary.
struct InvalidExpansion : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class NormVariant {
  standard,  // v / max(||v||, guard)
  smoothed,  // smoothstep-gained variant, flat near the origin
};

std::string to_string(NormVariant n);
NormVariant norm_variant_from_string(const std::string& name);

// The normalization both the embedding rows and the MLP input go through;
// exposed so other code (finite differences in particular) evaluates exactly
// the same map as the forward pass.
void apply_norm_variant(NormVariant which, const double* v, std::size_t n, double* out);

struct HyperParams {
  TaskSpec task;
  int d = 2;   // embedding dimension
  int h = 32;  // MLP width
  NormVariant norm = NormVariant::standard;

  bool operator==(const HyperParams&) const = default;
};

struct ModelParams {
  Mat E;  // p x d token embeddings, also the unembedding (tied)
  Mat P;  // L x d position embeddings
  Vec q;  // d attention query
  Mat V;  // d x d value transform
  Mat W;  // h x d MLP receptors
  Mat U;  // d x h MLP assemblers

  int p() const { return E.rows; }
  int L() const { return P.rows; }
  int d() const { return E.cols; }
  int h() const { return W.rows; }

  bool operator==(const ModelParams&) const = default;
};

// Everything the forward pass computes for one sequence. Kept around both
// for the hand-derived gradients (which are written in terms of these
// intermediates) and for snapshots.
struct ForwardTrace {
  Mat z;        // L x d, row t = normalized embedding of position t
  Vec attn_logits;  // L, z_t . q / sqrt(d)
  Vec attn;     // L, softmax of the above
  Vec zbar;     // d, attention-weighted sum of the z rows
  Vec xi;       // d, V zbar
  Vec xi_bar;   // d, normalized xi
  Vec act_pre;  // h, W xi_bar
  Vec act;      // h, gelu(act_pre)
  Vec psi;      // d, xi + U act
  Vec zeta;     // p, logits E psi
  Vec mu;       // p, softmax(zeta)
};

// Gaussian N(0,1) entries for E and P; uniform (-1/sqrt(fan_in), +1/sqrt(fan_in))
// for q, V, W (fan_in d) and U (fan_in h). Draw order is fixed (E, P, q, V, W, U,
// row-major within each) so that runs differing only in later-drawn shapes still
// share the earlier tensors.
ModelParams init_params(const HyperParams& hyper, std::uint64_t seed);

void forward_into(const ModelParams& params, const TokenSequence& x, const HyperParams& hyper,
                  ForwardTrace& tr);
ForwardTrace forward(const ModelParams& params, const TokenSequence& x, const HyperParams& hyper);

// Cross-entropy -log mu_y, computed from the logits with a shifted
// log-sum-exp rather than from mu, so tiny probabilities do not round to 0.
double trace_loss(const ForwardTrace& tr, int y);

// Argmax of the logits; ties go to the smallest class index.
int predicted_class(const ForwardTrace& tr);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  double error_term = 0.0;  // mean of 1 - mu_y, the TV distance to the one-hot target
};

// Means over the dataset, one forward per sequence in dataset order.
// Throws EmptyDataset on an empty one.
EvalResult batch_eval(const ModelParams& params, const Dataset& ds, const HyperParams& hyper);

// The hand-built two-dimensional model that solves the task by construction:
// position embeddings split prefix from suffix along the second axis, the
// query attends to the prefix side with margin c, token embeddings sit at
// geometrically spaced spots on the first axis so distinct prefix multisets
// pool to distinct xi. V is the identity and the MLP starts at zero.
// Requires d == 2; verifies pairwise cluster separation of at least 1e-6 and
// throws ClusterCollision otherwise.
ModelParams build_idealized_params(const HyperParams& hyper, double c = 50.0);

// Copy of params with E grown to new_p rows, the new rows drawn N(0,1) from
// the expand_vocab stream of the seed. Existing rows are untouched.
// Throws InvalidExpansion unless new_p exceeds the current vocabulary.
ModelParams expand_vocab(const ModelParams& params, int new_p, std::uint64_t seed);

}  // namespace smadd
