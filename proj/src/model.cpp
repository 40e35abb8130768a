#include "smadd/model.hpp"

#include <cmath>
#include <cstring>

#include "smadd/kernels.hpp"

namespace smadd {

std::string to_string(NormVariant n) {
  return n == NormVariant::standard ? "standard" : "smoothed";
}

NormVariant norm_variant_from_string(const std::string& name) {
  if (name == "standard") return NormVariant::standard;
  if (name == "smoothed") return NormVariant::smoothed;
  throw std::runtime_error("unknown norm variant: " + name);
}

ModelParams init_params(const HyperParams& hyper, std::uint64_t seed) {
  validate(hyper.task);
  if (hyper.d < 1 || hyper.h < 1) throw std::invalid_argument("init_params: d and h must be positive");

  const int p = hyper.task.p, L = hyper.task.L, d = hyper.d, h = hyper.h;
  Rng rng(seed, Stream::init);

  ModelParams m;
  m.E = Mat(p, d);
  m.P = Mat(L, d);
  m.q = Vec(d);
  m.V = Mat(d, d);
  m.W = Mat(h, d);
  m.U = Mat(d, h);

  rng.fill_normal(m.E.data(), m.E.size());
  rng.fill_normal(m.P.data(), m.P.size());
  double bd = 1.0 / std::sqrt(static_cast<double>(d));
  double bh = 1.0 / std::sqrt(static_cast<double>(h));
  rng.fill_uniform(m.q.data(), m.q.size(), -bd, bd);
  rng.fill_uniform(m.V.data(), m.V.size(), -bd, bd);
  rng.fill_uniform(m.W.data(), m.W.size(), -bd, bd);
  rng.fill_uniform(m.U.data(), m.U.size(), -bh, bh);
  return m;
}

void apply_norm_variant(NormVariant which, const double* v, std::size_t n, double* out) {
  if (which == NormVariant::standard) {
    normalize_into(v, n, 1e-12, out);
  } else {
    smoothed_normalize_into(v, n, 1e-12, out);
  }
}

void forward_into(const ModelParams& params, const TokenSequence& x, const HyperParams& hyper,
                  ForwardTrace& tr) {
  const int L = params.L(), d = params.d(), h = params.h(), p = params.p();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  if (tr.z.rows != L || tr.z.cols != d) tr.z = Mat(L, d);
  tr.attn_logits.resize(L);
  tr.attn.resize(L);
  tr.zbar.resize(d);
  tr.xi.resize(d);
  tr.xi_bar.resize(d);
  tr.act_pre.resize(h);
  tr.act.resize(h);
  tr.psi.resize(d);
  tr.zeta.resize(p);
  tr.mu.resize(p);

  double e[64];
  static_assert(sizeof(e) / sizeof(e[0]) == 64);
  Vec e_heap;
  double* ebuf = e;
  if (d > 64) {
    e_heap.resize(d);
    ebuf = e_heap.data();
  }

  for (int t = 0; t < L; ++t) {
    const double* erow = params.E.row(x[t]);
    const double* prow = params.P.row(t);
    for (int i = 0; i < d; ++i) ebuf[i] = erow[i] + prow[i];
    apply_norm_variant(hyper.norm, ebuf, d, tr.z.row(t));
    tr.attn_logits[t] = kernels::dot(tr.z.row(t), params.q.data(), d) * inv_sqrt_d;
  }

  tr.attn = tr.attn_logits;
  softmax_inplace(tr.attn);

  gemv_t(tr.z, tr.attn.data(), tr.zbar.data());
  gemv(params.V, tr.zbar.data(), tr.xi.data());
  apply_norm_variant(hyper.norm, tr.xi.data(), d, tr.xi_bar.data());
  gemv(params.W, tr.xi_bar.data(), tr.act_pre.data());
  for (int i = 0; i < h; ++i) tr.act[i] = gelu(tr.act_pre[i]);
  gemv(params.U, tr.act.data(), tr.psi.data());
  for (int i = 0; i < d; ++i) tr.psi[i] += tr.xi[i];
  gemv(params.E, tr.psi.data(), tr.zeta.data());
  tr.mu = tr.zeta;
  softmax_inplace(tr.mu);
}

ForwardTrace forward(const ModelParams& params, const TokenSequence& x, const HyperParams& hyper) {
  ForwardTrace tr;
  forward_into(params, x, hyper, tr);
  return tr;
}

double trace_loss(const ForwardTrace& tr, int y) {
  double m = -HUGE_VAL;
  for (double z : tr.zeta) m = std::max(m, z);
  double acc = 0.0;
  for (double z : tr.zeta) acc += std::exp(z - m);
  return m + std::log(acc) - tr.zeta[y];
}

int predicted_class(const ForwardTrace& tr) {
  int best = 0;
  for (int v = 1; v < static_cast<int>(tr.zeta.size()); ++v) {
    if (tr.zeta[v] > tr.zeta[best]) best = v;
  }
  return best;
}

EvalResult batch_eval(const ModelParams& params, const Dataset& ds, const HyperParams& hyper) {
  if (ds.size() == 0) throw EmptyDataset("batch_eval: empty dataset");
  ForwardTrace tr;
  double loss = 0.0, correct = 0.0, err = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    forward_into(params, ds.xs[i], hyper, tr);
    loss += trace_loss(tr, ds.ys[i]);
    correct += (predicted_class(tr) == ds.ys[i]) ? 1.0 : 0.0;
    err += 1.0 - tr.mu[ds.ys[i]];
  }
  double n = static_cast<double>(ds.size());
  return {loss / n, correct / n, err / n};
}

ModelParams build_idealized_params(const HyperParams& hyper, double c) {
  validate(hyper.task);
  if (hyper.d != 2) {
    throw std::invalid_argument("build_idealized_params: the construction is two-dimensional, got d=" +
                                std::to_string(hyper.d));
  }
  const int p = hyper.task.p, L = hyper.task.L, k = hyper.task.k, h = hyper.h;

  ModelParams m;
  m.E = Mat(p, 2);
  m.P = Mat(L, 2);
  m.q = Vec(2, 0.0);
  m.V = Mat(2, 2);
  m.W = Mat(h, 2);
  m.U = Mat(2, h);

  // Token v sits at 6^v / (1 + 6^p) on the first axis: geometric spacing
  // makes every prefix multiset sum to a distinct total, scaled into (0,1).
  double denom = 1.0 + std::pow(6.0, p);
  for (int v = 0; v < p; ++v) {
    m.E(v, 0) = std::pow(6.0, v) / denom;
    m.E(v, 1) = 0.0;
  }
  // Positions only carry a prefix/suffix flag on the second axis; the query
  // reads that axis with margin c, so softmax attention lands on the prefix.
  for (int t = 0; t < L; ++t) {
    m.P(t, 0) = 0.0;
    m.P(t, 1) = (t < k) ? 1.0 : -1.0;
  }
  m.q[1] = c;
  m.V(0, 0) = 1.0;
  m.V(1, 1) = 1.0;
  // W and U start at zero; training the MLP on top is the caller's business.

  // One representative sequence per prefix class is enough to probe xi, since
  // pooling only sees the multiset of prefix tokens.
  std::vector<Vec> xis;
  ForwardTrace tr;
  for (const PrefixClass& cls : all_prefix_classes(hyper.task)) {
    TokenSequence x(L, 0);
    int pos = 0;
    for (int v = 0; v < p; ++v) {
      for (int rep = 0; rep < cls.counts[v]; ++rep) x[pos++] = v;
    }
    forward_into(m, x, hyper, tr);
    xis.push_back(tr.xi);
  }
  for (std::size_t i = 0; i < xis.size(); ++i) {
    for (std::size_t j = i + 1; j < xis.size(); ++j) {
      double dx = xis[i][0] - xis[j][0];
      double dy = xis[i][1] - xis[j][1];
      if (std::sqrt(dx * dx + dy * dy) < 1e-6) {
        throw ClusterCollision("build_idealized_params: prefix classes " + std::to_string(i) +
                               " and " + std::to_string(j) + " pool closer than 1e-6");
      }
    }
  }
  return m;
}

ModelParams expand_vocab(const ModelParams& params, int new_p, std::uint64_t seed) {
  if (new_p <= params.p()) {
    throw InvalidExpansion("expand_vocab: new vocabulary " + std::to_string(new_p) +
                           " does not exceed current " + std::to_string(params.p()));
  }
  ModelParams out = params;
  Mat grown(new_p, params.d());
  std::memcpy(grown.data(), params.E.data(), sizeof(double) * params.E.size());
  Rng rng(seed, Stream::expand_vocab);
  rng.fill_normal(grown.row(params.p()), static_cast<std::size_t>(new_p - params.p()) * params.d());
  out.E = std::move(grown);
  return out;
}

}  // namespace smadd
