#include "smadd/gradients.hpp"

#include <cmath>

#include "json.hpp"
#include "smadd/kernels.hpp"

namespace smadd {

GradientSet zero_gradients(const ModelParams& p) {
  GradientSet g;
  g.dE = Mat(p.p(), p.d());
  g.dP = Mat(p.L(), p.d());
  g.dq = Vec(p.d(), 0.0);
  g.dV = Mat(p.d(), p.d());
  g.dW = Mat(p.h(), p.d());
  g.dU = Mat(p.d(), p.h());
  return g;
}

double qvwu_norm(const GradientSet& g) {
  double s = kernels::sumsq(g.dq.data(), g.dq.size()) + kernels::sumsq(g.dV.data(), g.dV.size()) +
             kernels::sumsq(g.dW.data(), g.dW.size()) + kernels::sumsq(g.dU.data(), g.dU.size());
  return std::sqrt(s);
}

std::string to_string(const TrainMask& mask) {
  std::string s;
  if (mask.E) s += 'E';
  if (mask.P) s += 'P';
  if (mask.q) s += 'q';
  if (mask.V) s += 'V';
  if (mask.W) s += 'W';
  if (mask.U) s += 'U';
  return s;
}

TrainMask train_mask_from_string(const std::string& s) {
  TrainMask mask{false, false, false, false, false, false};
  for (char c : s) {
    bool* flag = nullptr;
    switch (c) {
      case 'E': flag = &mask.E; break;
      case 'P': flag = &mask.P; break;
      case 'q': flag = &mask.q; break;
      case 'V': flag = &mask.V; break;
      case 'W': flag = &mask.W; break;
      case 'U': flag = &mask.U; break;
      default: throw std::invalid_argument(std::string("unknown tensor letter '") + c + "' in mask");
    }
    if (*flag) throw std::invalid_argument(std::string("repeated tensor letter '") + c + "' in mask");
    *flag = true;
  }
  return mask;
}

namespace {

std::size_t batch_count(const Dataset& ds, std::span<const std::uint32_t> idx) {
  std::size_t n = idx.empty() ? ds.size() : idx.size();
  if (n == 0) throw EmptyDataset("gradient over an empty batch");
  return n;
}

template <typename F>
void for_batch(const Dataset& ds, std::span<const std::uint32_t> idx, F&& f) {
  if (idx.empty()) {
    for (std::size_t i = 0; i < ds.size(); ++i) f(i);
  } else {
    for (std::uint32_t i : idx) f(i);
  }
}

// Pullback through out = norm(v): given d(out), add nothing, write d(v).
// Both variants have symmetric Jacobians; branches follow the forward
// definitions including the 1e-12 guard.
void norm_backward(NormVariant which, const double* v, std::size_t n, const double* dout,
                   double* dv) {
  const double guard = 1e-12;
  double r = norm2(v, n);
  if (which == NormVariant::standard || r >= 1.0) {
    if (r > guard) {
      double inv = 1.0 / r;
      double along = kernels::dot(v, dout, n) * inv;  // vhat . dout
      for (std::size_t i = 0; i < n; ++i) dv[i] = (dout[i] - v[i] * inv * along) * inv;
    } else {
      // Inside the guard the map is v/guard, plain scaling.
      for (std::size_t i = 0; i < n; ++i) dv[i] = dout[i] / guard;
    }
    return;
  }
  // Smoothed variant below unit norm: out = s(r)/max(r,guard) * v with
  // s = 3r^2 - 2r^3, s' = 6r(1-r).
  if (r == 0.0) {
    // s/r -> 0, the map is flat at the origin.
    for (std::size_t i = 0; i < n; ++i) dv[i] = 0.0;
    return;
  }
  double s = r * r * (3.0 - 2.0 * r);
  double sp = 6.0 * r * (1.0 - r);
  if (r > guard) {
    double inv = 1.0 / r;
    double along = kernels::dot(v, dout, n) * inv;
    double radial = sp - s * inv;
    for (std::size_t i = 0; i < n; ++i) {
      dv[i] = s * inv * dout[i] + radial * along * v[i] * inv;
    }
  } else {
    double along = kernels::dot(v, dout, n) / r;
    for (std::size_t i = 0; i < n; ++i) {
      dv[i] = (s / guard) * dout[i] + (sp / guard) * along * v[i];
    }
  }
}

}  // namespace

LemmaBlocks lemma_blocks(const ModelParams& params, const ForwardTrace& tr, int y) {
  const int L = params.L(), d = params.d(), h = params.h();
  const double isd = 1.0 / std::sqrt(static_cast<double>(d));

  LemmaBlocks b;
  b.delta_z = Mat(d, L);
  for (int t = 0; t < L; ++t) {
    for (int j = 0; j < d; ++j) b.delta_z(j, t) = (tr.z(t, j) - tr.zbar[j]) * isd;
  }
  b.a_z = tr.attn;

  b.sigma.resize(h);
  for (int i = 0; i < h; ++i) b.sigma[i] = gelu_prime(tr.act_pre[i]);

  double xin = norm2(tr.xi);
  if (xin <= 1e-9) {
    throw DegenerateXi("lemma_blocks: ||xi|| = " + std::to_string(xin) +
                       " is too small to normalize");
  }
  b.m_proj = Mat(d, d);
  double inv = 1.0 / xin;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      b.m_proj(i, j) = ((i == j ? 1.0 : 0.0) - tr.xi_bar[i] * tr.xi_bar[j]) * inv;
    }
  }

  // Q = U diag(sigma) W M, assembled as U * (diag(sigma) W M).
  Mat swm(h, d);
  for (int i = 0; i < h; ++i) {
    gemv(b.m_proj, params.W.row(i), swm.row(i));  // M is symmetric
    kernels::scal(b.sigma[i], swm.row(i), d);
  }
  b.q_mat = Mat(d, d);
  for (int r = 0; r < d; ++r) {
    for (int i = 0; i < h; ++i) kernels::axpy(params.U(r, i), swm.row(i), b.q_mat.row(r), d);
  }

  b.c_x.resize(d);
  Vec residual = tr.mu;
  residual[y] -= 1.0;
  gemv_t(params.E, residual.data(), b.c_x.data());
  return b;
}

namespace {

// Per-sample pieces shared by the public per-logit gradients and the batched
// loss gradient, so both walk through the identical arithmetic.
struct ClosedFormCtx {
  Mat vz;       // L x d, row t = V z_t
  Vec sigma;    // h
  Mat q_mat;    // d x d
  // scratch
  Vec g1, w, tmp_d, u2;

  void build(const ModelParams& params, const ForwardTrace& tr) {
    const int L = params.L(), d = params.d(), h = params.h();
    if (vz.rows != L || vz.cols != d) vz = Mat(L, d);
    for (int t = 0; t < L; ++t) gemv(params.V, tr.z.row(t), vz.row(t));

    sigma.resize(h);
    for (int i = 0; i < h; ++i) sigma[i] = gelu_prime(tr.act_pre[i]);

    double xin = norm2(tr.xi);
    if (xin <= 1e-9) {
      throw DegenerateXi("closed form: ||xi|| = " + std::to_string(xin) +
                         " is too small to normalize");
    }
    // M applied to each row of W without materializing M: M w = (w - xibar
    // (xibar.w)) / ||xi||.
    double inv = 1.0 / xin;
    Mat swm(h, d);
    for (int i = 0; i < h; ++i) {
      const double* wrow = params.W.row(i);
      double along = kernels::dot(tr.xi_bar.data(), wrow, d);
      double* out = swm.row(i);
      for (int j = 0; j < d; ++j) out[j] = (wrow[j] - tr.xi_bar[j] * along) * inv;
      kernels::scal(sigma[i], out, d);
    }
    if (q_mat.rows != d || q_mat.cols != d) q_mat = Mat(d, d);
    q_mat.fill(0.0);
    for (int r = 0; r < d; ++r) {
      for (int i = 0; i < h; ++i) kernels::axpy(params.U(r, i), swm.row(i), q_mat.row(r), d);
    }

    g1.resize(d);
    w.resize(L);
    tmp_d.resize(d);
    u2.resize(h);
  }

  // Adds coef * (gradient of zeta_j) into (dq, dV, dW, dU).
  void accumulate(const ModelParams& params, const ForwardTrace& tr, int j, double coef,
                  Vec& dq, Mat& dV, Mat& dW, Mat& dU) {
    const int L = params.L(), d = params.d(), h = params.h();
    const double isd = 1.0 / std::sqrt(static_cast<double>(d));
    const double* e = params.E.row(j);

    // g1 = (I + Q^T) E(j)
    gemv_t(q_mat, e, g1.data());
    for (int i = 0; i < d; ++i) g1[i] += e[i];

    // d_q zeta_j = delta_z a_z (Vz)^T g1; with delta_z = (z/sqrt(d))(I - attn 1^T)
    // this is isd * (z^T w - sum(w) zbar) for w_t = attn_t (Vz_t . g1).
    for (int t = 0; t < L; ++t) w[t] = tr.attn[t] * kernels::dot(vz.row(t), g1.data(), d);
    gemv_t(tr.z, w.data(), tmp_d.data());
    double wsum = kernels::sum(w.data(), L);
    for (int i = 0; i < d; ++i) dq[i] += coef * isd * (tmp_d[i] - wsum * tr.zbar[i]);

    // d_V zeta_j = g1 zbar^T
    ger(coef, g1.data(), tr.zbar.data(), dV);

    // d_W zeta_j = diag(sigma) U^T E(j) xibar^T
    gemv_t(params.U, e, u2.data());
    for (int i = 0; i < h; ++i) {
      kernels::axpy(coef * sigma[i] * u2[i], tr.xi_bar.data(), dW.row(i), d);
    }

    // d_U zeta_j = E(j) act^T
    ger(coef, e, tr.act.data(), dU);
  }
};

}  // namespace

LogitGrads closed_form_logit_grads(const ModelParams& params, const ForwardTrace& tr, int j) {
  LogitGrads g;
  g.dq = Vec(params.d(), 0.0);
  g.dV = Mat(params.d(), params.d());
  g.dW = Mat(params.h(), params.d());
  g.dU = Mat(params.d(), params.h());
  ClosedFormCtx ctx;
  ctx.build(params, tr);
  ctx.accumulate(params, tr, j, 1.0, g.dq, g.dV, g.dW, g.dU);
  return g;
}

GradientSet closed_form_loss_gradient(const ModelParams& params, const Dataset& ds,
                                      const HyperParams& hyper,
                                      std::span<const std::uint32_t> idx) {
  std::size_t n = batch_count(ds, idx);
  GradientSet g = zero_gradients(params);
  ForwardTrace tr;
  ClosedFormCtx ctx;
  for_batch(ds, idx, [&](std::size_t i) {
    forward_into(params, ds.xs[i], hyper, tr);
    try {
      ctx.build(params, tr);
    } catch (const DegenerateXi& e) {
      throw DegenerateXi(std::string(e.what()) + " (sample " + std::to_string(i) + ")");
    }
    for (int j = 0; j < params.p(); ++j) {
      double coef = tr.mu[j] - (j == ds.ys[i] ? 1.0 : 0.0);
      ctx.accumulate(params, tr, j, coef, g.dq, g.dV, g.dW, g.dU);
    }
  });
  double inv = 1.0 / static_cast<double>(n);
  kernels::scal(inv, g.dq.data(), g.dq.size());
  kernels::scal(inv, g.dV.data(), g.dV.size());
  kernels::scal(inv, g.dW.data(), g.dW.size());
  kernels::scal(inv, g.dU.data(), g.dU.size());
  return g;
}

GradientSet backprop_loss_gradient(const ModelParams& params, const Dataset& ds,
                                   const HyperParams& hyper, const TrainMask& mask,
                                   std::span<const std::uint32_t> idx) {
  std::size_t n = batch_count(ds, idx);
  const int L = params.L(), d = params.d(), h = params.h();
  const double isd = 1.0 / std::sqrt(static_cast<double>(d));

  GradientSet g = zero_gradients(params);
  ForwardTrace tr;
  Vec dzeta(params.p()), dpsi(d), dc(h), da(h), dxibar(d), dxi(d), dzbar(d);
  Vec dsattn(L), dl(L), tmp_d(d), dzrow(d), ebuf(d), de(d);

  for_batch(ds, idx, [&](std::size_t i) {
    const TokenSequence& x = ds.xs[i];
    const int y = ds.ys[i];
    forward_into(params, x, hyper, tr);

    // Logits: loss = lse(zeta) - zeta_y, so d(zeta) = mu - onehot(y).
    dzeta = tr.mu;
    dzeta[y] -= 1.0;

    // zeta = E psi (tied unembedding): both E and psi take gradient.
    gemv_t(params.E, dzeta.data(), dpsi.data());
    if (mask.E) ger(1.0, dzeta.data(), tr.psi.data(), g.dE);

    // psi = xi + U act
    if (mask.U) ger(1.0, dpsi.data(), tr.act.data(), g.dU);
    gemv_t(params.U, dpsi.data(), dc.data());

    // act = gelu(act_pre)
    for (int i2 = 0; i2 < h; ++i2) da[i2] = dc[i2] * gelu_prime(tr.act_pre[i2]);

    // act_pre = W xibar
    if (mask.W) ger(1.0, da.data(), tr.xi_bar.data(), g.dW);
    gemv_t(params.W, da.data(), dxibar.data());

    // xibar = norm(xi), plus the residual path into psi.
    norm_backward(hyper.norm, tr.xi.data(), d, dxibar.data(), dxi.data());
    for (int i2 = 0; i2 < d; ++i2) dxi[i2] += dpsi[i2];

    // xi = V zbar
    if (mask.V) ger(1.0, dxi.data(), tr.zbar.data(), g.dV);
    gemv_t(params.V, dxi.data(), dzbar.data());

    // zbar = sum_t attn_t z_t: gradient splits into the weights and the rows.
    gemv(tr.z, dzbar.data(), dsattn.data());

    // attn = softmax(attn_logits)
    double along = kernels::dot(dsattn.data(), tr.attn.data(), L);
    for (int t = 0; t < L; ++t) dl[t] = tr.attn[t] * (dsattn[t] - along);

    // attn_logits_t = z_t . q / sqrt(d)
    if (mask.q) {
      gemv_t(tr.z, dl.data(), tmp_d.data());
      kernels::axpy(isd, tmp_d.data(), g.dq.data(), d);
    }

    if (mask.E || mask.P) {
      for (int t = 0; t < L; ++t) {
        // Both consumers of z_t: the pooled sum and the attention logit.
        double lt = dl[t] * isd;
        for (int i2 = 0; i2 < d; ++i2) dzrow[i2] = tr.attn[t] * dzbar[i2] + lt * params.q[i2];
        const double* erow = params.E.row(x[t]);
        const double* prow = params.P.row(t);
        for (int i2 = 0; i2 < d; ++i2) ebuf[i2] = erow[i2] + prow[i2];
        norm_backward(hyper.norm, ebuf.data(), d, dzrow.data(), de.data());
        if (mask.E) kernels::axpy(1.0, de.data(), g.dE.row(x[t]), d);
        if (mask.P) kernels::axpy(1.0, de.data(), g.dP.row(t), d);
      }
    }
  });

  double inv = 1.0 / static_cast<double>(n);
  kernels::scal(inv, g.dE.data(), g.dE.size());
  kernels::scal(inv, g.dP.data(), g.dP.size());
  kernels::scal(inv, g.dq.data(), g.dq.size());
  kernels::scal(inv, g.dV.data(), g.dV.size());
  kernels::scal(inv, g.dW.data(), g.dW.size());
  kernels::scal(inv, g.dU.data(), g.dU.size());
  return g;
}

namespace {

// Batch loss with per-position embeddings frozen and cached: valid while only
// q, V, W, U move. Matches forward_into step for step on the cached rows.
struct FrozenEmbedEval {
  std::vector<Mat> z;  // one L x d block per batch sample
  std::vector<int> ys;
  Vec logits, attn, zbar, xi, xi_bar, act_pre, act, psi, zeta;

  void build(const ModelParams& params, const Dataset& ds, const HyperParams& hyper,
             std::span<const std::uint32_t> idx) {
    ForwardTrace tr;
    z.clear();
    ys.clear();
    for_batch(ds, idx, [&](std::size_t i) {
      forward_into(params, ds.xs[i], hyper, tr);
      z.push_back(tr.z);
      ys.push_back(ds.ys[i]);
    });
    const int L = params.L(), d = params.d(), h = params.h(), p = params.p();
    logits.resize(L);
    attn.resize(L);
    zbar.resize(d);
    xi.resize(d);
    xi_bar.resize(d);
    act_pre.resize(h);
    act.resize(h);
    psi.resize(d);
    zeta.resize(p);
  }

  double mean_loss(const ModelParams& params, const HyperParams& hyper) {
    const int L = params.L(), d = params.d(), h = params.h();
    const double isd = 1.0 / std::sqrt(static_cast<double>(d));
    double total = 0.0;
    for (std::size_t s = 0; s < z.size(); ++s) {
      const Mat& zs = z[s];
      for (int t = 0; t < L; ++t) logits[t] = kernels::dot(zs.row(t), params.q.data(), d) * isd;
      attn = logits;
      softmax_inplace(attn);
      gemv_t(zs, attn.data(), zbar.data());
      gemv(params.V, zbar.data(), xi.data());
      apply_norm_variant(hyper.norm, xi.data(), d, xi_bar.data());
      gemv(params.W, xi_bar.data(), act_pre.data());
      for (int i = 0; i < h; ++i) act[i] = gelu(act_pre[i]);
      gemv(params.U, act.data(), psi.data());
      for (int i = 0; i < d; ++i) psi[i] += xi[i];
      gemv(params.E, psi.data(), zeta.data());

      double m = -HUGE_VAL;
      for (double zv : zeta) m = std::max(m, zv);
      double acc = 0.0;
      for (double zv : zeta) acc += std::exp(zv - m);
      total += m + std::log(acc) - zeta[ys[s]];
    }
    return total / static_cast<double>(z.size());
  }
};

double full_mean_loss(const ModelParams& params, const Dataset& ds, const HyperParams& hyper,
                      std::span<const std::uint32_t> idx, ForwardTrace& tr) {
  double total = 0.0;
  std::size_t n = 0;
  for_batch(ds, idx, [&](std::size_t i) {
    forward_into(params, ds.xs[i], hyper, tr);
    total += trace_loss(tr, ds.ys[i]);
    ++n;
  });
  return total / static_cast<double>(n);
}

}  // namespace

GradientSet finite_difference_gradient(const ModelParams& params, const Dataset& ds,
                                       const HyperParams& hyper, double step,
                                       const TrainMask& mask,
                                       std::span<const std::uint32_t> idx) {
  batch_count(ds, idx);
  GradientSet g = zero_gradients(params);
  ModelParams theta = params;

  const bool embeddings_frozen = !mask.E && !mask.P;
  FrozenEmbedEval fast;
  if (embeddings_frozen) fast.build(theta, ds, hyper, idx);
  ForwardTrace tr;

  auto probe = [&](double* coord) {
    double saved = *coord;
    double lp, lm;
    if (embeddings_frozen) {
      *coord = saved + step;
      lp = fast.mean_loss(theta, hyper);
      *coord = saved - step;
      lm = fast.mean_loss(theta, hyper);
    } else {
      *coord = saved + step;
      lp = full_mean_loss(theta, ds, hyper, idx, tr);
      *coord = saved - step;
      lm = full_mean_loss(theta, ds, hyper, idx, tr);
    }
    *coord = saved;
    return (lp - lm) / (2.0 * step);
  };

  auto probe_mat = [&](Mat& src, Mat& dst) {
    for (std::size_t c = 0; c < src.size(); ++c) dst.a[c] = probe(&src.a[c]);
  };

  if (mask.E) probe_mat(theta.E, g.dE);
  if (mask.P) probe_mat(theta.P, g.dP);
  if (mask.q) {
    for (std::size_t c = 0; c < theta.q.size(); ++c) g.dq[c] = probe(&theta.q[c]);
  }
  if (mask.V) probe_mat(theta.V, g.dV);
  if (mask.W) probe_mat(theta.W, g.dW);
  if (mask.U) probe_mat(theta.U, g.dU);
  return g;
}

namespace {

double rel_err(const double* a, const double* b, std::size_t n) {
  double diff = 0.0, ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diff = std::max(diff, std::fabs(a[i] - b[i]));
    ma = std::max(ma, std::fabs(a[i]));
    mb = std::max(mb, std::fabs(b[i]));
  }
  return diff / std::max({ma, mb, 1e-8});
}

}  // namespace

double tensor_rel_err(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw LengthMismatch("tensor_rel_err: size mismatch");
  return rel_err(a.data(), b.data(), a.size());
}

double tensor_rel_err(const Mat& a, const Mat& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw LengthMismatch("tensor_rel_err: shape mismatch");
  return rel_err(a.data(), b.data(), a.size());
}

CheckReport gradient_check(const ModelParams& params, const Dataset& ds, const HyperParams& hyper,
                           const CheckTolerances& tol, const TrainMask& mask) {
  CheckReport report;
  report.tol = tol;

  GradientSet cf = closed_form_loss_gradient(params, ds, hyper);
  GradientSet bp = backprop_loss_gradient(params, ds, hyper, mask);
  GradientSet fd = finite_difference_gradient(params, ds, hyper, tol.fd_step, mask);

  const double nan = std::nan("");
  bool ok = true;
  auto push = [&](const std::string& name, double cf_bp, double cf_fd, double bp_fd) {
    report.entries.push_back({name, cf_bp, cf_fd, bp_fd});
    if (!std::isnan(cf_bp)) ok = ok && cf_bp <= tol.engine_pair;
    if (!std::isnan(cf_fd)) ok = ok && cf_fd <= tol.fd;
    if (!std::isnan(bp_fd)) ok = ok && bp_fd <= tol.fd;
  };

  if (mask.E) push("E", nan, nan, tensor_rel_err(bp.dE, fd.dE));
  if (mask.P) push("P", nan, nan, tensor_rel_err(bp.dP, fd.dP));
  if (mask.q) {
    push("q", tensor_rel_err(cf.dq, bp.dq), tensor_rel_err(cf.dq, fd.dq),
         tensor_rel_err(bp.dq, fd.dq));
  }
  if (mask.V) {
    push("V", tensor_rel_err(cf.dV, bp.dV), tensor_rel_err(cf.dV, fd.dV),
         tensor_rel_err(bp.dV, fd.dV));
  }
  if (mask.W) {
    push("W", tensor_rel_err(cf.dW, bp.dW), tensor_rel_err(cf.dW, fd.dW),
         tensor_rel_err(bp.dW, fd.dW));
  }
  if (mask.U) {
    push("U", tensor_rel_err(cf.dU, bp.dU), tensor_rel_err(cf.dU, fd.dU),
         tensor_rel_err(bp.dU, fd.dU));
  }
  report.pass = ok;
  return report;
}

std::string to_json(const CheckReport& report) {
  nlohmann::json j;
  j["pass"] = report.pass;
  j["tolerances"] = {{"engine_pair", report.tol.engine_pair},
                     {"fd", report.tol.fd},
                     {"fd_step", report.tol.fd_step}};
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& e : report.entries) {
    nlohmann::json entry = nlohmann::json::object();
    if (!std::isnan(e.cf_vs_bp)) entry["closed_form_vs_backprop"] = e.cf_vs_bp;
    if (!std::isnan(e.cf_vs_fd)) entry["closed_form_vs_fd"] = e.cf_vs_fd;
    if (!std::isnan(e.bp_vs_fd)) entry["backprop_vs_fd"] = e.bp_vs_fd;
    tensors[e.tensor] = entry;
  }
  j["tensors"] = tensors;
  return j.dump(2);
}

}  // namespace smadd
