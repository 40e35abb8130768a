#include "smadd/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <utility>

namespace smadd {

namespace {

std::string fmt(double v, const char* spec = "%.2f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void hsl_to_rgb(double h, double s, double l, double& r, double& g, double& b) {
  auto channel = [&](double n) {
    double k = std::fmod(n + h / 30.0, 12.0);
    double a = s * std::min(l, 1.0 - l);
    return l - a * std::max(-1.0, std::min({k - 3.0, 9.0 - k, 1.0}));
  };
  r = channel(0.0);
  g = channel(8.0);
  b = channel(4.0);
}

std::string rgb_hex(double r, double g, double b) {
  auto byte = [](double v) {
    int x = static_cast<int>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
    return x;
  };
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", byte(r), byte(g), byte(b));
  return buf;
}

std::string hue_color(double hue, double sat, double light) {
  double r, g, b;
  hsl_to_rgb(hue, sat, light, r, g, b);
  return rgb_hex(r, g, b);
}

// Stable color per prefix class, hues spread over the wheel.
std::string class_color(int id, int n_classes) {
  return hue_color(360.0 * id / std::max(n_classes, 1), 0.65, 0.45);
}

// Color per position index, shared by every panel that plots per-(x,t) points.
std::string position_color(int t, int L) {
  return hue_color(360.0 * t / std::max(L, 1), 0.70, 0.45);
}

// Per-layer palette for the metrics figure, keyed E, P, q, V, W, U.
const char* const kLayerColors[6] = {"#e41a1c", "#ff7f00", "#4daf4a",
                                     "#377eb8", "#984ea3", "#a65628"};
const char* const kLayerNames[6] = {"E", "P", "q", "V", "W", "U"};

struct Box {
  double x0 = std::numeric_limits<double>::infinity();
  double x1 = -std::numeric_limits<double>::infinity();
  double y0 = std::numeric_limits<double>::infinity();
  double y1 = -std::numeric_limits<double>::infinity();

  void add(double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }

  // Guarantees a usable, non-degenerate box even when no finite point landed.
  void settle(double pad_frac) {
    if (!(x0 <= x1)) { x0 = -1.0; x1 = 1.0; }
    if (!(y0 <= y1)) { y0 = -1.0; y1 = 1.0; }
    double dx = x1 - x0, dy = y1 - y0;
    if (dx <= 0.0) dx = std::max(std::abs(x0), 1.0);
    if (dy <= 0.0) dy = std::max(std::abs(y0), 1.0);
    x0 -= pad_frac * dx;
    x1 += pad_frac * dx;
    y0 -= pad_frac * dy;
    y1 += pad_frac * dy;
  }
};

// Maps data coordinates into a square panel, y flipped to point up.
struct PanelMap {
  double px = 0.0, py = 0.0, side = 0.0;
  Box box;

  double X(double x) const { return px + (x - box.x0) / (box.x1 - box.x0) * side; }
  double Y(double y) const { return py + side - (y - box.y0) / (box.y1 - box.y0) * side; }
};

void panel_frame(std::string& out, double px, double py, double side, const char* title) {
  out += "<rect class=\"frame\" x=\"" + fmt(px) + "\" y=\"" + fmt(py) + "\" width=\"" +
         fmt(side) + "\" height=\"" + fmt(side) +
         "\" fill=\"none\" stroke=\"#555555\" stroke-width=\"1\"/>\n";
  out += "<text class=\"title\" x=\"" + fmt(px + 4.0) + "\" y=\"" + fmt(py - 5.0) +
         "\" font-family=\"monospace\" font-size=\"11\" fill=\"#222222\">" + title + "</text>\n";
}

void put_circle(std::string& out, double x, double y, double r, const std::string& color) {
  if (!std::isfinite(x) || !std::isfinite(y)) return;
  out += "<circle class=\"mk\" cx=\"" + fmt(x) + "\" cy=\"" + fmt(y) + "\" r=\"" + fmt(r) +
         "\" fill=\"" + color + "\"/>\n";
}

void put_square(std::string& out, double x, double y, double r, const std::string& color) {
  if (!std::isfinite(x) || !std::isfinite(y)) return;
  out += "<rect class=\"mk\" x=\"" + fmt(x - r) + "\" y=\"" + fmt(y - r) + "\" width=\"" +
         fmt(2.0 * r) + "\" height=\"" + fmt(2.0 * r) + "\" fill=\"" + color + "\"/>\n";
}

void put_triangle(std::string& out, double x, double y, double r, const std::string& color) {
  if (!std::isfinite(x) || !std::isfinite(y)) return;
  out += "<polygon class=\"mk\" points=\"" + fmt(x) + "," + fmt(y - r) + " " + fmt(x - r) + "," +
         fmt(y + r) + " " + fmt(x + r) + "," + fmt(y + r) + "\" fill=\"" + color + "\"/>\n";
}

// Shape index: 0 circle, 1 square, 2 triangle (cycled for larger p).
void put_marker(std::string& out, int shape, double x, double y, double r,
                const std::string& color) {
  switch (shape % 3) {
    case 0: put_circle(out, x, y, r, color); break;
    case 1: put_square(out, x, y, r, color); break;
    default: put_triangle(out, x, y, r, color); break;
  }
}

// The learned map from a free point in sequence-embedding space to class
// probabilities; this is what the level-lines panel sweeps over its grid.
Vec mu_from_xi(const ModelParams& m, const HyperParams& hyper, const Vec& xi) {
  int d = m.d(), h = m.h();
  Vec xi_bar(d, 0.0);
  apply_norm_variant(hyper.norm, xi.data(), static_cast<std::size_t>(d), xi_bar.data());
  Vec act(h, 0.0);
  gemv(m.W, xi_bar.data(), act.data());
  gelu_inplace(act);
  Vec psi(d, 0.0);
  gemv(m.U, act.data(), psi.data());
  for (int i = 0; i < d; ++i) psi[i] += xi[i];
  Vec zeta(m.p(), 0.0);
  gemv(m.E, psi.data(), zeta.data());
  softmax_inplace(zeta);
  return zeta;
}

// Normalized per-position embedding rows for every (token, position) pair.
std::vector<Vec> all_z_rows(const ModelParams& m, const HyperParams& hyper) {
  int p = m.p(), L = m.L(), d = m.d();
  std::vector<Vec> rows;
  rows.reserve(static_cast<std::size_t>(p) * L);
  Vec sum(d), z(d);
  for (int x = 0; x < p; ++x) {
    for (int t = 0; t < L; ++t) {
      for (int i = 0; i < d; ++i) sum[i] = m.E(x, i) + m.P(t, i);
      apply_norm_variant(hyper.norm, sum.data(), static_cast<std::size_t>(d), z.data());
      rows.push_back(z);
    }
  }
  return rows;
}

// ---------------- individual panels ----------------

void panel_positions(std::string& out, const PanelMap& mp, const ModelParams& m, int k) {
  out += "<g id=\"position-embeddings\">\n";
  panel_frame(out, mp.px, mp.py, mp.side, "position embeddings P(t)");
  for (int t = 0; t < m.L(); ++t) {
    std::string color = position_color(t, m.L());
    double x = mp.X(m.P(t, 0)), y = mp.Y(m.P(t, 1));
    if (t < k) put_circle(out, x, y, 3.5, color);
    else put_square(out, x, y, 3.5, color);
  }
  out += "</g>\n";
}

void panel_normalized(std::string& out, const PanelMap& mp, const ModelParams& m,
                      const std::vector<Vec>& z_rows, int k) {
  out += "<g id=\"normalized-embeddings\">\n";
  panel_frame(out, mp.px, mp.py, mp.side, "normalized embeddings Z(x,t), query");
  int L = m.L();
  for (std::size_t i = 0; i < z_rows.size(); ++i) {
    int t = static_cast<int>(i) % L;
    std::string color = position_color(t, L);
    double x = mp.X(z_rows[i][0]), y = mp.Y(z_rows[i][1]);
    if (t < k) put_circle(out, x, y, 3.0, color);
    else put_square(out, x, y, 3.0, color);
  }
  // the query, drawn as an arrow out of the origin
  double tx = mp.X(0.0), ty = mp.Y(0.0);
  double hx = mp.X(m.q[0]), hy = mp.Y(m.q[1]);
  if (std::isfinite(hx) && std::isfinite(hy)) {
    out += "<line class=\"qarrow\" x1=\"" + fmt(tx) + "\" y1=\"" + fmt(ty) + "\" x2=\"" + fmt(hx) +
           "\" y2=\"" + fmt(hy) + "\" stroke=\"#d62728\" stroke-width=\"1.8\"/>\n";
    double ang = std::atan2(hy - ty, hx - tx);
    for (double side : {2.6, -2.6}) {
      double bx = hx + 7.0 * std::cos(ang + side);
      double by = hy + 7.0 * std::sin(ang + side);
      out += "<line class=\"qarrow\" x1=\"" + fmt(hx) + "\" y1=\"" + fmt(hy) + "\" x2=\"" +
             fmt(bx) + "\" y2=\"" + fmt(by) + "\" stroke=\"#d62728\" stroke-width=\"1.8\"/>\n";
    }
  }
  out += "</g>\n";
}

void panel_attention(std::string& out, double px, double py, double side,
                     const std::vector<ProbeTrace>& probe, int L) {
  out += "<g id=\"attention-map\">\n";
  panel_frame(out, px, py, side, "attention map, one row per probe");
  if (!probe.empty() && L > 0) {
    double cw = side / L;
    double rh = side / static_cast<double>(probe.size());
    for (std::size_t i = 0; i < probe.size(); ++i) {
      for (int t = 0; t < L; ++t) {
        double v = std::clamp(probe[i].attn[t], 0.0, 1.0);
        int gray = static_cast<int>(std::lround(255.0 * (1.0 - v)));
        char color[8];
        std::snprintf(color, sizeof color, "#%02x%02x%02x", gray, gray, gray);
        out += "<rect class=\"acell\" data-v=\"" + fmt(v, "%.6f") + "\" x=\"" +
               fmt(px + t * cw) + "\" y=\"" + fmt(py + i * rh) + "\" width=\"" + fmt(cw + 0.5) +
               "\" height=\"" + fmt(rh + 0.5) + "\" fill=\"" + color + "\"/>\n";
      }
    }
  }
  out += "</g>\n";
}

void panel_value(std::string& out, const PanelMap& mp, const ModelParams& m,
                 const std::vector<Vec>& vz_rows, int k) {
  out += "<g id=\"value-transform\">\n";
  panel_frame(out, mp.px, mp.py, mp.side, "value transform VZ(x,t)");
  int L = m.L();
  for (std::size_t i = 0; i < vz_rows.size(); ++i) {
    int t = static_cast<int>(i) % L;
    std::string color = position_color(t, L);
    double x = mp.X(vz_rows[i][0]), y = mp.Y(vz_rows[i][1]);
    if (t < k) put_circle(out, x, y, 3.0, color);
    else put_square(out, x, y, 3.0, color);
  }
  out += "</g>\n";
}

// Per-probe prefix-class ids and targets, recovered from the canonical
// prefix-major probe enumeration. Falls back to index-keyed coloring when
// the probe count does not line up with a whole number of suffixes.
struct ProbeKey {
  std::vector<int> class_id;
  std::vector<int> y;
  int n_classes = 1;
};

ProbeKey probe_keys(std::size_t n_probe, const TaskSpec& spec) {
  ProbeKey key;
  std::vector<TokenSequence> prefixes = enumerate_prefixes(spec);
  key.n_classes = static_cast<int>(ideal_cluster_count(spec));
  if (n_probe == 0 || prefixes.empty() || n_probe % prefixes.size() != 0) {
    key.n_classes = std::max<int>(static_cast<int>(n_probe), 1);
    for (std::size_t i = 0; i < n_probe; ++i) {
      key.class_id.push_back(static_cast<int>(i));
      key.y.push_back(0);
    }
    return key;
  }
  std::size_t suffixes = n_probe / prefixes.size();
  for (std::size_t i = 0; i < n_probe; ++i) {
    const TokenSequence& pref = prefixes[i / suffixes];
    key.class_id.push_back(prefix_class_id(prefix_class(pref, spec), spec));
    key.y.push_back(target(pref, spec));
  }
  return key;
}

void panel_sequence(std::string& out, const PanelMap& mp, const std::vector<ProbeTrace>& probe,
                    const ProbeKey& key) {
  out += "<g id=\"sequence-embeddings\">\n";
  panel_frame(out, mp.px, mp.py, mp.side, "sequence embeddings xi by prefix class");
  for (std::size_t i = 0; i < probe.size(); ++i) {
    std::string color = class_color(key.class_id[i], key.n_classes);
    put_marker(out, key.y[i], mp.X(probe[i].xi[0]), mp.Y(probe[i].xi[1]), 3.0, color);
  }
  out += "</g>\n";
}

void panel_level_lines(std::string& out, const PanelMap& mp, const ModelParams& m,
                       const HyperParams& hyper, const std::vector<ProbeTrace>& probe,
                       const ProbeKey& key, int grid) {
  out += "<g id=\"level-lines\">\n";
  panel_frame(out, mp.px, mp.py, mp.side, "probability level lines over xi");
  double cw = mp.side / grid;
  Vec point(2, 0.0);
  int p = m.p();
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      point[0] = mp.box.x0 + (gx + 0.5) / grid * (mp.box.x1 - mp.box.x0);
      point[1] = mp.box.y0 + (gy + 0.5) / grid * (mp.box.y1 - mp.box.y0);
      Vec mu = mu_from_xi(m, hyper, point);
      double r = 0.0, g = 0.0, b = 0.0;
      for (int c = 0; c < p; ++c) {
        double cr, cg, cb;
        hsl_to_rgb(360.0 * c / p, 0.85, 0.55, cr, cg, cb);
        r += mu[c] * cr;
        g += mu[c] * cg;
        b += mu[c] * cb;
      }
      out += "<rect class=\"cell\" x=\"" + fmt(mp.px + gx * cw) + "\" y=\"" +
             fmt(mp.py + mp.side - (gy + 1) * cw) + "\" width=\"" + fmt(cw + 0.5) +
             "\" height=\"" + fmt(cw + 0.5) + "\" fill=\"" + rgb_hex(r, g, b) + "\"/>\n";
    }
  }
  for (std::size_t i = 0; i < probe.size(); ++i) {
    put_marker(out, key.y[i], mp.X(probe[i].xi[0]), mp.Y(probe[i].xi[1]), 2.5,
               class_color(key.class_id[i], key.n_classes));
  }
  out += "</g>\n";
}

void panel_mlp(std::string& out, const PanelMap& mp, const ModelParams& m) {
  out += "<g id=\"mlp-receptors\">\n";
  panel_frame(out, mp.px, mp.py, mp.side, "MLP receptors (o) and assemblers (^)");
  int h = m.h();
  for (int i = 0; i < h; ++i) {
    std::string color = hue_color(360.0 * i / h, 0.7, 0.45);
    put_circle(out, mp.X(m.W(i, 0)), mp.Y(m.W(i, 1)), 3.0, color);
    put_triangle(out, mp.X(m.U(0, i)), mp.Y(m.U(1, i)), 3.5, color);
  }
  out += "</g>\n";
}

void panel_metrics_text(std::string& out, double px, double py, double side,
                        const MetricsRow& r) {
  out += "<g id=\"metrics\">\n";
  panel_frame(out, px, py, side, "metrics");
  const std::pair<std::string, std::string> lines[] = {
      {"epoch", std::to_string(r.epoch)},
      {"train loss", fmt(r.train_loss, "%.6g")},
      {"test loss", fmt(r.test_loss, "%.6g")},
      {"train acc", fmt(r.train_acc, "%.6g")},
      {"test acc", fmt(r.test_acc, "%.6g")},
      {"error term", fmt(r.error_term, "%.6g")},
      {"grad bound", fmt(r.bound, "%.6g")},
  };
  double y = py + 26.0;
  for (const auto& [label, value] : lines) {
    out += "<text class=\"metric\" x=\"" + fmt(px + 12.0) + "\" y=\"" + fmt(y) +
           "\" font-family=\"monospace\" font-size=\"13\" fill=\"#222222\">" + label + ": " +
           value + "</text>\n";
    y += 22.0;
  }
  out += "</g>\n";
}

// ---------------- metrics figure ----------------

struct SeriesSpec {
  std::string id;
  std::string color;
  std::vector<double> values;  // already transformed for the plot's scale
};

void line_plot(std::string& out, const char* plot_id, const char* title, double px, double py,
               double pw, double ph, const std::vector<int>& epochs,
               const std::vector<SeriesSpec>& series) {
  out += "<g id=\"" + std::string(plot_id) + "\">\n";
  out += "<rect class=\"frame\" x=\"" + fmt(px) + "\" y=\"" + fmt(py) + "\" width=\"" + fmt(pw) +
         "\" height=\"" + fmt(ph) + "\" fill=\"none\" stroke=\"#555555\" stroke-width=\"1\"/>\n";
  out += "<text class=\"title\" x=\"" + fmt(px + 2.0) + "\" y=\"" + fmt(py - 6.0) +
         "\" font-family=\"monospace\" font-size=\"12\" fill=\"#222222\">" + title + "</text>\n";

  double vmin = std::numeric_limits<double>::infinity();
  double vmax = -std::numeric_limits<double>::infinity();
  for (const SeriesSpec& s : series) {
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
  }
  if (!(vmin <= vmax)) { vmin = 0.0; vmax = 1.0; }
  if (vmax - vmin <= 0.0) {
    double pad = std::max(std::abs(vmax), 1.0) * 0.5;
    vmin -= pad;
    vmax += pad;
  } else {
    double pad = 0.05 * (vmax - vmin);
    vmin -= pad;
    vmax += pad;
  }

  int e0 = epochs.front(), e1 = epochs.back();
  double span = std::max(e1 - e0, 1);
  auto X = [&](int e) { return px + (e - e0) / span * pw; };
  auto Y = [&](double v) { return py + ph - (v - vmin) / (vmax - vmin) * ph; };

  // axis labels: epoch range and value range
  out += "<text class=\"axis\" x=\"" + fmt(px) + "\" y=\"" + fmt(py + ph + 14.0) +
         "\" font-family=\"monospace\" font-size=\"10\" fill=\"#444444\">" + std::to_string(e0) +
         "</text>\n";
  out += "<text class=\"axis\" x=\"" + fmt(px + pw - 30.0) + "\" y=\"" + fmt(py + ph + 14.0) +
         "\" font-family=\"monospace\" font-size=\"10\" fill=\"#444444\">" + std::to_string(e1) +
         "</text>\n";
  out += "<text class=\"axis\" x=\"" + fmt(px - 58.0) + "\" y=\"" + fmt(py + ph) +
         "\" font-family=\"monospace\" font-size=\"10\" fill=\"#444444\">" + fmt(vmin, "%.3g") +
         "</text>\n";
  out += "<text class=\"axis\" x=\"" + fmt(px - 58.0) + "\" y=\"" + fmt(py + 10.0) +
         "\" font-family=\"monospace\" font-size=\"10\" fill=\"#444444\">" + fmt(vmax, "%.3g") +
         "</text>\n";

  double lx = px + 4.0;
  for (const SeriesSpec& s : series) {
    out += "<polyline id=\"" + s.id + "\" class=\"series\" fill=\"none\" stroke=\"" +
           s.color + "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (i) out += ' ';
      out += fmt(X(epochs[i])) + "," + fmt(Y(s.values[i]));
    }
    out += "\"/>\n";
    out += "<text class=\"legend\" x=\"" + fmt(lx) + "\" y=\"" + fmt(py + 12.0) +
           "\" font-family=\"monospace\" font-size=\"10\" fill=\"" + s.color + "\">" + s.id +
           "</text>\n";
    lx += 11.0 * (s.id.size() + 1) * 0.62;
  }
  out += "</g>\n";
}

double log_floor(double v) { return std::log10(std::max(v, 1e-16)); }

}  // namespace

std::string render_frame(const Snapshot& snap, const HyperParams& hyper,
                         const RenderLayout& layout) {
  const ModelParams& m = snap.params;
  const TaskSpec& spec = hyper.task;
  if (m.p() != spec.p || m.L() != spec.L) {
    throw std::invalid_argument("snapshot parameter shapes disagree with the task spec");
  }
  bool planar = m.d() == 2;
  int cols = planar ? 4 : 2;
  int rows = planar ? 2 : 1;
  int title_room = 18;
  int W = 2 * layout.margin + cols * layout.panel + (cols - 1) * layout.gap;
  int H = 2 * layout.margin + rows * (layout.panel + title_room) + (rows - 1) * layout.gap;

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(W) +
         "\" height=\"" + std::to_string(H) + "\" viewBox=\"0 0 " + std::to_string(W) + " " +
         std::to_string(H) + "\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(W) + "\" height=\"" +
         std::to_string(H) + "\" fill=\"#ffffff\"/>\n";

  auto origin = [&](int c, int r) {
    double px = layout.margin + c * (layout.panel + layout.gap);
    double py = layout.margin + title_room + r * (layout.panel + title_room + layout.gap);
    return std::pair<double, double>{px, py};
  };
  double side = layout.panel;

  if (!planar) {
    auto [ax, ay] = origin(0, 0);
    panel_attention(out, ax, ay, side, snap.probe, m.L());
    auto [mx, my] = origin(1, 0);
    panel_metrics_text(out, mx, my, side, snap.metrics);
    out += "</svg>\n";
    return out;
  }

  std::vector<Vec> z_rows = all_z_rows(m, hyper);
  std::vector<Vec> vz_rows;
  vz_rows.reserve(z_rows.size());
  for (const Vec& z : z_rows) {
    Vec vz(2, 0.0);
    gemv(m.V, z.data(), vz.data());
    vz_rows.push_back(vz);
  }
  ProbeKey key = probe_keys(snap.probe.size(), spec);

  // panel 1: raw position embeddings
  {
    auto [px, py] = origin(0, 0);
    PanelMap mp{px, py, side, {}};
    for (int t = 0; t < m.L(); ++t) mp.box.add(m.P(t, 0), m.P(t, 1));
    mp.box.settle(0.12);
    panel_positions(out, mp, m, spec.k);
  }
  // panel 2: normalized embeddings with the query arrow
  {
    auto [px, py] = origin(1, 0);
    PanelMap mp{px, py, side, {}};
    for (const Vec& z : z_rows) mp.box.add(z[0], z[1]);
    mp.box.add(m.q[0], m.q[1]);
    mp.box.add(0.0, 0.0);
    mp.box.settle(0.12);
    panel_normalized(out, mp, m, z_rows, spec.k);
  }
  // panel 3: attention map
  {
    auto [px, py] = origin(2, 0);
    panel_attention(out, px, py, side, snap.probe, m.L());
  }
  // panel 4: value transform
  {
    auto [px, py] = origin(3, 0);
    PanelMap mp{px, py, side, {}};
    for (const Vec& vz : vz_rows) mp.box.add(vz[0], vz[1]);
    mp.box.settle(0.12);
    panel_value(out, mp, m, vz_rows, spec.k);
  }
  // panel 5: sequence embeddings
  {
    auto [px, py] = origin(0, 1);
    PanelMap mp{px, py, side, {}};
    for (const ProbeTrace& t : snap.probe) mp.box.add(t.xi[0], t.xi[1]);
    mp.box.settle(0.12);
    panel_sequence(out, mp, snap.probe, key);
  }
  // panel 6: level lines over the padded probe bounding box
  {
    auto [px, py] = origin(1, 1);
    PanelMap mp{px, py, side, {}};
    for (const ProbeTrace& t : snap.probe) mp.box.add(t.xi[0], t.xi[1]);
    mp.box.settle(layout.pad_frac);
    panel_level_lines(out, mp, m, hyper, snap.probe, key, layout.grid);
  }
  // panel 7: MLP weights
  {
    auto [px, py] = origin(2, 1);
    PanelMap mp{px, py, side, {}};
    for (int i = 0; i < m.h(); ++i) {
      mp.box.add(m.W(i, 0), m.W(i, 1));
      mp.box.add(m.U(0, i), m.U(1, i));
    }
    mp.box.settle(0.12);
    panel_mlp(out, mp, m);
  }
  // panel 8: current metrics
  {
    auto [px, py] = origin(3, 1);
    panel_metrics_text(out, px, py, side, snap.metrics);
  }

  out += "</svg>\n";
  return out;
}

std::string render_metrics(const RunLog& log) {
  if (log.snapshots.size() < 2) {
    throw TooFewRows("metrics figure needs at least 2 snapshots, got " +
                     std::to_string(log.snapshots.size()));
  }
  std::vector<int> epochs;
  std::vector<MetricsRow> rows;
  for (const Snapshot& s : log.snapshots) {
    epochs.push_back(s.epoch);
    rows.push_back(s.metrics);
  }

  const double left = 70.0, right = 18.0, top = 30.0, vgap = 34.0;
  const double pw = 560.0, ph = 130.0;
  const int W = static_cast<int>(left + pw + right);
  const int H = static_cast<int>(top + 4 * ph + 3 * vgap + 30.0);

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(W) +
         "\" height=\"" + std::to_string(H) + "\" viewBox=\"0 0 " + std::to_string(W) + " " +
         std::to_string(H) + "\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(W) + "\" height=\"" +
         std::to_string(H) + "\" fill=\"#ffffff\"/>\n";

  auto pull = [&](double MetricsRow::* field) {
    std::vector<double> v;
    for (const MetricsRow& r : rows) v.push_back(r.*field);
    return v;
  };

  double py = top;
  line_plot(out, "loss-plot", "train / test loss", left, py, pw, ph, epochs,
            {{"train-loss", "#1f77b4", pull(&MetricsRow::train_loss)},
             {"test-loss", "#ff7f0e", pull(&MetricsRow::test_loss)}});
  py += ph + vgap;
  line_plot(out, "accuracy-plot", "train / test accuracy", left, py, pw, ph, epochs,
            {{"train-acc", "#1f77b4", pull(&MetricsRow::train_acc)},
             {"test-acc", "#ff7f0e", pull(&MetricsRow::test_acc)}});
  py += ph + vgap;

  double MetricsRow::* const grads[6] = {&MetricsRow::grad_E, &MetricsRow::grad_P,
                                         &MetricsRow::grad_q, &MetricsRow::grad_V,
                                         &MetricsRow::grad_W, &MetricsRow::grad_U};
  std::vector<SeriesSpec> log_series, lin_series;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> raw = pull(grads[i]);
    std::vector<double> logged;
    for (double v : raw) logged.push_back(log_floor(v));
    std::string layer = kLayerNames[i];
    log_series.push_back({"grad-" + layer + "-log", kLayerColors[i], std::move(logged)});
    lin_series.push_back({"grad-" + layer + "-lin", kLayerColors[i], std::move(raw)});
  }
  line_plot(out, "grad-log-plot", "per-layer gradient norms, log10", left, py, pw, ph, epochs,
            log_series);
  py += ph + vgap;
  line_plot(out, "grad-linear-plot", "per-layer gradient norms, linear", left, py, pw, ph,
            epochs, lin_series);

  out += "</svg>\n";
  return out;
}

std::vector<std::string> render_to_directory(const RunLog& log, const std::string& out_dir,
                                             const RenderLayout& layout) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<std::string> paths;
  const HyperParams& hyper = log.header.config.hyper;
  for (const Snapshot& s : log.snapshots) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%06d.svg", s.epoch);
    fs::path p = fs::path(out_dir) / name;
    std::ofstream f(p, std::ios::trunc);
    if (!f) throw std::runtime_error("render: cannot open " + p.string() + " for writing");
    f << render_frame(s, hyper, layout);
    if (!f) throw std::runtime_error("render: write to " + p.string() + " failed");
    paths.push_back(p.string());
  }
  fs::path mp = fs::path(out_dir) / "metrics.svg";
  std::ofstream f(mp, std::ios::trunc);
  if (!f) throw std::runtime_error("render: cannot open " + mp.string() + " for writing");
  f << render_metrics(log);
  if (!f) throw std::runtime_error("render: write to " + mp.string() + " failed");
  paths.push_back(mp.string());
  return paths;
}

}  // namespace smadd
