#pragma once
// SVG rendering of snapshots: the eight diagnostic panels for d = 2 models
// (any other d falls back to the two dimension-free ones) and the four-plot
// metrics figure for a whole run. Rendering is a pure function of its inputs,
// double formatting included, so identical inputs give identical bytes and
// frames diff cleanly across runs.

#include <string>
#include <vector>

#include "smadd/snapshot.hpp"

namespace smadd {

struct RenderLayout {
  int panel = 240;        // edge of one square panel, px
  int gap = 16;           // space between panels
  int margin = 24;        // outer border
  int grid = 64;          // level-lines resolution per axis
  double pad_frac = 0.2;  // bounding-box padding around the probe points
};

// One frame. With d == 2 the document holds eight titled panel groups, ids:
//   position-embeddings, normalized-embeddings, attention-map,
//   value-transform, sequence-embeddings, level-lines, mlp-receptors, metrics
// and with any other d just attention-map and metrics. Markers follow one
// convention everywhere: circles for the positions the target depends on,
// squares for the spurious ones; a prefix class keeps its color for life.
std::string render_frame(const Snapshot& snap, const HyperParams& hyper,
                         const RenderLayout& layout = {});

// Four stacked sub-plots sharing the epoch axis: losses, accuracies,
// per-layer gradient norms in log scale, and the same norms in linear scale.
// Throws TooFewRows below two snapshots.
std::string render_metrics(const RunLog& log);

// frame_{epoch:06}.svg per snapshot plus metrics.svg, written into out_dir
// (created if missing). Returns the paths written, frames first.
std::vector<std::string> render_to_directory(const RunLog& log, const std::string& out_dir,
                                             const RenderLayout& layout = {});

}  // namespace smadd
