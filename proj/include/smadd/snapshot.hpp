#pragma once
// Epoch-stamped training state persisted as line-delimited JSON: line one is
// a header object (schema version, config echo, probe-set definition), every
// following line is one self-contained snapshot. Doubles are written in
// shortest round-trip form, so reading a log back reproduces every float bit
// for bit and a log doubles as a regression fixture. Only finite values are
// representable; a non-finite parameter would not survive the trip.

#include <stdexcept>
#include <string>
#include <vector>

#include "smadd/metrics.hpp"
#include "smadd/model.hpp"
#include "smadd/training.hpp"

namespace smadd {

struct SchemaVersionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OutOfOrderSnapshot : std::runtime_error {
  using std::runtime_error::runtime_error;
};

extern const char* const kRunLogSchema;  // "v1"

// What each probe sequence contributes to a snapshot: the pooled embedding,
// the attention pattern, and the predicted distribution. Everything else the
// renderer draws is recomputed from the stored parameters.
struct ProbeTrace {
  Vec xi;    // d
  Vec attn;  // L
  Vec mu;    // p

  bool operator==(const ProbeTrace&) const = default;
};

struct Snapshot {
  int epoch = 0;
  ModelParams params;
  std::vector<ProbeTrace> probe;  // one per probe-set sequence, probe order
  MetricsRow metrics;

  bool operator==(const Snapshot&) const = default;
};

struct RunLogHeader {
  std::string schema;
  TrainConfig config;
  // The probe set is the cartesian product of all prefixes with these
  // suffixes (build_probe_set), so storing the suffixes pins it down.
  std::vector<TokenSequence> probe_suffixes;

  bool operator==(const RunLogHeader&) const = default;
};

RunLogHeader make_run_log_header(const TrainConfig& config,
                                 const std::vector<TokenSequence>& probe_suffixes);

struct RunLog {
  RunLogHeader header;
  std::vector<Snapshot> snapshots;

  // Epochs must be strictly increasing; throws OutOfOrderSnapshot otherwise.
  void append(Snapshot snap);

  bool operator==(const RunLog&) const = default;
};

// Runs the forward pass on every probe sequence and deep-copies everything,
// so later updates to the live parameters cannot reach into the snapshot.
// The metrics row must carry the same epoch (std::invalid_argument).
Snapshot record_snapshot(int epoch, const ModelParams& params, const ProbeSet& probe,
                         const HyperParams& hyper, const MetricsRow& metrics);

void write_run_log(const RunLog& log, const std::string& path);

// Strict read: a malformed, incomplete, or out-of-order line throws
// CorruptLine naming the line number; a header announcing a different schema
// throws SchemaVersionMismatch.
RunLog read_run_log(const std::string& path);

// Salvage read: stops at the first bad snapshot line and returns the prefix
// that parsed cleanly. Header problems still throw as in the strict read.
RunLog read_run_log_lenient(const std::string& path);

// Stand-alone parameter file: the same params object a snapshot line embeds,
// wrapped with the schema tag. Lets a later run pick up trained weights
// without dragging a whole run log along.
void write_params_json(const ModelParams& params, const std::string& path);
ModelParams read_params_json(const std::string& path);

// Flat config object whose keys are the CLI flag names, shared by the run-log
// header, the config echo on disk, and config files. The parser starts from
// `base`, overrides any key present, and rejects unknown keys (InvalidConfig)
// so a typo cannot silently fall back to a default.
std::string to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text, const TrainConfig& base = {});

}  // namespace smadd
