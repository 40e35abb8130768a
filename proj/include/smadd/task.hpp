#pragma once
// The sparse modular addition task. A sequence is L tokens from {0..p-1} and
// the target is the sum of the first k tokens mod p; the trailing L-k tokens
// are noise the model has to learn to ignore.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "smadd/rng.hpp"

namespace smadd {

struct InvalidToken : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SuffixLengthMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyDataset : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyProbeSet : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using TokenSequence = std::vector<int>;

struct TaskSpec {
  int p = 2;   // modulus, also vocabulary size
  int L = 12;  // sequence length
  int k = 5;   // how many leading tokens the target actually depends on

  bool operator==(const TaskSpec&) const = default;
};

// Throws std::invalid_argument unless p >= 2 and 1 <= k <= L.
void validate(const TaskSpec& spec);

int target(const TokenSequence& x, const TaskSpec& spec);

struct Dataset {
  TaskSpec spec;
  std::vector<TokenSequence> xs;
  std::vector<int> ys;

  std::size_t size() const { return xs.size(); }
};

// n i.i.d. sequences, tokens uniform on {0..p-1}, from the given stream of
// the seed. Resampling with the same (seed, stream) reproduces it exactly.
Dataset sample_dataset(std::size_t n, const TaskSpec& spec, std::uint64_t seed,
                       Stream stream = Stream::train_data);

// Which cluster a sequence belongs to, before any training: the multiset of
// its first k tokens, stored as per-token counts. Sequences with the same
// counts are indistinguishable to a sum, which is why they collapse.
struct PrefixClass {
  std::vector<int> counts;  // counts[v] = multiplicity of token v in the prefix, sums to k

  bool operator==(const PrefixClass&) const = default;
};

PrefixClass prefix_class(const TokenSequence& x, const TaskSpec& spec);

// All possible prefix classes in lexicographic order of their count vectors.
// The position in this list is the stable id used for colors and reports.
std::vector<PrefixClass> all_prefix_classes(const TaskSpec& spec);
int prefix_class_id(const PrefixClass& c, const TaskSpec& spec);

// Number of distinct prefix classes, C(k+p-1, k).
std::uint64_t ideal_cluster_count(const TaskSpec& spec);

// Every one of the p^k prefixes, lexicographic, each padded with zeros to a
// full sequence. Enumeration order is part of the probe-set contract.
std::vector<TokenSequence> enumerate_prefixes(const TaskSpec& spec);

struct ProbeSet {
  TaskSpec spec;
  std::vector<TokenSequence> xs;
  std::vector<int> ys;
  std::vector<int> class_ids;   // prefix class id per sequence
  std::vector<int> suffix_ids;  // which suffix each sequence was padded with

  std::size_t size() const { return xs.size(); }
};

// Cartesian product of all p^k prefixes (lexicographic) with the given
// suffixes, prefix-major. Each suffix must have length L-k
// (SuffixLengthMismatch), and there must be at least one (EmptyProbeSet).
ProbeSet build_probe_set(const TaskSpec& spec, const std::vector<TokenSequence>& suffixes);

// The three standing suffixes: all zeros, all p-1, and the two alternating.
std::vector<TokenSequence> default_probe_suffixes(const TaskSpec& spec);

// CSV with header x1..xL,target, one row per sequence.
void export_csv(const Dataset& ds, const std::string& path);
// Validates every token and the target column against the spec; throws
// InvalidToken with the offending row and value otherwise.
Dataset import_csv(const std::string& path, const TaskSpec& spec);

}  // namespace smadd
