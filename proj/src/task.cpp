#include "smadd/task.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace smadd {

void validate(const TaskSpec& spec) {
  if (spec.p < 2) throw std::invalid_argument("task: modulus p must be at least 2");
  if (spec.L < 1) throw std::invalid_argument("task: sequence length L must be at least 1");
  if (spec.k < 1 || spec.k > spec.L) throw std::invalid_argument("task: need 1 <= k <= L");
}

int target(const TokenSequence& x, const TaskSpec& spec) {
  int s = 0;
  for (int t = 0; t < spec.k; ++t) s += x[t];
  return s % spec.p;
}

Dataset sample_dataset(std::size_t n, const TaskSpec& spec, std::uint64_t seed, Stream stream) {
  validate(spec);
  if (n == 0) throw EmptyDataset("sample_dataset: n must be positive");
  Rng rng(seed, stream);
  Dataset ds;
  ds.spec = spec;
  ds.xs.reserve(n);
  ds.ys.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    TokenSequence x(spec.L);
    for (int t = 0; t < spec.L; ++t) x[t] = static_cast<int>(rng.below(static_cast<std::uint32_t>(spec.p)));
    ds.ys.push_back(target(x, spec));
    ds.xs.push_back(std::move(x));
  }
  return ds;
}

PrefixClass prefix_class(const TokenSequence& x, const TaskSpec& spec) {
  PrefixClass c;
  c.counts.assign(spec.p, 0);
  for (int t = 0; t < spec.k; ++t) c.counts[x[t]]++;
  return c;
}

namespace {

void enumerate_compositions(int remaining, int slot, std::vector<int>& cur,
                            std::vector<PrefixClass>& out) {
  if (slot == static_cast<int>(cur.size()) - 1) {
    cur[slot] = remaining;
    out.push_back(PrefixClass{cur});
    return;
  }
  for (int c = 0; c <= remaining; ++c) {
    cur[slot] = c;
    enumerate_compositions(remaining - c, slot + 1, cur, out);
  }
}

}  // namespace

std::vector<PrefixClass> all_prefix_classes(const TaskSpec& spec) {
  validate(spec);
  std::vector<PrefixClass> out;
  std::vector<int> cur(spec.p, 0);
  enumerate_compositions(spec.k, 0, cur, out);
  return out;
}

int prefix_class_id(const PrefixClass& c, const TaskSpec& spec) {
  // Rank of the count vector among all compositions of k into p parts,
  // in lexicographic order: sum over positions of how many compositions
  // start with a strictly smaller count there.
  int rank = 0;
  int remaining = spec.k;
  for (int v = 0; v + 1 < spec.p; ++v) {
    for (int smaller = 0; smaller < c.counts[v]; ++smaller) {
      // Compositions of (remaining - smaller) into the p-v-1 later slots.
      int n = remaining - smaller + spec.p - v - 2;
      int r = spec.p - v - 2;
      // Small binomial, exact in 64 bits at desk scale.
      std::uint64_t b = 1;
      for (int i = 1; i <= r; ++i) b = b * static_cast<std::uint64_t>(n - r + i) / i;
      rank += static_cast<int>(b);
    }
    remaining -= c.counts[v];
  }
  return rank;
}

std::uint64_t ideal_cluster_count(const TaskSpec& spec) {
  validate(spec);
  // C(k+p-1, k) distinct multisets of k tokens from p values.
  std::uint64_t n = static_cast<std::uint64_t>(spec.k) + spec.p - 1;
  std::uint64_t k = spec.k;
  if (k > n - k) k = n - k;
  std::uint64_t b = 1;
  for (std::uint64_t i = 1; i <= k; ++i) b = b * (n - k + i) / i;
  return b;
}

std::vector<TokenSequence> enumerate_prefixes(const TaskSpec& spec) {
  validate(spec);
  std::vector<TokenSequence> out;
  std::uint64_t total = 1;
  for (int i = 0; i < spec.k; ++i) total *= static_cast<std::uint64_t>(spec.p);
  out.reserve(total);
  TokenSequence x(spec.L, 0);
  for (std::uint64_t idx = 0; idx < total; ++idx) {
    std::uint64_t rem = idx;
    // Digit expansion with the first position as the most significant digit.
    for (int t = spec.k - 1; t >= 0; --t) {
      x[t] = static_cast<int>(rem % spec.p);
      rem /= spec.p;
    }
    out.push_back(x);
  }
  return out;
}

ProbeSet build_probe_set(const TaskSpec& spec, const std::vector<TokenSequence>& suffixes) {
  validate(spec);
  if (suffixes.empty()) throw EmptyProbeSet("build_probe_set: need at least one suffix");
  for (std::size_t s = 0; s < suffixes.size(); ++s) {
    if (static_cast<int>(suffixes[s].size()) != spec.L - spec.k) {
      throw SuffixLengthMismatch("build_probe_set: suffix " + std::to_string(s) + " has length " +
                                 std::to_string(suffixes[s].size()) + ", expected " +
                                 std::to_string(spec.L - spec.k));
    }
    for (int tok : suffixes[s]) {
      if (tok < 0 || tok >= spec.p) {
        throw InvalidToken("build_probe_set: suffix " + std::to_string(s) +
                           " contains token " + std::to_string(tok));
      }
    }
  }

  ProbeSet ps;
  ps.spec = spec;
  for (const TokenSequence& prefix : enumerate_prefixes(spec)) {
    int cid = prefix_class_id(prefix_class(prefix, spec), spec);
    for (std::size_t s = 0; s < suffixes.size(); ++s) {
      TokenSequence x = prefix;
      std::copy(suffixes[s].begin(), suffixes[s].end(), x.begin() + spec.k);
      ps.ys.push_back(target(x, spec));
      ps.class_ids.push_back(cid);
      ps.suffix_ids.push_back(static_cast<int>(s));
      ps.xs.push_back(std::move(x));
    }
  }
  return ps;
}

std::vector<TokenSequence> default_probe_suffixes(const TaskSpec& spec) {
  validate(spec);
  int m = spec.L - spec.k;
  TokenSequence zeros(m, 0);
  TokenSequence tops(m, spec.p - 1);
  TokenSequence alt(m);
  for (int i = 0; i < m; ++i) alt[i] = (i % 2 == 0) ? 0 : spec.p - 1;
  if (m == 0) return {TokenSequence{}};
  return {zeros, tops, alt};
}

void export_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_csv: cannot open " + path);
  for (int t = 0; t < ds.spec.L; ++t) out << 'x' << (t + 1) << ',';
  out << "target\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (int t = 0; t < ds.spec.L; ++t) out << ds.xs[i][t] << ',';
    out << ds.ys[i] << '\n';
  }
}

Dataset import_csv(const std::string& path, const TaskSpec& spec) {
  validate(spec);
  std::ifstream in(path);
  if (!in) throw std::runtime_error("import_csv: cannot open " + path);

  Dataset ds;
  ds.spec = spec;
  std::string line;
  std::getline(in, line);  // header
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<int> fields;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      int v = 0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw InvalidToken("import_csv: row " + std::to_string(row) + ": not an integer: '" + cell + "'");
      }
      fields.push_back(v);
    }
    if (static_cast<int>(fields.size()) != spec.L + 1) {
      throw InvalidToken("import_csv: row " + std::to_string(row) + " has " +
                         std::to_string(fields.size()) + " fields, expected " +
                         std::to_string(spec.L + 1));
    }
    TokenSequence x(fields.begin(), fields.end() - 1);
    for (int tok : x) {
      if (tok < 0 || tok >= spec.p) {
        throw InvalidToken("import_csv: row " + std::to_string(row) + ": token " +
                           std::to_string(tok) + " outside [0," + std::to_string(spec.p) + ")");
      }
    }
    int y = fields.back();
    if (y != target(x, spec)) {
      throw InvalidToken("import_csv: row " + std::to_string(row) + ": target " + std::to_string(y) +
                         " does not match the prefix sum " + std::to_string(target(x, spec)));
    }
    ds.xs.push_back(std::move(x));
    ds.ys.push_back(y);
  }
  if (ds.xs.empty()) throw EmptyDataset("import_csv: no data rows in " + path);
  return ds;
}

}  // namespace smadd
