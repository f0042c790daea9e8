#pragma once

#include <Eigen/Dense>
#include <optional>
#include <tuple>
#include <utility>
#include <vector>

#include "qwell/signal.hpp"

namespace qwell {

// One deduplicated frequency omega = |k^2 - j^2| pi^2 with every (j,k) mode
// pair mapping onto it. Pairs with k^2 - j^2 < 0 land in conj_pairs: their
// moments are the conjugates of the group moment.
struct FrequencyEntry {
  long long key = 0;  // |k^2 - j^2|
  double omega = 0.0;
  std::vector<std::pair<int, int>> pairs;
  std::vector<std::pair<int, int>> conj_pairs;
};

struct FrequencySet {
  double T = 0.0;
  double t0 = 0.0;
  std::vector<FrequencyEntry> entries;  // sorted by key, strictly increasing

  int size() const { return static_cast<int>(entries.size()); }
  bool has_zero() const { return !entries.empty() && entries.front().key == 0; }
  // index of the group a pair belongs to, together with a conjugation flag
  std::optional<std::pair<int, bool>> find_pair(int j, int k) const;
  int index_of_key(long long key) const;  // -1 if absent
};

enum class IndexSetKind {
  Canonical,  // {(j,k): 1<=j<=N, k>=j+1} u {(N,N)}; omega_0 = 0 carried by (N,N)
  FirstRow,   // {(1,k): 1<=k<=K_trunc}: the V_T frequencies lambda_k - lambda_1
  Rows,       // {(j,k): 1<=j<=N, 1<=k<=K_trunc}: all rows incl. diagonal
  AllPairs,   // {(j,k): 1<=j<=J_max, j<k<=K_trunc}
};

FrequencySet build_frequency_set(int N, int K_trunc, double T, IndexSetKind kind,
                                 int J_max = 0);
FrequencySet frequency_set_from_pairs(const std::vector<std::pair<int, int>>& pairs,
                                      double T);

// Assemble per-group targets from pair-indexed values; a collision group fed
// incompatible values is an input error.
Eigen::VectorXcd assemble_targets(
    const FrequencySet& freqs,
    const std::vector<std::tuple<int, int, std::complex<double>>>& pair_values);

struct MomentSolveOptions {
  int intervals = 4096;      // control grid
  double ridge = 0.0;        // optional Tikhonov, default off
  double cond_limit = 1e10;  // refuse above this
};

struct MomentSolution {
  ControlSignal v;
  double gram_condition = 0.0;
};

// Minimal-L2-norm piecewise-constant control with
//   int_{t0}^{t0+T} v(t) e^{i omega_n t} dt = d_n  for every group n.
// Conjugate closure makes v real by construction; if omega_0 = 0, d_0 must be
// real. Moments of the returned signal are exact per interval, so residuals
// are limited by the Gram solve, not quadrature.
MomentSolution solve_moments(const FrequencySet& freqs,
                             const Eigen::VectorXcd& targets,
                             MomentSolveOptions opts = {});

// Raw moments of v at the set's frequencies (exact per-interval integration).
Eigen::VectorXcd compute_moments(const ControlSignal& v, const FrequencySet& freqs);

// |moment_n(v) - d_n| per group; raw moments if no targets supplied.
Eigen::VectorXd verify_moments(const ControlSignal& v, const FrequencySet& freqs,
                               const Eigen::VectorXcd& targets);

// Remove the minimal-norm component so that all moments at lambda_k - lambda_1
// (k <= K_trunc) vanish; idempotent.
ControlSignal project_VT(const ControlSignal& v, int K_trunc,
                         double cond_limit = 1e10);

// 2-norm condition number of the conjugate-closed discrete Gram matrix.
double gram_condition(const FrequencySet& freqs, int intervals);
// Raw-frequency variant; duplicates make it singular (returns +inf).
double gram_condition(const std::vector<double>& omegas, double T, int intervals);

}  // namespace qwell
