#include "qwell/moments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "qwell/errors.hpp"
#include "qwell/spectral.hpp"

namespace qwell {

namespace {
constexpr cd kI{0.0, 1.0};
}

std::optional<std::pair<int, bool>> FrequencySet::find_pair(int j, int k) const {
  long long skey = static_cast<long long>(k) * k - static_cast<long long>(j) * j;
  int idx = index_of_key(std::llabs(skey));
  if (idx < 0) return std::nullopt;
  const auto& e = entries[idx];
  auto in = [&](const std::vector<std::pair<int, int>>& v) {
    return std::find(v.begin(), v.end(), std::make_pair(j, k)) != v.end();
  };
  if (skey >= 0 && in(e.pairs)) return std::make_pair(idx, false);
  if (skey < 0 && in(e.conj_pairs)) return std::make_pair(idx, true);
  return std::nullopt;
}

int FrequencySet::index_of_key(long long key) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), key,
                             [](const FrequencyEntry& e, long long k) {
                               return e.key < k;
                             });
  if (it == entries.end() || it->key != key) return -1;
  return static_cast<int>(it - entries.begin());
}

FrequencySet frequency_set_from_pairs(const std::vector<std::pair<int, int>>& pairs,
                                      double T) {
  if (T <= 0.0) throw InputError("frequency set: horizon must be positive");
  std::map<long long, FrequencyEntry> groups;
  for (auto [j, k] : pairs) {
    if (j < 1 || k < 1) throw InputError("frequency set: mode indices must be >= 1");
    long long skey =
        static_cast<long long>(k) * k - static_cast<long long>(j) * j;
    long long key = std::llabs(skey);
    auto& e = groups[key];
    e.key = key;
    e.omega = static_cast<double>(key) * kPi * kPi;
    if (skey >= 0)
      e.pairs.emplace_back(j, k);
    else
      e.conj_pairs.emplace_back(j, k);
  }
  FrequencySet set;
  set.T = T;
  for (auto& [key, e] : groups) set.entries.push_back(std::move(e));
  return set;
}

FrequencySet build_frequency_set(int N, int K_trunc, double T, IndexSetKind kind,
                                 int J_max) {
  if (K_trunc < N + 1)
    throw InputError("frequency set: K_trunc must be at least N + 1");
  std::vector<std::pair<int, int>> pairs;
  switch (kind) {
    case IndexSetKind::Canonical:
      for (int j = 1; j <= N; ++j)
        for (int k = j + 1; k <= K_trunc; ++k) pairs.emplace_back(j, k);
      pairs.emplace_back(N, N);  // omega = 0
      break;
    case IndexSetKind::FirstRow:
      for (int k = 1; k <= K_trunc; ++k) pairs.emplace_back(1, k);
      break;
    case IndexSetKind::Rows:
      for (int j = 1; j <= N; ++j)
        for (int k = 1; k <= K_trunc; ++k) pairs.emplace_back(j, k);
      break;
    case IndexSetKind::AllPairs:
      if (J_max < 1) throw InputError("frequency set: AllPairs needs J_max >= 1");
      for (int j = 1; j <= J_max; ++j)
        for (int k = j + 1; k <= K_trunc; ++k) pairs.emplace_back(j, k);
      break;
  }
  return frequency_set_from_pairs(pairs, T);
}

Eigen::VectorXcd assemble_targets(
    const FrequencySet& freqs,
    const std::vector<std::tuple<int, int, std::complex<double>>>& pair_values) {
  Eigen::VectorXcd d = Eigen::VectorXcd::Zero(freqs.size());
  std::vector<bool> seen(freqs.size(), false);
  for (const auto& [j, k, value] : pair_values) {
    auto loc = freqs.find_pair(j, k);
    if (!loc)
      throw InputError("moment targets: pair outside the frequency set");
    auto [idx, conjugated] = *loc;
    cd group_value = conjugated ? std::conj(value) : value;
    if (seen[idx] && std::abs(d(idx) - group_value) >
                         1e-12 * (1.0 + std::abs(group_value)))
      throw InputError(
          "moment targets: incompatible values for one collision group");
    d(idx) = group_value;
    seen[idx] = true;
  }
  return d;
}

namespace {

// Rows of the conjugate-closed discrete moment map: row r, interval i holds
// int_{I_i} e^{i w_r t} dt (absolute time, including t0).
struct ClosedSystem {
  std::vector<double> omegas;       // closed list, ascending
  std::vector<int> group_of;        // closed row -> group index
  Eigen::MatrixXcd E;               // rows x intervals
  Eigen::MatrixXcd G;               // Gram, E E^H / dt
  double dt = 0.0;
};

ClosedSystem build_closed(const FrequencySet& freqs, int intervals) {
  if (intervals < freqs.size())
    throw InputError("solve_moments: more constraints than grid intervals");
  ClosedSystem sys;
  const int n = freqs.size();
  for (int i = n - 1; i >= 0; --i) {
    if (freqs.entries[i].key == 0) continue;
    sys.omegas.push_back(-freqs.entries[i].omega);
    sys.group_of.push_back(i);
  }
  for (int i = 0; i < n; ++i) {
    sys.omegas.push_back(freqs.entries[i].omega);
    sys.group_of.push_back(i);
  }

  const int R = static_cast<int>(sys.omegas.size());
  const double dt = freqs.T / intervals;
  sys.dt = dt;
  sys.E.resize(R, intervals);
  for (int r = 0; r < R; ++r) {
    const double w = sys.omegas[r];
    const cd m0 = power_exp_moment(0, w, dt);
    const cd stepph = std::exp(kI * w * dt);
    cd phase = std::exp(kI * w * freqs.t0);
    for (int i = 0; i < intervals; ++i) {
      sys.E(r, i) = phase * m0;
      phase *= stepph;
    }
  }
  sys.G = (sys.E * sys.E.adjoint()) / dt;
  return sys;
}

double condition_of(const Eigen::MatrixXcd& G) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(G);
  double lo = es.eigenvalues().minCoeff();
  double hi = es.eigenvalues().maxCoeff();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace

MomentSolution solve_moments(const FrequencySet& freqs,
                             const Eigen::VectorXcd& targets,
                             MomentSolveOptions opts) {
  if (freqs.T <= 0.0) throw InputError("solve_moments: horizon must be positive");
  if (targets.size() != freqs.size())
    throw InputError("solve_moments: one target per frequency group required");
  if (freqs.has_zero() &&
      std::abs(targets(0).imag()) > 1e-12 * (1.0 + std::abs(targets(0))))
    throw InputError("solve_moments: the omega = 0 target must be real");

  ClosedSystem sys = build_closed(freqs, opts.intervals);
  const int R = static_cast<int>(sys.omegas.size());

  Eigen::VectorXcd d(R);
  for (int r = 0; r < R; ++r) {
    const cd t = targets(sys.group_of[r]);
    d(r) = sys.omegas[r] < 0.0 ? std::conj(t) : t;
    if (sys.omegas[r] == 0.0) d(r) = cd(t.real(), 0.0);
  }

  double cond = condition_of(sys.G);
  if (cond > opts.cond_limit && opts.ridge == 0.0)
    throw IllConditionedError(
        "solve_moments: exponential family too close to dependent on this "
        "horizon; enlarge T (or pass a ridge for exploratory runs)",
        cond);

  Eigen::MatrixXcd G = sys.G;
  if (opts.ridge > 0.0) {
    double scale = G.diagonal().real().mean();
    G += opts.ridge * scale * Eigen::MatrixXcd::Identity(R, R);
  }
  Eigen::VectorXcd a = G.ldlt().solve(d);

  // symmetrize a_{-n} = conj(a_n) exactly, then synthesize a real signal
  for (int r = 0; r < R; ++r) {
    if (sys.omegas[r] >= 0.0) break;
    int p = -1;
    for (int q = R - 1; q >= 0; --q)
      if (sys.group_of[q] == sys.group_of[r] && sys.omegas[q] > 0.0) {
        p = q;
        break;
      }
    cd sym = 0.5 * (a(p) + std::conj(a(r)));
    a(p) = sym;
    a(r) = std::conj(sym);
  }

  Eigen::VectorXd v = Eigen::VectorXd::Zero(opts.intervals);
  for (int r = 0; r < R; ++r) {
    if (sys.omegas[r] < 0.0) continue;
    if (sys.omegas[r] == 0.0) {
      double ar = a(r).real();
      for (int i = 0; i < opts.intervals; ++i)
        v(i) += ar * sys.E(r, i).real() / sys.dt;
    } else {
      for (int i = 0; i < opts.intervals; ++i)
        v(i) += 2.0 * (a(r) * std::conj(sys.E(r, i))).real() / sys.dt;
    }
  }

  MomentSolution sol;
  sol.v = ControlSignal::piecewise_constant(freqs.T, std::move(v));
  sol.gram_condition = cond;
  return sol;
}

Eigen::VectorXcd compute_moments(const ControlSignal& v, const FrequencySet& freqs) {
  Eigen::VectorXcd m(freqs.size());
  for (int n = 0; n < freqs.size(); ++n)
    m(n) = signal_moment(v, freqs.entries[n].omega, freqs.t0);
  return m;
}

Eigen::VectorXd verify_moments(const ControlSignal& v, const FrequencySet& freqs,
                               const Eigen::VectorXcd& targets) {
  Eigen::VectorXcd m = compute_moments(v, freqs);
  if (targets.size() == 0) return m.cwiseAbs();
  if (targets.size() != m.size())
    throw InputError("verify_moments: target count mismatch");
  return (m - targets).cwiseAbs();
}

ControlSignal project_VT(const ControlSignal& v, int K_trunc, double cond_limit) {
  if (v.kind() != SignalKind::PiecewiseConstant)
    throw InputError("project_VT: piecewise-constant controls only");
  FrequencySet freqs =
      build_frequency_set(1, K_trunc, v.duration(), IndexSetKind::FirstRow);
  Eigen::VectorXcd m = compute_moments(v, freqs);
  MomentSolveOptions opts;
  opts.intervals = v.intervals();
  opts.cond_limit = cond_limit;
  MomentSolution corr = solve_moments(freqs, m, opts);
  ControlSignal out = v;
  out.values() -= corr.v.values();
  return out;
}

double gram_condition(const FrequencySet& freqs, int intervals) {
  ClosedSystem sys = build_closed(freqs, intervals);
  return condition_of(sys.G);
}

double gram_condition(const std::vector<double>& omegas, double T, int intervals) {
  const double dt = T / intervals;
  const int R = static_cast<int>(omegas.size());
  Eigen::MatrixXcd E(R, intervals);
  for (int r = 0; r < R; ++r) {
    const cd m0 = power_exp_moment(0, omegas[r], dt);
    const cd stepph = std::exp(kI * omegas[r] * dt);
    cd phase{1.0, 0.0};
    for (int i = 0; i < intervals; ++i) {
      E(r, i) = phase * m0;
      phase *= stepph;
    }
  }
  return condition_of((E * E.adjoint()) / dt);
}

}  // namespace qwell
