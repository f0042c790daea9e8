#include "qwell/linearized.hpp"

#include <cmath>

#include "qwell/errors.hpp"

namespace qwell {

namespace {
constexpr cd kI{0.0, 1.0};
}

Eigen::MatrixXcd first_order_endpoint(const ControlSignal& v,
                                      const CouplingData& data, int N,
                                      int K_trunc) {
  if (K_trunc > data.K_max)
    throw InputError("first_order_endpoint: K_trunc exceeds coupling data");
  Eigen::MatrixXcd out(N, K_trunc);
  for (int j = 1; j <= N; ++j)
    for (int k = 1; k <= K_trunc; ++k)
      out(j - 1, k - 1) =
          kI * data.mu(j, k) * signal_moment(v, eigenvalue(k) - eigenvalue(j));
  return out;
}

Eigen::MatrixXcd endpoint_vs_eigenstates(const StateFrame& frame) {
  Eigen::MatrixXcd out = frame.coeffs;
  for (int k = 1; k <= frame.modes(); ++k)
    out.col(k - 1) *= std::exp(kI * eigenvalue(k) * frame.t);
  return out;
}

ObstructionResiduals check_obstruction_identity(const Eigen::MatrixXcd& endpoint,
                                                const CouplingData& data) {
  if (endpoint.rows() < 2)
    throw PreconditionError("obstruction identity needs at least two particles");
  ObstructionResiduals r;
  r.diag = data.mu_diag(2) * endpoint(0, 0) - data.mu_diag(1) * endpoint(1, 1);
  r.offdiag = endpoint(0, 1) + std::conj(endpoint(1, 0));
  return r;
}

Eigen::Vector3d diag_weight_values(DiagWeights w) {
  switch (w) {
    case DiagWeights::N3:
      return {5.0, -8.0, 3.0};
    case DiagWeights::N2Phase:
      return {1.0, -1.0, 0.0};
    case DiagWeights::N2Delay:
      return {4.0, -1.0, 0.0};
  }
  return {};
}

double diag_weight_denominator(DiagWeights w, const CouplingData& data) {
  Eigen::Vector3d wt = diag_weight_values(w);
  return wt(0) * data.mu_diag(1) + wt(1) * data.mu_diag(2) +
         wt(2) * data.mu_diag(3);
}

ControlSignal synth_linear_control(const LinearTargets& targets,
                                   const CouplingData& data, double T0, double Tf,
                                   int intervals, DiagWeights weights, int N,
                                   int K_trunc, const StateFrame* Psi0,
                                   double cond_limit) {
  if (Tf <= T0) throw InputError("synth_linear_control: need Tf > T0");
  if (K_trunc > data.K_max)
    throw InputError("synth_linear_control: K_trunc exceeds coupling data");

  std::vector<std::pair<int, int>> pairs;
  for (const auto& [jk, value] : targets.entries) {
    auto [j, k] = jk;
    if (j < 1 || j > N || k <= j || k > K_trunc)
      throw InputError(
          "synth_linear_control: targets must lie in {(j,k): k >= j+1}; "
          "lower-triangular entries are induced by the invariant");
    pairs.emplace_back(j, k);
  }
  const bool want_diag = targets.diag_combo.has_value();
  if (want_diag) pairs.emplace_back(N, N);  // omega = 0 row

  FrequencySet freqs = frequency_set_from_pairs(pairs, Tf - T0);
  freqs.t0 = T0;

  auto initial_component = [&](int j, int k) -> cd {
    if (!Psi0) return {0.0, 0.0};
    return Psi0->coeffs(j - 1, k - 1) * std::exp(kI * eigenvalue(k) * T0);
  };

  std::vector<std::tuple<int, int, cd>> pair_values;
  for (const auto& [jk, value] : targets.entries) {
    auto [j, k] = jk;
    double coupling = data.mu(j, k);
    if (std::abs(coupling) < 1e-14)
      throw UnreachableDirectionError(
          "synth_linear_control: zero coupling on a requested pair");
    pair_values.emplace_back(
        j, k, (value - initial_component(j, k)) / (kI * coupling));
  }
  if (want_diag) {
    double denom = diag_weight_denominator(weights, data);
    if (std::abs(denom) < 1e-14)
      throw PreconditionError(
          "synth_linear_control: weighted diagonal coupling combination "
          "vanishes; the omega = 0 moment is undetermined");
    Eigen::Vector3d wt = diag_weight_values(weights);
    double init = 0.0;
    for (int j = 1; j <= N; ++j)
      init += wt(j - 1) * initial_component(j, j).imag();
    pair_values.emplace_back(N, N, cd((*targets.diag_combo - init) / denom, 0.0));
  }

  Eigen::VectorXcd d = assemble_targets(freqs, pair_values);
  MomentSolveOptions opts;
  opts.intervals = intervals;
  opts.cond_limit = cond_limit;
  return solve_moments(freqs, d, opts).v;
}

}  // namespace qwell
