#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>

#include "qwell/dynamics.hpp"
#include "qwell/moments.hpp"
#include "qwell/signal.hpp"
#include "qwell/spectral.hpp"

namespace qwell {

// Closed-form first-order endpoint around the free eigenstate tuple:
//   <Psi^j(T), Phi_k(T)> = i <mu phi_j, phi_k> int_0^T v(t) e^{i(lam_k-lam_j)t} dt.
// Exact per control interval. Rows j = 1..N, columns k = 1..K_trunc.
Eigen::MatrixXcd first_order_endpoint(const ControlSignal& v,
                                      const CouplingData& data, int N,
                                      int K_trunc);

// Endpoint matrix of a propagated linearized trajectory in the same
// normalization (<Psi^j(T), Phi_k(T)> entries).
Eigen::MatrixXcd endpoint_vs_eigenstates(const StateFrame& frame);

// The two first-order conservation identities around eigenstates:
//   m2 <Psi^1,Phi_1> - m1 <Psi^2,Phi_2>   and   <Psi^1,Phi_2> + conj(<Psi^2,Phi_1>).
struct ObstructionResiduals {
  std::complex<double> diag;
  std::complex<double> offdiag;
};
ObstructionResiduals check_obstruction_identity(const Eigen::MatrixXcd& endpoint,
                                                const CouplingData& data);

enum class DiagWeights { N3, N2Phase, N2Delay };  // (5,-8,3), (1,-1), (4,-1)

Eigen::Vector3d diag_weight_values(DiagWeights w);
// sum_j w_j <mu phi_j, phi_j>; the denominator of the omega = 0 moment row.
double diag_weight_denominator(DiagWeights w, const CouplingData& data);

// Off-diagonal complex targets over {(j,k): k >= j+1} plus the optional
// weighted-diagonal imaginary part r.
struct LinearTargets {
  std::map<std::pair<int, int>, std::complex<double>> entries;
  std::optional<double> diag_combo;
};

// Control on (T0, Tf) whose linearized endpoint (initial state Psi0, may be
// null for zero) matches the targets: converts them to trigonometric moments
// and solves the minimal-norm problem.
ControlSignal synth_linear_control(const LinearTargets& targets,
                                   const CouplingData& data, double T0, double Tf,
                                   int intervals, DiagWeights weights, int N,
                                   int K_trunc,
                                   const StateFrame* Psi0 = nullptr,
                                   double cond_limit = 1e10);

}  // namespace qwell
