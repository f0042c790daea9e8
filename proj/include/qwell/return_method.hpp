#pragma once

#include <Eigen/Dense>
#include <vector>

#include "qwell/dynamics.hpp"
#include "qwell/linearized.hpp"
#include "qwell/moments.hpp"
#include "qwell/signal.hpp"
#include "qwell/spectral.hpp"

namespace qwell {

enum class ReferenceVariant { N3PhaseDelay, N2Phase, N2Delay };

int variant_particles(ReferenceVariant v);
DiagWeights variant_weights(ReferenceVariant v);

struct ReferenceConfig {
  double eta = 1e-2;
  double eps = 1.0;
  double eps1 = 0.75;  // mid checkpoint, N3 only; must lie in (eps/2, eps)
  double T1 = 2.0;
  int K_pump = 4;     // pumped column K in the stage-1 moment problem
  int K_vanish = 12;  // vanishing moment conditions kept up to this mode
  int grid_per_unit = 4000;
  int newton_max_iter = 20;
  double stage1_tol = 1e-10;  // conditions matched to stage1_tol * (1 + eta)
  double stage2_tol = 1e-9;
  double eta_budget = 0.1;
  double trust_radius = 0.1;
  double congruence_tol = 1e-8;
  double cond_limit = 1e10;
};

// Smallest T_eta > T1 and theta_eta with theta_j + lambda_j T_eta - theta_eta
// = 0 mod 2pi for all particles. N3 requires 5 th1 - 8 th2 + 3 th3 = 0, the
// N2 delay variant 4 th1 - th2 = 0 (theta_eta = 0 there); the N2 phase
// variant keeps T_eta = T1 and requires th1 = th2.
struct PhaseDelayResult {
  double T_eta = 0.0;
  double theta_eta = 0.0;
  Eigen::VectorXd residuals;
};
PhaseDelayResult phase_delay_solve(const Eigen::VectorXd& thetas, double T1,
                                   ReferenceVariant variant, double tol = 1e-8);

struct ReferenceTrajectory {
  ReferenceVariant variant = ReferenceVariant::N3PhaseDelay;
  ReferenceConfig cfg;
  int N = 0;
  int K = 0;
  ControlSignal control;  // on [0, T1]; identically zero tail on (T1, T_eta)
  double T_eta = 0.0;
  double theta_eta = 0.0;      // endpoint global phase, see endpoint_target()
  Eigen::VectorXd thetas;      // psi^j(T1) = e^{-i theta_j} Phi_j(T1)
  StateFrame at_T1;
  StateFrame end_frame;        // at T_eta
  StateFrame end_frame_ortho;  // Gram-Schmidt-cleaned endpoint rows
  double stage1_residual = 0.0;
  double stage2_residual = 0.0;
  double endpoint_error = 0.0;
  double control_l2 = 0.0;
  double gram_drift = 0.0;

  // e^{i theta_eta} (phi_1..phi_N) for the delay variants, evaluated as plain
  // eigenfunctions; e^{i theta_eta} (Phi_j(T1)) for N2Phase.
  StateFrame endpoint_target() const;
};

// Stage 1: control on (eps/2, eps) shifting the diagonal mu-expectations by
// eta at the prescribed checkpoints (damped Newton, two-window moment
// construction as derivative inverse).
ControlSignal stage1_control(const CouplingData& data, ReferenceVariant variant,
                             const ReferenceConfig& cfg);

// Stage 2: control on (T0, Tf) flattening every component above the diagonal
// and zeroing the weighted diagonal phase functional.
ControlSignal stage2_control(const StateFrame& state_at_T0,
                             const CouplingData& data, double T0, double Tf,
                             ReferenceVariant variant, const ReferenceConfig& cfg);

ReferenceTrajectory build_reference(const CouplingData& data,
                                    ReferenceVariant variant,
                                    ReferenceConfig cfg = {});

// Sampled moment family along the reference: f_n(t) = <mu psi^j_ref, Phi^eta_k>
// / <mu phi_j,phi_k> for (j,k) in the canonical index set (omega = 0 carried
// by (N,N)), plus the extra diagonal functions f_jj for j < N. Rows hold the
// per-interval integrals int_{I_i} f_n dt (slow envelope times exact carrier).
struct FrameFamily {
  FrequencySet freqs;
  Eigen::MatrixXcd rows;          // groups x intervals
  Eigen::MatrixXcd diag_rows;     // (N-1) x intervals, real-valued content
  Eigen::MatrixXcd f_samples;     // groups x (nodes)
  Eigen::MatrixXcd fdiag_samples; // (N-1) x (nodes)
  Eigen::MatrixXcd basis_T1;      // K x K, column k = Phi^eta_k(T1) coefficients
};
FrameFamily reference_frame_functions(const ReferenceTrajectory& ref,
                                      const CouplingData& data);

// || J^eta - J^0 || estimate over the discretized control space, plus the
// smallest singular value of J^0 on its span: the perturbed family stays a
// basis when gap < sigma_min.
struct RieszGapReport {
  double gap = 0.0;
  double sigma_min_J0 = 0.0;
  bool basis_preserved = false;
};
RieszGapReport riesz_gap(const ReferenceTrajectory& ref, const CouplingData& data,
                         const FrameFamily& family);

// Componentwise projection onto the controllable space X^f at T_eta:
// out_j = raw_j - Re<raw_j, psi_ref^j> psi_ref^j
//               - sum_{k<j} (<raw_j, psi_ref^k> + <psi_ref^j, raw_k>) psi_ref^k.
StateFrame project_Xf(const ReferenceTrajectory& ref, const StateFrame& raw);

// Residuals of the X^f membership conditions (all ~0 for projected frames).
Eigen::VectorXd xf_invariant_residuals(const ReferenceTrajectory& ref,
                                       const StateFrame& frame);

struct LinearControlResult {
  ControlSignal v;  // on [0, T1]; zero-extended on (T1, T_eta)
  double endpoint_residual = 0.0;
  int passes = 0;
  double gram_condition = 0.0;     // moment family
  double gram_condition_Xi = 0.0;  // family + diagonals
};

// L^eta: v0 from the perturbed Gram solve over the canonical set, plus the
// biorthogonal diagonal corrections g_jj, refined against the linearized
// propagator until the endpoint matches the X^f target.
LinearControlResult linear_control_around_ref(const ReferenceTrajectory& ref,
                                              const CouplingData& data,
                                              const FrameFamily& family,
                                              const StateFrame& target,
                                              double tol = 1e-8,
                                              int max_passes = 6);

struct LocalControlResult {
  ControlSignal u;
  int iterations = 0;
  double endpoint_error = 0.0;
  std::vector<double> residual_history;
};

// Full nonlinear steering: Newton on u -> P~(psi(T_eta)) starting from u_ref
// with linear_control_around_ref as derivative inverse; asserts the full
// endpoint match, not only the projected components.
LocalControlResult solve_local_control(const ReferenceTrajectory& ref,
                                       const CouplingData& data,
                                       const FrameFamily& family,
                                       const StateFrame& targets,
                                       double tol = 1e-7);

}  // namespace qwell
