#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <vector>

#include "qwell/signal.hpp"
#include "qwell/spectral.hpp"

namespace qwell {

// N x K complex coefficient matrix at one time; row j holds the coordinates
// of psi^j in the eigenbasis (phi_k).
struct StateFrame {
  double t = 0.0;
  Eigen::MatrixXcd coeffs;

  int particles() const { return static_cast<int>(coeffs.rows()); }
  int modes() const { return static_cast<int>(coeffs.cols()); }
};

// Rows = Phi_j(t) = phi_j e^{-i lambda_j t}, j = 1..N.
StateFrame eigenstate_frame(int N, int K, double t = 0.0);

// <psi^j, psi^k> matrix of a frame.
Eigen::MatrixXcd gram_matrix(const StateFrame& frame);

// Free evolution over dt applied in place (exact phases).
void apply_free_phases(StateFrame& frame, double dt);

// || a ||_{h^3} = sqrt( sum_k |k^3 a_k|^2 ), the truncated H^3_(0) norm.
double weighted_h3_norm(const Eigen::VectorXcd& row);

struct Trajectory {
  std::vector<StateFrame> frames;  // frames.front().t = 0-offset grid times
  ControlSignal control;
  struct Meta {
    int store_every = 0;
    double gram_drift = 0.0;
    double norm_drift = 0.0;
    double tail_mass = 0.0;  // max |a_K| seen at the last retained mode
  } meta;

  const StateFrame& final_frame() const { return frames.back(); }
};

struct PropagatorOptions {
  int store_every = 0;  // 0: keep initial and final frames only
  double t0 = 0.0;      // absolute time of the initial frame
};

// One-step engine for i c' = Lambda c - u M c: exponential midpoint in the
// interaction picture, c <- e^{-i Lambda dt/2} e^{i u dt M} e^{-i Lambda dt/2} c.
// Unitary per step (M symmetric real, diagonalized once).
class WellPropagator {
 public:
  WellPropagator(const CouplingData& data, double dt);

  void step(Eigen::MatrixXcd& coeffs, double ubar) const;  // rows = particles
  // Half step, used for midpoint states.
  void half_step(Eigen::MatrixXcd& coeffs, double ubar) const;
  double dt() const { return dt_; }
  int modes() const { return K_; }

  // Source helpers: Msrc(k,a) = M_ka * int_0^dt e^{i(lam_k - lam_a) s} ds and
  // the end-of-step free phases e^{-i lam_k dt}.
  const Eigen::MatrixXcd& source_matrix() const { return Msrc_; }
  // Midpoint variant M_ka * int_{-dt/2}^{dt/2} e^{i(lam_k-lam_a) s} ds; real
  // symmetric, so the first-order source conjugated by half steps preserves
  // Re<Psi, psi_ref> exactly.
  const Eigen::MatrixXd& source_matrix_mid() const { return Msrc_mid_; }
  const Eigen::VectorXcd& full_phase() const { return phase_full_; }

 private:
  int K_;
  double dt_;
  Eigen::MatrixXcd V_;        // eigenvectors of M (cast to complex)
  Eigen::VectorXd evals_;     // eigenvalues of M
  Eigen::VectorXcd phase_half_, phase_full_, phase_quarter_;
  Eigen::MatrixXcd Msrc_;
  Eigen::MatrixXd Msrc_mid_;
};

// Nonlinear system (one shared control): i dc/dt = Lambda c - u(t) M c.
Trajectory propagate(const StateFrame& psi0, const ControlSignal& u,
                     const CouplingData& data, PropagatorOptions opts = {});

// Duhamel form with source f: i dc/dt = Lambda c - u M c - f(t) (f given as a
// coefficient-vector callable, integrated per interval in the free
// interaction frame with Gauss-Legendre nodes).
Trajectory propagate_with_source(const StateFrame& psi0, const ControlSignal& u,
                                 const std::function<Eigen::VectorXcd(double)>& f,
                                 const CouplingData& data,
                                 PropagatorOptions opts = {}, int source_order = 6);

// Linearized system around the trajectory driven by u_ref from ref0:
//   i dPsi/dt = Lambda Psi - u_ref M Psi - v M psi_ref(t).
// The reference is re-propagated internally on the same grid; the source is
// integrated exactly per interval against the free in-step reference motion.
Trajectory propagate_linearized(const ControlSignal& u_ref, const StateFrame& ref0,
                                const ControlSignal& v, const StateFrame& Psi0,
                                const CouplingData& data,
                                PropagatorOptions opts = {});

// Second-order term xi^j of the expansion psi = Phi_j + eps Psi + eps^2 xi
// around the free trajectory:  i dxi/dt = Lambda xi - v M Psi - w M Phi_j.
// Returns <xi^j(T), Phi_k(T)> for k = 1..K (iterated Duhamel, exact
// per-interval phase integration including the in-step growth of Psi).
Eigen::VectorXcd second_order_endpoint(const ControlSignal& v,
                                       const ControlSignal& w, int j,
                                       const CouplingData& data);

// Auxiliary (gauge-transformed) system, Galerkin matrices of the operators
// B = 2 mu' d_x + mu'' and (mu')^2:
//   i dc/dt = Lambda c - i s(t) D1 c + s(t)^2 W c.
struct AuxOperators {
  Eigen::MatrixXd D1;  // antisymmetric
  Eigen::MatrixXd W;   // symmetric
};
AuxOperators assemble_aux_operators(const DipoleMoment& mu, const BasisSpec& spec);

// s is the control primitive (s(0) = 0), evaluated at interval midpoints;
// exponential-midpoint Magnus step with the exact matrix exponential of the
// frozen skew-Hermitian generator.
Trajectory propagate_auxiliary(const ControlSignal& s, const AuxOperators& ops,
                               const StateFrame& psi0, PropagatorOptions opts = {});

enum class AuxDirection { Forward, Inverse };

// Multiplication by e^{+i s mu(x)} (Forward) or e^{-i s mu(x)} (Inverse) as a
// Galerkin matrix in the phi basis; Inverse is the adjoint of Forward.
StateFrame aux_transform(const StateFrame& frame, double s_val,
                         const DipoleMoment& mu, const BasisSpec& spec,
                         AuxDirection dir);

}  // namespace qwell
