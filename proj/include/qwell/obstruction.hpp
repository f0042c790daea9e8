#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "qwell/dynamics.hpp"
#include "qwell/signal.hpp"
#include "qwell/spectral.hpp"

namespace qwell {

// Sampled memory kernel h_j(t) = sum_k (lam_k-lam_j)^2 <mu phi_j,phi_k>^2
// sin((lam_k-lam_j) t), truncated at K_trunc, with a k^-3 tail estimate.
struct KernelTable {
  int j = 0;
  int K_trunc = 0;
  Eigen::VectorXd grid;
  Eigen::VectorXd values;
  double tail_bound = 0.0;
  bool tail_divergent = false;  // couplings decaying slower than k^-3 on window
};
KernelTable kernel_h(const CouplingData& data, int j, int K_trunc,
                     const Eigen::VectorXd& grid);

// Q_{T,j}(v) = int_0^T v(t) int_0^t v(tau)
//              sum_k <mu phi_j,phi_k>^2 sin((lam_k-lam_j)(t-tau)) dtau dt.
double quadratic_form_Q(const ControlSignal& v, const CouplingData& data, int j,
                        int K_trunc);

// calQ_{T,j}(s) = -<(mu')^2 phi_j,phi_j> ||s||^2
//                 + int int s(t) s(tau) h_j(t-tau) dtau dt.
double quadratic_form_calQ(const ControlSignal& s, const CouplingData& data,
                           int j, int K_trunc);

enum class CombinedVariant { N2, N3 };

// N2: m1 calQ_{T,2} - m2 calQ_{T,1} (coefficient of -||s||^2 is A).
// N3: (m3-m2) calQ_{T,1} + (m1-m3) calQ_{T,2} + (m2-m1) calQ_{T,3}
//     (coefficient of -||s||^2 is B).
double combined_form(const ControlSignal& s, const CouplingData& data,
                     CombinedVariant variant, int K_trunc);

struct CoercivityReport {
  CombinedVariant variant = CombinedVariant::N2;
  Eigen::VectorXd T_grid;
  Eigen::VectorXd rayleigh_max;  // of sign(scalar) * form, per ||s||_{L2}^2
  double T_star_est = 0.0;       // largest scanned T with rayleigh_max < 0
  bool t_star_found = false;
  int resolution = 0;
  int K_trunc = 0;
  bool degenerate = false;  // scalar (A or B) numerically zero
  double scalar = 0.0;      // A or B
  int samples_tested = 0;   // eigenproblem dimension summed over the grid
};
CoercivityReport coercivity_scan(const CouplingData& data, CombinedVariant variant,
                                 const std::vector<double>& T_grid,
                                 int resolution, int K_trunc);

// Auxiliary-system expansion orders around eigenstate j for s = eps * s_shape:
// Im<psi~(T),Phi_j(T)> itself (slope ~2) and its mismatch against
// eps^2 calQ_{T,j}(s_shape) at matched truncation (slope ~3). Also the
// first-order remainder ||psi~ - Phi_j - Psi~|| (slope ~2).
struct ExpansionOrderReport {
  std::vector<double> eps;
  std::vector<double> value;        // Im<psi~(T), Phi_j(T)>
  std::vector<double> residual;     // |value - eps^2 calQ(s_shape)|
  std::vector<double> first_order;  // ||psi~ - Phi_j - Psi~||_{l2}
  double value_slope = 0.0;
  double residual_slope = 0.0;
  double first_order_slope = 0.0;
};
ExpansionOrderReport expansion_order_check(const DipoleMoment& mu,
                                           const BasisSpec& spec, int j, double T,
                                           const ControlSignal& s_shape,
                                           const std::vector<double>& eps_list);

// Random small controls projected into V_T, full nonlinear propagation, sign
// statistics of the weighted functional
//   N2: m1 Im<psi^2,Phi_2> - m2 Im<psi^1,Phi_1>
//   N3: (m3-m2) Im<psi^1,Phi_1> + (m1-m3) Im<psi^2,Phi_2> + (m2-m1) Im<psi^3,Phi_3>.
struct ReachabilityReport {
  CombinedVariant variant = CombinedVariant::N2;
  double T = 0.0;
  int trials = 0;
  int violations = 0;  // sign(scalar) * functional >= 0 with nonzero control
  int skipped = 0;     // zero controls or budget overruns
  double control_budget = 0.0;
  std::uint64_t seed = 0;
  double margin_min = 0.0;   // of sign(scalar)*T_fn / ||s||^2 over trials
  double margin_max = 0.0;
  double margin_mean = 0.0;
  double C_star_fit = 0.0;   // -margin_max: empirical coercivity constant
  std::vector<double> margins;
};
ReachabilityReport reachability_experiment(const CouplingData& data, double T,
                                           CombinedVariant variant, int trials,
                                           std::uint64_t seed,
                                           double control_budget = 0.1,
                                           int intervals = 512, int n_modes = 16,
                                           int threads = 1);

}  // namespace qwell
