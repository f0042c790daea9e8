#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

namespace qwell {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// lambda_k = (k pi)^2, phi_k = sqrt(2) sin(k pi x), k >= 1.
inline double eigenvalue(int k) { return (k * kPi) * (k * kPi); }

struct BasisSpec {
  int K_max = 30;
  int quadrature_order = 12;  // Gauss-Legendre points per panel
};

// Gauss-Legendre rule on [-1, 1].
struct QuadratureRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};
QuadratureRule gauss_legendre(int n);

// The spatial coupling profile mu on [0,1], with mu' and mu'' available.
// Either a polynomial (exact trigonometric antiderivatives are used for the
// coupling integrals) or uniform samples interpolated by a natural cubic
// spline (composite Gauss-Legendre quadrature).
class DipoleMoment {
 public:
  static DipoleMoment polynomial(std::vector<double> coeffs);
  static DipoleMoment sampled(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

  DipoleMoment(const DipoleMoment&);
  DipoleMoment& operator=(const DipoleMoment&);
  DipoleMoment(DipoleMoment&&) noexcept;
  DipoleMoment& operator=(DipoleMoment&&) noexcept;
  ~DipoleMoment();

  double value(double x) const;
  double deriv(double x) const;
  double deriv2(double x) const;

  bool is_polynomial() const;
  // Coefficients of mu, mu' and (mu')^2 (polynomial representation only).
  const std::vector<double>& coeffs() const;
  std::vector<double> deriv_coeffs() const;
  std::vector<double> grad_squared_coeffs() const;

 private:
  DipoleMoment();
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// int_0^1 f(x) cos(omega x) dx and the sin analogue, where f is either the
// polynomial with the given coefficients (exact antiderivative recurrences)
// or an arbitrary callable (composite Gauss-Legendre).
double poly_cos_integral(const std::vector<double>& coeffs, double omega);
double poly_sin_integral(const std::vector<double>& coeffs, double omega);
double quad_cos_integral(const std::function<double(double)>& f, double omega,
                         int order);
double quad_sin_integral(const std::function<double(double)>& f, double omega,
                         int order);

struct CouplingData {
  int K_max = 0;
  int N = 0;
  Eigen::MatrixXd mu_mat;     // K_max x K_max, entry (j-1,k-1) = <
                              // mu phi_j, phi_k >
  Eigen::VectorXd grad_diag;  // length N, entry j-1 = <(mu')^2 phi_j, phi_j>
  double A_scalar = 0.0;      // m1 g2 - m2 g1
  double B_scalar = 0.0;      // cyclic three-term sum (N = 3 only)
  double combo_531 = 0.0;     // 5 m1 - 8 m2 + 3 m3
  double combo_41 = 0.0;      // 4 m1 - m2
  double diag_gap = 0.0;      // m1 - m2

  double mu(int j, int k) const { return mu_mat(j - 1, k - 1); }
  double mu_diag(int j) const { return mu_mat(j - 1, j - 1); }
  double grad(int j) const { return grad_diag(j - 1); }
};

// <mu phi_j, phi_k> = int_0^1 mu(x) 2 sin(j pi x) sin(k pi x) dx.
double coupling_coefficient(const DipoleMoment& mu, int j, int k,
                            const BasisSpec& spec);

// <(mu')^2 phi_j, phi_j> = int_0^1 mu'(x)^2 2 sin^2(j pi x) dx.
double grad_coupling_coefficient(const DipoleMoment& mu, int j,
                                 const BasisSpec& spec);

CouplingData build_coupling_data(const DipoleMoment& mu, const BasisSpec& spec,
                                 int N);

// Finite-window estimate of the lower coupling bound: c_hat = min over
// 1<=j<=N, 1<=k<=K_max of |<mu phi_j, phi_k>| k^3. An estimate on the
// retained window, not a proof of the asymptotic bound.
struct HypothesisReport {
  double c_hat = 0.0;
  int argmin_j = 0;
  int argmin_k = 0;
  int window_K = 0;
  double threshold = 0.0;
  bool violated = false;  // c_hat <= threshold on the window
};
HypothesisReport check_hypothesis_mu(const CouplingData& data, int N,
                                     double threshold = 1e-12);

}  // namespace qwell
