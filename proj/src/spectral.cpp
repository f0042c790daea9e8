#include "qwell/spectral.hpp"

#include <gsl/gsl_interp.h>
#include <gsl/gsl_spline.h>

#include <cmath>
#include <limits>

#include "qwell/errors.hpp"

namespace qwell {

QuadratureRule gauss_legendre(int n) {
  if (n < 1) throw InputError("gauss_legendre: order must be positive");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  // Newton iteration on Legendre polynomials, symmetric roots.
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule.nodes(i) = -x;
    rule.nodes(n - 1 - i) = x;
    rule.weights(i) = 2.0 / ((1.0 - x * x) * pp * pp);
    rule.weights(n - 1 - i) = rule.weights(i);
  }
  return rule;
}

namespace {

std::vector<double> poly_derive(const std::vector<double>& c) {
  std::vector<double> d;
  for (size_t n = 1; n < c.size(); ++n) d.push_back(c[n] * static_cast<double>(n));
  if (d.empty()) d.push_back(0.0);
  return d;
}

std::vector<double> poly_multiply(const std::vector<double>& a,
                                  const std::vector<double>& b) {
  std::vector<double> p(a.size() + b.size() - 1, 0.0);
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < b.size(); ++j) p[i + j] += a[i] * b[j];
  return p;
}

double poly_eval(const std::vector<double>& c, double x) {
  double v = 0.0;
  for (size_t n = c.size(); n-- > 0;) v = v * x + c[n];
  return v;
}

// I_n = int_0^1 x^n cos(w x) dx, J_n = int_0^1 x^n sin(w x) dx.
// Upward recurrence; stable while n <~ |w|, quadrature fallback otherwise.
void power_trig_integrals(int n_max, double omega, std::vector<double>& I,
                          std::vector<double>& J) {
  I.assign(n_max + 1, 0.0);
  J.assign(n_max + 1, 0.0);
  const double aw = std::abs(omega);
  if (aw < 1e-12) {
    for (int n = 0; n <= n_max; ++n) {
      I[n] = 1.0 / (n + 1);
      J[n] = omega / (n + 2);  // leading term, exact enough at |w| ~ 0
    }
    return;
  }
  const double s = std::sin(omega), c = std::cos(omega);
  I[0] = s / omega;
  J[0] = (1.0 - c) / omega;
  for (int n = 1; n <= n_max; ++n) {
    I[n] = s / omega - (n / omega) * J[n - 1];
    J[n] = -c / omega + (n / omega) * I[n - 1];
  }
  if (n_max > 8 && aw < 2.0 * n_max) {
    // recurrence loses digits; recompute the unstable range by quadrature
    QuadratureRule rule = gauss_legendre(16);
    int panels = std::max(4, static_cast<int>(std::ceil(aw / kPi)) + 2);
    for (int n = 9; n <= n_max; ++n) {
      double vi = 0.0, vj = 0.0;
      for (int p = 0; p < panels; ++p) {
        double a = static_cast<double>(p) / panels,
               b = static_cast<double>(p + 1) / panels;
        double half = 0.5 * (b - a), mid = 0.5 * (a + b);
        for (int q = 0; q < rule.nodes.size(); ++q) {
          double x = mid + half * rule.nodes(q);
          double w = half * rule.weights(q) * std::pow(x, n);
          vi += w * std::cos(omega * x);
          vj += w * std::sin(omega * x);
        }
      }
      I[n] = vi;
      J[n] = vj;
    }
  }
}

}  // namespace

double poly_cos_integral(const std::vector<double>& coeffs, double omega) {
  std::vector<double> I, J;
  power_trig_integrals(static_cast<int>(coeffs.size()) - 1, omega, I, J);
  double v = 0.0;
  for (size_t n = 0; n < coeffs.size(); ++n) v += coeffs[n] * I[n];
  return v;
}

double poly_sin_integral(const std::vector<double>& coeffs, double omega) {
  std::vector<double> I, J;
  power_trig_integrals(static_cast<int>(coeffs.size()) - 1, omega, I, J);
  double v = 0.0;
  for (size_t n = 0; n < coeffs.size(); ++n) v += coeffs[n] * J[n];
  return v;
}

namespace {

double quad_trig_integral(const std::function<double(double)>& f, double omega,
                          int order, bool use_sin) {
  QuadratureRule rule = gauss_legendre(order);
  int panels = std::max(8, static_cast<int>(std::ceil(std::abs(omega) / kPi)) + 2);
  double v = 0.0;
  for (int p = 0; p < panels; ++p) {
    double a = static_cast<double>(p) / panels,
           b = static_cast<double>(p + 1) / panels;
    double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (int q = 0; q < rule.nodes.size(); ++q) {
      double x = mid + half * rule.nodes(q);
      double trig = use_sin ? std::sin(omega * x) : std::cos(omega * x);
      v += half * rule.weights(q) * f(x) * trig;
    }
  }
  return v;
}

}  // namespace

double quad_cos_integral(const std::function<double(double)>& f, double omega,
                         int order) {
  return quad_trig_integral(f, omega, order, false);
}

double quad_sin_integral(const std::function<double(double)>& f, double omega,
                         int order) {
  return quad_trig_integral(f, omega, order, true);
}

struct DipoleMoment::Impl {
  bool poly = false;
  std::vector<double> coeffs;

  gsl_spline* spline = nullptr;
  gsl_interp_accel* acc = nullptr;
  std::vector<double> xs, ys;

  ~Impl() {
    if (spline) gsl_spline_free(spline);
    if (acc) gsl_interp_accel_free(acc);
  }
};

DipoleMoment::DipoleMoment() : impl_(std::make_unique<Impl>()) {}
DipoleMoment::~DipoleMoment() = default;
DipoleMoment::DipoleMoment(DipoleMoment&&) noexcept = default;
DipoleMoment& DipoleMoment::operator=(DipoleMoment&&) noexcept = default;

DipoleMoment::DipoleMoment(const DipoleMoment& other)
    : impl_(std::make_unique<Impl>()) {
  impl_->poly = other.impl_->poly;
  impl_->coeffs = other.impl_->coeffs;
  if (other.impl_->spline) {
    impl_->xs = other.impl_->xs;
    impl_->ys = other.impl_->ys;
    impl_->acc = gsl_interp_accel_alloc();
    impl_->spline = gsl_spline_alloc(gsl_interp_cspline, impl_->xs.size());
    gsl_spline_init(impl_->spline, impl_->xs.data(), impl_->ys.data(),
                    impl_->xs.size());
  }
}

DipoleMoment& DipoleMoment::operator=(const DipoleMoment& other) {
  if (this != &other) *this = DipoleMoment(other);
  return *this;
}

DipoleMoment DipoleMoment::polynomial(std::vector<double> coeffs) {
  if (coeffs.empty()) coeffs.push_back(0.0);
  for (double c : coeffs)
    if (!std::isfinite(c)) throw InputError("dipole: non-finite coefficient");
  DipoleMoment mu;
  mu.impl_->poly = true;
  mu.impl_->coeffs = std::move(coeffs);
  return mu;
}

DipoleMoment DipoleMoment::sampled(const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& y) {
  if (x.size() != y.size() || x.size() < 4)
    throw InputError("dipole: need >= 4 samples with matching x, y");
  for (int i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x(i)) || !std::isfinite(y(i)))
      throw InputError("dipole: non-finite sample");
    if (i > 0 && x(i) <= x(i - 1))
      throw InputError("dipole: sample abscissae must increase");
  }
  if (x(0) > 0.0 || x(x.size() - 1) < 1.0)
    throw InputError("dipole: samples must cover [0,1]");
  DipoleMoment mu;
  mu.impl_->poly = false;
  mu.impl_->xs.assign(x.data(), x.data() + x.size());
  mu.impl_->ys.assign(y.data(), y.data() + y.size());
  mu.impl_->acc = gsl_interp_accel_alloc();
  mu.impl_->spline = gsl_spline_alloc(gsl_interp_cspline, mu.impl_->xs.size());
  gsl_spline_init(mu.impl_->spline, mu.impl_->xs.data(), mu.impl_->ys.data(),
                  mu.impl_->xs.size());
  return mu;
}

bool DipoleMoment::is_polynomial() const { return impl_->poly; }

const std::vector<double>& DipoleMoment::coeffs() const {
  if (!impl_->poly)
    throw InputError("dipole: coefficients only available for polynomials");
  return impl_->coeffs;
}

std::vector<double> DipoleMoment::deriv_coeffs() const {
  return poly_derive(coeffs());
}

std::vector<double> DipoleMoment::grad_squared_coeffs() const {
  auto d = poly_derive(coeffs());
  return poly_multiply(d, d);
}

double DipoleMoment::value(double x) const {
  if (impl_->poly) return poly_eval(impl_->coeffs, x);
  return gsl_spline_eval(impl_->spline, x, impl_->acc);
}

double DipoleMoment::deriv(double x) const {
  if (impl_->poly) return poly_eval(poly_derive(impl_->coeffs), x);
  return gsl_spline_eval_deriv(impl_->spline, x, impl_->acc);
}

double DipoleMoment::deriv2(double x) const {
  if (impl_->poly) return poly_eval(poly_derive(poly_derive(impl_->coeffs)), x);
  return gsl_spline_eval_deriv2(impl_->spline, x, impl_->acc);
}

double coupling_coefficient(const DipoleMoment& mu, int j, int k,
                            const BasisSpec& spec) {
  if (j < 1 || k < 1 || j > spec.K_max || k > spec.K_max)
    throw InputError("coupling_coefficient: mode index out of range");
  const double w_minus = (j - k) * kPi, w_plus = (j + k) * kPi;
  if (mu.is_polynomial()) {
    const auto& c = mu.coeffs();
    return poly_cos_integral(c, w_minus) - poly_cos_integral(c, w_plus);
  }
  auto f = [&mu](double x) { return mu.value(x); };
  return quad_cos_integral(f, w_minus, spec.quadrature_order) -
         quad_cos_integral(f, w_plus, spec.quadrature_order);
}

double grad_coupling_coefficient(const DipoleMoment& mu, int j,
                                 const BasisSpec& spec) {
  if (j < 1 || j > spec.K_max)
    throw InputError("grad_coupling_coefficient: mode index out of range");
  const double w = 2.0 * j * kPi;
  if (mu.is_polynomial()) {
    auto g2 = mu.grad_squared_coeffs();
    return poly_cos_integral(g2, 0.0) - poly_cos_integral(g2, w);
  }
  auto f = [&mu](double x) {
    double d = mu.deriv(x);
    return d * d;
  };
  return quad_cos_integral(f, 0.0, spec.quadrature_order) -
         quad_cos_integral(f, w, spec.quadrature_order);
}

CouplingData build_coupling_data(const DipoleMoment& mu, const BasisSpec& spec,
                                 int N) {
  if (N < 1 || N > 3) throw InputError("build_coupling_data: N must be 1, 2 or 3");
  if (spec.K_max < N + 2)
    throw InputError("build_coupling_data: K_max must be at least N + 2");

  CouplingData data;
  data.K_max = spec.K_max;
  data.N = N;
  const int K = spec.K_max;

  // mu_mat via the scalar kernels A(q) = int mu cos(q pi x): entry (j,k) is
  // A(|j-k|) - A(j+k).
  Eigen::VectorXd A(2 * K + 1);
  for (int q = 0; q <= 2 * K; ++q) {
    if (mu.is_polynomial()) {
      A(q) = poly_cos_integral(mu.coeffs(), q * kPi);
    } else {
      auto f = [&mu](double x) { return mu.value(x); };
      A(q) = quad_cos_integral(f, q * kPi, spec.quadrature_order);
    }
  }
  data.mu_mat.resize(K, K);
  for (int j = 1; j <= K; ++j)
    for (int k = 1; k <= K; ++k)
      data.mu_mat(j - 1, k - 1) = A(std::abs(j - k)) - A(j + k);

  data.grad_diag.resize(N);
  for (int j = 1; j <= N; ++j)
    data.grad_diag(j - 1) = grad_coupling_coefficient(mu, j, spec);

  const double m1 = data.mu_diag(1), m2 = data.mu_diag(2), m3 = data.mu_diag(3);
  data.combo_531 = 5.0 * m1 - 8.0 * m2 + 3.0 * m3;
  data.combo_41 = 4.0 * m1 - m2;
  data.diag_gap = m1 - m2;
  if (N >= 2) data.A_scalar = m1 * data.grad(2) - m2 * data.grad(1);
  if (N >= 3)
    data.B_scalar = (m3 - m2) * data.grad(1) + (m1 - m3) * data.grad(2) +
                    (m2 - m1) * data.grad(3);

  if (!data.mu_mat.allFinite() || !data.grad_diag.allFinite())
    throw NumericalError("build_coupling_data: non-finite coupling entries");
  return data;
}

HypothesisReport check_hypothesis_mu(const CouplingData& data, int N,
                                     double threshold) {
  HypothesisReport report;
  report.window_K = data.K_max;
  report.threshold = threshold;
  report.c_hat = std::numeric_limits<double>::infinity();
  for (int j = 1; j <= N; ++j) {
    for (int k = 1; k <= data.K_max; ++k) {
      double val = std::abs(data.mu(j, k)) * std::pow(k, 3);
      if (val < report.c_hat) {
        report.c_hat = val;
        report.argmin_j = j;
        report.argmin_k = k;
      }
    }
  }
  report.violated = report.c_hat <= threshold;
  return report;
}

}  // namespace qwell
