#include <cmath>

#include "doctest.h"
#include "qwell/errors.hpp"
#include "qwell/spectral.hpp"

using namespace qwell;

namespace {

// independent oracle: composite Simpson on a fine grid
double simpson_integral(const std::function<double(double)>& f, int n = 200001) {
  double h = 1.0 / (n - 1);
  double acc = f(0.0) + f(1.0);
  for (int i = 1; i < n - 1; ++i) acc += f(i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

const BasisSpec spec{};  // K_max = 30

DipoleMoment cubic() { return DipoleMoment::polynomial({0.0, 0.0, 0.0, 1.0}); }

}  // namespace

TEST_SUITE("spectral") {

TEST_CASE("eigenvalues are (k pi)^2 exactly") {
  CHECK(eigenvalue(1) == kPi * kPi);
  CHECK(eigenvalue(5) == 25.0 * kPi * kPi);
}

TEST_CASE("gauss-legendre integrates high-degree polynomials exactly") {
  QuadratureRule r = gauss_legendre(12);
  // int_{-1}^{1} x^22 dx = 2/23
  double acc = 0.0;
  for (int q = 0; q < r.nodes.size(); ++q)
    acc += r.weights(q) * std::pow(r.nodes(q), 22);
  CHECK(acc == doctest::Approx(2.0 / 23.0).epsilon(1e-14));
}

TEST_CASE("coupling coefficient mu=x^3: analytic antiderivative values") {
  auto mu = cubic();
  // 1/4 - 3/(4 pi^2) and 1/4 - 3/(16 pi^2)
  const double c11 = 0.25 - 3.0 / (4.0 * kPi * kPi);
  const double c22 = 0.25 - 3.0 / (16.0 * kPi * kPi);
  CHECK(coupling_coefficient(mu, 1, 1, spec) == doctest::Approx(c11).epsilon(1e-12));
  CHECK(coupling_coefficient(mu, 2, 2, spec) == doctest::Approx(c22).epsilon(1e-12));
  // cross-check against blind quadrature
  double q11 = simpson_integral([](double x) {
    return x * x * x * 2.0 * std::sin(kPi * x) * std::sin(kPi * x);
  });
  CHECK(coupling_coefficient(mu, 1, 1, spec) == doctest::Approx(q11).epsilon(1e-10));
}

TEST_CASE("coupling coefficient: zero dipole and symmetry") {
  auto zero = DipoleMoment::polynomial({0.0});
  CHECK(coupling_coefficient(zero, 1, 3, spec) == 0.0);
  auto mu = cubic();
  for (int j = 1; j <= 5; ++j)
    for (int k = j; k <= 5; ++k)
      CHECK(coupling_coefficient(mu, j, k, spec) ==
            doctest::Approx(coupling_coefficient(mu, k, j, spec)).epsilon(1e-12));
}

TEST_CASE("coupling coefficient is linear in mu") {
  auto mu1 = DipoleMoment::polynomial({0.0, 1.0});        // x
  auto mu2 = DipoleMoment::polynomial({0.0, 0.0, 1.0});   // x^2
  auto mix = DipoleMoment::polynomial({0.0, 2.0, -3.0});  // 2x - 3x^2
  double c1 = coupling_coefficient(mu1, 1, 2, spec);
  double c2 = coupling_coefficient(mu2, 1, 2, spec);
  double cm = coupling_coefficient(mix, 1, 2, spec);
  CHECK(cm == doctest::Approx(2.0 * c1 - 3.0 * c2).epsilon(1e-12));
}

TEST_CASE("grad coupling mu=x^3") {
  auto mu = cubic();
  const double w1 = 2.0 * kPi, w2 = 4.0 * kPi;
  // 9 (1/5 - 4/w^2 + 24/w^4)
  const double g1 = 9.0 * (0.2 - 4.0 / (w1 * w1) + 24.0 / std::pow(w1, 4));
  const double g2 = 9.0 * (0.2 - 4.0 / (w2 * w2) + 24.0 / std::pow(w2, 4));
  CHECK(grad_coupling_coefficient(mu, 1, spec) == doctest::Approx(g1).epsilon(1e-12));
  CHECK(grad_coupling_coefficient(mu, 2, spec) == doctest::Approx(g2).epsilon(1e-12));
  auto constant = DipoleMoment::polynomial({0.7});
  CHECK(grad_coupling_coefficient(constant, 1, spec) == doctest::Approx(0.0));
}

TEST_CASE("build_coupling_data mu=x^3 scalars") {
  CouplingData d = build_coupling_data(cubic(), spec, 3);
  CHECK(d.A_scalar == doctest::Approx(0.0378842710).epsilon(1e-8));
  CHECK(d.A_scalar > 0.0);
  CHECK(d.diag_gap == doctest::Approx(-0.0569932).epsilon(1e-5));
  CHECK(d.B_scalar == doctest::Approx(0.000975151).epsilon(1e-5));
  CHECK(d.combo_531 == doctest::Approx(-0.2533030).epsilon(1e-6));
  CHECK(d.combo_41 == doctest::Approx(0.4650342).epsilon(1e-6));
  CHECK((d.mu_mat - d.mu_mat.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("degenerate dipoles: constant and mu=x") {
  CouplingData dc = build_coupling_data(DipoleMoment::polynomial({1.0}), spec, 3);
  CHECK(dc.A_scalar == doctest::Approx(0.0));
  CHECK(dc.B_scalar == doctest::Approx(0.0));
  // mu = x has equal diagonal couplings (1/2) and (mu')^2 = 1
  CouplingData dx =
      build_coupling_data(DipoleMoment::polynomial({0.0, 1.0}), spec, 2);
  CHECK(dx.mu_diag(1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(dx.mu_diag(2) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(dx.A_scalar == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("A and B are odd under mu -> -mu") {
  CouplingData dp = build_coupling_data(cubic(), spec, 3);
  CouplingData dm =
      build_coupling_data(DipoleMoment::polynomial({0.0, 0.0, 0.0, -1.0}), spec, 3);
  CHECK(dm.A_scalar == doctest::Approx(-dp.A_scalar).epsilon(1e-12));
  CHECK(dm.B_scalar == doctest::Approx(-dp.B_scalar).epsilon(1e-10));
}

TEST_CASE("hypothesis check: decay window estimate") {
  BasisSpec wide;
  wide.K_max = 20;
  CouplingData d = build_coupling_data(cubic(), wide, 2);
  HypothesisReport rep = check_hypothesis_mu(d, 2);
  CHECK(rep.c_hat > 0.0);
  CHECK_FALSE(rep.violated);
  CHECK(rep.window_K == 20);

  // mu symmetric about 1/2: <mu phi_1, phi_2> = 0 (odd integrand)
  CouplingData ds = build_coupling_data(
      DipoleMoment::polynomial({0.0, 1.0, -1.0}), wide, 2);  // x(1-x)
  HypothesisReport rs = check_hypothesis_mu(ds, 2);
  CHECK(rs.c_hat == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rs.violated);
  CHECK(((rs.argmin_j == 1 && rs.argmin_k == 2) ||
         (rs.argmin_j == 2 && rs.argmin_k == 1)));

  CouplingData dz = build_coupling_data(DipoleMoment::polynomial({0.0}), wide, 2);
  CHECK(check_hypothesis_mu(dz, 2).c_hat == 0.0);
}

TEST_CASE("decay |<mu phi_j,phi_k>| k^3 bounded below for mu=x^3") {
  BasisSpec wide;
  wide.K_max = 50;
  CouplingData d = build_coupling_data(cubic(), wide, 2);
  double lo = 1e300;
  for (int j = 1; j <= 2; ++j)
    for (int k = 1; k <= 50; ++k)
      lo = std::min(lo, std::abs(d.mu(j, k)) * std::pow(k, 3));
  CHECK(lo > 0.05);
}

TEST_CASE("sampled dipole reproduces the polynomial path") {
  const int n = 801;
  Eigen::VectorXd x(n), y(n);
  for (int i = 0; i < n; ++i) {
    x(i) = static_cast<double>(i) / (n - 1);
    y(i) = std::pow(x(i), 3);
  }
  auto mu_s = DipoleMoment::sampled(x, y);
  auto mu_p = cubic();
  CHECK(coupling_coefficient(mu_s, 1, 1, spec) ==
        doctest::Approx(coupling_coefficient(mu_p, 1, 1, spec)).epsilon(1e-7));
  CHECK(mu_s.deriv(0.5) == doctest::Approx(0.75).epsilon(1e-4));
  CHECK(mu_s.deriv2(0.5) == doctest::Approx(3.0).epsilon(1e-2));
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(coupling_coefficient(cubic(), 0, 1, spec), InputError);
  CHECK_THROWS_AS(build_coupling_data(cubic(), spec, 4), InputError);
  BasisSpec tiny;
  tiny.K_max = 3;
  CHECK_THROWS_AS(build_coupling_data(cubic(), tiny, 3), InputError);
  CHECK_THROWS_AS(DipoleMoment::polynomial({1.0, std::nan("")}), InputError);
}

}  // TEST_SUITE
