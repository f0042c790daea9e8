#include <cmath>
#include <random>

#include "doctest.h"
#include "qwell/errors.hpp"
#include "qwell/signal.hpp"
#include "qwell/spectral.hpp"

using namespace qwell;

namespace {

// brute-force oracle for the oscillatory integrals: fine midpoint rule
cd brute_moment(const ControlSignal& v, double omega, double t0, int oversample) {
  const double d = v.dt() / oversample;
  cd acc{0.0, 0.0};
  for (int i = 0; i < v.intervals() * oversample; ++i) {
    double tl = i * d;
    double tm = tl + d / 2;
    acc += v.value_at(tm) * std::exp(cd(0.0, omega * (t0 + tm))) * d;
  }
  return acc;
}

cd brute_double_conv(const ControlSignal& s, double omega, int oversample) {
  const double d = s.dt() / oversample;
  const int n = s.intervals() * oversample;
  cd acc{0.0, 0.0};
  cd inner{0.0, 0.0};
  for (int i = 0; i < n; ++i) {
    double tm = i * d + d / 2;
    cd here = s.value_at(tm) * std::exp(cd(0.0, -omega * tm)) * d;
    acc += s.value_at(tm) * std::exp(cd(0.0, omega * tm)) * (inner + here / 2.0) * d;
    inner += here;
  }
  return acc;
}

}  // namespace

TEST_SUITE("signal") {

TEST_CASE("l2 norm exact for pwc") {
  Eigen::VectorXd v(4);
  v << 1.0, -2.0, 0.5, 3.0;
  ControlSignal u = ControlSignal::piecewise_constant(2.0, v);
  CHECK(u.l2_norm_sq() ==
        doctest::Approx((1.0 + 4.0 + 0.25 + 9.0) * 0.5).epsilon(1e-15));
}

TEST_CASE("primitive of pwc is pwl with exact endpoint") {
  Eigen::VectorXd v(3);
  v << 2.0, -1.0, 4.0;
  ControlSignal u = ControlSignal::piecewise_constant(3.0, v);
  ControlSignal s = u.primitive();
  CHECK(s.kind() == SignalKind::PiecewiseLinear);
  CHECK(s.values()(0) == 0.0);
  CHECK(s.values()(3) == doctest::Approx(u.integral()).epsilon(1e-15));
  CHECK(u.integral() == doctest::Approx(5.0));
}

TEST_CASE("power_exp_moment matches series and closed form across the seam") {
  for (double wd : {1e-8, 1e-3, 0.49, 0.51, 2.0, 20.0}) {
    double delta = 0.1;
    double omega = wd / delta;
    // reference by fine quadrature
    for (int p = 0; p <= 2; ++p) {
      cd ref{0.0, 0.0};
      int n = 20000;
      for (int i = 0; i < n; ++i) {
        double x = (i + 0.5) * delta / n;
        ref += std::pow(x, p) * std::exp(cd(0.0, omega * x)) * (delta / n);
      }
      cd got = power_exp_moment(p, omega, delta);
      CHECK(std::abs(got - ref) < 1e-9 * (1.0 + std::abs(ref)));
    }
  }
}

TEST_CASE("double_exp_integral against quadrature") {
  const double delta = 0.05;
  for (auto [w1, w2] : std::vector<std::pair<double, double>>{
           {300.0, 200.0}, {300.0, 0.0}, {300.0, 3.0}, {0.0, 150.0}, {5.0, -5.0}}) {
    cd ref{0.0, 0.0};
    int n = 4000;
    for (int i = 0; i < n; ++i) {
      double tau = (i + 0.5) * delta / n;
      cd inner = w2 == 0.0 ? cd(tau, 0.0)
                           : (std::exp(cd(0.0, w2 * tau)) - 1.0) / cd(0.0, w2);
      ref += std::exp(cd(0.0, w1 * tau)) * inner * (delta / n);
    }
    cd got = double_exp_integral(w1, w2, delta);
    CHECK(std::abs(got - ref) < 1e-8 * (1.0 + std::abs(ref)));
  }
}

TEST_CASE("signal_moment exact for pwc against oversampled quadrature") {
  std::mt19937_64 rng(42);
  Eigen::VectorXd v(64);
  for (int i = 0; i < 64; ++i)
    v(i) = 2.0 * ((rng() >> 11) * (1.0 / 9007199254740992.0)) - 1.0;
  ControlSignal u = ControlSignal::piecewise_constant(0.8, v);
  for (double omega : {0.0, 3.0 * kPi * kPi, 35.0 * kPi * kPi}) {
    cd exact = signal_moment(u, omega, 0.3);
    cd ref = brute_moment(u, omega, 0.3, 400);
    CHECK(std::abs(exact - ref) < 2e-6 * (1.0 + std::abs(ref)));
  }
}

TEST_CASE("signal_moment exact for pwl") {
  Eigen::VectorXd nodes(9);
  for (int i = 0; i <= 8; ++i) nodes(i) = std::sin(0.7 * i) + 0.2 * i;
  ControlSignal s = ControlSignal::piecewise_linear(0.4, nodes);
  double omega = 5.0 * kPi * kPi;
  cd exact = signal_moment(s, omega);
  cd ref = brute_moment(s, omega, 0.0, 2000);
  CHECK(std::abs(exact - ref) < 1e-7 * (1.0 + std::abs(ref)));
}

TEST_CASE("double_conv_moment exact for pwc and pwl") {
  std::mt19937_64 rng(7);
  Eigen::VectorXd v(32);
  for (int i = 0; i < 32; ++i)
    v(i) = 2.0 * ((rng() >> 11) * (1.0 / 9007199254740992.0)) - 1.0;
  ControlSignal u = ControlSignal::piecewise_constant(0.25, v);
  ControlSignal s = u.primitive();
  for (double omega : {3.0 * kPi * kPi, 24.0 * kPi * kPi}) {
    CHECK(std::abs(double_conv_moment(u, omega) - brute_double_conv(u, omega, 600)) <
          5e-7);
    CHECK(std::abs(double_conv_moment(s, omega) - brute_double_conv(s, omega, 600)) <
          5e-7);
  }
}

TEST_CASE("grid mismatch and bad input rejected") {
  ControlSignal a = ControlSignal::zero(1.0, 8);
  ControlSignal b = ControlSignal::zero(1.0, 16);
  CHECK_THROWS_AS(a += b, InputError);
  CHECK_THROWS_AS(ControlSignal::piecewise_constant(-1.0, Eigen::VectorXd::Zero(4)),
                  InputError);
}

}  // TEST_SUITE
