#include <cmath>
#include <random>

#include "doctest.h"
#include "qwell/dynamics.hpp"
#include "qwell/errors.hpp"
#include "qwell/linearized.hpp"

using namespace qwell;

namespace {

DipoleMoment cubic() { return DipoleMoment::polynomial({0.0, 0.0, 0.0, 1.0}); }

CouplingData data_k(int K, int N = 3) {
  BasisSpec spec;
  spec.K_max = K;
  return build_coupling_data(cubic(), spec, N);
}

ControlSignal random_control(double T, int M, double amplitude, unsigned seed) {
  std::mt19937_64 rng(seed);
  Eigen::VectorXd v(M);
  for (int i = 0; i < M; ++i)
    v(i) = 2.0 * ((rng() >> 11) * (1.0 / 9007199254740992.0)) - 1.0;
  ControlSignal u = ControlSignal::piecewise_constant(T, v);
  u *= amplitude / u.l2_norm();
  return u;
}

ControlSignal smooth_control(double T, int M, double amplitude, unsigned seed) {
  std::mt19937_64 rng(seed);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(M);
  for (int m = 1; m <= 6; ++m) {
    double a = 2.0 * ((rng() >> 11) * (1.0 / 9007199254740992.0)) - 1.0;
    double b = 2.0 * ((rng() >> 11) * (1.0 / 9007199254740992.0)) - 1.0;
    for (int i = 0; i < M; ++i) {
      double t = (i + 0.5) * T / M;
      v(i) += a * std::cos(2 * kPi * m * t / T) + b * std::sin(2 * kPi * m * t / T);
    }
  }
  ControlSignal u = ControlSignal::piecewise_constant(T, v);
  u *= amplitude / u.l2_norm();
  return u;
}

}  // namespace

TEST_SUITE("dynamics") {

TEST_CASE("free evolution: eigenstates pick up exact phases") {
  CouplingData data = data_k(12);
  StateFrame psi0 = eigenstate_frame(3, 12, 0.0);
  Trajectory traj = propagate(psi0, ControlSignal::zero(0.7, 256), data);
  const StateFrame& end = traj.final_frame();
  for (int j = 1; j <= 3; ++j)
    for (int k = 1; k <= 12; ++k) {
      cd want = j == k ? std::exp(cd(0.0, -eigenvalue(j) * 0.7)) : cd(0.0, 0.0);
      CHECK(std::abs(end.coeffs(j - 1, k - 1) - want) < 1e-12);
    }
}

TEST_CASE("unitarity: gram matrix conserved for arbitrary control") {
  CouplingData data = data_k(20);
  StateFrame psi0 = eigenstate_frame(3, 20, 0.0);
  ControlSignal u = random_control(1.5, 2048, 1.0, 11);
  Trajectory traj = propagate(psi0, u, data);
  CHECK(traj.meta.gram_drift < 1e-10);
  CHECK(traj.meta.norm_drift < 1e-10);
}

TEST_CASE("propagate_with_source: zero source consistent with propagate") {
  CouplingData data = data_k(10, 1);
  StateFrame psi0 = eigenstate_frame(1, 10, 0.0);
  ControlSignal u = smooth_control(0.5, 512, 0.4, 3);
  Trajectory a = propagate(psi0, u, data);
  Trajectory b = propagate_with_source(
      psi0, u, [](double) { return Eigen::VectorXcd::Zero(10); }, data);
  CHECK((a.final_frame().coeffs - b.final_frame().coeffs).cwiseAbs().maxCoeff() <
        1e-10);
}

TEST_CASE("propagate_with_source: resonant one-mode closed forms") {
  const int K = 8;
  CouplingData data = data_k(K, 1);
  const double T = 0.4;
  const int M = 1024;
  ControlSignal u = ControlSignal::zero(T, M);

  // f(t) = g(t) Phi_1(t): <psi(T),Phi_1(T)> = <psi0,phi_1> + i int g
  auto g = [](double t) { return std::cos(3.0 * t) + 0.5; };
  auto f = [&](double t) {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(K);
    v(0) = g(t) * std::exp(cd(0.0, -eigenvalue(1) * t));
    return v;
  };
  StateFrame psi0 = eigenstate_frame(1, K, 0.0);
  Trajectory traj = propagate_with_source(psi0, u, f, data);
  cd endpoint = traj.final_frame().coeffs(0, 0) * std::exp(cd(0.0, eigenvalue(1) * T));
  // int_0^T cos(3t) + 0.5 dt = sin(3T)/3 + T/2
  cd want = 1.0 + cd(0.0, 1.0) * (std::sin(3.0 * T) / 3.0 + T / 2.0);
  CHECK(std::abs(endpoint - want) < 1e-10);

  // constant source Phi_2, psi0 = 0: psi(T) = i T Phi_2(T)
  StateFrame zero0 = psi0;
  zero0.coeffs.setZero();
  auto f2 = [&](double t) {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(K);
    v(1) = std::exp(cd(0.0, -eigenvalue(2) * t));
    return v;
  };
  Trajectory traj2 = propagate_with_source(zero0, u, f2, data);
  cd e2 = traj2.final_frame().coeffs(0, 1) * std::exp(cd(0.0, eigenvalue(2) * T));
  CHECK(std::abs(e2 - cd(0.0, T)) < 1e-10);
}

TEST_CASE("linearized around free trajectory matches the closed form exactly") {
  const int K = 24;
  CouplingData data = data_k(K);
  const double T = 0.8;
  const int M = 1024;
  ControlSignal v = random_control(T, M, 0.7, 99);
  StateFrame ref0 = eigenstate_frame(3, K, 0.0);
  StateFrame zero = ref0;
  zero.coeffs.setZero();
  Trajectory lin =
      propagate_linearized(ControlSignal::zero(T, M), ref0, v, zero, data);
  Eigen::MatrixXcd got = endpoint_vs_eigenstates(lin.final_frame());
  Eigen::MatrixXcd want = first_order_endpoint(v, data, 3, K);
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("linearized: v=0 with zero initial state stays zero; conservation") {
  const int K = 16;
  CouplingData data = data_k(K);
  const double T = 0.5;
  const int M = 512;
  StateFrame ref0 = eigenstate_frame(3, K, 0.0);
  StateFrame zero = ref0;
  zero.coeffs.setZero();
  Trajectory lin = propagate_linearized(smooth_control(T, M, 0.3, 5), ref0,
                                        ControlSignal::zero(T, M), zero, data);
  CHECK(lin.final_frame().coeffs.cwiseAbs().maxCoeff() == 0.0);

  // Re<Psi^j(T), psi_ref^j(T)> = 0 when Psi0 = 0 (membership in the
  // controllable space)
  ControlSignal uref = smooth_control(T, M, 0.3, 21);
  ControlSignal v = smooth_control(T, M, 0.4, 22);
  Trajectory ref = propagate(ref0, uref, data);
  Trajectory lin2 = propagate_linearized(uref, ref0, v, zero, data);
  for (int j = 0; j < 3; ++j) {
    cd overlap = ref.final_frame()
                     .coeffs.row(j)
                     .dot(lin2.final_frame().coeffs.row(j).transpose());
    CHECK(std::abs(overlap.real()) < 1e-8);
  }
}

TEST_CASE("nonlinear-vs-linearized epsilon sweep has slope 2") {
  const int K = 16;
  CouplingData data = data_k(K);
  const double T = 0.4;
  const int M = 1024;
  ControlSignal shape = smooth_control(T, M, 1.0, 17);
  StateFrame ref0 = eigenstate_frame(3, K, 0.0);
  StateFrame zero = ref0;
  zero.coeffs.setZero();
  Trajectory lin =
      propagate_linearized(ControlSignal::zero(T, M), ref0, shape, zero, data);

  std::vector<double> eps = {1e-1, 1e-2, 1e-3};
  std::vector<double> err;
  for (double e : eps) {
    Trajectory nl = propagate(ref0, shape.scaled(e), data);
    Eigen::MatrixXcd diff = nl.final_frame().coeffs -
                            eigenstate_frame(3, K, T).coeffs -
                            e * lin.final_frame().coeffs;
    err.push_back(diff.cwiseAbs().maxCoeff());
  }
  double slope01 = std::log(err[0] / err[1]) / std::log(10.0);
  double slope12 = std::log(err[1] / err[2]) / std::log(10.0);
  CHECK(slope01 == doctest::Approx(2.0).epsilon(0.06));
  CHECK(slope12 == doctest::Approx(2.0).epsilon(0.06));
}

TEST_CASE("integrator is second order against a refined reference") {
  const int K = 12;
  CouplingData data = data_k(K);
  const double T = 0.3;
  ControlSignal u_fine = smooth_control(T, 4096, 0.8, 31);
  StateFrame psi0 = eigenstate_frame(2, K, 0.0);
  Trajectory ref = propagate(psi0, u_fine, data);

  auto coarsen = [&](int factor) {
    Eigen::VectorXd v(4096 / factor);
    for (int i = 0; i < v.size(); ++i) v(i) = u_fine.values()(i * factor);
    // same underlying control shape sampled coarsely: compare endpoint drift
    return ControlSignal::piecewise_constant(T, v);
  };
  // halving dt reduces the endpoint error by ~4
  Trajectory c2 = propagate(psi0, coarsen(2), data);
  Trajectory c4 = propagate(psi0, coarsen(4), data);
  double e2 = (c2.final_frame().coeffs - ref.final_frame().coeffs).norm();
  double e4 = (c4.final_frame().coeffs - ref.final_frame().coeffs).norm();
  CHECK(e4 / e2 > 2.5);
  CHECK(e4 / e2 < 6.5);
}

TEST_CASE("weighted h3 norm") {
  Eigen::VectorXcd a = Eigen::VectorXcd::Zero(5);
  a(0) = 1.0;
  CHECK(weighted_h3_norm(a) == doctest::Approx(1.0));
  a.setZero();
  a(3) = 1.0;  // e_4 -> 4^3
  CHECK(weighted_h3_norm(a) == doctest::Approx(64.0));
  a.setZero();
  a(1) = cd(0.0, 3.0);
  a(2) = 4.0;
  CHECK(weighted_h3_norm(a) == doctest::Approx(std::sqrt(576.0 + 11664.0)));
}

TEST_CASE("auxiliary system: free evolution and norm conservation") {
  BasisSpec spec;
  spec.K_max = 16;
  auto mu = cubic();
  AuxOperators ops = assemble_aux_operators(mu, spec);
  // D1 antisymmetric, W symmetric
  CHECK((ops.D1 + ops.D1.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((ops.W - ops.W.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  // identity <B phi_a, phi_k> = (lam_a - lam_k) <mu phi_a, phi_k>
  CouplingData data = data_k(16);
  for (int k = 1; k <= 6; ++k)
    for (int a = 1; a <= 6; ++a)
      CHECK(ops.D1(k - 1, a - 1) ==
            doctest::Approx((eigenvalue(a) - eigenvalue(k)) * data.mu(a, k))
                .epsilon(1e-9));

  StateFrame psi0 = eigenstate_frame(2, 16, 0.0);
  const int M = 256;
  ControlSignal s0 = ControlSignal::piecewise_linear(0.3, Eigen::VectorXd::Zero(M + 1));
  Trajectory free_run = propagate_auxiliary(s0, ops, psi0);
  for (int j = 1; j <= 2; ++j) {
    cd want = std::exp(cd(0.0, -eigenvalue(j) * 0.3));
    CHECK(std::abs(free_run.final_frame().coeffs(j - 1, j - 1) - want) < 1e-12);
  }

  Eigen::VectorXd nodes(M + 1);
  for (int i = 0; i <= M; ++i) nodes(i) = 0.05 * std::sin(kPi * i / M);
  ControlSignal s = ControlSignal::piecewise_linear(0.3, nodes);
  Trajectory run = propagate_auxiliary(s, ops, psi0);
  CHECK(run.meta.norm_drift < 1e-10);
  CHECK(run.meta.gram_drift < 1e-10);
}

TEST_CASE("aux transform: identity, unitarity, round trip") {
  BasisSpec spec;
  spec.K_max = 20;
  auto mu = cubic();
  StateFrame psi = eigenstate_frame(2, 20, 0.13);
  psi.coeffs(0, 4) = cd(0.2, -0.1);
  psi.coeffs.row(0) /= psi.coeffs.row(0).norm();

  StateFrame same = aux_transform(psi, 0.0, mu, spec, AuxDirection::Forward);
  CHECK((same.coeffs - psi.coeffs).cwiseAbs().maxCoeff() < 1e-12);

  const double sval = 0.08;
  StateFrame fwd = aux_transform(psi, sval, mu, spec, AuxDirection::Forward);
  for (int j = 0; j < 2; ++j)
    CHECK(fwd.coeffs.row(j).norm() == doctest::Approx(1.0).epsilon(1e-9));
  StateFrame back = aux_transform(fwd, sval, mu, spec, AuxDirection::Inverse);
  CHECK((back.coeffs - psi.coeffs).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("gauge equivalence: aux propagation + multiplication = nonlinear") {
  BasisSpec spec;
  spec.K_max = 48;
  auto mu = cubic();
  CouplingData data = build_coupling_data(mu, spec, 2);
  AuxOperators ops = assemble_aux_operators(mu, spec);

  const double T = 0.25;
  const int M = 1024;
  ControlSignal u = smooth_control(T, M, 0.15, 77);
  ControlSignal s = u.primitive();

  StateFrame psi0 = eigenstate_frame(2, 48, 0.0);
  Trajectory nl = propagate(psi0, u, data);
  Trajectory aux = propagate_auxiliary(s, ops, psi0);
  const double sT = s.values()(M);
  StateFrame transformed =
      aux_transform(aux.final_frame(), sT, mu, spec, AuxDirection::Forward);
  double err = 0.0;
  for (int j = 0; j < 2; ++j)
    err = std::max(err, (transformed.coeffs.row(j) - nl.final_frame().coeffs.row(j))
                            .norm());
  CHECK(err < 1e-6);
}

TEST_CASE("input validation") {
  CouplingData data = data_k(8);
  StateFrame psi0 = eigenstate_frame(2, 8, 0.0);
  StateFrame wrong = eigenstate_frame(2, 6, 0.0);
  ControlSignal u = ControlSignal::zero(1.0, 16);
  CHECK_THROWS_AS(propagate(wrong, u, data), InputError);
  CHECK_THROWS_AS(propagate_linearized(u, psi0, ControlSignal::zero(1.0, 32),
                                       psi0, data),
                  InputError);
}

}  // TEST_SUITE
