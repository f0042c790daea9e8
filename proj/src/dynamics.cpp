#include "qwell/dynamics.hpp"

#include <cmath>

#include "qwell/errors.hpp"

namespace qwell {

namespace {
constexpr cd kI{0.0, 1.0};
}

StateFrame eigenstate_frame(int N, int K, double t) {
  StateFrame f;
  f.t = t;
  f.coeffs = Eigen::MatrixXcd::Zero(N, K);
  for (int j = 1; j <= N; ++j)
    f.coeffs(j - 1, j - 1) = std::exp(-kI * eigenvalue(j) * t);
  return f;
}

Eigen::MatrixXcd gram_matrix(const StateFrame& frame) {
  return frame.coeffs * frame.coeffs.adjoint();
}

void apply_free_phases(StateFrame& frame, double dt) {
  for (int k = 1; k <= frame.modes(); ++k)
    frame.coeffs.col(k - 1) *= std::exp(-kI * eigenvalue(k) * dt);
  frame.t += dt;
}

double weighted_h3_norm(const Eigen::VectorXcd& row) {
  double acc = 0.0;
  for (int k = 1; k <= row.size(); ++k) {
    double w = std::pow(static_cast<double>(k), 3);
    acc += std::norm(w * row(k - 1));
  }
  return std::sqrt(acc);
}

WellPropagator::WellPropagator(const CouplingData& data, double dt)
    : K_(data.K_max), dt_(dt) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(data.mu_mat);
  if (es.info() != Eigen::Success)
    throw NumericalError("propagator: coupling matrix eigensolve failed");
  V_ = es.eigenvectors().cast<cd>();
  evals_ = es.eigenvalues();
  phase_half_.resize(K_);
  phase_full_.resize(K_);
  phase_quarter_.resize(K_);
  for (int k = 1; k <= K_; ++k) {
    phase_half_(k - 1) = std::exp(-kI * eigenvalue(k) * (dt / 2.0));
    phase_full_(k - 1) = std::exp(-kI * eigenvalue(k) * dt);
    phase_quarter_(k - 1) = std::exp(-kI * eigenvalue(k) * (dt / 4.0));
  }
  Msrc_.resize(K_, K_);
  Msrc_mid_.resize(K_, K_);
  for (int k = 1; k <= K_; ++k)
    for (int a = 1; a <= K_; ++a) {
      const double w = eigenvalue(k) - eigenvalue(a);
      Msrc_(k - 1, a - 1) =
          data.mu_mat(k - 1, a - 1) * power_exp_moment(0, w, dt);
      // int_{-dt/2}^{dt/2} e^{i w s} ds = 2 sin(w dt/2)/w
      Msrc_mid_(k - 1, a - 1) =
          data.mu_mat(k - 1, a - 1) *
          (w == 0.0 ? dt : 2.0 * std::sin(w * dt / 2.0) / w);
    }
}

namespace {

void kick(Eigen::MatrixXcd& coeffs, const Eigen::MatrixXcd& V,
          const Eigen::VectorXd& evals, double theta) {
  // coeffs <- coeffs * V * diag(e^{i theta d}) * V^T   (rows = particles)
  Eigen::MatrixXcd tmp = coeffs * V;
  Eigen::VectorXcd ph(evals.size());
  for (int q = 0; q < evals.size(); ++q) ph(q) = std::exp(kI * theta * evals(q));
  tmp.array().rowwise() *= ph.transpose().array();
  coeffs.noalias() = tmp * V.transpose();
}

}  // namespace

void WellPropagator::step(Eigen::MatrixXcd& coeffs, double ubar) const {
  coeffs.array().rowwise() *= phase_half_.transpose().array();
  if (ubar != 0.0) kick(coeffs, V_, evals_, ubar * dt_);
  coeffs.array().rowwise() *= phase_half_.transpose().array();
}

void WellPropagator::half_step(Eigen::MatrixXcd& coeffs, double ubar) const {
  coeffs.array().rowwise() *= phase_quarter_.transpose().array();
  if (ubar != 0.0) kick(coeffs, V_, evals_, ubar * dt_ / 2.0);
  coeffs.array().rowwise() *= phase_quarter_.transpose().array();
}

namespace {

void check_state(const Eigen::MatrixXcd& coeffs) {
  if (!coeffs.allFinite()) throw NumericalError("propagation produced NaN/Inf");
}

struct RunRecorder {
  Trajectory traj;
  Eigen::MatrixXcd gram0;
  int store_every;
  double t0;
  double dt;

  RunRecorder(const StateFrame& psi0, const ControlSignal& u,
              const PropagatorOptions& opts)
      : store_every(opts.store_every), t0(opts.t0), dt(u.dt()) {
    traj.control = u;
    traj.meta.store_every = store_every;
    StateFrame f0 = psi0;
    f0.t = t0;
    gram0 = f0.coeffs * f0.coeffs.adjoint();
    traj.frames.push_back(std::move(f0));
  }

  void maybe_store(const Eigen::MatrixXcd& coeffs, int node, int last_node) {
    bool want = node == last_node ||
                (store_every > 0 && node % store_every == 0);
    if (!want) return;
    StateFrame f;
    f.t = t0 + node * dt;
    f.coeffs = coeffs;
    double tail = f.coeffs.col(f.modes() - 1).cwiseAbs().maxCoeff();
    traj.meta.tail_mass = std::max(traj.meta.tail_mass, tail);
    traj.frames.push_back(std::move(f));
  }

  Trajectory finish(bool unitary_system) {
    const StateFrame& last = traj.frames.back();
    if (unitary_system) {
      Eigen::MatrixXcd gramT = last.coeffs * last.coeffs.adjoint();
      traj.meta.gram_drift = (gramT - gram0).cwiseAbs().maxCoeff();
      double nd = 0.0;
      for (int j = 0; j < last.particles(); ++j)
        nd = std::max(nd, std::abs(last.coeffs.row(j).norm() -
                                   traj.frames.front().coeffs.row(j).norm()));
      traj.meta.norm_drift = nd;
    }
    return std::move(traj);
  }
};

}  // namespace

Trajectory propagate(const StateFrame& psi0, const ControlSignal& u,
                     const CouplingData& data, PropagatorOptions opts) {
  if (psi0.modes() != data.K_max)
    throw InputError("propagate: state truncation does not match coupling data");
  if (u.kind() != SignalKind::PiecewiseConstant)
    throw InputError("propagate: control must be piecewise-constant");
  WellPropagator prop(data, u.dt());
  RunRecorder rec(psi0, u, opts);
  Eigen::MatrixXcd c = psi0.coeffs;
  const int M = u.intervals();
  for (int i = 0; i < M; ++i) {
    prop.step(c, u.values()(i));
    rec.maybe_store(c, i + 1, M);
  }
  check_state(c);
  return rec.finish(true);
}

Trajectory propagate_with_source(const StateFrame& psi0, const ControlSignal& u,
                                 const std::function<Eigen::VectorXcd(double)>& f,
                                 const CouplingData& data,
                                 PropagatorOptions opts, int source_order) {
  if (psi0.modes() != data.K_max)
    throw InputError("propagate_with_source: state truncation mismatch");
  if (psi0.particles() != 1)
    throw InputError("propagate_with_source: one equation per source term");
  const double dt = u.dt();
  WellPropagator prop(data, dt);
  RunRecorder rec(psi0, u, opts);
  QuadratureRule rule = gauss_legendre(source_order);
  const int K = data.K_max;

  Eigen::MatrixXcd c = psi0.coeffs;
  const int M = u.intervals();
  for (int i = 0; i < M; ++i) {
    prop.step(c, u.values()(i));
    // + i int_0^dt e^{-i Lambda (dt - s)} f(t_i + s) ds, free interaction frame
    Eigen::VectorXcd src = Eigen::VectorXcd::Zero(K);
    for (int q = 0; q < rule.nodes.size(); ++q) {
      double s = 0.5 * dt * (1.0 + rule.nodes(q));
      double w = 0.5 * dt * rule.weights(q);
      Eigen::VectorXcd fv = f(opts.t0 + i * dt + s);
      for (int k = 1; k <= K; ++k)
        fv(k - 1) *= std::exp(-kI * eigenvalue(k) * (dt - s));
      src += w * fv;
    }
    c.row(0) += (kI * src).transpose();
    rec.maybe_store(c, i + 1, M);
  }
  check_state(c);
  return rec.finish(false);
}

Trajectory propagate_linearized(const ControlSignal& u_ref, const StateFrame& ref0,
                                const ControlSignal& v, const StateFrame& Psi0,
                                const CouplingData& data, PropagatorOptions opts) {
  if (u_ref.intervals() != v.intervals() ||
      std::abs(u_ref.duration() - v.duration()) > 1e-12)
    throw InputError("propagate_linearized: reference/perturbation grid mismatch");
  if (ref0.modes() != data.K_max || Psi0.modes() != data.K_max)
    throw InputError("propagate_linearized: state truncation mismatch");
  if (ref0.particles() != Psi0.particles())
    throw InputError("propagate_linearized: particle count mismatch");

  WellPropagator prop(data, u_ref.dt());
  RunRecorder rec(Psi0, v, opts);
  Eigen::MatrixXcd Psi = Psi0.coeffs;
  Eigen::MatrixXcd refc = ref0.coeffs;
  const int M = v.intervals();
  // Homogeneous flow as two half steps; the source is the real symmetric
  // midpoint matrix conjugated by the same half steps, which keeps both the
  // free-case endpoint closed form exact and Re<Psi^j, psi_ref^j> conserved.
  for (int i = 0; i < M; ++i) {
    const double ub = u_ref.values()(i);
    const double vi = v.values()(i);
    prop.half_step(Psi, ub);
    prop.half_step(Psi, ub);
    if (vi != 0.0) {
      Eigen::MatrixXcd src = refc;
      prop.half_step(src, ub);
      src = src * prop.source_matrix_mid().cast<cd>();  // symmetric, rowwise
      prop.half_step(src, ub);
      Psi += kI * vi * src;
    }
    prop.half_step(refc, ub);
    prop.half_step(refc, ub);
    rec.maybe_store(Psi, i + 1, M);
  }
  check_state(Psi);
  return rec.finish(false);
}

Eigen::VectorXcd second_order_endpoint(const ControlSignal& v,
                                       const ControlSignal& w, int j,
                                       const CouplingData& data) {
  if (v.intervals() != w.intervals())
    throw InputError("second_order_endpoint: v/w grid mismatch");
  const int K = data.K_max;
  if (j < 1 || j > K) throw InputError("second_order_endpoint: bad mode index");
  const double dt = v.dt();
  WellPropagator prop(data, dt);

  // GD(k,b) = sum_a M_ka M_ab DE(lam_k - lam_a, lam_a - lam_b, dt): the
  // within-interval growth of Psi feeding xi.
  Eigen::MatrixXcd GD = Eigen::MatrixXcd::Zero(K, K);
  for (int k = 1; k <= K; ++k)
    for (int b = 1; b <= K; ++b) {
      cd acc{0.0, 0.0};
      for (int a = 1; a <= K; ++a) {
        double Mka = data.mu_mat(k - 1, a - 1), Mab = data.mu_mat(a - 1, b - 1);
        if (Mka == 0.0 || Mab == 0.0) continue;
        acc += Mka * Mab *
               double_exp_integral(eigenvalue(k) - eigenvalue(a),
                                   eigenvalue(a) - eigenvalue(b), dt);
      }
      GD(k - 1, b - 1) = acc;
    }

  Eigen::VectorXcd cref = Eigen::VectorXcd::Zero(K);
  cref(j - 1) = 1.0;
  Eigen::VectorXcd Psi = Eigen::VectorXcd::Zero(K);
  Eigen::VectorXcd xi = Eigen::VectorXcd::Zero(K);
  const Eigen::VectorXcd& ph = prop.full_phase();
  const Eigen::MatrixXcd& Msrc = prop.source_matrix();

  for (int i = 0; i < v.intervals(); ++i) {
    const double vi = v.values()(i), wi = w.values()(i);
    Eigen::VectorXcd xin =
        xi + kI * vi * (Msrc * Psi) + kI * wi * (Msrc * cref) -
        vi * vi * (GD * cref);
    xi = ph.asDiagonal() * xin;
    Psi = ph.asDiagonal() * (Psi + kI * vi * (Msrc * cref)).eval();
    cref = ph.asDiagonal() * cref;
  }
  check_state(xi);

  const double T = v.duration();
  Eigen::VectorXcd out(K);
  for (int k = 1; k <= K; ++k)
    out(k - 1) = xi(k - 1) * std::exp(kI * eigenvalue(k) * T);
  return out;
}

AuxOperators assemble_aux_operators(const DipoleMoment& mu, const BasisSpec& spec) {
  const int K = spec.K_max;
  AuxOperators ops;
  ops.D1.resize(K, K);
  ops.W.resize(K, K);

  // S(q) = int mu' sin(q pi x), G(q) = int (mu')^2 cos(q pi x)
  Eigen::VectorXd S(2 * K + 1), G(2 * K + 1);
  for (int q = 0; q <= 2 * K; ++q) {
    if (mu.is_polynomial()) {
      S(q) = poly_sin_integral(mu.deriv_coeffs(), q * kPi);
      G(q) = poly_cos_integral(mu.grad_squared_coeffs(), q * kPi);
    } else {
      auto df = [&mu](double x) { return mu.deriv(x); };
      auto g2 = [&mu](double x) {
        double d = mu.deriv(x);
        return d * d;
      };
      S(q) = quad_sin_integral(df, q * kPi, spec.quadrature_order);
      G(q) = quad_cos_integral(g2, q * kPi, spec.quadrature_order);
    }
  }
  auto S_signed = [&S](int q) {
    return q >= 0 ? S(q) : -S(-q);
  };
  for (int k = 1; k <= K; ++k)
    for (int a = 1; a <= K; ++a) {
      ops.D1(k - 1, a - 1) =
          (a - k) * kPi * S_signed(a + k) + (a + k) * kPi * S_signed(k - a);
      ops.W(k - 1, a - 1) = G(std::abs(a - k)) - G(a + k);
    }
  return ops;
}

Trajectory propagate_auxiliary(const ControlSignal& s, const AuxOperators& ops,
                               const StateFrame& psi0, PropagatorOptions opts) {
  const int K = static_cast<int>(ops.D1.rows());
  if (psi0.modes() != K)
    throw InputError("propagate_auxiliary: state truncation mismatch");
  if (s.kind() == SignalKind::PiecewiseLinear &&
      std::abs(s.values()(0)) > 1e-12)
    throw PreconditionError("propagate_auxiliary: primitive must satisfy s(0)=0");

  const double dt = s.dt();
  RunRecorder rec(psi0, s, opts);
  Eigen::MatrixXcd c = psi0.coeffs;
  Eigen::VectorXd lam(K);
  for (int k = 1; k <= K; ++k) lam(k - 1) = eigenvalue(k);

  const int M = s.intervals();
  for (int i = 0; i < M; ++i) {
    double a, b;
    s.line_on(i, a, b);
    const double smid = a + 0.5 * b * dt;
    // H = Lambda - i s D1 + s^2 W (Hermitian); c <- e^{-i dt H} c
    Eigen::MatrixXcd H = (-kI * smid) * ops.D1.cast<cd>();
    H += (smid * smid) * ops.W.cast<cd>();
    H += lam.cast<cd>().asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
    if (es.info() != Eigen::Success)
      throw NumericalError("propagate_auxiliary: step eigensolve failed");
    Eigen::VectorXcd ph(K);
    for (int k = 0; k < K; ++k) ph(k) = std::exp(-kI * dt * es.eigenvalues()(k));
    // rows = particles: c <- c * conj(U) * diag(ph) * U^T
    Eigen::MatrixXcd tmp = c * es.eigenvectors().conjugate();
    tmp.array().rowwise() *= ph.transpose().array();
    c.noalias() = tmp * es.eigenvectors().transpose();
    rec.maybe_store(c, i + 1, M);
  }
  check_state(c);
  return rec.finish(true);
}

StateFrame aux_transform(const StateFrame& frame, double s_val,
                         const DipoleMoment& mu, const BasisSpec& spec,
                         AuxDirection dir) {
  const int K = frame.modes();
  // Work on a padded basis so the truncation defect of the multiplication
  // operator only enters quadratically.
  const int Kw = K + 32;
  // B(q) = int e^{i s mu(x)} cos(q pi x) dx
  double sup_dmu = 0.0;
  for (int q = 0; q <= 64; ++q)
    sup_dmu = std::max(sup_dmu, std::abs(mu.deriv(q / 64.0)));
  QuadratureRule rule = gauss_legendre(std::max(12, spec.quadrature_order));
  Eigen::VectorXcd B(2 * Kw + 1);
  for (int q = 0; q <= 2 * Kw; ++q) {
    int panels = std::max<int>(
        8, static_cast<int>(std::ceil(q + std::abs(s_val) * sup_dmu / kPi)) + 2);
    cd acc{0.0, 0.0};
    for (int p = 0; p < panels; ++p) {
      double lo = static_cast<double>(p) / panels,
             hi = static_cast<double>(p + 1) / panels;
      double half = 0.5 * (hi - lo), mid = 0.5 * (lo + hi);
      for (int r = 0; r < rule.nodes.size(); ++r) {
        double x = mid + half * rule.nodes(r);
        acc += half * rule.weights(r) * std::exp(kI * s_val * mu.value(x)) *
               std::cos(q * kPi * x);
      }
    }
    B(q) = acc;
  }
  Eigen::MatrixXcd U(Kw, Kw);
  for (int k = 1; k <= Kw; ++k)
    for (int a = 1; a <= Kw; ++a)
      U(k - 1, a - 1) = B(std::abs(a - k)) - B(a + k);
  if (dir == AuxDirection::Inverse) U = U.conjugate().eval();

  Eigen::MatrixXcd padded =
      Eigen::MatrixXcd::Zero(frame.particles(), Kw);
  padded.leftCols(K) = frame.coeffs;
  StateFrame out = frame;
  out.coeffs = (padded * U.transpose()).leftCols(K);
  return out;
}

}  // namespace qwell
