#include "qwell/return_method.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qwell/errors.hpp"

namespace qwell {

namespace {

constexpr cd kI{0.0, 1.0};

double wrap_angle(double x) {
  double y = std::remainder(x, 2.0 * kPi);
  if (y <= -kPi) y += 2.0 * kPi;
  return y;
}

int grid_index(double t, int grid_per_unit, const char* what) {
  double x = t * grid_per_unit;
  double r = std::round(x);
  if (std::abs(x - r) > 1e-9)
    throw InputError(std::string(what) +
                     ": stage time must lie on the control grid");
  return static_cast<int>(r);
}

double mu_expectation(const Eigen::RowVectorXcd& row, const Eigen::MatrixXd& M) {
  return (row.conjugate() * M.cast<cd>() * row.transpose())(0, 0).real();
}

cd phase_product_functional(const Eigen::VectorXcd& z, ReferenceVariant variant) {
  switch (variant) {
    case ReferenceVariant::N3PhaseDelay:
      return std::pow(z(0), 5) * std::conj(std::pow(z(1), 8)) * std::pow(z(2), 3);
    case ReferenceVariant::N2Phase:
      return z(0) * std::conj(z(1));
    case ReferenceVariant::N2Delay:
      return std::pow(z(0), 4) * std::conj(z(1));
  }
  return {};
}

}  // namespace

int variant_particles(ReferenceVariant v) {
  return v == ReferenceVariant::N3PhaseDelay ? 3 : 2;
}

DiagWeights variant_weights(ReferenceVariant v) {
  switch (v) {
    case ReferenceVariant::N3PhaseDelay:
      return DiagWeights::N3;
    case ReferenceVariant::N2Phase:
      return DiagWeights::N2Phase;
    case ReferenceVariant::N2Delay:
      return DiagWeights::N2Delay;
  }
  return DiagWeights::N3;
}

PhaseDelayResult phase_delay_solve(const Eigen::VectorXd& thetas, double T1,
                                   ReferenceVariant variant, double tol) {
  PhaseDelayResult out;
  const double period = 2.0 / kPi;  // common period of e^{-i lambda_j t}
  if (variant == ReferenceVariant::N3PhaseDelay) {
    if (thetas.size() != 3) throw InputError("phase_delay_solve: need 3 phases");
    double combo = 5.0 * thetas(0) - 8.0 * thetas(1) + 3.0 * thetas(2);
    if (std::abs(wrap_angle(combo)) > tol)
      throw PreconditionError(
          "phase_delay_solve: 5 th1 - 8 th2 + 3 th3 = 0 (mod 2 pi) violated");
    double Tbase = (thetas(0) - thetas(1)) / (eigenvalue(2) - eigenvalue(1));
    double m = std::floor((T1 - Tbase) / period) + 1.0;
    out.T_eta = Tbase + m * period;
    if (out.T_eta <= T1 + 1e-12) out.T_eta += period;
    out.theta_eta = wrap_angle(thetas(0) + eigenvalue(1) * out.T_eta);
    out.residuals.resize(3);
    for (int j = 1; j <= 3; ++j)
      out.residuals(j - 1) =
          wrap_angle(thetas(j - 1) + eigenvalue(j) * out.T_eta - out.theta_eta);
    return out;
  }
  if (thetas.size() != 2) throw InputError("phase_delay_solve: need 2 phases");
  if (variant == ReferenceVariant::N2Delay) {
    double combo = 4.0 * thetas(0) - thetas(1);
    if (std::abs(wrap_angle(combo)) > tol)
      throw PreconditionError(
          "phase_delay_solve: 4 th1 - th2 = 0 (mod 2 pi) violated");
    double Tbase = -thetas(0) / eigenvalue(1);
    double m = std::floor((T1 - Tbase) / period) + 1.0;
    out.T_eta = Tbase + m * period;
    if (out.T_eta <= T1 + 1e-12) out.T_eta += period;
    out.theta_eta = 0.0;
    out.residuals.resize(2);
    for (int j = 1; j <= 2; ++j)
      out.residuals(j - 1) = wrap_angle(thetas(j - 1) + eigenvalue(j) * out.T_eta);
    return out;
  }
  // N2Phase: no delay, common phase
  double gap = wrap_angle(thetas(0) - thetas(1));
  if (std::abs(gap) > tol)
    throw PreconditionError("phase_delay_solve: th1 = th2 (mod 2 pi) violated");
  out.T_eta = T1;
  out.theta_eta = wrap_angle(thetas(0) + 0.0);
  out.residuals.resize(2);
  for (int j = 1; j <= 2; ++j)
    out.residuals(j - 1) = wrap_angle(thetas(j - 1) - out.theta_eta);
  return out;
}

StateFrame ReferenceTrajectory::endpoint_target() const {
  StateFrame f;
  f.t = T_eta;
  f.coeffs = Eigen::MatrixXcd::Zero(N, K);
  for (int j = 1; j <= N; ++j) {
    cd val = std::exp(kI * theta_eta);
    if (variant == ReferenceVariant::N2Phase)
      val *= std::exp(-kI * eigenvalue(j) * T_eta);
    f.coeffs(j - 1, j - 1) = val;
  }
  return f;
}

namespace {

struct StageGrid {
  int i_half, i_eps1, i_eps, i_T1;
  double dt;
};

StageGrid make_grid(const ReferenceConfig& cfg, ReferenceVariant variant) {
  StageGrid g;
  g.dt = 1.0 / cfg.grid_per_unit;
  g.i_half = grid_index(cfg.eps / 2.0, cfg.grid_per_unit, "eps/2");
  g.i_eps = grid_index(cfg.eps, cfg.grid_per_unit, "eps");
  g.i_T1 = grid_index(cfg.T1, cfg.grid_per_unit, "T1");
  g.i_eps1 = variant == ReferenceVariant::N3PhaseDelay
                 ? grid_index(cfg.eps1, cfg.grid_per_unit, "eps1")
                 : g.i_half;
  if (!(0 < g.i_half && g.i_half < g.i_eps && g.i_eps < g.i_T1))
    throw InputError("reference: need 0 < eps/2 < eps < T1");
  if (variant == ReferenceVariant::N3PhaseDelay &&
      !(g.i_half < g.i_eps1 && g.i_eps1 < g.i_eps))
    throw InputError("reference: need eps1 in (eps/2, eps)");
  return g;
}

// Derivative inverse of the stage-1 map: windowed moment problems pumping the
// K_pump column. gamma is laid out checkpoint-major: gamma[c*N + (j-1)].
ControlSignal stage1_inverse(const Eigen::VectorXd& gamma,
                             const CouplingData& data, ReferenceVariant variant,
                             const ReferenceConfig& cfg, const StageGrid& g) {
  const int N = variant_particles(variant);
  const int K = cfg.K_pump;
  for (int j = 1; j <= N; ++j)
    if (std::abs(data.mu(j, K)) < 1e-14)
      throw UnreachableDirectionError(
          "stage1: zero coupling <mu phi_j, phi_K> on the pump column");

  struct Window {
    int a, b;        // grid node range
    double t_end;    // checkpoint time of this window
  };
  std::vector<Window> windows;
  if (variant == ReferenceVariant::N3PhaseDelay) {
    windows.push_back({g.i_half, g.i_eps1, g.i_eps1 * g.dt});
    windows.push_back({g.i_eps1, g.i_eps, g.i_eps * g.dt});
  } else {
    windows.push_back({g.i_half, g.i_eps, g.i_eps * g.dt});
  }

  Eigen::VectorXd out = Eigen::VectorXd::Zero(g.i_eps - g.i_half);
  // cumulative pumped moment from previous windows, per particle
  std::vector<cd> accumulated(N, cd{0.0, 0.0});
  for (size_t w = 0; w < windows.size(); ++w) {
    const auto& win = windows[w];
    FrequencySet freqs = build_frequency_set(N, cfg.K_vanish, (win.b - win.a) * g.dt,
                                             IndexSetKind::Rows);
    freqs.t0 = win.a * g.dt;
    std::vector<std::tuple<int, int, cd>> pump;
    for (int j = 1; j <= N; ++j) {
      const double om = eigenvalue(K) - eigenvalue(j);
      const double gj = gamma(static_cast<int>(w) * N + (j - 1));
      cd total = std::exp(kI * om * win.t_end) * gj /
                 (2.0 * kI * data.mu(j, K) * data.mu(j, K));
      pump.emplace_back(j, K, total - accumulated[j - 1]);
      accumulated[j - 1] = total;
    }
    Eigen::VectorXcd d = assemble_targets(freqs, pump);
    MomentSolveOptions opts;
    opts.intervals = win.b - win.a;
    opts.cond_limit = cfg.cond_limit;
    MomentSolution sol = solve_moments(freqs, d, opts);
    out.segment(win.a - g.i_half, win.b - win.a) = sol.v.values();
  }
  return ControlSignal::piecewise_constant((g.i_eps - g.i_half) * g.dt, out);
}

}  // namespace

ControlSignal stage1_control(const CouplingData& data, ReferenceVariant variant,
                             const ReferenceConfig& cfg) {
  const int N = variant_particles(variant);
  if (data.N < N) throw InputError("stage1: coupling data has too few particles");
  if (cfg.eta < 0.0) throw InputError("stage1: eta must be nonnegative");
  if (cfg.eta > cfg.eta_budget)
    throw PreconditionError("stage1: eta above the trust budget");
  if (cfg.K_pump < N + 1)
    throw InputError("stage1: need K_pump >= N + 1 for distinct frequencies");
  if (cfg.K_pump > cfg.K_vanish || cfg.K_vanish > data.K_max)
    throw InputError("stage1: need K_pump <= K_vanish <= K_max");

  const StageGrid g = make_grid(cfg, variant);
  const int n_checks = variant == ReferenceVariant::N3PhaseDelay ? 2 : 1;
  const int dim = n_checks * N;

  // checkpoint shifts: N3 raises particle 1 at eps1 and particle 2 at eps,
  // N2 raises particle 1 at eps
  Eigen::VectorXd shift = Eigen::VectorXd::Zero(dim);
  if (variant == ReferenceVariant::N3PhaseDelay) {
    shift(0) = cfg.eta;      // (eps1, j=1)
    shift(N + 1) = cfg.eta;  // (eps,  j=2)
  } else {
    shift(0) = cfg.eta;  // (eps, j=1)
  }

  const int M = g.i_eps - g.i_half;
  ControlSignal u = ControlSignal::zero(M * g.dt, M);
  WellPropagator prop(data, g.dt);
  const StateFrame start = eigenstate_frame(N, data.K_max, g.i_half * g.dt);

  std::vector<double> history;
  const double tol = cfg.stage1_tol * (1.0 + cfg.eta);
  for (int iter = 0; iter <= cfg.newton_max_iter; ++iter) {
    // measure the checkpoint mu-expectations
    Eigen::MatrixXcd c = start.coeffs;
    Eigen::VectorXd rho(dim);
    int check = 0;
    for (int i = 0; i < M; ++i) {
      prop.step(c, u.values()(i));
      const int node = g.i_half + i + 1;
      const bool at_eps1 = variant == ReferenceVariant::N3PhaseDelay &&
                           node == g.i_eps1;
      const bool at_eps = node == g.i_eps;
      if (at_eps1 || at_eps) {
        for (int j = 1; j <= N; ++j)
          rho(check * N + j - 1) = mu_expectation(c.row(j - 1), data.mu_mat) -
                                   data.mu_diag(j) - shift(check * N + j - 1);
        ++check;
      }
    }
    double res = rho.cwiseAbs().maxCoeff();
    history.push_back(res);
    if (res <= tol) return u;
    if (iter == cfg.newton_max_iter || !std::isfinite(res) ||
        (history.size() > 3 && res > 4.0 * history[history.size() - 3]))
      throw NewtonError("stage1: Newton did not reach the checkpoint conditions",
                        history);
    u += stage1_inverse(-rho, data, variant, cfg, g);
  }
  return u;  // unreachable
}

ControlSignal stage2_control(const StateFrame& state_at_T0,
                             const CouplingData& data, double T0, double Tf,
                             ReferenceVariant variant,
                             const ReferenceConfig& cfg) {
  const int N = variant_particles(variant);
  const int K = data.K_max;
  if (state_at_T0.particles() != N || state_at_T0.modes() != K)
    throw InputError("stage2: state shape mismatch");
  const int i0 = grid_index(T0, cfg.grid_per_unit, "stage2 T0");
  const int i1 = grid_index(Tf, cfg.grid_per_unit, "stage2 Tf");
  const int M = i1 - i0;
  const double dt = 1.0 / cfg.grid_per_unit;

  // trust radius around the free eigenstates
  double dist = 0.0;
  const StateFrame free_T0 = eigenstate_frame(N, K, T0);
  for (int j = 0; j < N; ++j)
    dist += (state_at_T0.coeffs.row(j) - free_T0.coeffs.row(j)).norm();
  if (dist > cfg.trust_radius)
    throw PreconditionError("stage2: initial state outside the trust radius");

  const DiagWeights weights = variant_weights(variant);
  if (std::abs(diag_weight_denominator(weights, data)) < 1e-12)
    throw PreconditionError(
        "stage2: the weighted diagonal coupling combination vanishes");

  ControlSignal u = ControlSignal::zero(M * dt, M);
  WellPropagator prop(data, dt);
  std::vector<double> history;

  for (int iter = 0; iter <= cfg.newton_max_iter; ++iter) {
    Eigen::MatrixXcd c = state_at_T0.coeffs;
    for (int i = 0; i < M; ++i) prop.step(c, u.values()(i));
    StateFrame end;
    end.t = Tf;
    end.coeffs = c;
    Eigen::MatrixXcd endpoint = endpoint_vs_eigenstates(end);

    Eigen::VectorXcd z(N);
    for (int j = 1; j <= N; ++j) z(j - 1) = endpoint(j - 1, j - 1);
    const double r = phase_product_functional(z, variant).imag();

    double res = std::abs(r);
    LinearTargets targets;
    for (int j = 1; j <= N; ++j)
      for (int k = j + 1; k <= K; ++k) {
        cd comp = endpoint(j - 1, k - 1);
        res = std::max(res, std::abs(comp));
        targets.entries[{j, k}] = -comp;
      }
    history.push_back(res);
    if (res <= cfg.stage2_tol)
      return u;
    if (iter == cfg.newton_max_iter || !std::isfinite(res) ||
        (history.size() > 3 && res > 4.0 * history[history.size() - 3]))
      throw NewtonError("stage2: Newton did not flatten the endpoint", history);

    targets.diag_combo = -r;
    ControlSignal v = synth_linear_control(targets, data, T0, Tf, M, weights, N,
                                           K, nullptr, cfg.cond_limit);
    u += v;
  }
  return u;  // unreachable
}

ReferenceTrajectory build_reference(const CouplingData& data,
                                    ReferenceVariant variant,
                                    ReferenceConfig cfg) {
  const int N = variant_particles(variant);
  const int K = data.K_max;
  if (data.N < N)
    throw InputError("build_reference: coupling data has too few particles");
  const StageGrid g = make_grid(cfg, variant);
  const double dt = g.dt;

  ReferenceTrajectory ref;
  ref.variant = variant;
  ref.cfg = cfg;
  ref.N = N;
  ref.K = K;

  // stage 1 on (eps/2, eps)
  ControlSignal s1 = stage1_control(data, variant, cfg);

  Eigen::VectorXd full = Eigen::VectorXd::Zero(g.i_T1);
  full.segment(g.i_half, g.i_eps - g.i_half) = s1.values();

  // propagate to eps, grab checkpoints for the record
  WellPropagator prop(data, dt);
  Eigen::MatrixXcd c = eigenstate_frame(N, K, 0.0).coeffs;
  Eigen::MatrixXcd gram0 = c * c.adjoint();
  double stage1_res = 0.0;
  for (int i = 0; i < g.i_eps; ++i) {
    prop.step(c, full(i));
    const int node = i + 1;
    const bool at_eps1 =
        variant == ReferenceVariant::N3PhaseDelay && node == g.i_eps1;
    const bool at_eps = node == g.i_eps;
    if (at_eps1 || at_eps) {
      for (int j = 1; j <= N; ++j) {
        double expect = mu_expectation(c.row(j - 1), data.mu_mat);
        double target = data.mu_diag(j);
        if (variant == ReferenceVariant::N3PhaseDelay) {
          if (at_eps1 && j == 1) target += cfg.eta;
          if (at_eps && j == 2) target += cfg.eta;
        } else if (at_eps && j == 1) {
          target += cfg.eta;
        }
        stage1_res = std::max(stage1_res, std::abs(expect - target));
      }
    }
  }
  ref.stage1_residual = stage1_res;
  if (stage1_res > 100.0 * cfg.stage1_tol * (1.0 + cfg.eta))
    throw NumericalError("build_reference: stage-1 conditions drifted");

  StateFrame state_eps;
  state_eps.t = cfg.eps;
  state_eps.coeffs = c;

  // stage 2 on (eps, T1)
  ControlSignal s2 = stage2_control(state_eps, data, cfg.eps, cfg.T1, variant, cfg);
  full.segment(g.i_eps, g.i_T1 - g.i_eps) = s2.values();
  for (int i = g.i_eps; i < g.i_T1; ++i) prop.step(c, full(i));

  ref.control = ControlSignal::piecewise_constant(cfg.T1, full);
  ref.control_l2 = ref.control.l2_norm();
  ref.at_T1.t = cfg.T1;
  ref.at_T1.coeffs = c;
  ref.gram_drift = (c * c.adjoint() - gram0).cwiseAbs().maxCoeff();

  Eigen::MatrixXcd endpoint = endpoint_vs_eigenstates(ref.at_T1);
  Eigen::VectorXcd z(N);
  ref.thetas.resize(N);
  double s2res = 0.0;
  for (int j = 1; j <= N; ++j) {
    z(j - 1) = endpoint(j - 1, j - 1);
    ref.thetas(j - 1) = -std::arg(z(j - 1));
    for (int k = j + 1; k <= K; ++k)
      s2res = std::max(s2res, std::abs(endpoint(j - 1, k - 1)));
  }
  s2res = std::max(s2res, std::abs(phase_product_functional(z, variant).imag()));
  ref.stage2_residual = s2res;

  PhaseDelayResult pd =
      phase_delay_solve(ref.thetas, cfg.T1, variant, cfg.congruence_tol);
  ref.T_eta = pd.T_eta;
  // endpoint phase convention: psi^j(T_eta) = e^{i theta_eta} phi_j for the
  // delay variants (theta_eta = -pd.theta_eta), e^{i theta_eta} Phi_j(T1) for
  // the pure phase variant
  ref.theta_eta = wrap_angle(-pd.theta_eta);

  ref.end_frame = ref.at_T1;
  apply_free_phases(ref.end_frame, ref.T_eta - cfg.T1);

  const StateFrame want = ref.endpoint_target();
  double err = 0.0;
  for (int j = 0; j < N; ++j)
    err = std::max(err, (ref.end_frame.coeffs.row(j) - want.coeffs.row(j)).norm());
  ref.endpoint_error = err;

  // Gram-Schmidt cleanup of the endpoint rows (drift is ~1e-12)
  ref.end_frame_ortho = ref.end_frame;
  for (int j = 0; j < N; ++j) {
    auto row = ref.end_frame_ortho.coeffs.row(j);
    for (int k = 0; k < j; ++k) {
      auto prev = ref.end_frame_ortho.coeffs.row(k);
      row -= prev.dot(row.transpose()) * prev;
    }
    row /= row.norm();
  }
  return ref;
}

FrameFamily reference_frame_functions(const ReferenceTrajectory& ref,
                                      const CouplingData& data) {
  const int N = ref.N, K = ref.K;
  const int M = ref.control.intervals();
  const double dt = ref.control.dt();

  FrameFamily fam;
  fam.freqs = build_frequency_set(N, K, ref.cfg.T1, IndexSetKind::Canonical);
  const int G = fam.freqs.size();
  for (const auto& e : fam.freqs.entries)
    if (e.pairs.size() + e.conj_pairs.size() != 1)
      throw NumericalError("frame functions: unexpected frequency collision in "
                           "the canonical index set");

  const int n_diag = N - 1;
  fam.rows.resize(G, M);
  fam.diag_rows.resize(n_diag, M);
  fam.f_samples.resize(G, M + 1);
  fam.fdiag_samples.resize(n_diag, M + 1);

  WellPropagator prop(data, dt);
  Eigen::MatrixXcd Bt = Eigen::MatrixXcd::Identity(K, K);  // rows = Phi^eta_k

  auto record = [&](int node) {
    // Y_j = M * psi^j_ref; psi^j_ref = Bt.row(j-1)
    Eigen::MatrixXcd Y(N, K);
    for (int j = 1; j <= N; ++j)
      Y.row(j - 1) = (data.mu_mat.cast<cd>() * Bt.row(j - 1).transpose())
                         .transpose();
    for (int gidx = 0; gidx < G; ++gidx) {
      auto [j, k] = fam.freqs.entries[gidx].pairs.empty()
                        ? fam.freqs.entries[gidx].conj_pairs[0]
                        : fam.freqs.entries[gidx].pairs[0];
      // f_n = <mu psi^j_ref, Phi^eta_k> / M_jk = conj(Phi_k) . (M psi^j) / M_jk
      cd val = (Bt.row(k - 1).conjugate() * Y.row(j - 1).transpose())(0, 0) /
               data.mu(j, k);
      fam.f_samples(gidx, node) = val;
    }
    for (int j = 1; j <= n_diag; ++j) {
      cd val = (Bt.row(j - 1).conjugate() * Y.row(j - 1).transpose())(0, 0) /
               data.mu_diag(j);
      fam.fdiag_samples(j - 1, node) = val;
    }
  };

  record(0);
  for (int i = 0; i < M; ++i) {
    prop.step(Bt, ref.control.values()(i));
    record(i + 1);
  }

  // per-interval integrals: slow envelope (node average) times exact carrier
  for (int gidx = 0; gidx < G; ++gidx) {
    const double om = fam.freqs.entries[gidx].omega;
    for (int i = 0; i < M; ++i) {
      cd g0 = fam.f_samples(gidx, i) * std::exp(-kI * om * (i * dt));
      cd g1 = fam.f_samples(gidx, i + 1) * std::exp(-kI * om * ((i + 1) * dt));
      fam.rows(gidx, i) = 0.5 * (g0 + g1) * exp_integral(om, i * dt, (i + 1) * dt);
    }
  }
  for (int j = 0; j < n_diag; ++j)
    for (int i = 0; i < M; ++i)
      fam.diag_rows(j, i) =
          0.5 * (fam.fdiag_samples(j, i).real() + fam.fdiag_samples(j, i + 1).real()) *
          dt;

  fam.basis_T1 = Bt.transpose();
  return fam;
}

namespace {

// Conjugate-closed row system over the discretized control space.
struct ClosedRows {
  Eigen::MatrixXcd rows;      // R x M
  std::vector<int> group;     // >= 0: canonical group; -(1+j): diagonal row j
  std::vector<int> type;      // 0 plus, 1 minus, 2 self-conjugate
  std::vector<int> partner;   // conjugate partner row (self for type 2)
  double dt = 0.0;
};

ClosedRows make_closed(const FrameFamily& fam, double dt, bool with_diag) {
  const int G = fam.freqs.size();
  const int M = static_cast<int>(fam.rows.cols());
  ClosedRows cr;
  cr.dt = dt;
  int R = 0;
  for (int gidx = G - 1; gidx >= 0; --gidx)
    if (fam.freqs.entries[gidx].key != 0) ++R;
  R += G;
  const int n_diag = with_diag ? static_cast<int>(fam.diag_rows.rows()) : 0;
  R += n_diag;
  cr.rows.resize(R, M);
  cr.group.resize(R);
  cr.type.resize(R);
  cr.partner.assign(R, -1);

  int r = 0;
  std::vector<int> minus_of_group(G, -1);
  for (int gidx = G - 1; gidx >= 0; --gidx) {
    if (fam.freqs.entries[gidx].key == 0) continue;
    cr.rows.row(r) = fam.rows.row(gidx).conjugate();
    cr.group[r] = gidx;
    cr.type[r] = 1;
    minus_of_group[gidx] = r;
    ++r;
  }
  for (int gidx = 0; gidx < G; ++gidx) {
    cr.rows.row(r) = fam.rows.row(gidx);
    cr.group[r] = gidx;
    if (fam.freqs.entries[gidx].key == 0) {
      cr.type[r] = 2;
      cr.partner[r] = r;
    } else {
      cr.type[r] = 0;
      cr.partner[r] = minus_of_group[gidx];
      cr.partner[minus_of_group[gidx]] = r;
    }
    ++r;
  }
  for (int j = 0; j < n_diag; ++j) {
    cr.rows.row(r) = fam.diag_rows.row(j);
    cr.group[r] = -(1 + j);
    cr.type[r] = 2;
    cr.partner[r] = r;
    ++r;
  }
  return cr;
}

double closed_condition(const Eigen::MatrixXcd& G) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(G);
  double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

// Minimal-norm real signal with the closed-row moments d; a is symmetrized so
// the synthesis is exactly real.
Eigen::VectorXd solve_closed(const ClosedRows& cr, const Eigen::VectorXcd& d,
                             double& condition) {
  Eigen::MatrixXcd G = (cr.rows * cr.rows.adjoint()) / cr.dt;
  condition = closed_condition(G);
  Eigen::VectorXcd a = G.ldlt().solve(d);
  const int R = static_cast<int>(cr.rows.rows());
  const int M = static_cast<int>(cr.rows.cols());
  for (int r = 0; r < R; ++r) {
    if (cr.type[r] != 0) continue;
    int q = cr.partner[r];
    cd sym = 0.5 * (a(r) + std::conj(a(q)));
    a(r) = sym;
    a(q) = std::conj(sym);
  }
  Eigen::VectorXd v = Eigen::VectorXd::Zero(M);
  for (int r = 0; r < R; ++r) {
    if (cr.type[r] == 1) continue;
    if (cr.type[r] == 0) {
      for (int i = 0; i < M; ++i)
        v(i) += 2.0 * (a(r) * std::conj(cr.rows(r, i))).real() / cr.dt;
    } else {
      for (int i = 0; i < M; ++i)
        v(i) += a(r).real() * cr.rows(r, i).real() / cr.dt;
    }
  }
  return v;
}

}  // namespace

RieszGapReport riesz_gap(const ReferenceTrajectory& ref, const CouplingData& data,
                         const FrameFamily& family) {
  (void)data;
  const int M = static_cast<int>(family.rows.cols());
  const double dt = ref.control.dt();
  ClosedRows cr = make_closed(family, dt, false);
  const int R = static_cast<int>(cr.rows.rows());

  Eigen::MatrixXcd exact(R, M);
  for (int r = 0; r < R; ++r) {
    double om = family.freqs.entries[cr.group[r]].omega;
    if (cr.type[r] == 1) om = -om;
    for (int i = 0; i < M; ++i)
      exact(r, i) = exp_integral(om, i * dt, (i + 1) * dt);
  }
  Eigen::MatrixXcd delta = cr.rows - exact;
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(delta);
  RieszGapReport rep;
  rep.gap = svd.singularValues()(0) / std::sqrt(dt);
  Eigen::MatrixXcd G0 = (exact * exact.adjoint()) / dt;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(G0);
  rep.sigma_min_J0 = std::sqrt(std::max(0.0, es.eigenvalues().minCoeff()));
  rep.basis_preserved = rep.gap < rep.sigma_min_J0;
  return rep;
}

StateFrame project_Xf(const ReferenceTrajectory& ref, const StateFrame& raw) {
  const int N = ref.N;
  if (raw.particles() != N || raw.modes() != ref.K)
    throw InputError("project_Xf: frame shape mismatch");
  const Eigen::MatrixXcd& psi = ref.end_frame_ortho.coeffs;
  StateFrame out = raw;
  out.t = ref.T_eta;
  for (int j = 0; j < N; ++j) {
    Eigen::RowVectorXcd row = raw.coeffs.row(j);
    // <raw_j, psi^j> with <f,g> = sum f conj(g)
    cd self = psi.row(j).dot(row.transpose());
    row -= self.real() * psi.row(j);
    for (int k = 0; k < j; ++k) {
      cd cross = psi.row(k).dot(raw.coeffs.row(j).transpose()) +
                 raw.coeffs.row(k).dot(psi.row(j).transpose());
      row -= cross * psi.row(k);
    }
    out.coeffs.row(j) = row;
  }
  return out;
}

Eigen::VectorXd xf_invariant_residuals(const ReferenceTrajectory& ref,
                                       const StateFrame& frame) {
  const int N = ref.N;
  const Eigen::MatrixXcd& psi = ref.end_frame_ortho.coeffs;
  std::vector<double> res;
  for (int j = 0; j < N; ++j)
    res.push_back(std::abs(psi.row(j).dot(frame.coeffs.row(j).transpose()).real()));
  for (int j = 0; j < N; ++j)
    for (int k = 0; k < j; ++k) {
      cd lhs = psi.row(k).dot(frame.coeffs.row(j).transpose());
      cd rhs = psi.row(j).dot(frame.coeffs.row(k).transpose());
      res.push_back(std::abs(lhs + std::conj(rhs)));
    }
  return Eigen::Map<Eigen::VectorXd>(res.data(),
                                     static_cast<Eigen::Index>(res.size()));
}

namespace {

// Components of a frame against the propagated basis at T1:
// D(j,k) = <rows_j, Phi^eta_k(T1)>.
Eigen::MatrixXcd components_vs_basis(const Eigen::MatrixXcd& rows,
                                     const Eigen::MatrixXcd& basis_T1) {
  return rows * basis_T1.conjugate();
}

}  // namespace

LinearControlResult linear_control_around_ref(const ReferenceTrajectory& ref,
                                              const CouplingData& data,
                                              const FrameFamily& family,
                                              const StateFrame& target,
                                              double tol, int max_passes) {
  const int N = ref.N, K = ref.K;
  if (target.particles() != N || target.modes() != K)
    throw InputError("linear_control_around_ref: target shape mismatch");
  const int M = ref.control.intervals();
  const double dt = ref.control.dt();
  const int G = family.freqs.size();
  const int n_diag = N - 1;

  ClosedRows cr_I = make_closed(family, dt, false);
  ClosedRows cr_Xi = make_closed(family, dt, true);

  LinearControlResult result;
  {
    Eigen::MatrixXcd GI = (cr_I.rows * cr_I.rows.adjoint()) / dt;
    result.gram_condition = closed_condition(GI);
    if (result.gram_condition > ref.cfg.cond_limit)
      throw IllConditionedError(
          "linear_control_around_ref: moment family ill-conditioned",
          result.gram_condition);
    Eigen::MatrixXcd GXi = (cr_Xi.rows * cr_Xi.rows.adjoint()) / dt;
    result.gram_condition_Xi = closed_condition(GXi);
    if (result.gram_condition_Xi > 1e12)
      throw DegenerateFamilyError(
          "linear_control_around_ref: the family {f_n} u {f_jj} degenerates "
          "(eta too small; the diagonal functions collapse onto f_0)");
  }

  // biorthogonal diagonal duals g_jj: zero against every f_n, unit against f_jj
  std::vector<Eigen::VectorXd> g_dual(n_diag);
  const int R_Xi = static_cast<int>(cr_Xi.rows.rows());
  for (int j = 0; j < n_diag; ++j) {
    Eigen::VectorXcd unit = Eigen::VectorXcd::Zero(R_Xi);
    for (int r = 0; r < R_Xi; ++r)
      if (cr_Xi.group[r] == -(1 + j)) unit(r) = 1.0;
    double cond_unused;
    g_dual[j] = solve_closed(cr_Xi, unit, cond_unused);
  }

  // pull the target back to T1 (free backward evolution over the zero tail)
  Eigen::MatrixXcd pulled = target.coeffs;
  for (int k = 1; k <= K; ++k)
    pulled.col(k - 1) *= std::exp(kI * eigenvalue(k) * (ref.T_eta - ref.cfg.T1));

  auto solve_pass = [&](const Eigen::MatrixXcd& D,
                        double& cond_out) -> Eigen::VectorXd {
    // moment targets over the closed canonical family
    Eigen::VectorXcd d_groups(G);
    for (int gidx = 0; gidx < G; ++gidx) {
      auto [j, k] = family.freqs.entries[gidx].pairs[0];
      cd val = D(j - 1, k - 1) / (kI * data.mu(j, k));
      if (family.freqs.entries[gidx].key == 0) val = cd(val.real(), 0.0);
      d_groups(gidx) = val;
    }
    const int R = static_cast<int>(cr_I.rows.rows());
    Eigen::VectorXcd d_closed(R);
    for (int r = 0; r < R; ++r)
      d_closed(r) = cr_I.type[r] == 1 ? std::conj(d_groups(cr_I.group[r]))
                                      : d_groups(cr_I.group[r]);
    Eigen::VectorXd v0 = solve_closed(cr_I, d_closed, cond_out);

    // diagonal corrections
    for (int j = 0; j < n_diag; ++j) {
      double y = D(j, j).imag() / data.mu_diag(j + 1);
      double have = 0.0;
      for (int i = 0; i < M; ++i)
        have += v0(i) * family.diag_rows(j, i).real();
      double c = y - have;
      v0 += c * g_dual[j];
    }
    return v0;
  };

  auto measure = [&](const ControlSignal& v) -> Eigen::MatrixXcd {
    StateFrame zero;
    zero.t = 0.0;
    zero.coeffs = Eigen::MatrixXcd::Zero(N, K);
    Trajectory lin = propagate_linearized(ref.control,
                                          eigenstate_frame(N, K, 0.0), v, zero,
                                          data);
    return components_vs_basis(lin.final_frame().coeffs, family.basis_T1);
  };

  const Eigen::MatrixXcd D_target = components_vs_basis(pulled, family.basis_T1);
  const double scale = 1.0 + D_target.cwiseAbs().maxCoeff();

  Eigen::VectorXd v_acc = Eigen::VectorXd::Zero(M);
  Eigen::MatrixXcd D_want = D_target;
  double cond = 0.0;
  for (int pass = 0; pass < max_passes; ++pass) {
    v_acc += solve_pass(D_want, cond);
    ++result.passes;
    Eigen::MatrixXcd D_have =
        measure(ControlSignal::piecewise_constant(ref.cfg.T1, v_acc));
    // residual over controlled components
    double res = 0.0;
    Eigen::MatrixXcd D_res = D_target - D_have;
    for (int gidx = 0; gidx < G; ++gidx) {
      auto [j, k] = family.freqs.entries[gidx].pairs[0];
      res = std::max(res, std::abs(D_res(j - 1, k - 1)));
    }
    for (int j = 0; j < n_diag; ++j)
      res = std::max(res, std::abs(D_res(j, j).imag()));
    result.endpoint_residual = res;
    if (res <= tol * scale) break;
    D_want = D_res;
  }

  result.v = ControlSignal::piecewise_constant(ref.cfg.T1, v_acc);
  return result;
}

LocalControlResult solve_local_control(const ReferenceTrajectory& ref,
                                       const CouplingData& data,
                                       const FrameFamily& family,
                                       const StateFrame& targets, double tol) {
  const int N = ref.N, K = ref.K;
  if (targets.particles() != N || targets.modes() != K)
    throw InputError("solve_local_control: target shape mismatch");

  // compatibility: the Gram of admissible targets must match the initial one
  Eigen::MatrixXcd gram = targets.coeffs * targets.coeffs.adjoint();
  double gram_err =
      (gram - Eigen::MatrixXcd::Identity(N, N)).cwiseAbs().maxCoeff();
  if (gram_err > 1e-6)
    throw PreconditionError(
        "solve_local_control: targets are not orthonormal; the Gram matrix is "
        "a dynamical invariant and must match the initial one");
  for (int j = 0; j < N; ++j) {
    cd overlap =
        ref.end_frame_ortho.coeffs.row(j).dot(targets.coeffs.row(j).transpose());
    if (overlap.real() <= 0.0)
      throw PreconditionError(
          "solve_local_control: Re<target_j, psi_ref^j(T_eta)> must be positive");
  }

  const StateFrame proj_target = project_Xf(ref, targets);
  LocalControlResult out;
  out.u = ref.control;

  for (int iter = 0; iter <= ref.cfg.newton_max_iter; ++iter) {
    Trajectory traj = propagate(eigenstate_frame(N, K, 0.0), out.u, data);
    StateFrame end = traj.final_frame();
    apply_free_phases(end, ref.T_eta - ref.cfg.T1);

    double err = 0.0;
    for (int j = 0; j < N; ++j)
      err = std::max(err, (end.coeffs.row(j) - targets.coeffs.row(j)).norm());
    out.endpoint_error = err;
    out.residual_history.push_back(err);
    out.iterations = iter;
    if (err <= tol) return out;
    if (iter == ref.cfg.newton_max_iter || !std::isfinite(err) ||
        (out.residual_history.size() > 3 &&
         err > 4.0 * out.residual_history[out.residual_history.size() - 3]))
      throw NewtonError("solve_local_control: Newton diverged",
                        out.residual_history);

    StateFrame proj_end = project_Xf(ref, end);
    StateFrame delta;
    delta.t = ref.T_eta;
    delta.coeffs = proj_target.coeffs - proj_end.coeffs;
    LinearControlResult lin =
        linear_control_around_ref(ref, data, family, delta, 1e-8);
    out.u += lin.v;
  }
  return out;  // unreachable
}

}  // namespace qwell
