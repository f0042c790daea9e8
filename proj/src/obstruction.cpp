#include "qwell/obstruction.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include "qwell/errors.hpp"
#include "qwell/linearized.hpp"
#include "qwell/moments.hpp"

namespace qwell {

namespace {

struct KernelTerm {
  double omega;
  double weight;
};

std::vector<KernelTerm> q_kernel_terms(const CouplingData& data, int j,
                                       int K_trunc) {
  if (K_trunc > data.K_max)
    throw InputError("quadratic form: K_trunc exceeds coupling data");
  std::vector<KernelTerm> terms;
  for (int k = 1; k <= K_trunc; ++k) {
    if (k == j) continue;
    double m = data.mu(j, k);
    terms.push_back({eigenvalue(k) - eigenvalue(j), m * m});
  }
  return terms;
}

std::vector<KernelTerm> h_kernel_terms(const CouplingData& data, int j,
                                       int K_trunc) {
  auto terms = q_kernel_terms(data, j, K_trunc);
  for (auto& t : terms) t.weight *= t.omega * t.omega;
  return terms;
}

double kernel_double_integral(const ControlSignal& s,
                              const std::vector<KernelTerm>& terms) {
  double acc = 0.0;
  for (const auto& t : terms)
    acc += t.weight * double_conv_moment(s, t.omega).imag();
  return acc;
}

std::vector<std::pair<double, std::vector<KernelTerm>>> combined_terms(
    const CouplingData& data, CombinedVariant variant, int K_trunc) {
  std::vector<std::pair<double, std::vector<KernelTerm>>> parts;
  if (variant == CombinedVariant::N2) {
    if (data.N < 2) throw PreconditionError("combined form: N2 variant needs N >= 2");
    parts.emplace_back(-data.mu_diag(2), h_kernel_terms(data, 1, K_trunc));
    parts.emplace_back(data.mu_diag(1), h_kernel_terms(data, 2, K_trunc));
  } else {
    if (data.N < 3) throw PreconditionError("combined form: N3 variant needs N >= 3");
    parts.emplace_back(data.mu_diag(3) - data.mu_diag(2),
                       h_kernel_terms(data, 1, K_trunc));
    parts.emplace_back(data.mu_diag(1) - data.mu_diag(3),
                       h_kernel_terms(data, 2, K_trunc));
    parts.emplace_back(data.mu_diag(2) - data.mu_diag(1),
                       h_kernel_terms(data, 3, K_trunc));
  }
  return parts;
}

double combined_grad_coef(const CouplingData& data, CombinedVariant variant) {
  if (variant == CombinedVariant::N2)
    return data.mu_diag(1) * data.grad(2) - data.mu_diag(2) * data.grad(1);
  return (data.mu_diag(3) - data.mu_diag(2)) * data.grad(1) +
         (data.mu_diag(1) - data.mu_diag(3)) * data.grad(2) +
         (data.mu_diag(2) - data.mu_diag(1)) * data.grad(3);
}

}  // namespace

KernelTable kernel_h(const CouplingData& data, int j, int K_trunc,
                     const Eigen::VectorXd& grid) {
  auto terms = h_kernel_terms(data, j, K_trunc);
  KernelTable table;
  table.j = j;
  table.K_trunc = K_trunc;
  table.grid = grid;
  table.values.resize(grid.size());
  for (int i = 0; i < grid.size(); ++i) {
    double acc = 0.0;
    for (const auto& t : terms) acc += t.weight * std::sin(t.omega * grid(i));
    table.values(i) = acc;
  }
  // k^-3 decay model: c = max |<mu phi_j,phi_k>| k^3 over the top decade;
  // then sum_{k>K} (lam_k-lam_j)^2 (c/k^3)^2 <= c^2 pi^4 / K.
  double c_fit = 0.0, c_lo = std::numeric_limits<double>::infinity();
  int k_lo = std::max(2, K_trunc - K_trunc / 4);
  for (int k = k_lo; k <= K_trunc; ++k) {
    double val = std::abs(data.mu(j, k)) * std::pow(k, 3);
    c_fit = std::max(c_fit, val);
    c_lo = std::min(c_lo, val);
  }
  table.tail_bound = c_fit * c_fit * std::pow(kPi, 4) / K_trunc;
  // growing |.| k^3 over the window means the k^-3 model is failing
  double head = 0.0;
  for (int k = std::max(2, j + 1); k <= std::min(K_trunc, j + 8); ++k)
    head = std::max(head, std::abs(data.mu(j, k)) * std::pow(k, 3));
  table.tail_divergent = c_lo > 4.0 * std::max(head, 1e-300);
  return table;
}

double quadratic_form_Q(const ControlSignal& v, const CouplingData& data, int j,
                        int K_trunc) {
  return kernel_double_integral(v, q_kernel_terms(data, j, K_trunc));
}

double quadratic_form_calQ(const ControlSignal& s, const CouplingData& data,
                           int j, int K_trunc) {
  if (j > data.N)
    throw InputError("quadratic_form_calQ: grad coupling not built for this j");
  return -data.grad(j) * s.l2_norm_sq() +
         kernel_double_integral(s, h_kernel_terms(data, j, K_trunc));
}

double combined_form(const ControlSignal& s, const CouplingData& data,
                     CombinedVariant variant, int K_trunc) {
  double coef = combined_grad_coef(data, variant);
  double expected = variant == CombinedVariant::N2 ? data.A_scalar : data.B_scalar;
  if (std::abs(coef - expected) > 1e-10 * (1.0 + std::abs(expected)))
    throw NumericalError("combined form: ||s||^2 coefficient mismatch");
  double acc = -coef * s.l2_norm_sq();
  for (const auto& [w, terms] : combined_terms(data, variant, K_trunc))
    acc += w * kernel_double_integral(s, terms);
  return acc;
}

CoercivityReport coercivity_scan(const CouplingData& data, CombinedVariant variant,
                                 const std::vector<double>& T_grid, int resolution,
                                 int K_trunc) {
  CoercivityReport report;
  report.variant = variant;
  report.resolution = resolution;
  report.K_trunc = K_trunc;
  report.scalar =
      variant == CombinedVariant::N2 ? data.A_scalar : data.B_scalar;
  report.degenerate = std::abs(report.scalar) < 1e-14;
  report.T_grid = Eigen::Map<const Eigen::VectorXd>(T_grid.data(), T_grid.size());
  report.rayleigh_max.resize(T_grid.size());

  const double coef = combined_grad_coef(data, variant);
  const double sgn = report.degenerate ? 1.0 : (report.scalar > 0 ? 1.0 : -1.0);
  auto parts = combined_terms(data, variant, K_trunc);

  for (int ti = 0; ti < static_cast<int>(T_grid.size()); ++ti) {
    const double T = T_grid[ti];
    const int n = resolution;
    const double dt = T / n;
    // Toeplitz kernel of the double integral over piecewise-constant s:
    //   off-diagonal (i > l): sum_w W 4 sin^2(w dt/2)/w^2 sin(w (i-l) dt)
    //   diagonal:             sum_w W (dt/w - sin(w dt)/w^2)
    Eigen::VectorXd kappa = Eigen::VectorXd::Zero(n);
    double diag_kernel = 0.0;
    for (const auto& [wj, terms] : parts) {
      for (const auto& t : terms) {
        const double w = t.omega, W = wj * t.weight;
        if (w == 0.0) continue;
        const double amp = 4.0 * std::pow(std::sin(w * dt / 2.0), 2) / (w * w);
        for (int d = 1; d < n; ++d) kappa(d) += W * amp * std::sin(w * d * dt);
        diag_kernel += W * (dt / w - std::sin(w * dt) / (w * w));
      }
    }
    Eigen::MatrixXd Q(n, n);
    for (int i = 0; i < n; ++i) {
      Q(i, i) = sgn * (-coef * dt + diag_kernel);
      for (int l = 0; l < i; ++l) {
        Q(i, l) = sgn * kappa(i - l) / 2.0;
        Q(l, i) = Q(i, l);
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q);
    if (es.info() != Eigen::Success)
      throw NumericalError("coercivity_scan: eigensolve failed");
    report.rayleigh_max(ti) = es.eigenvalues().maxCoeff() / dt;
    report.samples_tested += n;
  }

  for (int ti = 0; ti < static_cast<int>(T_grid.size()); ++ti)
    if (report.rayleigh_max(ti) < 0.0) {
      report.T_star_est = T_grid[ti];
      report.t_star_found = true;
    }
  return report;
}

namespace {

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  // least-squares slope of log|y| vs log x, ignoring exact zeros
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    if (y[i] == 0.0) continue;
    double lx = std::log(x[i]), ly = std::log(std::abs(y[i]));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 2) return 0.0;
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

ExpansionOrderReport expansion_order_check(const DipoleMoment& mu,
                                           const BasisSpec& spec, int j, double T,
                                           const ControlSignal& s_shape,
                                           const std::vector<double>& eps_list) {
  if (j > 3) throw InputError("expansion_order_check: j must be <= 3");
  if (s_shape.kind() != SignalKind::PiecewiseLinear)
    throw InputError("expansion_order_check: s_shape must be piecewise-linear");
  CouplingData data = build_coupling_data(mu, spec, 3);
  AuxOperators ops = assemble_aux_operators(mu, spec);
  const int K = spec.K_max;

  const double calQ_shape = quadratic_form_calQ(s_shape, data, j, K);
  // derivative of s_shape: the control v with s = int v
  Eigen::VectorXd dv(s_shape.intervals());
  for (int i = 0; i < s_shape.intervals(); ++i) {
    double a, b;
    s_shape.line_on(i, a, b);
    dv(i) = b;
  }
  ControlSignal v_shape = ControlSignal::piecewise_constant(T, dv);

  ExpansionOrderReport rep;
  StateFrame psi0 = eigenstate_frame(1, K, 0.0);
  psi0.coeffs.setZero();
  psi0.coeffs(0, j - 1) = 1.0;

  for (double eps : eps_list) {
    ControlSignal s = s_shape.scaled(eps);
    Trajectory traj = propagate_auxiliary(s, ops, psi0);
    const Eigen::VectorXcd z =
        endpoint_vs_eigenstates(traj.final_frame()).row(0).transpose();
    const double value = z(j - 1).imag();

    // first-order field: Psi~ = Psi - i s(T) mu Phi_j, in <.,Phi_k(T)> coords
    Eigen::VectorXcd psi_tilde1(K);
    const double sT = s.values()(s.values().size() - 1);
    for (int k = 1; k <= K; ++k) {
      cd mom = signal_moment(v_shape.scaled(eps), eigenvalue(k) - eigenvalue(j));
      cd rot = std::exp(cd(0.0, (eigenvalue(k) - eigenvalue(j)) * T));
      psi_tilde1(k - 1) =
          cd(0.0, 1.0) * data.mu(j, k) * mom - cd(0.0, sT) * data.mu(j, k) * rot;
    }
    Eigen::VectorXcd delta = z - psi_tilde1;
    delta(j - 1) -= 1.0;

    rep.eps.push_back(eps);
    rep.value.push_back(value);
    rep.residual.push_back(std::abs(value - eps * eps * calQ_shape));
    rep.first_order.push_back(delta.norm());
  }
  rep.value_slope = fit_slope(rep.eps, rep.value);
  rep.residual_slope = fit_slope(rep.eps, rep.residual);
  rep.first_order_slope = fit_slope(rep.eps, rep.first_order);
  return rep;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double uniform01(std::mt19937_64& rng) {
  return (rng() >> 11) * (1.0 / 9007199254740992.0);
}

double gaussian(std::mt19937_64& rng) {
  // Box-Muller on raw bits: identical streams on every platform
  double u1 = 0.0;
  do {
    u1 = uniform01(rng);
  } while (u1 <= 0.0);
  double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

ControlSignal band_limited_noise(double T, int intervals, int n_modes,
                                 std::mt19937_64& rng) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(intervals);
  const double dt = T / intervals;
  for (int m = 1; m <= n_modes; ++m) {
    double a = gaussian(rng), b = gaussian(rng);
    for (int i = 0; i < intervals; ++i) {
      double t = (i + 0.5) * dt;
      v(i) += a * std::cos(2.0 * kPi * m * t / T) +
              b * std::sin(2.0 * kPi * m * t / T);
    }
  }
  return ControlSignal::piecewise_constant(T, std::move(v));
}

}  // namespace

ReachabilityReport reachability_experiment(const CouplingData& data, double T,
                                           CombinedVariant variant, int trials,
                                           std::uint64_t seed,
                                           double control_budget, int intervals,
                                           int n_modes, int threads) {
  const int N = variant == CombinedVariant::N2 ? 2 : 3;
  if (data.N < N)
    throw PreconditionError("reachability_experiment: coupling data N too small");
  ReachabilityReport rep;
  rep.variant = variant;
  rep.T = T;
  rep.trials = trials;
  rep.seed = seed;
  rep.control_budget = control_budget;
  rep.margins.assign(trials, 0.0);
  std::vector<int> flags(trials, 0);  // 0 ok, 1 violation, 2 skipped

  Eigen::Vector3d wts;
  if (variant == CombinedVariant::N2)
    wts = {-data.mu_diag(2), data.mu_diag(1), 0.0};
  else
    wts = {data.mu_diag(3) - data.mu_diag(2), data.mu_diag(1) - data.mu_diag(3),
           data.mu_diag(2) - data.mu_diag(1)};
  const double scalar =
      variant == CombinedVariant::N2 ? data.A_scalar : data.B_scalar;
  const double sgn = scalar >= 0.0 ? 1.0 : -1.0;
  const StateFrame psi0 = eigenstate_frame(N, data.K_max, 0.0);

  auto run_trial = [&](int t) {
    std::mt19937_64 rng(splitmix64(seed ^ (0x51ed270b2f6c87ULL * (t + 1))));
    ControlSignal v = band_limited_noise(T, intervals, n_modes, rng);
    double norm = v.l2_norm();
    if (norm == 0.0) {
      flags[t] = 2;
      return;
    }
    v *= control_budget / norm;
    v = project_VT(v, data.K_max);
    if (v.l2_norm() > control_budget * (1.0 + 1e-9) || v.l2_norm() == 0.0) {
      flags[t] = 2;
      return;
    }
    Trajectory traj = propagate(psi0, v, data);
    Eigen::MatrixXcd endpoint = endpoint_vs_eigenstates(traj.final_frame());
    double fn = 0.0;
    for (int jj = 1; jj <= N; ++jj)
      fn += wts(jj - 1) * endpoint(jj - 1, jj - 1).imag();
    double s_norm_sq = v.primitive().l2_norm_sq();
    rep.margins[t] = sgn * fn / s_norm_sq;
    flags[t] = rep.margins[t] >= 0.0 ? 1 : 0;
  };

  if (threads <= 1) {
    for (int t = 0; t < trials; ++t) run_trial(t);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < threads; ++w)
      pool.emplace_back([&] {
        for (int t = next.fetch_add(1); t < trials; t = next.fetch_add(1))
          run_trial(t);
      });
    for (auto& th : pool) th.join();
  }

  double sum = 0.0;
  rep.margin_min = std::numeric_limits<double>::infinity();
  rep.margin_max = -std::numeric_limits<double>::infinity();
  int counted = 0;
  for (int t = 0; t < trials; ++t) {
    if (flags[t] == 2) {
      ++rep.skipped;
      continue;
    }
    if (flags[t] == 1) ++rep.violations;
    rep.margin_min = std::min(rep.margin_min, rep.margins[t]);
    rep.margin_max = std::max(rep.margin_max, rep.margins[t]);
    sum += rep.margins[t];
    ++counted;
  }
  rep.margin_mean = counted > 0 ? sum / counted : 0.0;
  rep.C_star_fit = counted > 0 ? -rep.margin_max : 0.0;
  return rep;
}

}  // namespace qwell
