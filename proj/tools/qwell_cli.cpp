// Batch front-end: simulate, synthesize, build references, run obstruction
// certificates, check hypotheses. Batch-in, report-out; no interactive mode.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "json.hpp"
#include "qwell/dynamics.hpp"
#include "qwell/errors.hpp"
#include "qwell/io.hpp"
#include "qwell/linearized.hpp"
#include "qwell/moments.hpp"
#include "qwell/obstruction.hpp"
#include "qwell/return_method.hpp"
#include "qwell/spectral.hpp"

namespace {

using nlohmann::json;
using namespace qwell;

json base_report(const RunConfig& cfg) {
  json j;
  j["toolkit_version"] = kToolkitVersion;
  j["config"] = cfg.raw;
  j["config"]["N"] = cfg.N;
  j["config"]["K_max"] = cfg.K_max;
  j["config"]["intervals"] = cfg.intervals;
  j["config"]["seed"] = cfg.seed;
  j["config"]["threads"] = cfg.threads;
  return j;
}

CouplingData data_for(const RunConfig& cfg, int K_override = 0) {
  BasisSpec spec;
  spec.K_max = K_override > 0 ? K_override : cfg.K_max;
  return build_coupling_data(cfg.dipole, spec, cfg.N);
}

int cmd_check_hypotheses(const RunConfig& cfg, const std::string& out_dir) {
  CouplingData data = data_for(cfg);
  HypothesisReport hyp = check_hypothesis_mu(data, cfg.N);
  json rep = base_report(cfg);
  rep["c_hat"] = hyp.c_hat;
  rep["c_hat_argmin"] = {hyp.argmin_j, hyp.argmin_k};
  rep["window_K"] = hyp.window_K;
  rep["hypothesis_mu_satisfied_on_window"] = !hyp.violated;
  rep["A_scalar"] = data.A_scalar;
  rep["B_scalar"] = data.B_scalar;
  rep["combo_531"] = data.combo_531;
  rep["combo_41"] = data.combo_41;
  rep["diag_gap"] = data.diag_gap;
  rep["verdicts"] = {
      {"hyp_coupling_lower_bound", !hyp.violated},
      {"hyp_A_nonzero", std::abs(data.A_scalar) > 1e-12},
      {"hyp_B_nonzero", std::abs(data.B_scalar) > 1e-12},
      {"combo_531_nonzero", std::abs(data.combo_531) > 1e-12},
      {"combo_41_nonzero", std::abs(data.combo_41) > 1e-12},
      {"diag_gap_nonzero", std::abs(data.diag_gap) > 1e-12},
  };
  write_json(rep, out_dir + "/hypotheses.json");
  std::cout << "wrote " << out_dir << "/hypotheses.json\n";
  return 0;
}

ControlSignal control_from_config(const RunConfig& cfg, double T) {
  if (!cfg.raw.contains("control") ||
      cfg.raw["control"].value("type", "zero") == "zero")
    return ControlSignal::zero(T, cfg.intervals);
  const json& jc = cfg.raw["control"];
  if (jc["type"] == "values") {
    auto vals = jc.at("values").get<std::vector<double>>();
    Eigen::Map<Eigen::VectorXd> v(vals.data(),
                                  static_cast<Eigen::Index>(vals.size()));
    return ControlSignal::piecewise_constant(T, v);
  }
  if (jc["type"] == "noise") {
    std::mt19937_64 rng(cfg.seed);
    Eigen::VectorXd v(cfg.intervals);
    for (int i = 0; i < cfg.intervals; ++i)
      v(i) = 2.0 * ((rng() >> 11) * (1.0 / 9007199254740992.0)) - 1.0;
    double amp = jc.value("amplitude", 0.1);
    ControlSignal u = ControlSignal::piecewise_constant(T, v);
    u *= amp / std::max(u.l2_norm(), 1e-300);
    return u;
  }
  throw InputError("config: unknown control type");
}

int cmd_simulate(const RunConfig& cfg, const std::string& out_dir) {
  const double T = cfg.raw.value("T", 1.0);
  if (T <= 0.0) throw InputError("config: T must be positive");
  CouplingData data = data_for(cfg);
  ControlSignal u = control_from_config(cfg, T);
  PropagatorOptions opts;
  opts.store_every = cfg.raw.value("store_every", cfg.intervals / 64);
  Trajectory traj = propagate(eigenstate_frame(cfg.N, cfg.K_max, 0.0), u, data,
                              opts);
  write_trajectory_csv(traj, out_dir + "/trajectory.csv");
  json rep = base_report(cfg);
  rep["summary"] = trajectory_summary(traj);
  write_json(rep, out_dir + "/simulate.json");
  std::cout << "wrote " << out_dir << "/trajectory.csv and simulate.json\n";
  return 0;
}

int cmd_obstruction(const RunConfig& cfg, const std::string& out_dir) {
  const json& raw = cfg.raw;
  const std::string variant_name = raw.value("variant", "N2");
  CombinedVariant variant =
      variant_name == "N3" ? CombinedVariant::N3 : CombinedVariant::N2;
  const int K_trunc = raw.value("K_trunc", 128);
  const int resolution = raw.value("resolution", 256);
  CouplingData data = data_for(cfg, std::max(cfg.K_max, K_trunc));

  std::vector<double> T_grid;
  if (raw.contains("T_grid"))
    T_grid = raw["T_grid"].get<std::vector<double>>();
  else
    for (int i = 1; i <= 20; ++i) T_grid.push_back(0.01 * i);

  json rep = base_report(cfg);
  const double scalar =
      variant == CombinedVariant::N2 ? data.A_scalar : data.B_scalar;
  if (std::abs(scalar) < 1e-14) {
    rep["coercivity"] = {{"applicable", false},
                         {"reason", "scalar coefficient vanishes"}};
  } else {
    CoercivityReport co =
        coercivity_scan(data, variant, T_grid, resolution, K_trunc);
    json jc;
    jc["applicable"] = true;
    jc["variant"] = variant_name;
    jc["scalar"] = co.scalar;
    jc["T_grid"] = T_grid;
    jc["rayleigh_max"] =
        std::vector<double>(co.rayleigh_max.data(),
                            co.rayleigh_max.data() + co.rayleigh_max.size());
    jc["T_star_est"] = co.T_star_est;
    jc["t_star_found"] = co.t_star_found;
    jc["resolution"] = resolution;
    jc["K_trunc"] = K_trunc;
    rep["coercivity"] = jc;
    // plot-ready CSV of (T, rayleigh_max)
    std::ofstream csv(out_dir + "/coercivity.csv");
    csv << "T,rayleigh_max\n";
    csv.precision(17);
    for (size_t i = 0; i < T_grid.size(); ++i)
      csv << T_grid[i] << ',' << co.rayleigh_max(static_cast<Eigen::Index>(i))
          << '\n';
  }

  if (raw.contains("reachability")) {
    const json& jr = raw["reachability"];
    ReachabilityReport re = reachability_experiment(
        data, jr.value("T", 0.1), variant, jr.value("trials", 200), cfg.seed,
        jr.value("budget", 0.1), jr.value("intervals", 512),
        jr.value("modes", 16), cfg.threads);
    json jj;
    jj["T"] = re.T;
    jj["trials"] = re.trials;
    jj["violations"] = re.violations;
    jj["skipped"] = re.skipped;
    jj["seed"] = re.seed;
    jj["control_budget"] = re.control_budget;
    jj["margin_min"] = re.margin_min;
    jj["margin_max"] = re.margin_max;
    jj["margin_mean"] = re.margin_mean;
    jj["C_star_fit"] = re.C_star_fit;
    rep["reachability"] = jj;
  }
  write_json(rep, out_dir + "/obstruction.json");
  std::cout << "wrote " << out_dir << "/obstruction.json\n";
  return 0;
}

ReferenceVariant variant_from_string(const std::string& s) {
  if (s == "N3" || s == "N3_phase_delay") return ReferenceVariant::N3PhaseDelay;
  if (s == "N2_phase") return ReferenceVariant::N2Phase;
  if (s == "N2_delay") return ReferenceVariant::N2Delay;
  throw InputError("config: unknown reference variant \"" + s + "\"");
}

ReferenceConfig reference_config_from(const json& raw) {
  ReferenceConfig rc;
  if (!raw.contains("reference")) return rc;
  const json& jr = raw["reference"];
  rc.eta = jr.value("eta", rc.eta);
  rc.eps = jr.value("eps", rc.eps);
  rc.eps1 = jr.value("eps1", rc.eps1);
  rc.T1 = jr.value("T1", rc.T1);
  rc.K_pump = jr.value("K_pump", rc.K_pump);
  rc.K_vanish = jr.value("K_vanish", rc.K_vanish);
  rc.grid_per_unit = jr.value("grid_per_unit", rc.grid_per_unit);
  return rc;
}

json reference_report(const ReferenceTrajectory& ref) {
  json j;
  j["variant"] = static_cast<int>(ref.variant);
  j["eta"] = ref.cfg.eta;
  j["eps"] = ref.cfg.eps;
  j["eps1"] = ref.cfg.eps1;
  j["T1"] = ref.cfg.T1;
  j["T_eta"] = ref.T_eta;
  j["theta_eta"] = ref.theta_eta;
  j["thetas"] = std::vector<double>(ref.thetas.data(),
                                    ref.thetas.data() + ref.thetas.size());
  j["stage1_residual"] = ref.stage1_residual;
  j["stage2_residual"] = ref.stage2_residual;
  j["endpoint_error"] = ref.endpoint_error;
  j["control_l2"] = ref.control_l2;
  j["control_l2_over_eta"] =
      ref.cfg.eta > 0 ? ref.control_l2 / ref.cfg.eta : 0.0;
  j["gram_drift"] = ref.gram_drift;
  return j;
}

void write_control_csv(const ControlSignal& u, const std::string& path) {
  std::ofstream out(path);
  out << "t,u\n";
  out.precision(17);
  for (int i = 0; i < u.intervals(); ++i)
    out << i * u.dt() << ',' << u.values()(i) << '\n';
}

int cmd_build_reference(const RunConfig& cfg, const std::string& out_dir) {
  const std::string vname =
      cfg.raw.contains("reference")
          ? cfg.raw["reference"].value("variant", "N3")
          : "N3";
  ReferenceVariant variant = variant_from_string(vname);
  ReferenceConfig rc = reference_config_from(cfg.raw);
  RunConfig cfg2 = cfg;
  cfg2.N = variant_particles(variant);
  CouplingData data = data_for(cfg2);
  ReferenceTrajectory ref = build_reference(data, variant, rc);
  json rep = base_report(cfg);
  rep["reference"] = reference_report(ref);
  write_json(rep, out_dir + "/reference.json");
  write_control_csv(ref.control, out_dir + "/reference_control.csv");
  std::cout << "wrote " << out_dir << "/reference.json and reference_control.csv\n";
  return 0;
}

int cmd_control(const RunConfig& cfg, const std::string& out_dir) {
  const std::string vname =
      cfg.raw.contains("reference")
          ? cfg.raw["reference"].value("variant", "N3")
          : "N3";
  ReferenceVariant variant = variant_from_string(vname);
  ReferenceConfig rc = reference_config_from(cfg.raw);
  RunConfig cfg2 = cfg;
  cfg2.N = variant_particles(variant);
  CouplingData data = data_for(cfg2);
  ReferenceTrajectory ref = build_reference(data, variant, rc);
  FrameFamily family = reference_frame_functions(ref, data);

  // targets: either explicit rows [[re,im],...] per particle or a random
  // phase-preserving rotation of the reference endpoint
  StateFrame targets = ref.end_frame_ortho;
  if (cfg.raw.contains("targets") && cfg.raw["targets"].contains("rows")) {
    const json& rows = cfg.raw["targets"]["rows"];
    if (static_cast<int>(rows.size()) != ref.N)
      throw InputError("config: targets.rows must have one row per particle");
    for (int j = 0; j < ref.N; ++j) {
      const json& row = rows[j];
      if (static_cast<int>(row.size()) != ref.K)
        throw InputError("config: target rows must have K_max entries");
      for (int k = 0; k < ref.K; ++k)
        targets.coeffs(j, k) =
            cd(row[k][0].get<double>(), row[k][1].get<double>());
    }
  } else {
    const double size = cfg.raw.contains("targets")
                            ? cfg.raw["targets"].value("rotation_size", 1e-4)
                            : 1e-4;
    std::mt19937_64 rng(cfg.seed);
    auto gauss = [&rng]() {
      double u1 = std::max((rng() >> 11) * (1.0 / 9007199254740992.0), 1e-16);
      double u2 = (rng() >> 11) * (1.0 / 9007199254740992.0);
      return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    };
    Eigen::MatrixXcd H(ref.K, ref.K);
    for (int a = 0; a < ref.K; ++a) {
      H(a, a) = gauss();
      for (int b = 0; b < a; ++b) {
        H(a, b) = cd(gauss(), gauss()) / std::sqrt(2.0);
        H(b, a) = std::conj(H(a, b));
      }
    }
    H /= H.norm();
    // U = exp(i size H): unitary rotation of size ~ rotation_size
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
    Eigen::VectorXcd ph(ref.K);
    for (int a = 0; a < ref.K; ++a)
      ph(a) = std::exp(cd(0.0, size * es.eigenvalues()(a)));
    Eigen::MatrixXcd U = es.eigenvectors() * ph.asDiagonal() *
                         es.eigenvectors().adjoint();
    targets.coeffs = ref.end_frame_ortho.coeffs * U.transpose();
  }

  LocalControlResult res = solve_local_control(ref, data, family, targets);
  json rep = base_report(cfg);
  rep["reference"] = reference_report(ref);
  rep["control"] = {{"iterations", res.iterations},
                    {"endpoint_error", res.endpoint_error},
                    {"residual_history", res.residual_history},
                    {"control_l2", res.u.l2_norm()}};
  write_json(rep, out_dir + "/control.json");
  write_control_csv(res.u, out_dir + "/control.csv");
  std::cout << "wrote " << out_dir << "/control.json and control.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simultaneous bilinear control of quantum particles in an "
               "infinite well: simulation, moment-based synthesis, reference "
               "trajectories, obstruction certificates"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed_override = 0;
  bool seed_set = false;
  int threads_override = 0;

  app.add_option("--config", config_path, "JSON configuration file")
      ->required();
  app.add_option("--out", out_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", seed_override, "RNG seed override");
  app.add_option("--threads", threads_override, "worker threads override");

  auto* c_hyp = app.add_subcommand("check-hypotheses",
                                   "coupling lower bound and scalar conditions");
  auto* c_sim = app.add_subcommand("simulate", "propagate and export trajectory");
  auto* c_obs = app.add_subcommand("obstruction",
                                   "coercivity scan and reachability experiment");
  auto* c_ref = app.add_subcommand("build-reference", "reference trajectory");
  auto* c_ctl = app.add_subcommand("control", "local controllability solve");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = RunConfig::from_file(config_path);
    if (seed_opt->count() > 0) {
      cfg.seed = seed_override;
      seed_set = true;
      (void)seed_set;
    }
    if (threads_override > 0) cfg.threads = threads_override;
    std::filesystem::create_directories(out_dir);

    if (c_hyp->parsed()) return cmd_check_hypotheses(cfg, out_dir);
    if (c_sim->parsed()) return cmd_simulate(cfg, out_dir);
    if (c_obs->parsed()) return cmd_obstruction(cfg, out_dir);
    if (c_ref->parsed()) return cmd_build_reference(cfg, out_dir);
    if (c_ctl->parsed()) return cmd_control(cfg, out_dir);
    return 2;
  } catch (const InputError& e) {
    std::cerr << "config/input error: " << e.what() << '\n';
    return 2;
  } catch (const PreconditionError& e) {
    std::cerr << "precondition error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
}
