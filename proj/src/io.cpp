#include "qwell/io.hpp"

#include <fstream>

#include "qwell/errors.hpp"

namespace qwell {

using nlohmann::json;

DipoleMoment dipole_from_json(const json& j) {
  if (!j.is_object() || !j.contains("type"))
    throw InputError("dipole: expected an object with a \"type\" field");
  const std::string type = j.at("type").get<std::string>();
  if (type == "poly") {
    if (!j.contains("coeffs") || !j.at("coeffs").is_array())
      throw InputError("dipole: poly requires a \"coeffs\" array");
    return DipoleMoment::polynomial(j.at("coeffs").get<std::vector<double>>());
  }
  if (type == "samples") {
    if (!j.contains("x") || !j.contains("y"))
      throw InputError("dipole: samples require \"x\" and \"y\" arrays");
    auto xs = j.at("x").get<std::vector<double>>();
    auto ys = j.at("y").get<std::vector<double>>();
    Eigen::Map<Eigen::VectorXd> x(xs.data(), static_cast<Eigen::Index>(xs.size()));
    Eigen::Map<Eigen::VectorXd> y(ys.data(), static_cast<Eigen::Index>(ys.size()));
    return DipoleMoment::sampled(x, y);
  }
  throw InputError("dipole: unknown type \"" + type + "\"");
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw InputError("config: expected a JSON object");
  RunConfig cfg;
  cfg.raw = j;
  if (j.contains("dipole")) cfg.dipole = dipole_from_json(j.at("dipole"));
  cfg.N = j.value("N", 3);
  cfg.K_max = j.value("K_max", 30);
  cfg.intervals = j.value("intervals", 4096);
  cfg.seed = j.value("seed", static_cast<std::uint64_t>(0));
  cfg.threads = j.value("threads", 1);
  if (cfg.N < 1 || cfg.N > 3) throw InputError("config: N must be 1, 2 or 3");
  if (cfg.K_max < cfg.N + 2) throw InputError("config: K_max must be >= N + 2");
  if (cfg.intervals < 1) throw InputError("config: intervals must be positive");
  if (cfg.threads < 1) throw InputError("config: threads must be positive");
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw InputError(std::string("config: JSON parse error: ") + e.what());
  }
  return from_json(j);
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path + " for writing");
  out << "t,j,k,re,im\n";
  out.precision(17);
  for (const auto& frame : traj.frames)
    for (int j = 1; j <= frame.particles(); ++j)
      for (int k = 1; k <= frame.modes(); ++k)
        out << frame.t << ',' << j << ',' << k << ','
            << frame.coeffs(j - 1, k - 1).real() << ','
            << frame.coeffs(j - 1, k - 1).imag() << '\n';
}

json trajectory_summary(const Trajectory& traj) {
  json j;
  j["gram_drift"] = traj.meta.gram_drift;
  j["norm_drift"] = traj.meta.norm_drift;
  j["tail_mass"] = traj.meta.tail_mass;
  j["frames"] = traj.frames.size();
  j["duration"] = traj.control.duration();
  j["intervals"] = traj.control.intervals();
  j["control_l2"] = traj.control.l2_norm();
  std::vector<double> norms;
  for (int p = 0; p < traj.final_frame().particles(); ++p)
    norms.push_back(traj.final_frame().coeffs.row(p).norm());
  j["final_norms"] = norms;
  return j;
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

}  // namespace qwell
