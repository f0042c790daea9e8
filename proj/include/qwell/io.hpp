#pragma once

#include <string>

#include "json.hpp"
#include "qwell/dynamics.hpp"
#include "qwell/spectral.hpp"

namespace qwell {

inline constexpr const char* kToolkitVersion = "0.1.0";

// {"type":"poly","coeffs":[...]} or {"type":"samples","x":[...],"y":[...]}
DipoleMoment dipole_from_json(const nlohmann::json& j);

// Schema-checked run configuration shared by the CLI commands.
struct RunConfig {
  nlohmann::json raw;
  DipoleMoment dipole = DipoleMoment::polynomial({0.0, 0.0, 0.0, 1.0});
  int N = 3;
  int K_max = 30;
  int intervals = 4096;
  std::uint64_t seed = 0;
  int threads = 1;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);
};

// CSV with columns t, j, k, re, im (subsampled trajectory frames).
void write_trajectory_csv(const Trajectory& traj, const std::string& path);

// JSON summary with Gram drift, norms, tail mass.
nlohmann::json trajectory_summary(const Trajectory& traj);

void write_json(const nlohmann::json& j, const std::string& path);

}  // namespace qwell
