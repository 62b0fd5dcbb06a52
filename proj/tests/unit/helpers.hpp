// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <iterator>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "evfl/data_model.hpp"
#include "evfl/time.hpp"

namespace evfl::test {

inline Timestamp t0() { return from_civil(2019, 1, 7, 8, 30, 0); }

inline SessionRecord make_session(std::string id, std::string station,
                                  std::optional<double> target = 9.0,
                                  Timestamp conn = t0()) {
  SessionRecord s;
  s.session_id = std::move(id);
  s.site_id = "site";
  s.station_id = std::move(station);
  s.connection_time = conn;
  s.delivered_energy_kwh = target;
  return s;
}

inline TimeSeriesSample sample(const std::string& id, Timestamp t,
                               std::optional<double> current,
                               std::optional<double> pilot = std::nullopt) {
  return {id, t, current, pilot};
}

// Samples every `step` seconds from the connection, `n` of them.
inline std::vector<TimeSeriesSample> ramp(const SessionRecord& s, std::size_t n,
                                          std::int64_t step, double current,
                                          std::optional<double> pilot = 32.0) {
  std::vector<TimeSeriesSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(sample(s.session_id,
                         s.connection_time.plus_seconds(step * static_cast<std::int64_t>(i)),
                         current, pilot));
  }
  return out;
}

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("evfl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace evfl::test
