// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "evfl/data_model.hpp"
#include "evfl/evaluation.hpp"
#include "evfl/heterogeneity.hpp"
#include "evfl/ingestion.hpp"

namespace evfl::cli {

/// Everything a subcommand needs. Loaded from `--config` (JSON), then
/// overridden by explicit flags; the effective value is echoed to
/// `<out>/config.json`.
struct RunConfig {
  std::string command;
  std::string in;
  std::string out;
  std::string sessions;    // explicit file; default <in>/sessions.{csv,jsonl}
  std::string timeseries;  // explicit file; default <in>/timeseries.{csv,jsonl}
  std::string format = "csv";
  bool strict = false;
  DatasetConfig dataset;
  SyntheticDepotSpec synthetic;
  ExperimentConfig experiment;
  HeterogeneityConfig heterogeneity;
  std::vector<std::uint64_t> seeds = default_seeds();
  std::vector<std::string> runs;

  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Missing keys keep their defaults.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Exit codes: 0 success, 1 validation/config error, 2 I/O error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

int dispatch(int argc, const char* const* argv, std::ostream& out,
             std::ostream& err);

}  // namespace evfl::cli
