// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evfl/data_model.hpp"

namespace evfl {

enum class FileFormat { kCsv, kJsonLines };

/// `.jsonl`, `.ndjson` and `.json` select JSON lines; anything else is CSV.
FileFormat detect_format(const std::filesystem::path& path);

struct ParseOptions {
  bool strict = false;  // abort on the first malformed row
  std::optional<FileFormat> format;
};

struct ParseDiagnostics {
  std::size_t rows_read = 0;
  std::size_t malformed_rows = 0;
  std::size_t duplicate_samples = 0;   // merged by last-write-wins
  std::size_t negative_clamped = 0;    // readings clamped to 0
  std::vector<std::string> messages;   // first few malformed-row reasons
};

template <typename T>
struct Parsed {
  T value;
  ParseDiagnostics diagnostics;
};

inline constexpr std::string_view kSessionsHeader =
    "session_id,site_id,station_id,connection_time,disconnect_time,"
    "delivered_energy_kwh,requested_energy_kwh,available_minutes,"
    "requested_departure";
inline constexpr std::string_view kTimeseriesHeader =
    "session_id,timestamp,current_a,pilot_a";

/// One record per row in file order. Empty cells (CSV) or null/missing
/// keys (JSON lines) leave optional fields absent.
Parsed<std::vector<SessionRecord>> parse_sessions(
    const std::filesystem::path& path, const ParseOptions& options = {});

/// Groups samples per session, sorted by timestamp. Duplicate
/// (session, timestamp) rows keep the last row; negative readings are
/// clamped to zero. Both events are counted in the diagnostics.
Parsed<SeriesIndex> parse_timeseries(const std::filesystem::path& path,
                                     const ParseOptions& options = {});

void write_sessions(const std::filesystem::path& path,
                    std::span<const SessionRecord> sessions,
                    FileFormat format = FileFormat::kCsv);
void write_timeseries(const std::filesystem::path& path,
                      const SeriesIndex& series,
                      FileFormat format = FileFormat::kCsv);

/// Parameters of a deterministic synthetic depot. Each session draws a
/// target energy from its station's normal distribution, charges at a
/// plateau current that grows linearly with that energy, and lasts just
/// long enough for the sampled current profile to deliver it.
struct SyntheticDepotSpec {
  std::size_t n_stations = 20;
  std::size_t min_sessions_per_station = 20;
  std::size_t max_sessions_per_station = 60;
  std::vector<double> station_energy_mean_kwh;  // empty: 9 kWh everywhere
  double station_energy_std_kwh = 4.0;
  double heterogeneity_shift_kwh = 0.0;
  double shifted_fraction = 0.5;  // leading stations that get the shift
  double noise_std_kwh = 1.0;
  double sparse_session_fraction = 0.03;  // sampled every 3 min, too sparse
  double missing_pilot_fraction = 0.1;
  double user_input_rate = 0.7;
  double nominal_voltage_v = 208.0;
  std::uint64_t seed = 0;

  double station_mean(std::size_t station) const;
  bool is_shifted(std::size_t station) const;
  void validate() const;
};

struct SyntheticDepot {
  std::vector<SessionRecord> sessions;
  SeriesIndex series;
};

SyntheticDepot generate_synthetic(const SyntheticDepotSpec& spec);

/// Station ids are zero-padded so lexicographic and numeric order agree.
std::string synthetic_station_id(std::size_t station, std::size_t n_stations);

}  // namespace evfl
