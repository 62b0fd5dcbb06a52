// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evfl/time.hpp"

namespace evfl {

/// One charging session: metadata, optional user inputs and the target.
struct SessionRecord {
  std::string session_id;
  std::string site_id;
  std::string station_id;
  Timestamp connection_time;
  std::optional<Timestamp> disconnect_time;
  std::optional<double> delivered_energy_kwh;  // regression target
  std::optional<double> requested_energy_kwh;
  std::optional<double> available_minutes;
  std::optional<Timestamp> requested_departure;

  bool operator==(const SessionRecord&) const = default;
};

/// One timestamped (current, pilot) observation. At least one signal is set.
struct TimeSeriesSample {
  std::string session_id;
  Timestamp timestamp;
  std::optional<double> current_a;
  std::optional<double> pilot_a;

  bool operator==(const TimeSeriesSample&) const = default;
};

/// Samples grouped by session id, each group strictly increasing in time.
using SeriesIndex = std::map<std::string, std::vector<TimeSeriesSample>>;

struct DatasetConfig {
  double early_window_minutes = 10.0;
  int min_early_current_samples = 5;
  double nominal_voltage_v = 208.0;

  std::int64_t early_window_seconds() const {
    return static_cast<std::int64_t>(early_window_minutes * 60.0);
  }

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

/// Throws ValidationError on empty or duplicate session ids, a negative
/// target, or a disconnect time before the connection time.
void validate_sessions(std::span<const SessionRecord> sessions);

/// True iff `t` lies in the closed early window [conn, conn + W].
inline bool in_early_window(Timestamp conn, Timestamp t,
                            std::int64_t window_seconds) {
  return t >= conn && t.seconds <= conn.seconds + window_seconds;
}

/// Number of samples carrying a current reading inside the early window.
std::size_t count_early_current(const SessionRecord& session,
                                std::span<const TimeSeriesSample> samples,
                                const DatasetConfig& cfg);

/// Clamps negative current/pilot readings to zero. Returns the number of
/// readings changed.
std::size_t clamp_negative_signals(SeriesIndex& series);

/// Removes samples recorded before their session's connection time.
/// Returns the number of samples dropped.
std::size_t drop_pre_connection_samples(std::span<const SessionRecord> sessions,
                                        SeriesIndex& series);

struct DropTally {
  std::size_t missing_series = 0;
  std::size_t missing_target = 0;
  std::size_t too_few_early_current = 0;

  std::size_t total() const {
    return missing_series + missing_target + too_few_early_current;
  }
};

struct RetentionResult {
  std::vector<SessionRecord> sessions;
  DropTally dropped;
};

/// Keeps sessions present in both sources, with a target, and with at
/// least `cfg.min_early_current_samples` early current readings. Stable.
RetentionResult retain_sessions(std::span<const SessionRecord> sessions,
                                const SeriesIndex& series,
                                const DatasetConfig& cfg);

}  // namespace evfl
