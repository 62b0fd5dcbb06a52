// SPDX-License-Identifier: Apache-2.0
#include "evfl/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "evfl/error.hpp"

namespace evfl {

void DatasetConfig::validate() const {
  if (!(early_window_minutes > 0.0) || !std::isfinite(early_window_minutes)) {
    throw ValidationError("dataset.early_window_minutes must be > 0");
  }
  if (min_early_current_samples <= 0) {
    throw ValidationError("dataset.min_early_current_samples must be > 0");
  }
  if (!(nominal_voltage_v > 0.0) || !std::isfinite(nominal_voltage_v)) {
    throw ValidationError("dataset.nominal_voltage_v must be > 0");
  }
}

void validate_sessions(std::span<const SessionRecord> sessions) {
  std::unordered_set<std::string> seen;
  seen.reserve(sessions.size());
  for (const auto& s : sessions) {
    if (s.session_id.empty()) {
      throw ValidationError("session with empty session_id");
    }
    if (!seen.insert(s.session_id).second) {
      throw ValidationError("duplicate session_id '" + s.session_id + "'");
    }
    if (s.delivered_energy_kwh && !(*s.delivered_energy_kwh >= 0.0)) {
      throw ValidationError("session '" + s.session_id +
                            "': delivered_energy_kwh must be >= 0");
    }
    if (s.disconnect_time && *s.disconnect_time < s.connection_time) {
      throw ValidationError("session '" + s.session_id +
                            "': disconnect_time precedes connection_time");
    }
  }
}

std::size_t count_early_current(const SessionRecord& session,
                                std::span<const TimeSeriesSample> samples,
                                const DatasetConfig& cfg) {
  const auto window = cfg.early_window_seconds();
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [&](const auto& s) {
        return s.current_a.has_value() &&
               in_early_window(session.connection_time, s.timestamp, window);
      }));
}

std::size_t clamp_negative_signals(SeriesIndex& series) {
  std::size_t clamped = 0;
  auto clamp = [&](std::optional<double>& v) {
    if (v && *v < 0.0) {
      *v = 0.0;
      ++clamped;
    }
  };
  for (auto& [id, samples] : series) {
    for (auto& s : samples) {
      clamp(s.current_a);
      clamp(s.pilot_a);
    }
  }
  return clamped;
}

std::size_t drop_pre_connection_samples(std::span<const SessionRecord> sessions,
                                        SeriesIndex& series) {
  std::size_t dropped = 0;
  for (const auto& session : sessions) {
    auto it = series.find(session.session_id);
    if (it == series.end()) continue;
    dropped += std::erase_if(it->second, [&](const TimeSeriesSample& s) {
      return s.timestamp < session.connection_time;
    });
  }
  return dropped;
}

RetentionResult retain_sessions(std::span<const SessionRecord> sessions,
                                const SeriesIndex& series,
                                const DatasetConfig& cfg) {
  RetentionResult out;
  const auto min_count =
      static_cast<std::size_t>(cfg.min_early_current_samples);
  for (const auto& session : sessions) {
    auto it = series.find(session.session_id);
    if (it == series.end() || it->second.empty()) {
      ++out.dropped.missing_series;
    } else if (!session.delivered_energy_kwh) {
      ++out.dropped.missing_target;
    } else if (count_early_current(session, it->second, cfg) < min_count) {
      ++out.dropped.too_few_early_current;
    } else {
      out.sessions.push_back(session);
    }
  }
  return out;
}

}  // namespace evfl
