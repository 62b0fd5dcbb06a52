// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "evfl/data_model.hpp"
#include "evfl/tabular.hpp"

namespace evfl {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// Samples with timestamps in the closed interval [t_conn, t_conn + W].
std::vector<TimeSeriesSample> extract_early_window(
    const SessionRecord& session, std::span<const TimeSeriesSample> samples,
    const DatasetConfig& cfg);

struct SummaryStats {
  double mean = 0.0;
  double max = 0.0;
  double min = 0.0;
  double std = 0.0;  // population
  double first = 0.0;
  double last = 0.0;
};

/// nullopt for an empty input.
std::optional<SummaryStats> summary_stats(std::span<const double> values);

/// Ordinary least-squares slope cov(t, v) / var(t). nullopt with fewer
/// than two samples or zero time variance.
std::optional<double> least_squares_slope(std::span<const double> times,
                                          std::span<const double> values);

struct Utilization {
  double mean = 0.0;
  double max = 0.0;
};

/// current/pilot at samples carrying both signals with pilot > 0.
std::optional<Utilization> utilization_stats(
    std::span<const TimeSeriesSample> samples);

/// Trapezoidal integral of voltage * I(t) / 1000 kW over `times` (seconds),
/// in kWh. Fewer than two samples integrate to 0.
double early_energy(std::span<const double> times,
                    std::span<const double> currents, double voltage_v);

struct CalendarFeatures {
  unsigned hour = 0;
  unsigned weekday = 0;  // Monday = 0
  unsigned month = 1;    // 1..12
  unsigned day_of_year = 0;
  bool is_weekend = false;
  double hour_sin = 0.0, hour_cos = 1.0;
  double weekday_sin = 0.0, weekday_cos = 1.0;
  double month_sin = 0.0, month_cos = 1.0;
  double doy_sin = 0.0, doy_cos = 1.0;
};

CalendarFeatures calendar_features(Timestamp connection_time);

/// Minutes from connection to requested departure; nullopt when absent or
/// negative (the latter increments `negative_count` when given).
std::optional<double> departure_offset(const SessionRecord& session,
                                       std::size_t* negative_count = nullptr);

struct EarlyWindowFeatures {
  std::optional<SummaryStats> current;
  std::optional<double> current_slope;  // A/s
  std::optional<SummaryStats> pilot;
  std::optional<double> pilot_slope;  // A/s
  std::optional<Utilization> utilization;
  double early_energy_kwh = 0.0;
  std::size_t n_current = 0;
  std::size_t n_pilot = 0;
  std::size_t n_merged = 0;
  double observed_window_minutes = 0.0;
};

/// Statistics of an already-extracted early window.
EarlyWindowFeatures early_window_features(
    const SessionRecord& session, std::span<const TimeSeriesSample> window,
    const DatasetConfig& cfg);

/// Fixed column order of FeatureVector::numeric.
inline constexpr std::array<std::string_view, 41> kFeatureNames = {
    "current_mean", "current_max", "current_min", "current_std",
    "current_first", "current_last", "current_slope",
    "pilot_mean", "pilot_max", "pilot_min", "pilot_std",
    "pilot_first", "pilot_last", "pilot_slope",
    "util_mean", "util_max",
    "early_energy_kwh", "n_current", "n_pilot", "n_merged",
    "observed_window_minutes",
    "hour_sin", "hour_cos", "weekday_sin", "weekday_cos",
    "month_sin", "month_cos", "doy_sin", "doy_cos", "is_weekend",
    "requested_energy_kwh", "available_minutes", "departure_offset_minutes",
    "requested_energy_missing", "available_minutes_missing",
    "departure_offset_missing", "current_stats_missing",
    "current_slope_missing", "pilot_stats_missing", "pilot_slope_missing",
    "util_missing"};
inline constexpr std::size_t kFeatureDim = kFeatureNames.size();

/// First index of the cyclical/binary block and of the missingness flags.
inline constexpr std::size_t kCalendarBegin = 21;
inline constexpr std::size_t kUserBegin = 30;
inline constexpr std::size_t kFlagsBegin = 33;

std::size_t feature_index(std::string_view name);

/// Columns that pass through standardization unchanged (sin/cos, binary).
std::vector<bool> scale_exempt_mask();

/// One session's raw feature row. Missing values are NaN until imputed;
/// each optional block carries a 0/1 missingness flag.
struct FeatureVector {
  std::string session_id;
  std::string station_id;  // categorical input and federated client id
  std::vector<double> numeric;
  double target = 0.0;
};

FeatureVector build_feature_vector(const SessionRecord& session,
                                   std::span<const TimeSeriesSample> window,
                                   const DatasetConfig& cfg,
                                   std::size_t* negative_offsets = nullptr);

struct FeatureTable {
  std::vector<FeatureVector> rows;
  std::size_t negative_departure_offsets = 0;
};

/// Featurizes retained sessions (see retain_sessions) in input order.
FeatureTable build_features(std::span<const SessionRecord> retained,
                            const SeriesIndex& series,
                            const DatasetConfig& cfg);

void write_features(const std::filesystem::path& path,
                    std::span<const FeatureVector> rows);
std::vector<FeatureVector> read_features(const std::filesystem::path& path);

/// Per-column medians of the training rows, ignoring NaN.
struct Imputer {
  std::vector<double> medians;

  static Imputer fit(std::span<const FeatureVector> train);
  void apply(std::span<double> x) const;
};

/// Per-column standardization fitted on the training split.
struct Scaler {
  static constexpr double kStdFloor = 1e-8;

  std::vector<double> mean;
  std::vector<double> std;
  std::vector<bool> exempt;

  /// Rows must already be imputed. Throws ValidationError on empty input.
  static Scaler fit(std::span<const std::vector<double>> rows,
                    std::vector<bool> exempt);
  void apply(std::span<double> x) const;
};

/// Lexicographically ordered station ids seen in training. Unknown
/// stations map to index size().
struct StationVocabulary {
  std::vector<std::string> stations;

  static StationVocabulary fit(std::span<const FeatureVector> train);
  std::size_t index(const std::string& station_id) const;
  std::size_t size() const { return stations.size(); }
};

/// Imputer, scaler and station vocabulary fitted together on a train split.
struct Preprocessor {
  Imputer imputer;
  Scaler scaler;
  StationVocabulary vocabulary;

  static Preprocessor fit(std::span<const FeatureVector> train);
  TabularData transform(std::span<const FeatureVector> rows) const;
};

void to_json(nlohmann::json& j, const Preprocessor& p);
void from_json(const nlohmann::json& j, Preprocessor& p);

}  // namespace evfl
