// SPDX-License-Identifier: Apache-2.0
#include "evfl/featurization.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "evfl/csv.hpp"
#include "evfl/error.hpp"

namespace evfl {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::pair<double, double> cyclical(double value, double period) {
  const double angle = kTwoPi * value / period;
  return {std::sin(angle), std::cos(angle)};
}

double or_missing(const std::optional<double>& v) {
  return v ? *v : kMissing;
}

double flag(bool missing) { return missing ? 1.0 : 0.0; }

void put_stats(std::vector<double>& x, std::size_t at,
               const std::optional<SummaryStats>& s) {
  if (s) {
    x[at + 0] = s->mean;
    x[at + 1] = s->max;
    x[at + 2] = s->min;
    x[at + 3] = s->std;
    x[at + 4] = s->first;
    x[at + 5] = s->last;
  } else {
    std::fill_n(x.begin() + static_cast<std::ptrdiff_t>(at), 6, kMissing);
  }
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

}  // namespace

std::vector<TimeSeriesSample> extract_early_window(
    const SessionRecord& session, std::span<const TimeSeriesSample> samples,
    const DatasetConfig& cfg) {
  const auto window = cfg.early_window_seconds();
  std::vector<TimeSeriesSample> out;
  for (const auto& s : samples) {
    if (in_early_window(session.connection_time, s.timestamp, window)) {
      out.push_back(s);
    }
  }
  return out;
}

std::optional<SummaryStats> summary_stats(std::span<const double> values) {
  if (values.empty()) return std::nullopt;
  SummaryStats s;
  s.first = values.front();
  s.last = values.back();
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double n = static_cast<double>(values.size());
  s.mean = sum / n;
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / n);
  // Rounding in the mean can push it a hair outside [min, max].
  s.mean = std::clamp(s.mean, s.min, s.max);
  return s;
}

std::optional<double> least_squares_slope(std::span<const double> times,
                                          std::span<const double> values) {
  if (times.size() != values.size()) {
    throw ValidationError("least_squares_slope: length mismatch");
  }
  if (times.size() < 2) return std::nullopt;
  const double n = static_cast<double>(times.size());
  double t_mean = 0.0, v_mean = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    t_mean += times[i];
    v_mean += values[i];
  }
  t_mean /= n;
  v_mean /= n;
  double cov = 0.0, var = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double dt = times[i] - t_mean;
    cov += dt * (values[i] - v_mean);
    var += dt * dt;
  }
  if (var == 0.0) return std::nullopt;
  return cov / var;
}

std::optional<Utilization> utilization_stats(
    std::span<const TimeSeriesSample> samples) {
  double sum = 0.0;
  double max = -std::numeric_limits<double>::infinity();
  std::size_t n = 0;
  for (const auto& s : samples) {
    if (!s.current_a || !s.pilot_a || !(*s.pilot_a > 0.0)) continue;
    const double u = *s.current_a / *s.pilot_a;
    sum += u;
    max = std::max(max, u);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return Utilization{std::min(sum / static_cast<double>(n), max), max};
}

double early_energy(std::span<const double> times,
                    std::span<const double> currents, double voltage_v) {
  if (times.size() != currents.size()) {
    throw ValidationError("early_energy: length mismatch");
  }
  double amp_seconds = 0.0;
  for (std::size_t i = 1; i < times.size(); ++i) {
    amp_seconds += 0.5 * (currents[i - 1] + currents[i]) * (times[i] - times[i - 1]);
  }
  return voltage_v * amp_seconds / 1000.0 / 3600.0;
}

CalendarFeatures calendar_features(Timestamp connection_time) {
  const CivilTime c = to_civil(connection_time);
  CalendarFeatures f;
  f.hour = c.hour;
  f.weekday = c.weekday;
  f.month = c.month;
  f.day_of_year = c.day_of_year;
  f.is_weekend = c.weekday >= 5;
  std::tie(f.hour_sin, f.hour_cos) = cyclical(c.hour, 24.0);
  std::tie(f.weekday_sin, f.weekday_cos) = cyclical(c.weekday, 7.0);
  std::tie(f.month_sin, f.month_cos) = cyclical(c.month - 1.0, 12.0);
  std::tie(f.doy_sin, f.doy_cos) = cyclical(c.day_of_year, 366.0);
  return f;
}

std::optional<double> departure_offset(const SessionRecord& session,
                                       std::size_t* negative_count) {
  if (!session.requested_departure) return std::nullopt;
  const auto seconds =
      seconds_between(session.connection_time, *session.requested_departure);
  if (seconds < 0) {
    if (negative_count) ++*negative_count;
    return std::nullopt;
  }
  return static_cast<double>(seconds) / 60.0;
}

EarlyWindowFeatures early_window_features(
    const SessionRecord& session, std::span<const TimeSeriesSample> window,
    const DatasetConfig& cfg) {
  std::vector<double> current_t, current_v, pilot_t, pilot_v;
  for (const auto& s : window) {
    const auto t = static_cast<double>(
        seconds_between(session.connection_time, s.timestamp));
    if (s.current_a) {
      current_t.push_back(t);
      current_v.push_back(*s.current_a);
    }
    if (s.pilot_a) {
      pilot_t.push_back(t);
      pilot_v.push_back(*s.pilot_a);
    }
  }

  EarlyWindowFeatures f;
  f.current = summary_stats(current_v);
  f.current_slope = least_squares_slope(current_t, current_v);
  f.pilot = summary_stats(pilot_v);
  f.pilot_slope = least_squares_slope(pilot_t, pilot_v);
  f.utilization = utilization_stats(window);
  f.early_energy_kwh = early_energy(current_t, current_v, cfg.nominal_voltage_v);
  f.n_current = current_v.size();
  f.n_pilot = pilot_v.size();
  f.n_merged = window.size();
  if (!window.empty()) {
    f.observed_window_minutes =
        static_cast<double>(seconds_between(window.front().timestamp,
                                            window.back().timestamp)) /
        60.0;
  }
  return f;
}

std::size_t feature_index(std::string_view name) {
  auto it = std::find(kFeatureNames.begin(), kFeatureNames.end(), name);
  if (it == kFeatureNames.end()) {
    throw ValidationError("unknown feature '" + std::string(name) + "'");
  }
  return static_cast<std::size_t>(it - kFeatureNames.begin());
}

std::vector<bool> scale_exempt_mask() {
  std::vector<bool> mask(kFeatureDim, false);
  for (std::size_t i = kCalendarBegin; i < kUserBegin; ++i) mask[i] = true;
  for (std::size_t i = kFlagsBegin; i < kFeatureDim; ++i) mask[i] = true;
  return mask;
}

FeatureVector build_feature_vector(const SessionRecord& session,
                                   std::span<const TimeSeriesSample> window,
                                   const DatasetConfig& cfg,
                                   std::size_t* negative_offsets) {
  const EarlyWindowFeatures ew = early_window_features(session, window, cfg);
  const CalendarFeatures cal = calendar_features(session.connection_time);
  const auto offset = departure_offset(session, negative_offsets);

  std::vector<double> x(kFeatureDim, 0.0);
  put_stats(x, 0, ew.current);
  x[6] = or_missing(ew.current_slope);
  put_stats(x, 7, ew.pilot);
  x[13] = or_missing(ew.pilot_slope);
  x[14] = ew.utilization ? ew.utilization->mean : kMissing;
  x[15] = ew.utilization ? ew.utilization->max : kMissing;
  x[16] = ew.early_energy_kwh;
  x[17] = static_cast<double>(ew.n_current);
  x[18] = static_cast<double>(ew.n_pilot);
  x[19] = static_cast<double>(ew.n_merged);
  x[20] = ew.observed_window_minutes;

  x[21] = cal.hour_sin;
  x[22] = cal.hour_cos;
  x[23] = cal.weekday_sin;
  x[24] = cal.weekday_cos;
  x[25] = cal.month_sin;
  x[26] = cal.month_cos;
  x[27] = cal.doy_sin;
  x[28] = cal.doy_cos;
  x[29] = flag(cal.is_weekend);

  x[30] = or_missing(session.requested_energy_kwh);
  x[31] = or_missing(session.available_minutes);
  x[32] = or_missing(offset);

  x[33] = flag(!session.requested_energy_kwh);
  x[34] = flag(!session.available_minutes);
  x[35] = flag(!offset);
  x[36] = flag(!ew.current);
  x[37] = flag(!ew.current_slope);
  x[38] = flag(!ew.pilot);
  x[39] = flag(!ew.pilot_slope);
  x[40] = flag(!ew.utilization);

  return FeatureVector{session.session_id, session.station_id, std::move(x),
                       session.delivered_energy_kwh.value_or(kMissing)};
}

FeatureTable build_features(std::span<const SessionRecord> retained,
                            const SeriesIndex& series,
                            const DatasetConfig& cfg) {
  FeatureTable table;
  table.rows.reserve(retained.size());
  static const std::vector<TimeSeriesSample> kEmpty;
  for (const auto& session : retained) {
    auto it = series.find(session.session_id);
    const auto& samples = it == series.end() ? kEmpty : it->second;
    const auto window = extract_early_window(session, samples, cfg);
    table.rows.push_back(build_feature_vector(
        session, window, cfg, &table.negative_departure_offsets));
  }
  return table;
}

void write_features(const std::filesystem::path& path,
                    std::span<const FeatureVector> rows) {
  auto out = csv::open_output(path);
  out << "session_id,station_id";
  for (auto name : kFeatureNames) out << ',' << name;
  out << ",target\n";
  for (const auto& r : rows) {
    out << csv::escape(r.session_id) << ',' << csv::escape(r.station_id);
    for (double v : r.numeric) {
      out << ',';
      if (!std::isnan(v)) out << csv::format_double(v);
    }
    out << ',' << csv::format_double(r.target) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<FeatureVector> read_features(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  std::string line;
  if (!csv::read_line(in, line)) {
    throw ParseError(path.string(), 1, "missing header");
  }
  const auto header = csv::split(line);
  if (header.size() != kFeatureDim + 3 || header.front() != "session_id" ||
      header[1] != "station_id" || header.back() != "target") {
    throw ParseError(path.string(), 1, "unexpected features header");
  }
  for (std::size_t i = 0; i < kFeatureDim; ++i) {
    if (header[i + 2] != kFeatureNames[i]) {
      throw ParseError(path.string(), 1,
                       "column " + std::to_string(i + 2) + " should be '" +
                           std::string(kFeatureNames[i]) + "'");
    }
  }

  std::vector<FeatureVector> rows;
  std::size_t line_no = 1;
  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = csv::split(line);
    if (cells.size() != header.size()) {
      throw ParseError(path.string(), line_no, "wrong field count");
    }
    FeatureVector fv;
    fv.session_id = cells[0];
    fv.station_id = cells[1];
    fv.numeric.resize(kFeatureDim);
    for (std::size_t i = 0; i < kFeatureDim; ++i) {
      const auto& cell = cells[i + 2];
      if (cell.empty()) {
        fv.numeric[i] = kMissing;
        continue;
      }
      auto v = csv::parse_double(cell);
      if (!v) {
        throw ParseError(path.string(), line_no,
                         "bad value for " + std::string(kFeatureNames[i]));
      }
      fv.numeric[i] = *v;
    }
    auto target = csv::parse_double(cells.back());
    if (!target || !std::isfinite(*target)) {
      throw ParseError(path.string(), line_no, "bad target");
    }
    fv.target = *target;
    rows.push_back(std::move(fv));
  }
  return rows;
}

Imputer Imputer::fit(std::span<const FeatureVector> train) {
  if (train.empty()) throw ValidationError("cannot fit imputer on empty split");
  const std::size_t dim = train.front().numeric.size();
  Imputer imp;
  imp.medians.resize(dim);
  std::vector<double> column;
  for (std::size_t j = 0; j < dim; ++j) {
    column.clear();
    for (const auto& r : train) {
      if (!std::isnan(r.numeric[j])) column.push_back(r.numeric[j]);
    }
    imp.medians[j] = median_of(column);
  }
  return imp;
}

void Imputer::apply(std::span<double> x) const {
  if (x.size() != medians.size()) {
    throw ValidationError("imputer: dimension mismatch");
  }
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (std::isnan(x[j])) x[j] = medians[j];
  }
}

Scaler Scaler::fit(std::span<const std::vector<double>> rows,
                   std::vector<bool> exempt) {
  if (rows.empty()) throw ValidationError("cannot fit scaler on empty split");
  const std::size_t dim = rows.front().size();
  if (exempt.size() != dim) throw ValidationError("scaler: mask size mismatch");
  Scaler s;
  s.mean.assign(dim, 0.0);
  s.std.assign(dim, 1.0);
  s.exempt = std::move(exempt);
  const double n = static_cast<double>(rows.size());
  for (std::size_t j = 0; j < dim; ++j) {
    if (s.exempt[j]) {
      s.mean[j] = 0.0;
      s.std[j] = 1.0;
      continue;
    }
    double sum = 0.0;
    for (const auto& r : rows) sum += r[j];
    const double mean = sum / n;
    double sq = 0.0;
    for (const auto& r : rows) sq += (r[j] - mean) * (r[j] - mean);
    s.mean[j] = mean;
    s.std[j] = std::max(std::sqrt(sq / n), kStdFloor);
  }
  return s;
}

void Scaler::apply(std::span<double> x) const {
  if (x.size() != mean.size()) throw ValidationError("scaler: dimension mismatch");
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (!exempt[j]) x[j] = (x[j] - mean[j]) / std[j];
  }
}

StationVocabulary StationVocabulary::fit(std::span<const FeatureVector> train) {
  StationVocabulary v;
  for (const auto& r : train) v.stations.push_back(r.station_id);
  std::sort(v.stations.begin(), v.stations.end());
  v.stations.erase(std::unique(v.stations.begin(), v.stations.end()),
                   v.stations.end());
  return v;
}

std::size_t StationVocabulary::index(const std::string& station_id) const {
  auto it = std::lower_bound(stations.begin(), stations.end(), station_id);
  if (it == stations.end() || *it != station_id) return stations.size();
  return static_cast<std::size_t>(it - stations.begin());
}

Preprocessor Preprocessor::fit(std::span<const FeatureVector> train) {
  Preprocessor p;
  p.imputer = Imputer::fit(train);
  std::vector<std::vector<double>> imputed;
  imputed.reserve(train.size());
  for (const auto& r : train) {
    imputed.push_back(r.numeric);
    p.imputer.apply(imputed.back());
  }
  p.scaler = Scaler::fit(imputed, scale_exempt_mask());
  p.vocabulary = StationVocabulary::fit(train);
  return p;
}

TabularData Preprocessor::transform(std::span<const FeatureVector> rows) const {
  TabularData out;
  out.dim = imputer.medians.size();
  std::vector<double> x;
  for (const auto& r : rows) {
    x = r.numeric;
    imputer.apply(x);
    scaler.apply(x);
    out.push_back(x, vocabulary.index(r.station_id), r.target, r.session_id,
                  r.station_id);
  }
  return out;
}

void to_json(nlohmann::json& j, const Preprocessor& p) {
  j = nlohmann::json{{"feature_names", kFeatureNames},
                     {"medians", p.imputer.medians},
                     {"mean", p.scaler.mean},
                     {"std", p.scaler.std},
                     {"exempt", p.scaler.exempt},
                     {"stations", p.vocabulary.stations}};
}

void from_json(const nlohmann::json& j, Preprocessor& p) {
  j.at("medians").get_to(p.imputer.medians);
  j.at("mean").get_to(p.scaler.mean);
  j.at("std").get_to(p.scaler.std);
  j.at("exempt").get_to(p.scaler.exempt);
  j.at("stations").get_to(p.vocabulary.stations);
  const auto dim = p.imputer.medians.size();
  if (p.scaler.mean.size() != dim || p.scaler.std.size() != dim ||
      p.scaler.exempt.size() != dim) {
    throw ValidationError("preprocessor: inconsistent dimensions");
  }
}

}  // namespace evfl
