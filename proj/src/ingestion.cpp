// SPDX-License-Identifier: Apache-2.0
#include "evfl/ingestion.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <unordered_set>

#include <json.hpp>

#include "evfl/csv.hpp"
#include "evfl/error.hpp"
#include "evfl/random.hpp"

namespace evfl {
namespace {

using json = nlohmann::json;

constexpr std::size_t kMaxMessages = 20;

// Accessor over one input row, hiding whether it came from CSV or JSON.
class Row {
 public:
  virtual ~Row() = default;
  // Absent when the cell is empty / null / missing.
  virtual std::optional<std::string> text(const std::string& key) const = 0;
  virtual std::optional<double> number(const std::string& key) const = 0;
};

class CsvRow : public Row {
 public:
  CsvRow(const std::map<std::string, std::size_t>& columns,
         std::vector<std::string> cells)
      : columns_(columns), cells_(std::move(cells)) {}

  std::optional<std::string> text(const std::string& key) const override {
    const auto& cell = cells_.at(columns_.at(key));
    if (cell.empty()) return std::nullopt;
    return cell;
  }
  std::optional<double> number(const std::string& key) const override {
    auto t = text(key);
    if (!t) return std::nullopt;
    auto v = csv::parse_double(*t);
    if (!v || !std::isfinite(*v)) {
      throw ValidationError(key + ": not a finite number '" + *t + "'");
    }
    return v;
  }

 private:
  const std::map<std::string, std::size_t>& columns_;
  std::vector<std::string> cells_;
};

class JsonRow : public Row {
 public:
  explicit JsonRow(json obj) : obj_(std::move(obj)) {}

  std::optional<std::string> text(const std::string& key) const override {
    auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) return std::nullopt;
    if (it->is_string()) {
      auto s = it->get<std::string>();
      if (s.empty()) return std::nullopt;
      return s;
    }
    if (it->is_number()) return it->dump();
    throw ValidationError(key + ": expected string");
  }
  std::optional<double> number(const std::string& key) const override {
    auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) return std::nullopt;
    if (it->is_number()) return it->get<double>();
    if (it->is_string()) {
      auto s = it->get<std::string>();
      if (s.empty()) return std::nullopt;
      auto v = csv::parse_double(s);
      if (v && std::isfinite(*v)) return v;
    }
    throw ValidationError(key + ": expected number");
  }

 private:
  json obj_;
};

// Streams rows of either format into `handle`, applying strict/lenient
// policy to rows for which `handle` throws.
void for_each_row(const std::filesystem::path& path,
                  std::string_view expected_header,
                  const ParseOptions& options, ParseDiagnostics& diag,
                  const std::function<void(const Row&)>& handle) {
  auto in = csv::open_input(path);
  const FileFormat format = options.format.value_or(detect_format(path));
  const auto required = csv::split(expected_header);

  auto reject = [&](std::size_t line_no, const std::string& why) {
    if (options.strict) throw ParseError(path.string(), line_no, why);
    ++diag.malformed_rows;
    if (diag.messages.size() < kMaxMessages) {
      diag.messages.push_back("line " + std::to_string(line_no) + ": " + why);
    }
  };

  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> columns;
  if (format == FileFormat::kCsv) {
    if (!csv::read_line(in, line)) {
      throw ParseError(path.string(), 1, "missing header");
    }
    ++line_no;
    const auto header = csv::split(line);
    for (std::size_t i = 0; i < header.size(); ++i) columns[header[i]] = i;
    for (const auto& name : required) {
      if (!columns.contains(name)) {
        throw ParseError(path.string(), 1, "header lacks column '" + name + "'");
      }
    }
  }

  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ++diag.rows_read;
    try {
      if (format == FileFormat::kCsv) {
        auto cells = csv::split(line);
        if (cells.size() != columns.size()) {
          throw ValidationError("expected " + std::to_string(columns.size()) +
                                " fields, got " + std::to_string(cells.size()));
        }
        handle(CsvRow(columns, std::move(cells)));
      } else {
        auto obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (!obj.is_object()) throw ValidationError("not a JSON object");
        handle(JsonRow(std::move(obj)));
      }
    } catch (const ValidationError& e) {
      reject(line_no, e.what());
    } catch (const json::exception& e) {
      reject(line_no, e.what());
    }
  }
}

Timestamp require_time(const Row& row, const std::string& key) {
  auto t = row.text(key);
  if (!t) throw ValidationError(key + ": missing");
  auto ts = parse_iso8601(*t);
  if (!ts) throw ValidationError(key + ": bad timestamp '" + *t + "'");
  return *ts;
}

std::optional<Timestamp> optional_time(const Row& row, const std::string& key) {
  if (!row.text(key)) return std::nullopt;
  return require_time(row, key);
}

std::optional<double> nonnegative(const Row& row, const std::string& key) {
  auto v = row.number(key);
  if (v && *v < 0.0) throw ValidationError(key + ": must be >= 0");
  return v;
}

std::string time_cell(const std::optional<Timestamp>& t) {
  return t ? format_iso8601(*t) : std::string();
}

std::string number_cell(const std::optional<double>& v) {
  return v ? csv::format_double(*v) : std::string();
}

json json_time(const std::optional<Timestamp>& t) {
  return t ? json(format_iso8601(*t)) : json(nullptr);
}

json json_number(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

FileFormat detect_format(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".ndjson" || ext == ".json") {
    return FileFormat::kJsonLines;
  }
  return FileFormat::kCsv;
}

Parsed<std::vector<SessionRecord>> parse_sessions(
    const std::filesystem::path& path, const ParseOptions& options) {
  Parsed<std::vector<SessionRecord>> out;
  std::unordered_set<std::string> seen;
  for_each_row(path, kSessionsHeader, options, out.diagnostics,
               [&](const Row& row) {
                 SessionRecord s;
                 s.session_id = row.text("session_id").value_or("");
                 if (s.session_id.empty()) {
                   throw ValidationError("session_id: missing");
                 }
                 s.site_id = row.text("site_id").value_or("");
                 s.station_id = row.text("station_id").value_or("");
                 if (s.station_id.empty()) {
                   throw ValidationError("station_id: missing");
                 }
                 s.connection_time = require_time(row, "connection_time");
                 s.disconnect_time = optional_time(row, "disconnect_time");
                 if (s.disconnect_time && *s.disconnect_time < s.connection_time) {
                   throw ValidationError(
                       "disconnect_time precedes connection_time");
                 }
                 s.delivered_energy_kwh = nonnegative(row, "delivered_energy_kwh");
                 s.requested_energy_kwh = nonnegative(row, "requested_energy_kwh");
                 s.available_minutes = nonnegative(row, "available_minutes");
                 s.requested_departure = optional_time(row, "requested_departure");
                 if (seen.contains(s.session_id)) {
                   throw ValidationError("duplicate session_id '" +
                                         s.session_id + "'");
                 }
                 seen.insert(s.session_id);
                 out.value.push_back(std::move(s));
               });
  return out;
}

Parsed<SeriesIndex> parse_timeseries(const std::filesystem::path& path,
                                     const ParseOptions& options) {
  Parsed<SeriesIndex> out;
  for_each_row(path, kTimeseriesHeader, options, out.diagnostics,
               [&](const Row& row) {
                 TimeSeriesSample s;
                 s.session_id = row.text("session_id").value_or("");
                 if (s.session_id.empty()) {
                   throw ValidationError("session_id: missing");
                 }
                 s.timestamp = require_time(row, "timestamp");
                 s.current_a = row.number("current_a");
                 s.pilot_a = row.number("pilot_a");
                 if (!s.current_a && !s.pilot_a) {
                   throw ValidationError("row carries neither current nor pilot");
                 }
                 out.value[s.session_id].push_back(std::move(s));
               });

  for (auto& [id, samples] : out.value) {
    std::stable_sort(samples.begin(), samples.end(),
                     [](const auto& a, const auto& b) {
                       return a.timestamp < b.timestamp;
                     });
    // Last write wins within each run of equal timestamps.
    std::vector<TimeSeriesSample> unique;
    unique.reserve(samples.size());
    for (auto& s : samples) {
      if (!unique.empty() && unique.back().timestamp == s.timestamp) {
        // Per signal: a later reading replaces an earlier one, an absent
        // cell does not erase it.
        auto& kept = unique.back();
        if (s.current_a) kept.current_a = s.current_a;
        if (s.pilot_a) kept.pilot_a = s.pilot_a;
        ++out.diagnostics.duplicate_samples;
      } else {
        unique.push_back(std::move(s));
      }
    }
    samples = std::move(unique);
  }
  out.diagnostics.negative_clamped = clamp_negative_signals(out.value);
  return out;
}

void write_sessions(const std::filesystem::path& path,
                    std::span<const SessionRecord> sessions,
                    FileFormat format) {
  auto out = csv::open_output(path);
  if (format == FileFormat::kCsv) {
    out << kSessionsHeader << '\n';
    for (const auto& s : sessions) {
      out << csv::escape(s.session_id) << ',' << csv::escape(s.site_id) << ','
          << csv::escape(s.station_id) << ','
          << format_iso8601(s.connection_time) << ','
          << time_cell(s.disconnect_time) << ','
          << number_cell(s.delivered_energy_kwh) << ','
          << number_cell(s.requested_energy_kwh) << ','
          << number_cell(s.available_minutes) << ','
          << time_cell(s.requested_departure) << '\n';
    }
  } else {
    for (const auto& s : sessions) {
      json obj = {{"session_id", s.session_id},
                  {"site_id", s.site_id},
                  {"station_id", s.station_id},
                  {"connection_time", format_iso8601(s.connection_time)},
                  {"disconnect_time", json_time(s.disconnect_time)},
                  {"delivered_energy_kwh", json_number(s.delivered_energy_kwh)},
                  {"requested_energy_kwh", json_number(s.requested_energy_kwh)},
                  {"available_minutes", json_number(s.available_minutes)},
                  {"requested_departure", json_time(s.requested_departure)}};
      out << obj.dump() << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_timeseries(const std::filesystem::path& path,
                      const SeriesIndex& series, FileFormat format) {
  auto out = csv::open_output(path);
  if (format == FileFormat::kCsv) out << kTimeseriesHeader << '\n';
  for (const auto& [id, samples] : series) {
    for (const auto& s : samples) {
      if (format == FileFormat::kCsv) {
        out << csv::escape(s.session_id) << ','
            << format_iso8601(s.timestamp) << ',' << number_cell(s.current_a)
            << ',' << number_cell(s.pilot_a) << '\n';
      } else {
        json obj = {{"session_id", s.session_id},
                    {"timestamp", format_iso8601(s.timestamp)},
                    {"current_a", json_number(s.current_a)},
                    {"pilot_a", json_number(s.pilot_a)}};
        out << obj.dump() << '\n';
      }
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

double SyntheticDepotSpec::station_mean(std::size_t station) const {
  const double base = station_energy_mean_kwh.empty()
                          ? 9.0
                          : station_energy_mean_kwh.at(station);
  return base + (is_shifted(station) ? heterogeneity_shift_kwh : 0.0);
}

bool SyntheticDepotSpec::is_shifted(std::size_t station) const {
  const auto n_shifted = static_cast<std::size_t>(
      std::llround(shifted_fraction * static_cast<double>(n_stations)));
  return station < n_shifted;
}

void SyntheticDepotSpec::validate() const {
  auto fail = [](const std::string& what) {
    throw ValidationError("synthetic." + what);
  };
  if (n_stations == 0) fail("n_stations must be > 0");
  if (min_sessions_per_station == 0 ||
      max_sessions_per_station < min_sessions_per_station) {
    fail("sessions_per_station must be a positive range");
  }
  if (!station_energy_mean_kwh.empty() &&
      station_energy_mean_kwh.size() != n_stations) {
    fail("station_energy_mean_kwh must have n_stations entries");
  }
  for (double m : station_energy_mean_kwh) {
    if (!(m > 0.0)) fail("station_energy_mean_kwh entries must be > 0");
  }
  if (!(station_energy_std_kwh >= 0.0)) fail("station_energy_std_kwh must be >= 0");
  if (!(heterogeneity_shift_kwh >= 0.0)) fail("heterogeneity_shift_kwh must be >= 0");
  if (!(noise_std_kwh >= 0.0)) fail("noise_std_kwh must be >= 0");
  if (!(shifted_fraction >= 0.0 && shifted_fraction <= 1.0)) {
    fail("shifted_fraction must be in [0, 1]");
  }
  for (double p : {sparse_session_fraction, missing_pilot_fraction,
                   user_input_rate}) {
    if (!(p >= 0.0 && p <= 1.0)) fail("rates must be in [0, 1]");
  }
  if (!(nominal_voltage_v > 0.0)) fail("nominal_voltage_v must be > 0");
  for (std::size_t s = 0; s < n_stations; ++s) {
    if (!(station_mean(s) > 0.0)) fail("station means must stay > 0");
  }
}

std::string synthetic_station_id(std::size_t station, std::size_t n_stations) {
  const std::size_t width = std::to_string(n_stations).size();
  std::string num = std::to_string(station + 1);
  return "ST-" + std::string(width > num.size() ? width - num.size() : 0, '0') +
         num;
}

SyntheticDepot generate_synthetic(const SyntheticDepotSpec& spec) {
  spec.validate();
  SyntheticDepot depot;
  const double volts = spec.nominal_voltage_v;
  const Timestamp year_start = from_civil(2019, 1, 1);
  std::size_t counter = 0;

  for (std::size_t station = 0; station < spec.n_stations; ++station) {
    Rng rng = make_rng(spec.seed, {stream::kSynth, station});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> count_dist(
        spec.min_sessions_per_station, spec.max_sessions_per_station);
    const std::string station_id = synthetic_station_id(station, spec.n_stations);
    const double mean = spec.station_mean(station);
    const std::size_t n_sessions = count_dist(rng);

    for (std::size_t k = 0; k < n_sessions; ++k) {
      double energy = 0.0;
      for (int attempt = 0; attempt < 100; ++attempt) {
        energy = mean + spec.station_energy_std_kwh * gauss(rng);
        if (energy >= 0.5) break;
      }
      energy = std::max(energy, 0.5);

      // Calendar: weekday-morning heavy arrival pattern across 2019.
      const auto day = static_cast<std::int64_t>(unit(rng) * 365.0);
      double hour = unit(rng) < 0.6 ? 8.5 + 1.2 * gauss(rng)
                                    : 6.0 + 14.0 * unit(rng);
      hour = std::clamp(hour, 0.0, 23.99);
      const Timestamp conn = year_start.plus_seconds(
          day * 86400 + static_cast<std::int64_t>(hour * 3600.0));

      const bool sparse = unit(rng) < spec.sparse_session_fraction;
      const bool has_pilot = unit(rng) >= spec.missing_pilot_fraction;
      const std::int64_t step = sparse ? 180 : 60;
      const double plateau = 5.0 + 1.2 * energy;
      const double pilot = std::min(80.0, 8.0 * std::ceil(plateau / 8.0));

      // Profile 0, I/2, I (m + 1 times), 0 integrates to I * step * (m + 1.5).
      const double amp_seconds = energy * 3.6e6 / volts;
      const auto plateau_steps = static_cast<std::int64_t>(std::max(
          0.0, std::round(amp_seconds / (plateau * step) - 1.5)));
      std::vector<double> profile{0.0, plateau / 2.0};
      for (std::int64_t i = 0; i <= plateau_steps; ++i) profile.push_back(plateau);
      profile.push_back(0.0);

      double integral_amp_seconds = 0.0;
      for (std::size_t i = 1; i < profile.size(); ++i) {
        integral_amp_seconds += 0.5 * (profile[i - 1] + profile[i]) * step;
      }
      const double delivered = std::max(
          0.0, integral_amp_seconds * volts / 1000.0 / 3600.0 +
                   spec.noise_std_kwh * gauss(rng));

      SessionRecord s;
      char id_buf[32];
      std::snprintf(id_buf, sizeof id_buf, "sess-%06zu", counter++);
      s.session_id = id_buf;
      s.site_id = "synthetic";
      s.station_id = station_id;
      s.connection_time = conn;
      const std::int64_t charge_seconds =
          step * static_cast<std::int64_t>(profile.size() - 1);
      const auto idle = static_cast<std::int64_t>(unit(rng) * 7200.0);
      s.disconnect_time = conn.plus_seconds(charge_seconds + idle);
      s.delivered_energy_kwh = delivered;
      if (unit(rng) < spec.user_input_rate) {
        s.requested_energy_kwh =
            std::max(0.5, energy * (1.0 + 0.15 * gauss(rng)));
      }
      if (unit(rng) < spec.user_input_rate) {
        const double minutes = std::max(
            1.0, (charge_seconds + idle) / 60.0 * (1.0 + 0.2 * gauss(rng)));
        s.available_minutes = std::round(minutes);
        if (unit(rng) < 0.9) {
          s.requested_departure = conn.plus_seconds(
              static_cast<std::int64_t>(*s.available_minutes * 60.0));
        }
      }

      auto& samples = depot.series[s.session_id];
      samples.reserve(profile.size());
      for (std::size_t i = 0; i < profile.size(); ++i) {
        TimeSeriesSample ts;
        ts.session_id = s.session_id;
        ts.timestamp = conn.plus_seconds(step * static_cast<std::int64_t>(i));
        ts.current_a = profile[i];
        if (has_pilot) ts.pilot_a = pilot;
        samples.push_back(std::move(ts));
      }
      depot.sessions.push_back(std::move(s));
    }
  }
  return depot;
}

}  // namespace evfl
