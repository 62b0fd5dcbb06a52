// SPDX-License-Identifier: Apache-2.0
#include "evfl/cli.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "evfl/csv.hpp"
#include "evfl/error.hpp"
#include "evfl/featurization.hpp"
#include "evfl/federation.hpp"

namespace evfl::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config (de)serialization

json dataset_json(const DatasetConfig& d) {
  return {{"early_window_minutes", d.early_window_minutes},
          {"min_early_current_samples", d.min_early_current_samples},
          {"nominal_voltage_v", d.nominal_voltage_v}};
}

DatasetConfig dataset_from(const json& j) {
  DatasetConfig d;
  d.early_window_minutes = j.value("early_window_minutes", d.early_window_minutes);
  d.min_early_current_samples =
      j.value("min_early_current_samples", d.min_early_current_samples);
  d.nominal_voltage_v = j.value("nominal_voltage_v", d.nominal_voltage_v);
  return d;
}

json synthetic_json(const SyntheticDepotSpec& s) {
  return {{"n_stations", s.n_stations},
          {"min_sessions_per_station", s.min_sessions_per_station},
          {"max_sessions_per_station", s.max_sessions_per_station},
          {"station_energy_mean_kwh", s.station_energy_mean_kwh},
          {"station_energy_std_kwh", s.station_energy_std_kwh},
          {"heterogeneity_shift_kwh", s.heterogeneity_shift_kwh},
          {"shifted_fraction", s.shifted_fraction},
          {"noise_std_kwh", s.noise_std_kwh},
          {"sparse_session_fraction", s.sparse_session_fraction},
          {"missing_pilot_fraction", s.missing_pilot_fraction},
          {"user_input_rate", s.user_input_rate},
          {"nominal_voltage_v", s.nominal_voltage_v},
          {"seed", s.seed}};
}

SyntheticDepotSpec synthetic_from(const json& j) {
  SyntheticDepotSpec s;
  s.n_stations = j.value("n_stations", s.n_stations);
  s.min_sessions_per_station = j.value("min_sessions_per_station", s.min_sessions_per_station);
  s.max_sessions_per_station = j.value("max_sessions_per_station", s.max_sessions_per_station);
  s.station_energy_mean_kwh = j.value("station_energy_mean_kwh", s.station_energy_mean_kwh);
  s.station_energy_std_kwh = j.value("station_energy_std_kwh", s.station_energy_std_kwh);
  s.heterogeneity_shift_kwh = j.value("heterogeneity_shift_kwh", s.heterogeneity_shift_kwh);
  s.shifted_fraction = j.value("shifted_fraction", s.shifted_fraction);
  s.noise_std_kwh = j.value("noise_std_kwh", s.noise_std_kwh);
  s.sparse_session_fraction = j.value("sparse_session_fraction", s.sparse_session_fraction);
  s.missing_pilot_fraction = j.value("missing_pilot_fraction", s.missing_pilot_fraction);
  s.user_input_rate = j.value("user_input_rate", s.user_input_rate);
  s.nominal_voltage_v = j.value("nominal_voltage_v", s.nominal_voltage_v);
  s.seed = j.value("seed", s.seed);
  return s;
}

json federation_json(const FedConfig& f) {
  return {{"rounds", f.rounds},
          {"local_epochs", f.local_epochs},
          {"client_fraction", f.client_fraction},
          {"batch_size", f.batch_size},
          {"lr", f.lr},
          {"convergence_patience", f.convergence_patience},
          {"convergence_min_delta", f.convergence_min_delta},
          {"local_dropout", f.local_dropout},
          {"persist_client_optimizer", f.persist_client_optimizer}};
}

FedConfig federation_from(const json& j) {
  FedConfig f;
  f.rounds = j.value("rounds", f.rounds);
  f.local_epochs = j.value("local_epochs", f.local_epochs);
  f.client_fraction = j.value("client_fraction", f.client_fraction);
  f.batch_size = j.value("batch_size", f.batch_size);
  f.lr = j.value("lr", f.lr);
  f.convergence_patience = j.value("convergence_patience", f.convergence_patience);
  f.convergence_min_delta = j.value("convergence_min_delta", f.convergence_min_delta);
  f.local_dropout = j.value("local_dropout", f.local_dropout);
  f.persist_client_optimizer =
      j.value("persist_client_optimizer", f.persist_client_optimizer);
  return f;
}

json experiment_json(const ExperimentConfig& e) {
  return {{"model", to_string(e.model)},
          {"mode", to_string(e.mode)},
          {"epochs", e.epochs},
          {"split", {{"train", e.fractions.train},
                     {"val", e.fractions.val},
                     {"test", e.fractions.test}}},
          {"split_seed", e.split_seed ? json(*e.split_seed) : json(nullptr)},
          {"embedding_dim", e.embedding_dim},
          {"hidden", e.hidden},
          {"dropout_rate", e.dropout_rate},
          {"federation", federation_json(e.federation)}};
}

ExperimentConfig experiment_from(const json& j) {
  ExperimentConfig e;
  if (j.contains("model")) e.model = parse_model_kind(j.at("model").get<std::string>());
  if (j.contains("mode")) e.mode = parse_train_mode(j.at("mode").get<std::string>());
  e.epochs = j.value("epochs", e.epochs);
  if (j.contains("split")) {
    const auto& s = j.at("split");
    e.fractions.train = s.value("train", e.fractions.train);
    e.fractions.val = s.value("val", e.fractions.val);
    e.fractions.test = s.value("test", e.fractions.test);
  }
  if (j.contains("split_seed") && !j.at("split_seed").is_null()) {
    e.split_seed = j.at("split_seed").get<std::uint64_t>();
  }
  e.embedding_dim = j.value("embedding_dim", e.embedding_dim);
  e.hidden = j.value("hidden", e.hidden);
  e.dropout_rate = j.value("dropout_rate", e.dropout_rate);
  if (j.contains("federation")) e.federation = federation_from(j.at("federation"));
  return e;
}

json heterogeneity_json(const HeterogeneityConfig& h) {
  return {{"bins", h.bins}, {"n_permutations", h.n_permutations}, {"seed", h.seed}};
}

HeterogeneityConfig heterogeneity_from(const json& j) {
  HeterogeneityConfig h;
  h.bins = j.value("bins", h.bins);
  h.n_permutations = j.value("n_permutations", h.n_permutations);
  h.seed = j.value("seed", h.seed);
  return h;
}

// ---------------------------------------------------------------------------
// Flag overrides

struct Overrides {
  std::optional<std::string> config, in, out, sessions, timeseries, format;
  std::optional<std::string> mode, model;
  std::optional<bool> strict, persist_optimizer, local_dropout;
  std::optional<std::size_t> rounds, epochs, local_epochs, batch_size;
  std::optional<std::size_t> stations, min_sessions, max_sessions;
  std::optional<std::size_t> bins, permutations, patience;
  std::optional<int> min_samples;
  std::optional<double> fraction, lr, min_delta, window, voltage;
  std::optional<double> mean, std_kwh, shift, shift_fraction, noise;
  std::optional<std::uint64_t> seed, split_seed;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<std::vector<std::string>> runs;
};

template <typename T>
CLI::Option* bind_opt(CLI::App* app, const std::string& name,
                  std::optional<T>& target, const std::string& help) {
  return app->add_option_function<T>(
      name, [&target](const T& v) { target = v; }, help);
}

void add_io(CLI::App* app, Overrides& o) {
  bind_opt(app, "--config", o.config, "JSON config file; flags override it");
  bind_opt(app, "--in", o.in, "input directory");
  bind_opt(app, "--out", o.out, "output directory");
}

void add_dataset(CLI::App* app, Overrides& o) {
  bind_opt(app, "--window-minutes", o.window, "early window length W (minutes)");
  bind_opt(app, "--min-current-samples", o.min_samples,
       "minimum early current samples for retention");
  bind_opt(app, "--voltage", o.voltage, "nominal voltage (V)");
}

void add_sources(CLI::App* app, Overrides& o) {
  bind_opt(app, "--sessions", o.sessions, "session metadata file (CSV or JSON lines)");
  bind_opt(app, "--timeseries", o.timeseries, "time-series file (CSV or JSON lines)");
  app->add_flag_function("--strict", [&o](std::int64_t) { o.strict = true; },
                         "abort on the first malformed row");
}

void add_training(CLI::App* app, Overrides& o) {
  bind_opt(app, "--mode", o.mode, "centralized|federated");
  bind_opt(app, "--model", o.model, "dummy-mean|dummy-gauss|lr|mlp");
  bind_opt(app, "--rounds", o.rounds, "federated communication rounds");
  bind_opt(app, "--epochs", o.epochs, "centralized epochs");
  bind_opt(app, "--local-epochs", o.local_epochs, "local epochs per sampled client");
  bind_opt(app, "--fraction", o.fraction, "client sampling fraction in (0, 1]");
  bind_opt(app, "--batch-size", o.batch_size, "mini-batch size");
  bind_opt(app, "--lr", o.lr, "Adam learning rate");
  bind_opt(app, "--patience", o.patience, "convergence patience (rounds)");
  bind_opt(app, "--min-delta", o.min_delta, "convergence minimum improvement (kWh)");
  bind_opt(app, "--split-seed", o.split_seed, "fix the split seed across runs");
  bind_opt(app, "--persist-client-optimizer", o.persist_optimizer,
       "keep client Adam state between rounds (true|false)");
  bind_opt(app, "--local-dropout", o.local_dropout,
       "dropout during federated local training (true|false)");
}

void apply(const Overrides& o, RunConfig& c) {
  auto set = [](const auto& src, auto& dst) {
    if (src) dst = *src;
  };
  set(o.in, c.in);
  set(o.out, c.out);
  set(o.sessions, c.sessions);
  set(o.timeseries, c.timeseries);
  set(o.format, c.format);
  set(o.strict, c.strict);
  set(o.window, c.dataset.early_window_minutes);
  set(o.min_samples, c.dataset.min_early_current_samples);
  set(o.voltage, c.dataset.nominal_voltage_v);
  if (o.voltage) c.synthetic.nominal_voltage_v = *o.voltage;

  set(o.stations, c.synthetic.n_stations);
  set(o.min_sessions, c.synthetic.min_sessions_per_station);
  set(o.max_sessions, c.synthetic.max_sessions_per_station);
  if (o.mean) c.synthetic.station_energy_mean_kwh.assign(c.synthetic.n_stations, *o.mean);
  set(o.std_kwh, c.synthetic.station_energy_std_kwh);
  set(o.shift, c.synthetic.heterogeneity_shift_kwh);
  set(o.shift_fraction, c.synthetic.shifted_fraction);
  set(o.noise, c.synthetic.noise_std_kwh);

  auto& e = c.experiment;
  if (o.model) e.model = parse_model_kind(*o.model);
  if (o.mode) e.mode = parse_train_mode(*o.mode);
  set(o.rounds, e.federation.rounds);
  set(o.epochs, e.epochs);
  set(o.local_epochs, e.federation.local_epochs);
  set(o.fraction, e.federation.client_fraction);
  set(o.batch_size, e.federation.batch_size);
  set(o.lr, e.federation.lr);
  set(o.patience, e.federation.convergence_patience);
  set(o.min_delta, e.federation.convergence_min_delta);
  set(o.persist_optimizer, e.federation.persist_client_optimizer);
  set(o.local_dropout, e.federation.local_dropout);
  if (o.split_seed) e.split_seed = *o.split_seed;

  set(o.bins, c.heterogeneity.bins);
  set(o.permutations, c.heterogeneity.n_permutations);
  set(o.seeds, c.seeds);
  set(o.runs, c.runs);

  if (o.seed) {
    c.synthetic.seed = *o.seed;
    c.heterogeneity.seed = *o.seed;
    if (!o.seeds) c.seeds = {*o.seed};
  }
}

// ---------------------------------------------------------------------------
// Subcommands

void write_json(const fs::path& path, const json& j) {
  auto out = csv::open_output(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

void echo_config(const RunConfig& c) { write_json(fs::path(c.out) / "config.json", to_json(c)); }

fs::path find_source(const RunConfig& c, const std::string& explicit_path,
                     const std::string& stem) {
  if (!explicit_path.empty()) return explicit_path;
  for (const char* ext : {".csv", ".jsonl"}) {
    fs::path p = fs::path(c.in) / (stem + ext);
    if (fs::exists(p)) return p;
  }
  throw IoError("no " + stem + ".csv or " + stem + ".jsonl in '" + c.in + "'");
}

json diagnostics_json(const ParseDiagnostics& d) {
  return {{"rows_read", d.rows_read},
          {"malformed_rows", d.malformed_rows},
          {"duplicate_samples", d.duplicate_samples},
          {"negative_clamped", d.negative_clamped},
          {"messages", d.messages}};
}

json tally_json(const DropTally& t) {
  return {{"missing_series", t.missing_series},
          {"missing_target", t.missing_target},
          {"too_few_early_current", t.too_few_early_current}};
}

struct LoadedSources {
  Parsed<std::vector<SessionRecord>> sessions;
  Parsed<SeriesIndex> series;
  std::size_t pre_connection_dropped = 0;
  RetentionResult retained;
};

LoadedSources load_and_retain(const RunConfig& c) {
  const ParseOptions opts{c.strict, std::nullopt};
  LoadedSources s;
  s.sessions = parse_sessions(find_source(c, c.sessions, "sessions"), opts);
  s.series = parse_timeseries(find_source(c, c.timeseries, "timeseries"), opts);
  s.pre_connection_dropped =
      drop_pre_connection_samples(s.sessions.value, s.series.value);
  s.retained = retain_sessions(s.sessions.value, s.series.value, c.dataset);
  return s;
}

json sources_report(const LoadedSources& s) {
  return {{"sessions", diagnostics_json(s.sessions.diagnostics)},
          {"timeseries", diagnostics_json(s.series.diagnostics)},
          {"pre_connection_samples_dropped", s.pre_connection_dropped},
          {"sessions_in", s.sessions.value.size()},
          {"sessions_retained", s.retained.sessions.size()},
          {"dropped", tally_json(s.retained.dropped)}};
}

FileFormat output_format(const RunConfig& c) {
  if (c.format == "csv") return FileFormat::kCsv;
  if (c.format == "jsonl") return FileFormat::kJsonLines;
  throw ValidationError("format: expected csv|jsonl, got '" + c.format + "'");
}

void cmd_synth(const RunConfig& c, std::ostream& out) {
  const auto fmt = output_format(c);
  const auto depot = generate_synthetic(c.synthetic);
  const std::string ext = fmt == FileFormat::kCsv ? ".csv" : ".jsonl";
  write_sessions(fs::path(c.out) / ("sessions" + ext), depot.sessions, fmt);
  write_timeseries(fs::path(c.out) / ("timeseries" + ext), depot.series, fmt);
  echo_config(c);
  out << "synth: " << depot.sessions.size() << " sessions at "
      << c.synthetic.n_stations << " stations -> " << c.out << '\n';
}

void cmd_ingest(const RunConfig& c, std::ostream& out) {
  const auto fmt = output_format(c);
  auto s = load_and_retain(c);
  SeriesIndex kept;
  for (const auto& session : s.retained.sessions) {
    kept[session.session_id] = s.series.value.at(session.session_id);
  }
  const std::string ext = fmt == FileFormat::kCsv ? ".csv" : ".jsonl";
  write_sessions(fs::path(c.out) / ("sessions" + ext), s.retained.sessions, fmt);
  write_timeseries(fs::path(c.out) / ("timeseries" + ext), kept, fmt);
  write_json(fs::path(c.out) / "ingest_report.json", sources_report(s));
  echo_config(c);
  out << "ingest: retained " << s.retained.sessions.size() << " of "
      << s.sessions.value.size() << " sessions\n";
}

void cmd_featurize(const RunConfig& c, std::ostream& out) {
  auto s = load_and_retain(c);
  const auto table = build_features(s.retained.sessions, s.series.value, c.dataset);
  write_features(fs::path(c.out) / "features.csv", table.rows);
  auto report = sources_report(s);
  report["negative_departure_offsets"] = table.negative_departure_offsets;
  report["feature_dim"] = kFeatureDim;
  write_json(fs::path(c.out) / "featurize_report.json", report);
  echo_config(c);
  out << "featurize: " << table.rows.size() << " rows x " << kFeatureDim
      << " features -> " << c.out << '\n';
}

std::vector<FeatureVector> load_features(const RunConfig& c) {
  fs::path p = c.in;
  if (fs::is_directory(p)) p /= "features.csv";
  return read_features(p);
}

void cmd_analyze(const RunConfig& c, std::ostream& out) {
  const auto rows = load_features(c);
  std::vector<double> targets;
  std::vector<std::string> clients;
  for (const auto& r : rows) {
    targets.push_back(r.target);
    clients.push_back(r.station_id);
  }
  const auto report = analyze_heterogeneity(targets, clients, c.heterogeneity);
  write_json(fs::path(c.out) / "heterogeneity.json", to_json(report));
  echo_config(c);
  out << "analyze: K=" << report.client_ids.size()
      << " JS_weighted=" << report.js_weighted << " tau=" << report.tau_iid
      << " -> " << to_string(report.classification) << '\n';
}

void write_seed_outputs(const fs::path& dir, const SeedResult& r) {
  write_round_log(dir / "rounds.csv", r.log);
  write_predictions(dir / "predictions.csv", r.predictions);
  write_json(dir / "preprocess.json", r.preprocessor);
  if (r.best) {
    auto bytes = serialize_parameters(*r.best, r.architecture_hash);
    auto f = csv::open_output(dir / "checkpoint.bin");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: checkpoint.bin");
  }
  write_json(dir / "metrics.json",
             {{"seed", r.seed},
              {"architecture", r.architecture},
              {"test_mae", r.test_mae},
              {"test_rmse", r.test_rmse},
              {"val_mae", r.val_mae},
              {"best_round", r.best_round},
              {"convergence_round", r.convergence_round
                                        ? json(*r.convergence_round)
                                        : json(nullptr)}});
}

void cmd_train(const RunConfig& c, std::ostream& out) {
  const auto rows = load_features(c);
  const std::uint64_t seed = c.seeds.front();
  const auto r = run_single_seed(rows, c.experiment, seed);
  write_seed_outputs(c.out, r);
  echo_config(c);
  out << "train: " << to_string(c.experiment.model) << " ("
      << to_string(c.experiment.mode) << ", seed " << seed
      << ") test MAE=" << r.test_mae << " RMSE=" << r.test_rmse
      << " best round=" << r.best_round << '\n';
}

void cmd_evaluate(const RunConfig& c, std::ostream& out) {
  const auto rows = load_features(c);
  const auto report = multi_seed_run(rows, c.experiment, c.seeds, [&](const SeedResult& r) {
    write_seed_outputs(fs::path(c.out) / ("seed_" + std::to_string(r.seed)), r);
  });
  write_json(fs::path(c.out) / "run_report.json", to_json(report));
  echo_config(c);
  out << "evaluate: " << report.model << " " << report.mode << " MAE "
      << report.mae_mean << " +/- " << report.mae_std << " RMSE "
      << report.rmse_mean << " +/- " << report.rmse_std << " over "
      << report.n_seeds() << " seeds\n";
}

void cmd_report(const RunConfig& c, std::ostream& out) {
  if (c.runs.empty()) throw ValidationError("runs: pass at least one evaluate output directory");
  std::vector<RunReport> reports;
  for (const auto& dir : c.runs) {
    auto in = csv::open_input(fs::path(dir) / "run_report.json");
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ValidationError(dir + "/run_report.json: " + e.what());
    }
    reports.push_back(run_report_from_json(j));
  }
  emit_report(reports, c.out);
  echo_config(c);
  out << "report: " << reports.size() << " rows -> " << c.out << "/results.csv\n";
}

const std::map<std::string, std::pair<std::string, std::string>>& default_dirs() {
  static const std::map<std::string, std::pair<std::string, std::string>> dirs = {
      {"synth", {"", "data"}},
      {"ingest", {"data", "ingested"}},
      {"featurize", {"data", "features"}},
      {"analyze", {"features", "analysis"}},
      {"train", {"features", "runs/train"}},
      {"evaluate", {"features", "runs/evaluate"}},
      {"report", {"", "report"}}};
  return dirs;
}

}  // namespace

void RunConfig::validate() const {
  dataset.validate();
  if (command == "synth") synthetic.validate();
  if (command == "analyze") heterogeneity.validate();
  if (command == "train" || command == "evaluate") {
    experiment.validate();
    if (seeds.empty()) throw ValidationError("seeds: need at least one seed");
  }
  if (out.empty()) throw ValidationError("out: output directory required");
}

json to_json(const RunConfig& c) {
  return {{"command", c.command},
          {"in", c.in},
          {"out", c.out},
          {"sessions", c.sessions},
          {"timeseries", c.timeseries},
          {"format", c.format},
          {"strict", c.strict},
          {"dataset", dataset_json(c.dataset)},
          {"synthetic", synthetic_json(c.synthetic)},
          {"experiment", experiment_json(c.experiment)},
          {"heterogeneity", heterogeneity_json(c.heterogeneity)},
          {"seeds", c.seeds},
          {"runs", c.runs}};
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config: expected a JSON object");
  RunConfig c;
  try {
    c.command = j.value("command", c.command);
    c.in = j.value("in", c.in);
    c.out = j.value("out", c.out);
    c.sessions = j.value("sessions", c.sessions);
    c.timeseries = j.value("timeseries", c.timeseries);
    c.format = j.value("format", c.format);
    c.strict = j.value("strict", c.strict);
    if (j.contains("dataset")) c.dataset = dataset_from(j.at("dataset"));
    if (j.contains("synthetic")) c.synthetic = synthetic_from(j.at("synthetic"));
    if (j.contains("experiment")) c.experiment = experiment_from(j.at("experiment"));
    if (j.contains("heterogeneity")) {
      c.heterogeneity = heterogeneity_from(j.at("heterogeneity"));
    }
    c.seeds = j.value("seeds", c.seeds);
    c.runs = j.value("runs", c.runs);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

int dispatch(int argc, const char* const* argv, std::ostream& out,
             std::ostream& err) {
  CLI::App app{"Early EV charging-demand prediction with federated learning"};
  app.name("evfl");
  app.require_subcommand(1);
  Overrides o;

  auto* synth = app.add_subcommand("synth", "generate a synthetic depot");
  add_io(synth, o);
  add_dataset(synth, o);
  bind_opt(synth, "--seed", o.seed, "generator seed");
  bind_opt(synth, "--stations", o.stations, "number of stations");
  bind_opt(synth, "--min-sessions", o.min_sessions, "minimum sessions per station");
  bind_opt(synth, "--max-sessions", o.max_sessions, "maximum sessions per station");
  bind_opt(synth, "--mean", o.mean, "station mean energy (kWh), all stations");
  bind_opt(synth, "--std", o.std_kwh, "within-station energy std (kWh)");
  bind_opt(synth, "--shift", o.shift, "energy shift on the shifted stations (kWh)");
  bind_opt(synth, "--shift-fraction", o.shift_fraction, "fraction of stations shifted");
  bind_opt(synth, "--noise", o.noise, "target noise std (kWh)");
  bind_opt(synth, "--format", o.format, "csv|jsonl");

  auto* ingest = app.add_subcommand("ingest", "parse, validate and filter raw sources");
  add_io(ingest, o);
  add_dataset(ingest, o);
  add_sources(ingest, o);
  bind_opt(ingest, "--format", o.format, "csv|jsonl");

  auto* featurize = app.add_subcommand("featurize", "build features.csv");
  add_io(featurize, o);
  add_dataset(featurize, o);
  add_sources(featurize, o);

  auto* analyze = app.add_subcommand("analyze", "client heterogeneity (JS divergence)");
  add_io(analyze, o);
  bind_opt(analyze, "--bins", o.bins, "histogram bins");
  bind_opt(analyze, "--permutations", o.permutations, "permutation replicates");
  bind_opt(analyze, "--seed", o.seed, "permutation seed");

  auto* train = app.add_subcommand("train", "train one model with one seed");
  add_io(train, o);
  add_training(train, o);
  bind_opt(train, "--seed", o.seed, "run seed (split, init, sampling)");

  auto* evaluate = app.add_subcommand("evaluate", "multi-seed experiment");
  add_io(evaluate, o);
  add_training(evaluate, o);
  bind_opt(evaluate, "--seeds", o.seeds, "comma-separated seeds")->delimiter(',');

  auto* report = app.add_subcommand("report", "aggregate evaluate outputs");
  add_io(report, o);
  bind_opt(report, "--runs", o.runs, "evaluate output directories");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    // Subcommand --help arrives here as a success-coded CallForHelp.
    if (e.get_exit_code() == 0) {
      for (auto* sub : app.get_subcommands()) out << sub->help();
      if (app.get_subcommands().empty()) out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << '\n' << app.help();
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    RunConfig cfg;
    if (o.config) {
      auto in = csv::open_input(*o.config);
      json j;
      try {
        j = json::parse(in);
      } catch (const json::exception& e) {
        throw ValidationError("config: " + std::string(e.what()));
      }
      cfg = run_config_from_json(j);
    }
    const auto& dirs = default_dirs().at(command);
    if (!o.config || cfg.command != command) {
      if (cfg.in.empty()) cfg.in = dirs.first;
      if (cfg.out.empty()) cfg.out = dirs.second;
    }
    cfg.command = command;
    apply(o, cfg);
    cfg.validate();

    static const std::map<std::string, std::function<void(const RunConfig&, std::ostream&)>>
        handlers = {{"synth", cmd_synth},       {"ingest", cmd_ingest},
                    {"featurize", cmd_featurize}, {"analyze", cmd_analyze},
                    {"train", cmd_train},       {"evaluate", cmd_evaluate},
                    {"report", cmd_report}};
    handlers.at(command)(cfg, out);
    return kExitOk;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
}

}  // namespace evfl::cli
