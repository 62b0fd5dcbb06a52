// SPDX-License-Identifier: Apache-2.0
#include "evfl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "evfl/csv.hpp"
#include "evfl/error.hpp"
#include "evfl/random.hpp"

namespace evfl {
namespace {

std::pair<double, double> mean_and_std(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double sq = 0.0;
  for (double x : v) sq += (x - mean) * (x - mean);
  return {mean, std::sqrt(sq / n)};
}

nlohmann::json optional_json(const std::optional<std::size_t>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

void SplitFractions::validate() const {
  for (double f : {train, val, test}) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw ValidationError("split fractions must lie in [0, 1]");
    }
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) {
    throw ValidationError("split fractions must sum to 1");
  }
}

std::vector<std::size_t> SplitAssignment::indices(SplitLabel label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) out.push_back(i);
  }
  return out;
}

std::size_t SplitAssignment::count(SplitLabel label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

SplitAssignment split(std::size_t n, const SplitFractions& fractions,
                      std::uint64_t seed) {
  fractions.validate();
  if (n < 3) throw ValidationError("split needs at least 3 sessions");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, {stream::kSplit});
  std::shuffle(order.begin(), order.end(), rng);

  const double dn = static_cast<double>(n);
  const auto train_end = static_cast<std::size_t>(std::llround(fractions.train * dn));
  const auto val_end = std::max(
      train_end, static_cast<std::size_t>(
                     std::llround((fractions.train + fractions.val) * dn)));

  SplitAssignment out;
  out.labels.assign(n, SplitLabel::kTest);
  out.fractions = fractions;
  out.seed = seed;
  for (std::size_t i = 0; i < std::min(val_end, n); ++i) {
    out.labels[order[i]] = i < train_end ? SplitLabel::kTrain : SplitLabel::kVal;
  }
  return out;
}

std::string to_string(TrainMode mode) {
  return mode == TrainMode::kFederated ? "federated" : "centralized";
}

TrainMode parse_train_mode(std::string_view name) {
  if (name == "centralized") return TrainMode::kCentralized;
  if (name == "federated") return TrainMode::kFederated;
  throw ValidationError("mode: expected centralized|federated, got '" +
                        std::string(name) + "'");
}

void ExperimentConfig::validate() const {
  fractions.validate();
  federation.validate(/*allow_zero_rounds=*/mode != TrainMode::kFederated);
  if (federation.batch_size == 0) throw ValidationError("batch_size must be > 0");
  if (!(federation.lr > 0.0)) throw ValidationError("lr must be > 0");
  MlpSpec probe{1, 1, embedding_dim, hidden, dropout_rate};
  probe.validate();
}

PreparedSplits prepare_splits(std::span<const FeatureVector> rows,
                              const SplitFractions& fractions,
                              std::uint64_t seed) {
  PreparedSplits out;
  out.assignment = split(rows.size(), fractions, seed);
  auto pick = [&](SplitLabel label) {
    std::vector<FeatureVector> sel;
    for (std::size_t i : out.assignment.indices(label)) sel.push_back(rows[i]);
    return sel;
  };
  const auto train = pick(SplitLabel::kTrain);
  out.preprocessor = Preprocessor::fit(train);
  out.train = out.preprocessor.transform(train);
  out.val = out.preprocessor.transform(pick(SplitLabel::kVal));
  out.test = out.preprocessor.transform(pick(SplitLabel::kTest));
  return out;
}

std::unique_ptr<Model> make_model(const ExperimentConfig& cfg,
                                  std::size_t input_dim,
                                  std::size_t n_stations, std::uint64_t seed) {
  switch (cfg.model) {
    case ModelKind::kLinear:
      return std::make_unique<LinearModel>(input_dim, seed);
    case ModelKind::kMlp:
      return std::make_unique<MlpModel>(
          MlpSpec{input_dim, n_stations, cfg.embedding_dim, cfg.hidden,
                  cfg.dropout_rate},
          seed);
    default:
      throw ValidationError("model '" + to_string(cfg.model) +
                            "' is not gradient-trained");
  }
}

SeedResult run_single_seed(std::span<const FeatureVector> rows,
                           const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  auto prep = prepare_splits(rows, cfg.fractions, cfg.split_seed.value_or(seed));
  if (prep.val.empty() || prep.test.empty()) {
    throw ValidationError("dataset too small for a non-empty val/test split");
  }

  SeedResult r;
  r.seed = seed;
  r.preprocessor = prep.preprocessor;
  std::vector<double> test_pred, val_pred;

  if (cfg.model == ModelKind::kDummyMean) {
    const auto d = DummyMean::fit(prep.train.targets);
    test_pred.assign(prep.test.size(), d.predict());
    val_pred.assign(prep.val.size(), d.predict());
    r.architecture = "dummy-mean";
  } else if (cfg.model == ModelKind::kDummyGaussian) {
    const auto d = DummyGaussian::fit(prep.train.targets);
    Rng rng = make_rng(seed, {stream::kDummy});
    for (std::size_t i = 0; i < prep.val.size(); ++i) val_pred.push_back(d.sample(rng));
    for (std::size_t i = 0; i < prep.test.size(); ++i) test_pred.push_back(d.sample(rng));
    r.architecture = "dummy-gauss";
  } else {
    auto model = make_model(cfg, prep.train.dim, prep.preprocessor.vocabulary.size(), seed);
    TrainingResult tr;
    if (cfg.mode == TrainMode::kFederated) {
      FedConfig fed = cfg.federation;
      fed.seed = seed;
      tr = run_federated(*model, prep.train, prep.val, prep.test, fed);
    } else {
      CentralConfig central;
      central.epochs = cfg.epochs;
      central.batch_size = cfg.federation.batch_size;
      central.lr = cfg.federation.lr;
      central.seed = seed;
      central.convergence_patience = cfg.federation.convergence_patience;
      central.convergence_min_delta = cfg.federation.convergence_min_delta;
      tr = run_centralized(*model, prep.train, prep.val, prep.test, central);
    }
    model->set_params(tr.best);
    test_pred = predict_all(*model, prep.test);
    val_pred = predict_all(*model, prep.val);
    r.best_round = tr.best_round;
    r.convergence_round = tr.convergence_round;
    r.log = std::move(tr.log);
    r.best = tr.best;
    r.architecture = model->architecture();
    r.architecture_hash = model->architecture_hash();
  }

  r.test_mae = mae(test_pred, prep.test.targets);
  r.test_rmse = rmse(test_pred, prep.test.targets);
  r.val_mae = mae(val_pred, prep.val.targets);
  r.predictions.reserve(prep.test.size());
  for (std::size_t i = 0; i < prep.test.size(); ++i) {
    r.predictions.push_back(
        {prep.test.session_ids[i], prep.test.targets[i], test_pred[i]});
  }
  return r;
}

RunReport summarize(std::string model, std::string mode,
                    std::vector<SeedSummary> per_seed,
                    std::string split_policy) {
  if (per_seed.empty()) throw ValidationError("report needs at least one seed");
  RunReport rep;
  rep.model = std::move(model);
  rep.mode = std::move(mode);
  rep.split_policy = std::move(split_policy);
  std::vector<double> maes, rmses, conv;
  for (const auto& s : per_seed) {
    maes.push_back(s.test_mae);
    rmses.push_back(s.test_rmse);
    if (s.convergence_round) conv.push_back(static_cast<double>(*s.convergence_round));
  }
  std::tie(rep.mae_mean, rep.mae_std) = mean_and_std(maes);
  std::tie(rep.rmse_mean, rep.rmse_std) = mean_and_std(rmses);
  if (!conv.empty()) {
    std::sort(conv.begin(), conv.end());
    const std::size_t mid = conv.size() / 2;
    rep.convergence_round_median =
        conv.size() % 2 ? conv[mid] : 0.5 * (conv[mid - 1] + conv[mid]);
  }
  rep.per_seed = std::move(per_seed);
  return rep;
}

RunReport multi_seed_run(std::span<const FeatureVector> rows,
                         const ExperimentConfig& cfg,
                         std::span<const std::uint64_t> seeds,
                         const std::function<void(const SeedResult&)>& on_seed) {
  if (seeds.empty()) throw ValidationError("seeds: need at least one seed");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ValidationError("seeds: must be distinct");
  }
  std::vector<SeedSummary> per_seed;
  for (std::uint64_t seed : seeds) {
    SeedResult r;
    try {
      r = run_single_seed(rows, cfg, seed);
    } catch (const ValidationError& e) {
      throw ValidationError("seed " + std::to_string(seed) + ": " + e.what());
    }
    if (on_seed) on_seed(r);
    per_seed.push_back(
        {seed, r.test_mae, r.test_rmse, r.best_round, r.convergence_round});
  }
  return summarize(to_string(cfg.model), to_string(cfg.mode), std::move(per_seed),
                   cfg.split_seed ? "fixed split seed " + std::to_string(*cfg.split_seed)
                                  : "re-split per seed");
}

nlohmann::json to_json(const RunReport& r) {
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : r.per_seed) {
    seeds.push_back({{"seed", s.seed},
                     {"test_mae", s.test_mae},
                     {"test_rmse", s.test_rmse},
                     {"best_round", s.best_round},
                     {"convergence_round", optional_json(s.convergence_round)}});
  }
  return {{"model", r.model},
          {"mode", r.mode},
          {"n_seeds", r.n_seeds()},
          {"split_policy", r.split_policy},
          {"mae_mean", r.mae_mean},
          {"mae_std", r.mae_std},
          {"rmse_mean", r.rmse_mean},
          {"rmse_std", r.rmse_std},
          {"convergence_round_median",
           r.convergence_round_median ? nlohmann::json(*r.convergence_round_median)
                                      : nlohmann::json(nullptr)},
          {"per_seed", seeds}};
}

RunReport run_report_from_json(const nlohmann::json& j) {
  std::vector<SeedSummary> per_seed;
  for (const auto& s : j.at("per_seed")) {
    SeedSummary ss;
    ss.seed = s.at("seed").get<std::uint64_t>();
    ss.test_mae = s.at("test_mae").get<double>();
    ss.test_rmse = s.at("test_rmse").get<double>();
    ss.best_round = s.at("best_round").get<std::size_t>();
    if (!s.at("convergence_round").is_null()) {
      ss.convergence_round = s.at("convergence_round").get<std::size_t>();
    }
    per_seed.push_back(ss);
  }
  return summarize(j.at("model").get<std::string>(), j.at("mode").get<std::string>(),
                   std::move(per_seed), j.value("split_policy", "re-split per seed"));
}

void emit_report(std::span<const RunReport> reports,
                 const std::filesystem::path& dir) {
  if (reports.empty()) throw ValidationError("report: nothing to emit");
  auto out = csv::open_output(dir / "results.csv");
  out << kResultsHeader << '\n';
  nlohmann::json all = nlohmann::json::array();
  for (const auto& r : reports) {
    out << csv::escape(r.model) << ',' << csv::escape(r.mode) << ','
        << csv::format_double(r.mae_mean) << ',' << csv::format_double(r.mae_std)
        << ',' << csv::format_double(r.rmse_mean) << ','
        << csv::format_double(r.rmse_std) << ',' << r.n_seeds() << ',';
    if (r.convergence_round_median) {
      out << csv::format_double(*r.convergence_round_median);
    }
    out << '\n';
    all.push_back(to_json(r));
  }
  if (!out) throw IoError("write failed: results.csv");
  auto js = csv::open_output(dir / "results.json");
  js << all.dump(2) << '\n';
  if (!js) throw IoError("write failed: results.json");
}

void write_predictions(const std::filesystem::path& path,
                       std::span<const Prediction> predictions) {
  auto out = csv::open_output(path);
  out << "session_id,y_true,y_pred\n";
  for (const auto& p : predictions) {
    out << csv::escape(p.session_id) << ',' << csv::format_double(p.y_true)
        << ',' << csv::format_double(p.y_pred) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  std::string line;
  if (!csv::read_line(in, line) || line != "session_id,y_true,y_pred") {
    throw ParseError(path.string(), 1, "unexpected predictions header");
  }
  std::vector<Prediction> out;
  std::size_t line_no = 1;
  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = csv::split(line);
    auto y = cells.size() == 3 ? csv::parse_double(cells[1]) : std::nullopt;
    auto p = cells.size() == 3 ? csv::parse_double(cells[2]) : std::nullopt;
    if (!y || !p) throw ParseError(path.string(), line_no, "malformed prediction row");
    out.push_back({cells[0], *y, *p});
  }
  return out;
}

void write_round_log(const std::filesystem::path& path,
                     std::span<const RoundLog> log) {
  auto out = csv::open_output(path);
  out << "round,val_mae,val_rmse,test_mae,test_rmse,clients\n";
  for (const auto& r : log) {
    std::string clients;
    for (std::size_t i = 0; i < r.clients.size(); ++i) {
      if (i) clients += ';';
      clients += r.clients[i];
    }
    out << r.round << ',' << csv::format_double(r.val_mae) << ','
        << csv::format_double(r.val_rmse) << ',' << csv::format_double(r.test_mae)
        << ',' << csv::format_double(r.test_rmse) << ',' << csv::escape(clients)
        << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace evfl
