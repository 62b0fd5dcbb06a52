// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "evfl/csv.hpp"

#include "evfl/error.hpp"
#include "evfl/evaluation.hpp"
#include "evfl/ingestion.hpp"
#include "evfl/metrics.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace evfl;

namespace {

std::vector<FeatureVector> synthetic_rows(std::uint64_t seed, std::size_t stations = 4) {
  SyntheticDepotSpec spec;
  spec.n_stations = stations;
  spec.seed = seed;
  auto depot = generate_synthetic(spec);
  DatasetConfig dc;
  auto kept = retain_sessions(depot.sessions, depot.series, dc).sessions;
  return build_features(kept, depot.series, dc).rows;
}

ExperimentConfig quick(ModelKind kind, TrainMode mode) {
  ExperimentConfig cfg;
  cfg.model = kind;
  cfg.mode = mode;
  cfg.epochs = 3;
  cfg.hidden = {8, 8, 4};
  cfg.embedding_dim = 4;
  cfg.federation.rounds = 4;
  cfg.federation.local_epochs = 1;
  cfg.federation.client_fraction = 0.5;
  cfg.federation.batch_size = 32;
  return cfg;
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("split counts") {
    const SplitFractions f;
    auto a = split(100, f, 1);
    CHECK(a.count(SplitLabel::kTrain) == 70);
    CHECK(a.count(SplitLabel::kVal) == 15);
    CHECK(a.count(SplitLabel::kTest) == 15);
    auto b = split(10, f, 1);
    CHECK(b.count(SplitLabel::kTrain) == 7);
    CHECK(b.count(SplitLabel::kVal) + b.count(SplitLabel::kTest) == 3);
    CHECK(b.count(SplitLabel::kVal) >= 1);
    CHECK(b.count(SplitLabel::kTest) >= 1);
    CHECK(split(57, f, 3).labels == split(57, f, 3).labels);
    CHECK(split(57, f, 3).labels != split(57, f, 4).labels);
    for (std::size_t n = 3; n < 400; ++n) {
      auto s = split(n, f, n);
      CHECK(std::abs(double(s.count(SplitLabel::kTrain)) - 0.70 * n) <= 1.0);
      CHECK(std::abs(double(s.count(SplitLabel::kVal)) - 0.15 * n) <= 1.0);
      CHECK(std::abs(double(s.count(SplitLabel::kTest)) - 0.15 * n) <= 1.0);
    }
    CHECK_THROWS_AS(split(2, f, 0), ValidationError);
    SplitFractions bad{0.5, 0.3, 0.3};
    CHECK_THROWS_AS(split(10, bad, 0), ValidationError);
  }

  TEST_CASE("split ignores targets and the scaler sees only training rows") {
    auto rows = synthetic_rows(2);
    auto base = prepare_splits(rows, {}, 5);
    auto shuffled = rows;
    std::mt19937_64 rng(1);
    for (auto& r : shuffled) r.target = double(rng() % 30);
    CHECK(prepare_splits(shuffled, {}, 5).assignment.labels == base.assignment.labels);

    auto perturbed = rows;
    for (std::size_t i : base.assignment.indices(SplitLabel::kVal)) {
      for (auto& x : perturbed[i].numeric) x = 1e6;
      perturbed[i].station_id = "never-seen";
    }
    for (std::size_t i : base.assignment.indices(SplitLabel::kTest)) perturbed[i].numeric[0] = -4e5;
    const nlohmann::json before = base.preprocessor;
    const nlohmann::json after = prepare_splits(perturbed, {}, 5).preprocessor;
    CHECK(before == after);
  }

  TEST_CASE("dummy-mean on a fixed split has zero spread") {
    auto rows = synthetic_rows(3);
    auto cfg = quick(ModelKind::kDummyMean, TrainMode::kCentralized);
    cfg.split_seed = 11;
    const std::vector<std::uint64_t> seeds{0, 1, 2, 3};
    auto report = multi_seed_run(rows, cfg, seeds);
    CHECK(report.n_seeds() == 4);
    CHECK(report.mae_std == 0.0);
    CHECK(report.rmse_std == 0.0);
    CHECK(report.split_policy != "re-split per seed");
  }

  TEST_CASE("summaries use population spread and median rounds") {
    std::vector<SeedSummary> s{{0, 1.0, 2.0, 3, 10}, {1, 3.0, 4.0, 5, 20},
                               {2, 2.0, 3.0, 4, std::nullopt}};
    auto r = summarize("mlp", "federated", s);
    CHECK(r.mae_mean == 2.0);
    CHECK(r.mae_std == doctest::Approx(std::sqrt(2.0 / 3.0)));
    CHECK(r.convergence_round_median == 15.0);
    auto back = run_report_from_json(to_json(r));
    CHECK(back.mae_mean == r.mae_mean);
    CHECK(back.per_seed.size() == 3);
    CHECK_FALSE(back.per_seed[2].convergence_round);
  }

  TEST_CASE("report emission is deterministic and consistent") {
    auto dir = test::scratch_dir("emit");
    std::vector<SeedSummary> s{{0, 1.25, 2.0, 3, 10}, {1, 3.5, 4.0, 5, 20}};
    const std::vector<RunReport> one{summarize("lr", "centralized", s)};
    emit_report(one, dir / "a");
    emit_report(one, dir / "b");
    const auto csv_text = test::slurp(dir / "a" / "results.csv");
    CHECK(csv_text == test::slurp(dir / "b" / "results.csv"));
    CHECK(test::slurp(dir / "a" / "results.json") == test::slurp(dir / "b" / "results.json"));
    std::istringstream lines(csv_text);
    std::string header, row, extra;
    std::getline(lines, header);
    std::getline(lines, row);
    CHECK(header == kResultsHeader);
    CHECK_FALSE(std::getline(lines, extra));
    auto cells = csv::split(row);
    auto j = nlohmann::json::parse(test::slurp(dir / "a" / "results.json"));
    double mean = 0;
    for (const auto& p : j.at(0).at("per_seed")) mean += p.at("test_mae").get<double>();
    mean /= 2;
    CHECK(*csv::parse_double(cells[2]) == mean);
  }

  TEST_CASE("saved predictions reproduce the reported metrics") {
    auto rows = synthetic_rows(4);
    auto cfg = quick(ModelKind::kMlp, TrainMode::kFederated);
    auto r = run_single_seed(rows, cfg, 2);
    auto dir = test::scratch_dir("predictions");
    write_predictions(dir / "predictions.csv", r.predictions);
    auto back = read_predictions(dir / "predictions.csv");
    REQUIRE(back.size() == r.predictions.size());
    std::vector<double> p, y;
    for (const auto& x : back) {
      p.push_back(x.y_pred);
      y.push_back(x.y_true);
      CHECK(x.y_pred >= 0.0);
    }
    CHECK(std::abs(oracle::brute_mae(p, y) - r.test_mae) <= 1e-12);
    CHECK(std::abs(oracle::brute_rmse(p, y) - r.test_rmse) <= 1e-12);
    CHECK(r.log.size() == 4);
    REQUIRE(r.best);
  }

  TEST_CASE("every model and mode runs") {
    auto rows = synthetic_rows(5);
    for (auto kind : {ModelKind::kDummyMean, ModelKind::kDummyGaussian, ModelKind::kLinear,
                      ModelKind::kMlp}) {
      for (auto mode : {TrainMode::kCentralized, TrainMode::kFederated}) {
        auto r = run_single_seed(rows, quick(kind, mode), 1);
        CHECK(std::isfinite(r.test_mae));
        CHECK(r.test_rmse >= r.test_mae - 1e-12);
        CHECK(r.best.has_value() == is_trainable(kind));
      }
    }
    CHECK(parse_train_mode("federated") == TrainMode::kFederated);
    CHECK_THROWS_AS(parse_train_mode("swarm"), ValidationError);
  }

  TEST_CASE("round log file layout") {
    RoundLog a;
    a.round = 1;
    a.clients = {"x", "y"};
    a.val_mae = 1.5;
    auto dir = test::scratch_dir("rounds");
    write_round_log(dir / "rounds.csv", std::vector<RoundLog>{a});
    std::istringstream lines(test::slurp(dir / "rounds.csv"));
    std::string header, row;
    std::getline(lines, header);
    std::getline(lines, row);
    CHECK(header == "round,val_mae,val_rmse,test_mae,test_rmse,clients");
    CHECK(row == "1,1.5,0,0,0,x;y");
  }
}
