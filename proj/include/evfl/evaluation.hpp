// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "evfl/featurization.hpp"
#include "evfl/federation.hpp"
#include "evfl/metrics.hpp"
#include "evfl/models.hpp"

namespace evfl {

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;

  void validate() const;
};

enum class SplitLabel { kTrain, kVal, kTest };

struct SplitAssignment {
  std::vector<SplitLabel> labels;
  SplitFractions fractions;
  std::uint64_t seed = 0;

  std::vector<std::size_t> indices(SplitLabel label) const;
  std::size_t count(SplitLabel label) const;
};

/// Seeded shuffle of 0..n-1 cut into contiguous train/val/test slices.
/// Boundaries are round(f_train n) and round((f_train + f_val) n), so each
/// split size is within one sample of its target. Uses nothing but n.
SplitAssignment split(std::size_t n, const SplitFractions& fractions,
                      std::uint64_t seed);

enum class TrainMode { kCentralized, kFederated };
std::string to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view name);

struct ExperimentConfig {
  ModelKind model = ModelKind::kMlp;
  TrainMode mode = TrainMode::kCentralized;
  SplitFractions fractions;
  std::optional<std::uint64_t> split_seed;  // default: the run seed
  FedConfig federation;  // seed is replaced by the run seed
  std::size_t epochs = 40;
  std::size_t embedding_dim = 16;
  std::vector<std::size_t> hidden{128, 128, 64};
  double dropout_rate = 0.2;

  void validate() const;
};

struct Prediction {
  std::string session_id;
  double y_true = 0.0;
  double y_pred = 0.0;
};

struct PreparedSplits {
  SplitAssignment assignment;
  Preprocessor preprocessor;
  TabularData train;
  TabularData val;
  TabularData test;
};

/// Splits raw feature rows, fits the preprocessor on the training rows
/// only and transforms all three splits.
PreparedSplits prepare_splits(std::span<const FeatureVector> rows,
                              const SplitFractions& fractions,
                              std::uint64_t seed);

/// Builds the (untrained) model for `cfg.model`, seeded with `seed`.
std::unique_ptr<Model> make_model(const ExperimentConfig& cfg,
                                  std::size_t input_dim,
                                  std::size_t n_stations, std::uint64_t seed);

struct SeedResult {
  std::uint64_t seed = 0;
  double test_mae = 0.0;
  double test_rmse = 0.0;
  double val_mae = 0.0;
  std::size_t best_round = 0;
  std::optional<std::size_t> convergence_round;
  std::vector<RoundLog> log;
  std::vector<Prediction> predictions;  // test split, best checkpoint
  std::optional<ModelParameters> best;  // trainable models only
  std::string architecture;
  std::uint64_t architecture_hash = 0;
  Preprocessor preprocessor;
};

/// Full pipeline for one seed: split, preprocess, train (or fit a dummy
/// in closed form), evaluate the best checkpoint on test.
SeedResult run_single_seed(std::span<const FeatureVector> rows,
                           const ExperimentConfig& cfg, std::uint64_t seed);

struct SeedSummary {
  std::uint64_t seed = 0;
  double test_mae = 0.0;
  double test_rmse = 0.0;
  std::size_t best_round = 0;
  std::optional<std::size_t> convergence_round;
};

struct RunReport {
  std::string model;
  std::string mode;
  std::vector<SeedSummary> per_seed;
  double mae_mean = 0.0;
  double mae_std = 0.0;  // population
  double rmse_mean = 0.0;
  double rmse_std = 0.0;
  std::optional<double> convergence_round_median;
  std::string split_policy;

  std::size_t n_seeds() const { return per_seed.size(); }
};

/// Aggregates per-seed results (mean and population std).
RunReport summarize(std::string model, std::string mode,
                    std::vector<SeedSummary> per_seed,
                    std::string split_policy = "re-split per seed");

inline std::vector<std::uint64_t> default_seeds() {
  return {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
}

/// Runs every seed; a failing seed aborts with its id in the message.
/// `on_seed` (optional) observes each full result before it is reduced.
RunReport multi_seed_run(
    std::span<const FeatureVector> rows, const ExperimentConfig& cfg,
    std::span<const std::uint64_t> seeds,
    const std::function<void(const SeedResult&)>& on_seed = {});

nlohmann::json to_json(const RunReport& report);
RunReport run_report_from_json(const nlohmann::json& j);

inline constexpr std::string_view kResultsHeader =
    "model,mode,mae_mean,mae_std,rmse_mean,rmse_std,n_seeds,"
    "convergence_round_median";

/// Writes results.csv and results.json into `dir`.
void emit_report(std::span<const RunReport> reports,
                 const std::filesystem::path& dir);

void write_predictions(const std::filesystem::path& path,
                       std::span<const Prediction> predictions);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

/// rounds.csv: round,val_mae,val_rmse,test_mae,test_rmse,clients
void write_round_log(const std::filesystem::path& path,
                     std::span<const RoundLog> log);

}  // namespace evfl
