// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evfl/models.hpp"
#include "evfl/tabular.hpp"

namespace evfl {

/// One station-level client: its id and the training rows it holds.
struct Client {
  std::string id;
  std::vector<std::size_t> indices;
};

struct ClientPartition {
  std::vector<Client> clients;  // lexicographic by id

  std::size_t size() const { return clients.size(); }
  std::size_t total_samples() const;
  std::vector<std::size_t> sizes() const;
  /// n_k / sum_j n_j.
  std::vector<double> weights() const;
};

/// One client per distinct `client_ids` value of the training split.
ClientPartition partition_by_station(const TabularData& train);

struct FedConfig {
  std::size_t rounds = 400;
  std::size_t local_epochs = 3;
  double client_fraction = 0.2;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::size_t convergence_patience = 30;
  double convergence_min_delta = 0.01;  // kWh of validation MAE
  bool local_dropout = true;
  /// Keep each client's Adam moments between the rounds it joins instead
  /// of starting every round from fresh optimizer state.
  bool persist_client_optimizer = false;

  /// Zero rounds is allowed only for programmatic runs (returns the
  /// initial parameters).
  void validate(bool allow_zero_rounds = false) const;
};

/// max(1, round(fraction * K)).
std::size_t clients_per_round(std::size_t n_clients, double fraction);

/// Uniform sample without replacement, sorted ascending. Deterministic in
/// (seed, round).
std::vector<std::size_t> sample_clients(const ClientPartition& partition,
                                        double fraction, std::size_t round,
                                        std::uint64_t seed);

/// What a client sends back to the server: parameters and a sample count.
struct ClientUpdate {
  ModelParameters params;
  std::size_t n_samples = 0;
};

/// Sample-count weighted mean of the updates, summed in the given order.
ModelParameters aggregate(std::span<const ClientUpdate> updates);

/// Identifies the shuffle/dropout stream of one local epoch.
struct EpochStream {
  std::uint64_t seed = 0;
  std::uint64_t client = 0;
  std::uint64_t first_epoch = 0;  // epochs this client has already run
};

/// Runs `epochs` passes of mini-batch Adam over `rows` (reshuffled each
/// epoch) starting from the model's current parameters, and returns the
/// resulting snapshot.
ModelParameters local_train(Model& model, const TabularData& data,
                            std::span<const std::size_t> rows,
                            std::size_t epochs, std::size_t batch_size,
                            AdamState& optimizer, const EpochStream& stream,
                            bool dropout = true);

struct RoundLog {
  std::size_t round = 0;  // 1-based; epochs for centralized runs
  std::vector<std::string> clients;
  double val_mae = 0.0;
  double val_rmse = 0.0;
  double test_mae = 0.0;
  double test_rmse = 0.0;
  double wall_seconds = 0.0;
};

struct TrainingResult {
  ModelParameters initial;
  ModelParameters best;   // lowest validation MAE over the log
  ModelParameters last;  // after the final round or epoch
  std::size_t best_round = 0;  // 0: nothing logged, `best` is `initial`
  double best_val_mae = 0.0;
  std::vector<RoundLog> log;
  std::optional<std::size_t> convergence_round;
};

/// FedAvg over station clients. The returned best checkpoint is the
/// global model with the lowest validation MAE.
TrainingResult run_federated(const Model& initial, const TabularData& train,
                             const TabularData& val, const TabularData& test,
                             const FedConfig& cfg);

struct CentralConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::size_t convergence_patience = 30;
  double convergence_min_delta = 0.01;
  bool dropout = true;

  void validate() const;
};

/// Pooled mini-batch Adam with per-epoch evaluation.
TrainingResult run_centralized(const Model& initial, const TabularData& train,
                               const TabularData& val, const TabularData& test,
                               const CentralConfig& cfg);

/// Earliest 1-based round r whose following `patience` rounds all exist
/// and none improves on round r's value by more than `min_delta`.
std::optional<std::size_t> detect_convergence(std::span<const double> val_mae,
                                              std::size_t patience,
                                              double min_delta);

}  // namespace evfl
