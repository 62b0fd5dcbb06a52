// SPDX-License-Identifier: Apache-2.0
#include "evfl/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "evfl/error.hpp"
#include "evfl/metrics.hpp"
#include "evfl/random.hpp"

namespace evfl {
namespace {

struct Evaluation {
  double mae = 0.0;
  double rmse = 0.0;
};

Evaluation evaluate(const Model& model, const TabularData& data) {
  const auto preds = predict_all(model, data);
  return {mae(preds, data.targets), rmse(preds, data.targets)};
}

void require_splits(const TabularData& train, const TabularData& val,
                    const TabularData& test) {
  if (train.empty()) throw ValidationError("empty training split");
  if (val.empty()) throw ValidationError("empty validation split");
  if (test.empty()) throw ValidationError("empty test split");
}

// Evaluates the current model, appends to the log and tracks the best
// validation checkpoint.
void record(const Model& model, const TabularData& val,
            const TabularData& test, std::size_t round,
            std::vector<std::string> clients, double seconds,
            TrainingResult& result) {
  const auto v = evaluate(model, val);
  const auto t = evaluate(model, test);
  result.log.push_back(
      {round, std::move(clients), v.mae, v.rmse, t.mae, t.rmse, seconds});
  if (result.best_round == 0 || v.mae < result.best_val_mae) {
    result.best_round = round;
    result.best_val_mae = v.mae;
    result.best = model.get_params();
  }
}

void finish(TrainingResult& result, std::size_t patience, double min_delta) {
  std::vector<double> val;
  val.reserve(result.log.size());
  for (const auto& r : result.log) val.push_back(r.val_mae);
  if (!val.empty()) {
    result.convergence_round = detect_convergence(val, patience, min_delta);
  }
}

}  // namespace

std::size_t ClientPartition::total_samples() const {
  std::size_t n = 0;
  for (const auto& c : clients) n += c.indices.size();
  return n;
}

std::vector<std::size_t> ClientPartition::sizes() const {
  std::vector<std::size_t> out;
  out.reserve(clients.size());
  for (const auto& c : clients) out.push_back(c.indices.size());
  return out;
}

std::vector<double> ClientPartition::weights() const {
  const double total = static_cast<double>(total_samples());
  std::vector<double> out;
  out.reserve(clients.size());
  for (const auto& c : clients) {
    out.push_back(static_cast<double>(c.indices.size()) / total);
  }
  return out;
}

ClientPartition partition_by_station(const TabularData& train) {
  if (train.empty()) throw ValidationError("cannot partition an empty training split");
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < train.size(); ++i) {
    groups[train.client_ids[i]].push_back(i);
  }
  ClientPartition p;
  for (auto& [id, idx] : groups) p.clients.push_back({id, std::move(idx)});
  return p;
}

void FedConfig::validate(bool allow_zero_rounds) const {
  if (rounds < 1 && !allow_zero_rounds) throw ValidationError("federation.rounds must be >= 1");
  if (!(client_fraction > 0.0 && client_fraction <= 1.0)) {
    throw ValidationError("federation.client_fraction must be in (0, 1], got " +
                          std::to_string(client_fraction));
  }
  if (batch_size == 0) throw ValidationError("federation.batch_size must be > 0");
  if (!(lr > 0.0)) throw ValidationError("federation.lr must be > 0");
  if (!(convergence_min_delta >= 0.0)) {
    throw ValidationError("federation.convergence_min_delta must be >= 0");
  }
}

void CentralConfig::validate() const {
  if (batch_size == 0) throw ValidationError("training.batch_size must be > 0");
  if (!(lr > 0.0)) throw ValidationError("training.lr must be > 0");
  if (!(convergence_min_delta >= 0.0)) {
    throw ValidationError("training.convergence_min_delta must be >= 0");
  }
}

std::size_t clients_per_round(std::size_t n_clients, double fraction) {
  const auto k = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(n_clients)));
  return std::clamp<std::size_t>(k, 1, n_clients);
}

std::vector<std::size_t> sample_clients(const ClientPartition& partition,
                                        double fraction, std::size_t round,
                                        std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ValidationError("client_fraction must be in (0, 1]");
  }
  const std::size_t n = partition.size();
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  const std::size_t k = clients_per_round(n, fraction);
  if (k == n) return ids;
  Rng rng = make_rng(seed, {stream::kSampling, round});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

ModelParameters aggregate(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw ValidationError("aggregate: no updates");
  const auto& layout = updates.front().params.layout;
  double total = 0.0;
  for (const auto& u : updates) {
    if (!(u.params.layout == layout) ||
        u.params.values.size() != layout.size()) {
      throw ValidationError("aggregate: layout mismatch");
    }
    total += static_cast<double>(u.n_samples);
  }
  if (total == 0.0) throw ValidationError("aggregate: zero total samples");
  ModelParameters out{layout, std::vector<double>(layout.size(), 0.0)};
  for (const auto& u : updates) {
    const double w = static_cast<double>(u.n_samples) / total;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
      out.values[i] += w * u.params.values[i];
    }
  }
  return out;
}

ModelParameters local_train(Model& model, const TabularData& data,
                            std::span<const std::size_t> rows,
                            std::size_t epochs, std::size_t batch_size,
                            AdamState& optimizer, const EpochStream& stream,
                            bool dropout) {
  if (batch_size == 0) throw ValidationError("batch_size must be > 0");
  std::vector<std::size_t> order(rows.begin(), rows.end());
  std::vector<double> grad;
  for (std::size_t e = 0; e < epochs && !order.empty(); ++e) {
    Rng rng = make_rng(stream.seed,
                       {stream::kEpoch, stream.client, stream.first_epoch + e});
    order.assign(rows.begin(), rows.end());
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t len = std::min(batch_size, order.size() - start);
      const std::span<const std::size_t> batch(order.data() + start, len);
      model.loss_gradient(data, batch, dropout, rng, grad);
      adam_step(model.mutable_values(), grad, optimizer);
    }
  }
  return model.get_params();
}

TrainingResult run_federated(const Model& initial, const TabularData& train,
                             const TabularData& val, const TabularData& test,
                             const FedConfig& cfg) {
  cfg.validate(/*allow_zero_rounds=*/true);
  require_splits(train, val, test);
  const ClientPartition partition = partition_by_station(train);

  // Each client holds only its own rows.
  std::vector<TabularData> local_data;
  local_data.reserve(partition.size());
  for (const auto& c : partition.clients) local_data.push_back(train.subset(c.indices));

  TrainingResult result;
  result.initial = initial.get_params();
  result.best = result.initial;
  result.last = result.initial;

  const std::size_t n_params = result.initial.values.size();
  const AdamConfig adam{cfg.lr};
  std::vector<std::optional<AdamState>> client_optimizers(partition.size());
  std::vector<std::uint64_t> client_epochs(partition.size(), 0);

  auto global_model = initial.clone();
  auto worker = initial.clone();
  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    const auto started = std::chrono::steady_clock::now();
    const auto sampled = sample_clients(partition, cfg.client_fraction, round, cfg.seed);

    std::vector<ClientUpdate> updates;
    std::vector<std::string> ids;
    updates.reserve(sampled.size());
    for (std::size_t k : sampled) {
      worker->set_params(result.last);
      AdamState fresh(n_params, adam);
      AdamState& opt = cfg.persist_client_optimizer
                           ? (client_optimizers[k] ? *client_optimizers[k]
                                                   : client_optimizers[k].emplace(fresh))
                           : fresh;
      std::vector<std::size_t> rows(local_data[k].size());
      std::iota(rows.begin(), rows.end(), std::size_t{0});
      auto params = local_train(*worker, local_data[k], rows, cfg.local_epochs,
                                cfg.batch_size, opt,
                                {cfg.seed, k, client_epochs[k]}, cfg.local_dropout);
      client_epochs[k] += cfg.local_epochs;
      updates.push_back({std::move(params), local_data[k].size()});
      ids.push_back(partition.clients[k].id);
    }

    result.last = aggregate(updates);
    global_model->set_params(result.last);
    const std::chrono::duration<double> elapsed =
        std::chrono::steady_clock::now() - started;
    record(*global_model, val, test, round, std::move(ids), elapsed.count(), result);
  }
  finish(result, cfg.convergence_patience, cfg.convergence_min_delta);
  return result;
}

TrainingResult run_centralized(const Model& initial, const TabularData& train,
                               const TabularData& val, const TabularData& test,
                               const CentralConfig& cfg) {
  cfg.validate();
  require_splits(train, val, test);
  TrainingResult result;
  result.initial = initial.get_params();
  result.best = result.initial;
  result.last = result.initial;

  auto model = initial.clone();
  AdamState opt(result.initial.values.size(), AdamConfig{cfg.lr});
  std::vector<std::size_t> rows(train.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    result.last = local_train(*model, train, rows, 1, cfg.batch_size, opt,
                              {cfg.seed, 0, epoch - 1}, cfg.dropout);
    const std::chrono::duration<double> elapsed =
        std::chrono::steady_clock::now() - started;
    record(*model, val, test, epoch, {}, elapsed.count(), result);
  }
  finish(result, cfg.convergence_patience, cfg.convergence_min_delta);
  return result;
}

std::optional<std::size_t> detect_convergence(std::span<const double> val_mae,
                                              std::size_t patience,
                                              double min_delta) {
  // Tolerance so that an improvement of exactly min_delta, blurred by
  // rounding, does not count as exceeding it.
  const double threshold = min_delta + 1e-12;
  for (std::size_t r = 0; r + patience < val_mae.size(); ++r) {
    bool improved = false;
    for (std::size_t s = r + 1; s <= r + patience; ++s) {
      if (val_mae[r] - val_mae[s] > threshold) {
        improved = true;
        break;
      }
    }
    if (!improved) return r + 1;
  }
  return std::nullopt;
}

}  // namespace evfl
