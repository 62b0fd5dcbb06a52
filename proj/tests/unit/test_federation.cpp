// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <numeric>
#include <set>
#include <type_traits>

#include "evfl/error.hpp"
#include "evfl/federation.hpp"
#include "evfl/metrics.hpp"
#include "oracles.hpp"

using namespace evfl;

namespace {

TabularData with_clients(TabularData t, const std::vector<std::string>& ids) {
  for (std::size_t i = 0; i < t.size(); ++i) t.client_ids[i] = ids[i % ids.size()];
  return t;
}

ModelParameters vec(std::vector<double> v) {
  ModelParameters p;
  p.layout.add("w", {v.size()});
  p.values = std::move(v);
  return p;
}

MlpSpec small_mlp(std::size_t dim, std::size_t stations) {
  MlpSpec s;
  s.numeric_input_dim = dim;
  s.embedding_cardinality = stations;
  s.embedding_dim = 3;
  s.hidden = {8, 6, 4};
  return s;
}

bool same_logs(const std::vector<RoundLog>& a, const std::vector<RoundLog>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].round != b[i].round || a[i].clients != b[i].clients ||
        a[i].val_mae != b[i].val_mae || a[i].val_rmse != b[i].val_rmse ||
        a[i].test_mae != b[i].test_mae || a[i].test_rmse != b[i].test_rmse) {
      return false;
    }
  }
  return true;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

// The server side sees parameter snapshots and sample counts only.
static_assert(std::is_same_v<decltype(&aggregate),
                             ModelParameters (*)(std::span<const ClientUpdate>)>);
static_assert(std::is_aggregate_v<ClientUpdate>);
static_assert(sizeof(ClientUpdate) == sizeof(ModelParameters) + sizeof(std::size_t));

TEST_SUITE("federation") {
  TEST_CASE("partition by station") {
    std::vector<std::string> ids;
    for (int i = 0; i < 5; ++i) ids.push_back("a");
    for (int i = 0; i < 3; ++i) ids.push_back("b");
    for (int i = 0; i < 2; ++i) ids.push_back("c");
    TabularData t = oracle::random_table(10, 2, 3, 1);
    t.client_ids = ids;
    auto p = partition_by_station(t);
    REQUIRE(p.size() == 3);
    CHECK(p.weights() == std::vector<double>{0.5, 0.3, 0.2});
    CHECK(p.total_samples() == 10);
    t.client_ids.assign(10, "only");
    CHECK(partition_by_station(t).weights() == std::vector<double>{1.0});
  }

  TEST_CASE("client sampling") {
    CHECK(clients_per_round(54, 0.2) == 11);
    CHECK(clients_per_round(20, 0.2) == 4);
    CHECK(clients_per_round(3, 0.01) == 1);
    ClientPartition p;
    for (int k = 0; k < 54; ++k) p.clients.push_back({"c" + std::to_string(k), {std::size_t(k)}});
    auto a = sample_clients(p, 0.2, 7, 1);
    CHECK(a.size() == 11);
    CHECK(std::set<std::size_t>(a.begin(), a.end()).size() == 11);
    CHECK(a == sample_clients(p, 0.2, 7, 1));
    CHECK(a != sample_clients(p, 0.2, 8, 1));
    auto all = sample_clients(p, 1.0, 3, 9);
    CHECK(all.size() == 54);
  }

  TEST_CASE("aggregation") {
    std::vector<ClientUpdate> u{{vec({1, 2}), 1}, {vec({3, 4}), 3}};
    auto g = aggregate(u);
    CHECK(g.values == std::vector<double>{2.5, 3.5});
    CHECK(g.layout == u[0].params.layout);
    std::vector<ClientUpdate> same{{vec({0.1, -7}), 4}, {vec({0.1, -7}), 9}};
    CHECK(aggregate(same).values == std::vector<double>{0.1, -7});
    std::vector<ClientUpdate> single{{vec({0.3, 0.7, 11}), 5}};
    CHECK(aggregate(single).values == single[0].params.values);
    std::vector<ClientUpdate> clash{{vec({1, 2}), 1}, {vec({1, 2, 3}), 1}};
    CHECK_THROWS_AS(aggregate(clash), ValidationError);
    CHECK_THROWS(aggregate(std::vector<ClientUpdate>{}));
  }

  TEST_CASE("local training edge cases") {
    auto data = oracle::random_table(10, 3, 2, 4);
    std::vector<std::size_t> rows(10);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    LinearModel m(3, 2);
    const auto start = m.get_params().values;
    AdamState opt(start.size(), AdamConfig{});
    CHECK(local_train(m, data, rows, 0, 4, opt, {}).values == start);

    AdamState partial(start.size(), AdamConfig{});
    local_train(m, data, rows, 3, 128, partial, {});
    CHECK(partial.step == 3);  // one partial batch per epoch
    AdamState split(start.size(), AdamConfig{});
    local_train(m, data, rows, 2, 4, split, {});
    CHECK(split.step == 6);  // batches of 4, 4, 2

    for (std::size_t i = 0; i < data.size(); ++i) data.targets[i] = m.predict(data.row(i), 0);
    const auto fitted = m.get_params().values;
    AdamState zero(start.size(), AdamConfig{});
    CHECK(local_train(m, data, rows, 5, 3, zero, {}).values == fitted);
  }

  TEST_CASE("zero rounds and zero epochs keep the initial parameters") {
    auto train = with_clients(oracle::random_table(30, 3, 3, 1), {"a", "b", "c"});
    auto val = oracle::random_table(6, 3, 3, 2), test = oracle::random_table(6, 3, 3, 3);
    LinearModel m(3, 7);
    FedConfig fc;
    fc.rounds = 0;
    auto fed = run_federated(m, train, val, test, fc);
    CHECK(fed.best.values == m.get_params().values);
    CHECK(fed.log.empty());
    CentralConfig cc;
    cc.epochs = 0;
    CHECK(run_centralized(m, train, val, test, cc).best.values == m.get_params().values);
  }

  TEST_CASE("zero gradients leave the global model fixed") {
    auto train = with_clients(oracle::random_table(30, 3, 3, 1), {"a", "b", "c"});
    LinearModel m(3, 7);
    for (std::size_t i = 0; i < train.size(); ++i) train.targets[i] = m.predict(train.row(i), 0);
    auto val = train, test = train;
    FedConfig fc;
    fc.rounds = 5;
    fc.client_fraction = 0.5;
    auto fed = run_federated(m, train, val, test, fc);
    CHECK(fed.last.values == m.get_params().values);
  }

  TEST_CASE("federated runs are deterministic and track the best round") {
    auto train = with_clients(oracle::random_table(60, 4, 3, 5), {"a", "b", "c", "d"});
    auto val = oracle::random_table(15, 4, 3, 6), test = oracle::random_table(15, 4, 3, 7);
    MlpModel m(small_mlp(4, 3), 3);
    FedConfig fc;
    fc.rounds = 12;
    fc.client_fraction = 0.5;
    fc.batch_size = 8;
    fc.lr = 0.01;
    fc.seed = 4;
    auto a = run_federated(m, train, val, test, fc);
    auto b = run_federated(m, train, val, test, fc);
    CHECK(same_logs(a.log, b.log));
    CHECK(a.best.values == b.best.values);
    REQUIRE(a.log.size() == 12);
    for (const auto& r : a.log) CHECK(r.clients.size() == 2);
    double best = 1e300;
    std::size_t best_round = 0;
    for (const auto& r : a.log) {
      if (r.val_mae < best) {
        best = r.val_mae;
        best_round = r.round;
      }
    }
    CHECK(a.best_round == best_round);
    CHECK(a.best_val_mae == best);
  }

  TEST_CASE("one client with full participation reproduces centralized training") {
    auto train = with_clients(oracle::random_table(50, 4, 1, 8), {"solo"});
    auto val = oracle::random_table(10, 4, 1, 9), test = oracle::random_table(10, 4, 1, 10);
    MlpModel m(small_mlp(4, 1), 11);

    FedConfig fc;
    fc.client_fraction = 1.0;
    fc.batch_size = 16;
    fc.seed = 12;
    CentralConfig cc;
    cc.batch_size = 16;
    cc.seed = 12;

    fc.rounds = 1;
    fc.local_epochs = 3;
    cc.epochs = 3;
    auto fed = run_federated(m, train, val, test, fc);
    auto cen = run_centralized(m, train, val, test, cc);
    CHECK(max_abs_diff(fed.last.values, cen.last.values) <= 1e-12);

    fc.rounds = 4;
    fc.local_epochs = 2;
    fc.persist_client_optimizer = true;
    cc.epochs = 8;
    fed = run_federated(m, train, val, test, fc);
    cen = run_centralized(m, train, val, test, cc);
    CHECK(max_abs_diff(fed.last.values, cen.last.values) <= 1e-12);
  }

  TEST_CASE("convergence detection") {
    std::vector<double> log{5.0, 4.0, 3.995, 3.99, 3.99, 3.99};
    CHECK(detect_convergence(log, 2, 0.01) == 2u);
    std::vector<double> improving;
    for (int i = 0; i < 40; ++i) improving.push_back(100 - i);
    CHECK_FALSE(detect_convergence(improving, 5, 0.01));
    std::vector<double> flat_tail;
    for (int i = 0; i < 10; ++i) flat_tail.push_back(100 - i);
    for (int i = 0; i < 30; ++i) flat_tail.push_back(91);
    CHECK(detect_convergence(flat_tail, 5, 0.01) == 10u);
    CHECK_FALSE(detect_convergence(std::vector<double>{3, 3}, 5, 0.01));
  }

  TEST_CASE("configuration validation") {
    FedConfig fc;
    fc.client_fraction = 1.5;
    CHECK_THROWS_WITH_AS(fc.validate(), doctest::Contains("client_fraction"), ValidationError);
    fc.client_fraction = 0.0;
    CHECK_THROWS_AS(fc.validate(), ValidationError);
    fc.client_fraction = 0.2;
    fc.rounds = 0;
    CHECK_THROWS_AS(fc.validate(), ValidationError);
    CHECK_NOTHROW(fc.validate(true));
  }
}

TEST_SUITE("metrics") {
  TEST_CASE("worked example and identities") {
    CHECK(mae(std::vector<double>{1, 2}, std::vector<double>{1, 4}) == 1.0);
    CHECK(rmse(std::vector<double>{1, 2}, std::vector<double>{1, 4}) == doctest::Approx(std::sqrt(2.0)));
    CHECK(mae(std::vector<double>{3, 4}, std::vector<double>{3, 4}) == 0.0);
    CHECK(rmse(std::vector<double>{3, 4}, std::vector<double>{3, 4}) == 0.0);
    CHECK(mae(std::vector<double>{1.5, 2.5}, std::vector<double>{0, 1}) == 1.5);
    CHECK(rmse(std::vector<double>{1.5, 2.5}, std::vector<double>{0, 1}) == 1.5);
    CHECK_THROWS(mae(std::vector<double>{}, std::vector<double>{}));
    CHECK_THROWS(rmse(std::vector<double>{1}, std::vector<double>{1, 2}));
  }

  TEST_CASE("rmse dominates mae and both match brute force") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> n(0, 5);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> p(1 + rng() % 50), y(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = n(rng);
        y[i] = n(rng);
      }
      const double a = mae(p, y), r = rmse(p, y);
      CHECK(r >= a - 1e-12);
      CHECK(std::abs(a - oracle::brute_mae(p, y)) < 1e-12);
      CHECK(std::abs(r - oracle::brute_rmse(p, y)) < 1e-12);
    }
  }
}
