// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "evfl/error.hpp"
#include "evfl/models.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace evfl;

namespace {

MlpSpec micro_spec(std::size_t dim = 3, double dropout = 0.2) {
  MlpSpec s;
  s.numeric_input_dim = dim;
  s.embedding_cardinality = 4;
  s.embedding_dim = 2;
  s.hidden = {5, 4, 3};
  s.dropout_rate = dropout;
  return s;
}

std::vector<std::size_t> all_rows(const TabularData& t) {
  std::vector<std::size_t> rows(t.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("model kinds parse and print") {
    for (auto k : {ModelKind::kDummyMean, ModelKind::kDummyGaussian, ModelKind::kLinear,
                   ModelKind::kMlp}) {
      CHECK(parse_model_kind(to_string(k)) == k);
    }
    CHECK_THROWS_AS(parse_model_kind("xgb"), ValidationError);
    CHECK(is_trainable(ModelKind::kMlp));
    CHECK_FALSE(is_trainable(ModelKind::kDummyMean));
  }

  TEST_CASE("dummy mean") {
    CHECK(DummyMean::fit(std::vector<double>{8, 10}).predict() == 9.0);
    CHECK_THROWS(DummyMean::fit(std::vector<double>{}));
  }

  TEST_CASE("dummy gaussian") {
    auto d = DummyGaussian::fit(std::vector<double>{2, 4, 6, 8});
    CHECK(d.mu == 5.0);
    CHECK(d.sigma == doctest::Approx(std::sqrt(5.0)));
    CHECK(d.predict(50, 3) == d.predict(50, 3));
    CHECK(d.predict(50, 3) != d.predict(50, 4));
    const std::size_t n = 10000;
    auto draws = d.predict(n, 1);
    const double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / n;
    CHECK(std::abs(mean - d.mu) < 4 * d.sigma / std::sqrt(double(n)));

    auto flat = DummyGaussian::fit(std::vector<double>{3, 3, 3});
    for (double v : flat.predict(20, 9)) CHECK(v == 3.0);
  }

  TEST_CASE("linear model forward and gradient") {
    LinearModel m(3, 1);
    auto p = m.get_params();
    std::fill(p.values.begin(), p.values.end(), 0.0);
    p.segment("bias")[0] = 2.5;
    m.set_params(p);
    CHECK(m.predict(std::vector<double>{1, -4, 9}, 0) == 2.5);

    p.segment("bias")[0] = 0.0;
    m.set_params(p);
    TabularData one;
    one.push_back(std::vector<double>{0.3, 0.1, -2}, 0, 7.0);
    std::vector<double> grad;
    Rng rng(0);
    const std::vector<std::size_t> rows{0};
    CHECK(m.loss_gradient(one, rows, true, rng, grad) == 49.0);
    CHECK(grad[p.layout.segment("bias").offset] == -14.0);
  }

  TEST_CASE("gradients match central differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto data = oracle::random_table(6, 3, 4, seed);
      const auto rows = all_rows(data);
      LinearModel lr(3, seed);
      CHECK(oracle::gradient_relative_error(lr, data, rows) < 1e-4);
      MlpModel mlp(micro_spec(), seed);
      CHECK(oracle::gradient_relative_error(mlp, data, rows) < 1e-4);
    }
  }

  TEST_CASE("mlp forward agrees with a naive evaluation") {
    const auto spec = micro_spec();
    MlpModel m(spec, 5);
    auto data = oracle::random_table(20, 3, 6, 5);  // stations 4 and 5 are unknown
    for (std::size_t i = 0; i < data.size(); ++i) {
      CHECK(m.predict(data.row(i), data.stations[i]) ==
            doctest::Approx(oracle::mlp_eval(spec, m.get_params(), data.row(i), data.stations[i]))
                .epsilon(1e-12));
    }
  }

  TEST_CASE("mlp output is nonnegative and dropout-free training is eval") {
    MlpModel m(micro_spec(3, 0.0), 2);
    auto data = oracle::random_table(200, 3, 4, 2);
    for (auto& v : data.features) v *= 50;
    Rng rng(1);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double e = mlp_forward(m.spec(), m.get_params(), data.row(i), data.stations[i],
                                   Mode::kEval, nullptr);
      const double t = mlp_forward(m.spec(), m.get_params(), data.row(i), data.stations[i],
                                   Mode::kTrain, &rng);
      CHECK(e >= 0.0);
      CHECK(e == t);
    }
    CHECK(softplus(-800.0) >= 0.0);
    CHECK(softplus(800.0) == 800.0);
  }

  TEST_CASE("zero residual gives zero gradient") {
    MlpModel m(micro_spec(), 3);
    auto data = oracle::random_table(8, 3, 4, 3);
    for (std::size_t i = 0; i < data.size(); ++i) {
      data.targets[i] = m.predict(data.row(i), data.stations[i]);
    }
    std::vector<double> grad;
    Rng rng(0);
    CHECK(m.loss_gradient(data, all_rows(data), false, rng, grad) == 0.0);
    for (double g : grad) CHECK(g == 0.0);
  }

  TEST_CASE("seeded initialization") {
    const auto spec = micro_spec();
    CHECK(MlpModel(spec, 9).get_params().values == MlpModel(spec, 9).get_params().values);
    CHECK(MlpModel(spec, 9).get_params().values != MlpModel(spec, 10).get_params().values);
    MlpModel m(spec, 9);
    const double bound = std::sqrt(1.0 / 5.0);  // dense0 fan-in: 2 + 3
    for (double w : m.get_params().segment("dense0.weight")) CHECK(std::abs(w) <= bound);
  }

  TEST_CASE("small plain gradient step lowers the training loss") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto data = oracle::random_table(16, 3, 4, seed + 100);
      const auto rows = all_rows(data);
      for (int kind = 0; kind < 2; ++kind) {
        std::unique_ptr<Model> m;
        if (kind == 0) m = std::make_unique<LinearModel>(3, seed);
        else m = std::make_unique<MlpModel>(micro_spec(), seed);
        std::vector<double> grad;
        Rng rng(0);
        const double before = m->loss_gradient(data, rows, false, rng, grad);
        auto v = m->mutable_values();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= 1e-4 * grad[i];
        CHECK(m->loss_gradient(data, rows, false, rng, grad) < before);
      }
    }
  }

  TEST_CASE("adam") {
    AdamConfig cfg;
    std::vector<double> w{1.0, -2.0, 0.5};
    AdamState st(3, cfg);
    adam_step(w, std::vector<double>{0, 0, 0}, st);
    CHECK(w == std::vector<double>{1.0, -2.0, 0.5});

    AdamState fresh(3, cfg);
    std::vector<double> x{0, 0, 0};
    adam_step(x, std::vector<double>{3.0, -0.02, 1e4}, fresh);
    CHECK(x[0] == doctest::Approx(-cfg.lr).epsilon(1e-6));
    CHECK(x[1] == doctest::Approx(cfg.lr).epsilon(1e-5));
    CHECK(x[2] == doctest::Approx(-cfg.lr).epsilon(1e-6));

    AdamConfig fast;
    fast.lr = 0.05;
    AdamState q(1, fast);
    std::vector<double> y{0.0};
    for (int i = 0; i < 2000; ++i) adam_step(y, std::vector<double>{2 * (y[0] - 3)}, q);
    CHECK(y[0] == doctest::Approx(3.0).epsilon(1e-3));
  }

  TEST_CASE("parameters round-trip through bytes and checkpoints") {
    MlpModel m(micro_spec(), 4);
    const auto& p = m.get_params();
    const auto bytes = serialize_parameters(p, m.architecture_hash());
    CHECK(bytes.size() == kCheckpointHeaderBytes + 8 * p.layout.size());
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "EVFLCKPT");
    const auto back = deserialize_parameters(bytes, p.layout, m.architecture_hash());
    CHECK(back.values == p.values);
    CHECK_THROWS_AS(deserialize_parameters(bytes, p.layout, m.architecture_hash() + 1),
                    ValidationError);
    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(deserialize_parameters(truncated, p.layout, m.architecture_hash()),
                    ValidationError);

    auto dir = test::scratch_dir("checkpoint");
    save_checkpoint(dir / "m.bin", m);
    MlpModel other(micro_spec(), 99);
    load_checkpoint(dir / "m.bin", other);
    auto data = oracle::random_table(10, 3, 4, 1);
    CHECK(predict_all(other, data) == predict_all(m, data));
    LinearModel lr(3, 0);
    CHECK_THROWS_AS(load_checkpoint(dir / "m.bin", lr), ValidationError);
    CHECK_THROWS_AS(lr.set_params(m.get_params()), ValidationError);
  }

  TEST_CASE("get then set leaves predictions bitwise unchanged") {
    MlpModel m(micro_spec(), 6);
    auto data = oracle::random_table(12, 3, 4, 6);
    const auto before = predict_all(m, data);
    m.set_params(m.get_params());
    CHECK(predict_all(m, data) == before);
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  }
}
