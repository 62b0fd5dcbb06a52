// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "evfl/error.hpp"
#include "evfl/featurization.hpp"
#include "evfl/heterogeneity.hpp"
#include "evfl/ingestion.hpp"

using namespace evfl;

namespace {

const double kLn2 = std::numbers::ln2;

HistogramDensity density(std::vector<double> p) {
  HistogramDensity h;
  for (std::size_t k = 0; k <= p.size(); ++k) h.edges.push_back(static_cast<double>(k));
  h.probabilities = std::move(p);
  return h;
}

// Floor-based equal-width binning with the top edge folded into the last bin.
std::vector<double> oracle_hist(const std::vector<double>& y, double lo, double hi,
                                std::size_t bins) {
  std::vector<double> p(bins, 0.0);
  for (double v : y) {
    auto b = static_cast<std::size_t>(std::floor((v - lo) / (hi - lo) * bins));
    p[std::min(b, bins - 1)] += 1.0 / y.size();
  }
  return p;
}

double oracle_js(const std::vector<double>& p, const std::vector<double>& q) {
  double js = 0;
  for (std::size_t b = 0; b < p.size(); ++b) {
    const double m = 0.5 * (p[b] + q[b]);
    if (p[b] > 0) js += 0.5 * p[b] * std::log(p[b] / m);
    if (q[b] > 0) js += 0.5 * q[b] * std::log(q[b] / m);
  }
  return js;
}

}  // namespace

TEST_SUITE("heterogeneity") {
  TEST_CASE("histogram shapes") {
    const std::vector<double> same{4.2, 4.2, 4.2};
    auto edges = make_bin_edges(same, 10);
    CHECK(edges.size() == 11);
    CHECK(edges.front() < 4.2);
    CHECK(edges.back() > 4.2);
    auto h = fit_histogram(same, edges);
    CHECK(*std::max_element(h.probabilities.begin(), h.probabilities.end()) == 1.0);

    std::vector<double> grid;
    for (int k = 0; k < 100; ++k) grid.push_back(k + 0.5);
    auto g = fit_histogram(grid, make_bin_edges(grid, 10));
    for (double p : g.probabilities) CHECK(p == doctest::Approx(0.1));
    double total = 0;
    for (double p : g.probabilities) total += p;
    CHECK(std::abs(total - 1.0) < 1e-12);
  }

  TEST_CASE("kl and js closed forms") {
    CHECK(kl_divergence(density({1, 0}), density({0.5, 0.5})) == doctest::Approx(kLn2));
    CHECK(js_divergence(density({1, 0}), density({0, 1})) == doctest::Approx(kLn2));
    CHECK(js_divergence(density({0.2, 0.8}), density({0.2, 0.8})) == 0.0);
    CHECK_THROWS(kl_divergence(density({0.5, 0.5}), density({1, 0})));
  }

  TEST_CASE("weighted js") {
    CHECK(weighted_js(std::vector<std::size_t>{1, 3}, std::vector<double>{0.4, 0.0}) ==
          doctest::Approx(0.1));
    CHECK(weighted_js(std::vector<std::size_t>{5, 9, 2}, std::vector<double>{0.3, 0.3, 0.3}) ==
          doctest::Approx(0.3));
  }

  TEST_CASE("classification is strict") {
    CHECK(classify(0.0169, 0.0069) == Classification::kNonIid);
    CHECK(classify(0.0, 0.0069) == Classification::kIid);
    CHECK(classify(0.0069, 0.0069) == Classification::kIid);
    CHECK(to_string(Classification::kNonIid) == "non-IID");
  }

  TEST_CASE("per-client js matches an independent oracle and stays in range") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t k = 2 + rng() % 6;
      std::vector<std::size_t> sizes;
      std::vector<double> y;
      for (std::size_t c = 0; c < k; ++c) {
        sizes.push_back(1 + rng() % 40);
        std::normal_distribution<double> n(5.0 + static_cast<double>(c) * (trial % 3), 2.0);
        for (std::size_t i = 0; i < sizes.back(); ++i) y.push_back(n(rng));
      }
      const std::size_t bins = 5 + rng() % 40;
      const auto edges = make_bin_edges(y, bins);
      const auto js = per_client_js(y, sizes, edges);
      const double lo = *std::min_element(y.begin(), y.end());
      const double hi = *std::max_element(y.begin(), y.end());
      const auto global = oracle_hist(y, lo, hi, bins);
      std::size_t at = 0;
      double weighted = 0;
      for (std::size_t c = 0; c < k; ++c) {
        std::vector<double> part(y.begin() + at, y.begin() + at + sizes[c]);
        at += sizes[c];
        CHECK(js[c] == doctest::Approx(oracle_js(oracle_hist(part, lo, hi, bins), global)).epsilon(1e-9));
        CHECK(js[c] >= 0.0);
        CHECK(js[c] <= kLn2);
        weighted += static_cast<double>(sizes[c]) / y.size() * js[c];
      }
      CHECK(std::abs(weighted_js(sizes, js) - weighted) < 1e-12);
    }
  }

  TEST_CASE("permutation null") {
    const std::vector<double> flat(60, 3.0);
    const std::vector<std::size_t> sizes{20, 25, 15};
    auto zero = permutation_null(flat, sizes, 50, 1, 50);
    CHECK(zero.mu == 0.0);
    CHECK(zero.sigma == 0.0);
    CHECK(zero.tau == 0.0);

    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(9, 4);
    std::vector<double> y(60);
    for (auto& v : y) v = n(rng);
    auto a = permutation_null(y, sizes, 40, 5, 20);
    auto b = permutation_null(y, sizes, 40, 5, 20);
    CHECK(a.samples == b.samples);
    CHECK(a.tau == b.tau);
    REQUIRE(a.samples.size() == 40);
    double m = 0, v = 0;
    for (double s : a.samples) m += s;
    m /= 40;
    for (double s : a.samples) v += (s - m) * (s - m);
    CHECK(a.mu == doctest::Approx(m).epsilon(1e-12));
    CHECK(a.sigma == doctest::Approx(std::sqrt(v / 40)).epsilon(1e-12));
    CHECK(a.tau == doctest::Approx(a.mu + 2 * a.sigma).epsilon(1e-12));
    CHECK(permutation_null(y, sizes, 40, 6, 20).samples != a.samples);
  }

  TEST_CASE("report groups clients lexicographically") {
    const std::vector<double> y{1, 2, 3, 10, 11, 12, 1, 2};
    const std::vector<std::string> ids{"b", "b", "b", "a", "a", "a", "c", "c"};
    HeterogeneityConfig cfg;
    cfg.bins = 4;
    cfg.n_permutations = 30;
    auto r = analyze_heterogeneity(y, ids, cfg);
    CHECK(r.client_ids == std::vector<std::string>{"a", "b", "c"});
    CHECK(r.client_sizes == std::vector<std::size_t>{3, 3, 2});
    CHECK(r.js_max == *std::max_element(r.per_client_js.begin(), r.per_client_js.end()));
    CHECK(r.js_weighted == doctest::Approx(weighted_js(r.client_sizes, r.per_client_js)));
    auto j = to_json(r);
    CHECK(j.at("config").at("bins") == 4);
    CHECK(j.at("classification") == to_string(r.classification));
    cfg.bins = 0;
    CHECK_THROWS_AS(analyze_heterogeneity(y, ids, cfg), ValidationError);
  }

  TEST_CASE("engineered shift is flagged as non-IID") {
    DatasetConfig dc;
    auto targets = [&](const SyntheticDepotSpec& spec, std::vector<std::string>* ids) {
      auto depot = generate_synthetic(spec);
      std::vector<double> y;
      for (const auto& s : retain_sessions(depot.sessions, depot.series, dc).sessions) {
        y.push_back(*s.delivered_energy_kwh);
        if (ids) ids->push_back(s.station_id);
      }
      return y;
    };
    for (std::uint64_t seed : {1, 2, 3}) {
      SyntheticDepotSpec spec;
      spec.seed = seed;
      spec.min_sessions_per_station = 200;
      spec.max_sessions_per_station = 400;
      const auto base = targets(spec, nullptr);
      double m = 0, v = 0;
      for (double x : base) m += x;
      m /= base.size();
      for (double x : base) v += (x - m) * (x - m);
      spec.heterogeneity_shift_kwh = std::sqrt(v / base.size());
      std::vector<std::string> ids;
      const auto y = targets(spec, &ids);
      HeterogeneityConfig cfg;
      cfg.seed = seed;
      CHECK(analyze_heterogeneity(y, ids, cfg).classification == Classification::kNonIid);
    }
  }
}
