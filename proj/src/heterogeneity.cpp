// SPDX-License-Identifier: Apache-2.0
#include "evfl/heterogeneity.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "evfl/error.hpp"
#include "evfl/random.hpp"

namespace evfl {
namespace {

void require_same_edges(const HistogramDensity& a, const HistogramDensity& b) {
  if (a.edges != b.edges || a.probabilities.size() != b.probabilities.size()) {
    throw ValidationError("histograms do not share bin edges");
  }
}

std::size_t bin_of(double v, const std::vector<double>& edges) {
  const std::size_t bins = edges.size() - 1;
  if (v < edges.front() || v > edges.back() || std::isnan(v)) {
    throw ValidationError("value outside the global histogram range");
  }
  auto it = std::upper_bound(edges.begin(), edges.end(), v);
  const auto idx = static_cast<std::size_t>(it - edges.begin());
  return std::min(idx == 0 ? 0 : idx - 1, bins - 1);
}

}  // namespace

std::vector<double> make_bin_edges(std::span<const double> targets,
                                   std::size_t bins) {
  if (targets.empty()) throw ValidationError("no targets to bin");
  if (bins == 0) throw ValidationError("heterogeneity.bins must be > 0");
  auto [lo_it, hi_it] = std::minmax_element(targets.begin(), targets.end());
  double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  std::vector<double> edges(bins + 1);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) {
    edges[b] = lo + width * static_cast<double>(b);
  }
  edges.back() = hi;
  return edges;
}

HistogramDensity fit_histogram(std::span<const double> targets,
                               const std::vector<double>& edges) {
  if (targets.empty()) throw ValidationError("histogram of empty target list");
  if (edges.size() < 2) throw ValidationError("histogram needs >= 2 edges");
  HistogramDensity h;
  h.edges = edges;
  h.probabilities.assign(edges.size() - 1, 0.0);
  for (double v : targets) h.probabilities[bin_of(v, edges)] += 1.0;
  const double n = static_cast<double>(targets.size());
  for (double& p : h.probabilities) p /= n;
  return h;
}

double kl_divergence(const HistogramDensity& p, const HistogramDensity& q) {
  require_same_edges(p, q);
  double kl = 0.0;
  for (std::size_t b = 0; b < p.probabilities.size(); ++b) {
    const double pb = p.probabilities[b];
    if (pb <= 0.0) continue;
    const double qb = q.probabilities[b];
    if (qb <= 0.0) {
      throw ValidationError("KL divergence undefined: q_b = 0 where p_b > 0");
    }
    kl += pb * std::log(pb / qb);
  }
  return std::max(kl, 0.0);
}

double js_divergence(const HistogramDensity& client,
                     const HistogramDensity& global) {
  require_same_edges(client, global);
  HistogramDensity mix;
  mix.edges = client.edges;
  mix.probabilities.resize(client.probabilities.size());
  for (std::size_t b = 0; b < mix.probabilities.size(); ++b) {
    mix.probabilities[b] =
        0.5 * (client.probabilities[b] + global.probabilities[b]);
  }
  const double js =
      0.5 * kl_divergence(client, mix) + 0.5 * kl_divergence(global, mix);
  return std::clamp(js, 0.0, std::numbers::ln2);
}

double weighted_js(std::span<const std::size_t> client_sizes,
                   std::span<const double> per_client) {
  if (client_sizes.empty()) throw ValidationError("empty client partition");
  if (client_sizes.size() != per_client.size()) {
    throw ValidationError("weighted_js: size mismatch");
  }
  const double total = static_cast<double>(
      std::accumulate(client_sizes.begin(), client_sizes.end(), std::size_t{0}));
  if (total == 0.0) throw ValidationError("weighted_js: no samples");
  double acc = 0.0;
  for (std::size_t k = 0; k < client_sizes.size(); ++k) {
    acc += static_cast<double>(client_sizes[k]) / total * per_client[k];
  }
  return acc;
}

std::vector<double> per_client_js(std::span<const double> targets,
                                  std::span<const std::size_t> client_sizes,
                                  const std::vector<double>& edges) {
  const auto global = fit_histogram(targets, edges);
  std::vector<double> out;
  out.reserve(client_sizes.size());
  std::size_t offset = 0;
  for (std::size_t n : client_sizes) {
    if (n == 0) throw ValidationError("client with zero samples");
    out.push_back(js_divergence(
        fit_histogram(targets.subspan(offset, n), edges), global));
    offset += n;
  }
  return out;
}

NullDistribution permutation_null(std::span<const double> targets,
                                  std::span<const std::size_t> client_sizes,
                                  std::size_t n_permutations,
                                  std::uint64_t seed, std::size_t bins) {
  const std::size_t total =
      std::accumulate(client_sizes.begin(), client_sizes.end(), std::size_t{0});
  if (total != targets.size()) {
    throw ValidationError("client sizes do not sum to the number of targets");
  }
  if (n_permutations < 2) {
    throw ValidationError("heterogeneity.n_permutations must be >= 2");
  }
  const auto edges = make_bin_edges(targets, bins);

  NullDistribution null;
  null.samples.resize(n_permutations);
  std::vector<double> shuffled(targets.begin(), targets.end());
  for (std::size_t r = 0; r < n_permutations; ++r) {
    std::copy(targets.begin(), targets.end(), shuffled.begin());
    Rng rng = make_rng(seed, {stream::kPermutation, r});
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    null.samples[r] =
        weighted_js(client_sizes, per_client_js(shuffled, client_sizes, edges));
  }

  const double n = static_cast<double>(n_permutations);
  null.mu = std::accumulate(null.samples.begin(), null.samples.end(), 0.0) / n;
  double sq = 0.0;
  for (double v : null.samples) sq += (v - null.mu) * (v - null.mu);
  null.sigma = std::sqrt(sq / n);
  null.tau = null.mu + 2.0 * null.sigma;
  return null;
}

std::string to_string(Classification c) {
  return c == Classification::kNonIid ? "non-IID" : "IID";
}

void HeterogeneityConfig::validate() const {
  if (bins == 0) throw ValidationError("heterogeneity.bins must be > 0");
  if (n_permutations < 2) {
    throw ValidationError("heterogeneity.n_permutations must be >= 2");
  }
}

Classification classify(double js_weighted, double tau_iid) {
  return js_weighted > tau_iid ? Classification::kNonIid : Classification::kIid;
}

HeterogeneityReport analyze_heterogeneity(
    std::span<const double> targets, std::span<const std::string> client_ids,
    const HeterogeneityConfig& cfg) {
  cfg.validate();
  if (targets.size() != client_ids.size()) {
    throw ValidationError("targets and client ids differ in length");
  }
  std::map<std::string, std::vector<double>> groups;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    groups[client_ids[i]].push_back(targets[i]);
  }

  HeterogeneityReport report;
  std::vector<double> grouped;
  grouped.reserve(targets.size());
  for (const auto& [id, values] : groups) {
    report.client_ids.push_back(id);
    report.client_sizes.push_back(values.size());
    grouped.insert(grouped.end(), values.begin(), values.end());
  }

  const auto edges = make_bin_edges(grouped, cfg.bins);
  report.per_client_js = per_client_js(grouped, report.client_sizes, edges);
  report.js_weighted = weighted_js(report.client_sizes, report.per_client_js);
  report.js_max = *std::max_element(report.per_client_js.begin(),
                                    report.per_client_js.end());
  const auto null = permutation_null(grouped, report.client_sizes,
                                     cfg.n_permutations, cfg.seed, cfg.bins);
  report.mu_iid = null.mu;
  report.sigma_iid = null.sigma;
  report.tau_iid = null.tau;
  report.classification = classify(report.js_weighted, report.tau_iid);
  report.bins = cfg.bins;
  report.n_permutations = cfg.n_permutations;
  report.seed = cfg.seed;
  return report;
}

nlohmann::json to_json(const HeterogeneityReport& r) {
  nlohmann::json per_client = nlohmann::json::object();
  for (std::size_t k = 0; k < r.client_ids.size(); ++k) {
    per_client[r.client_ids[k]] = r.per_client_js[k];
  }
  std::vector<std::size_t> order(r.client_ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return r.per_client_js[a] > r.per_client_js[b];
  });
  nlohmann::json ranked = nlohmann::json::array();
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const auto k = order[rank];
    ranked.push_back({{"rank", rank + 1},
                      {"client_id", r.client_ids[k]},
                      {"n", r.client_sizes[k]},
                      {"js", r.per_client_js[k]}});
  }
  return {{"per_client_js", per_client},
          {"ranked_clients", ranked},
          {"js_weighted", r.js_weighted},
          {"js_max", r.js_max},
          {"mu_iid", r.mu_iid},
          {"sigma_iid", r.sigma_iid},
          {"tau_iid", r.tau_iid},
          {"classification", to_string(r.classification)},
          {"n_clients", r.client_ids.size()},
          {"config",
           {{"bins", r.bins},
            {"n_permutations", r.n_permutations},
            {"seed", r.seed},
            {"log_base", "e"}}}};
}

}  // namespace evfl
