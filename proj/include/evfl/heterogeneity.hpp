// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace evfl {

/// Empirical distribution over shared bin edges.
struct HistogramDensity {
  std::vector<double> edges;          // strictly increasing, bins + 1 entries
  std::vector<double> probabilities;  // sums to 1
};

/// `bins` equal-width bins over [min, max] of the global targets. A
/// degenerate range is widened by 0.5 on each side.
std::vector<double> make_bin_edges(std::span<const double> targets,
                                   std::size_t bins);

/// Values equal to the upper edge fall into the last bin; values outside
/// the edges are a contract violation.
HistogramDensity fit_histogram(std::span<const double> targets,
                               const std::vector<double>& edges);

/// Sum of p_b ln(p_b / q_b) over bins with p_b > 0 (natural log).
double kl_divergence(const HistogramDensity& p, const HistogramDensity& q);

/// Jensen-Shannon divergence against the bin-wise mixture; in [0, ln 2].
double js_divergence(const HistogramDensity& client,
                     const HistogramDensity& global);

/// Sample-size weighted mean of per-client divergences.
double weighted_js(std::span<const std::size_t> client_sizes,
                   std::span<const double> per_client_js);

/// Per-client JS against the global histogram. `targets` holds the
/// clients' samples back to back, in the order given by `client_sizes`.
std::vector<double> per_client_js(std::span<const double> targets,
                                  std::span<const std::size_t> client_sizes,
                                  const std::vector<double>& edges);

struct NullDistribution {
  double mu = 0.0;
  double sigma = 0.0;  // population
  double tau = 0.0;    // mu + 2 sigma
  std::vector<double> samples;
};

/// Weighted JS under random reassignment of targets to clients of the
/// same sizes. Replicate r draws from its own (seed, r) stream.
NullDistribution permutation_null(std::span<const double> targets,
                                  std::span<const std::size_t> client_sizes,
                                  std::size_t n_permutations,
                                  std::uint64_t seed, std::size_t bins);

enum class Classification { kIid, kNonIid };

std::string to_string(Classification c);

struct HeterogeneityConfig {
  std::size_t bins = 50;
  std::size_t n_permutations = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

struct HeterogeneityReport {
  std::vector<std::string> client_ids;
  std::vector<std::size_t> client_sizes;
  std::vector<double> per_client_js;
  double js_weighted = 0.0;
  double js_max = 0.0;
  double mu_iid = 0.0;
  double sigma_iid = 0.0;
  double tau_iid = 0.0;
  Classification classification = Classification::kIid;
  std::size_t bins = 0;
  std::size_t n_permutations = 0;
  std::uint64_t seed = 0;
};

/// Non-IID iff js_weighted > tau (strict).
Classification classify(double js_weighted, double tau_iid);

/// Full analysis: groups `targets` by `client_ids` (lexicographic client
/// order), computes divergences and the permutation threshold.
HeterogeneityReport analyze_heterogeneity(
    std::span<const double> targets, std::span<const std::string> client_ids,
    const HeterogeneityConfig& cfg);

/// Report fields plus clients ranked by divergence (largest first).
nlohmann::json to_json(const HeterogeneityReport& report);

}  // namespace evfl
