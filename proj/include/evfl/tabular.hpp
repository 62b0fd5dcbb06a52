// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace evfl {

/// Model-ready rows: standardized numeric features (row-major), a station
/// index for the embedding lookup, and the raw-kWh target.
struct TabularData {
  std::size_t dim = 0;
  std::vector<double> features;
  std::vector<std::size_t> stations;
  std::vector<double> targets;
  std::vector<std::string> session_ids;
  std::vector<std::string> client_ids;

  std::size_t size() const { return targets.size(); }
  bool empty() const { return targets.empty(); }

  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }

  void push_back(std::span<const double> x, std::size_t station, double target,
                 std::string session_id = {}, std::string client_id = {}) {
    if (dim == 0 && empty()) dim = x.size();
    features.insert(features.end(), x.begin(), x.end());
    stations.push_back(station);
    targets.push_back(target);
    session_ids.push_back(std::move(session_id));
    client_ids.push_back(std::move(client_id));
  }

  TabularData subset(std::span<const std::size_t> rows) const {
    TabularData out;
    out.dim = dim;
    for (std::size_t i : rows) {
      out.push_back(row(i), stations[i], targets[i], session_ids[i],
                    client_ids[i]);
    }
    return out;
  }
};

}  // namespace evfl
