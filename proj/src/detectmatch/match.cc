#include <cmath>
#include <limits>
#include <stdexcept>

#include "ctxfeat/detectmatch/detectmatch.h"

namespace ctxfeat {
namespace {

double Distance(const std::vector<double>& a, const std::vector<double>& b) {
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sq);
}

}  // namespace

std::vector<Match> MutualNnMatch(const FeatureSet& a, const FeatureSet& b) {
  if (a.descriptors.empty() || b.descriptors.empty()) {
    throw std::invalid_argument("mutual_nn_match: empty feature set");
  }
  if (a.descriptors.front().size() != b.descriptors.front().size()) {
    throw std::invalid_argument("mutual_nn_match: descriptor dimensions differ");
  }
  const std::size_t na = a.descriptors.size(), nb = b.descriptors.size();
  std::vector<double> dist(na * nb);
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) dist[i * nb + j] = Distance(a.descriptors[i], b.descriptors[j]);
  }
  std::vector<std::size_t> best_b(na), best_a(nb);
  for (std::size_t i = 0; i < na; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < nb; ++j) {
      if (dist[i * nb + j] < dist[i * nb + best]) best = j;
    }
    best_b[i] = best;
  }
  for (std::size_t j = 0; j < nb; ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < na; ++i) {
      if (dist[i * nb + j] < dist[best * nb + j]) best = i;
    }
    best_a[j] = best;
  }
  std::vector<Match> matches;
  for (std::size_t i = 0; i < na; ++i) {
    const std::size_t j = best_b[i];
    if (best_a[j] == i) {
      matches.push_back({static_cast<int>(i), static_cast<int>(j), dist[i * nb + j]});
    }
  }
  return matches;
}

}  // namespace ctxfeat
