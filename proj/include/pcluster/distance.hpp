#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "pcluster/core.hpp"

namespace pcluster {

/// 1 - cosine similarity on unit vectors, in [0, 2].
/// Throws std::invalid_argument("incompatible embeddings") on dimension mismatch.
double cosine_distance(const Embedding& a, const Embedding& b);

/// Ranked neighbours of one query, ascending by distance, ties broken by
/// ascending candidate id. Never contains the query itself.
struct NeighborList {
  std::int64_t query = 0;
  std::vector<std::pair<std::int64_t, double>> neighbors;
};

using FeatureFn = std::function<const Embedding&(std::int64_t)>;

/// Exact k nearest neighbours of `query` among `candidates` (query excluded if
/// present). Returns fewer than k when the pool is smaller.
NeighborList knn(std::int64_t query, const std::vector<std::int64_t>& candidates, std::size_t k,
                 const FeatureFn& feature);

/// Same, over track embeddings of one modality. Every id must carry it.
NeighborList knn(TrackId query, const std::vector<TrackId>& candidates, Modality modality,
                 std::size_t k, const Dataset& source);

/// Same, over cluster centroids of one modality.
NeighborList knn(ClusterId query, const std::vector<ClusterId>& candidates, Modality modality,
                 std::size_t k, const Partition& source);

/// Lowe-style distinctiveness: true iff d1 / d2 <= rho (d2 = 0 requires d1 = 0).
/// Throws std::invalid_argument("NN distances out of order") if d1 > d2.
bool ratio_distinctive(double d1, double d2, double rho);

}  // namespace pcluster
