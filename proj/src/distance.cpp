#include "pcluster/distance.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <thread>

#include "pcluster/parallel.hpp"

namespace pcluster {

namespace {
std::atomic<int> g_threads{1};
}

void set_parallelism(int threads) { g_threads.store(threads < 1 ? 1 : threads); }

int parallelism() { return g_threads.load(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const int threads = parallelism();
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      const std::size_t lo = n * w / workers;
      const std::size_t hi = n * (w + 1) / workers;
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

double cosine_distance(const Embedding& a, const Embedding& b) {
  return 1.0 - dot(a, b);
}

NeighborList knn(std::int64_t query, const std::vector<std::int64_t>& candidates, std::size_t k,
                 const FeatureFn& feature) {
  NeighborList out;
  out.query = query;
  const Embedding& q = feature(query);
  out.neighbors.reserve(candidates.size());
  for (std::int64_t c : candidates) {
    if (c == query) continue;
    out.neighbors.emplace_back(c, cosine_distance(q, feature(c)));
  }
  std::sort(out.neighbors.begin(), out.neighbors.end(),
            [](const auto& a, const auto& b) {
              if (a.second != b.second) return a.second < b.second;
              return a.first < b.first;
            });
  if (out.neighbors.size() > k) out.neighbors.resize(k);
  return out;
}

NeighborList knn(TrackId query, const std::vector<TrackId>& candidates, Modality modality,
                 std::size_t k, const Dataset& source) {
  const auto idx = track_index(source);
  return knn(query, candidates, k, [&](std::int64_t id) -> const Embedding& {
    return source.tracks[idx.at(id)].embedding(modality);
  });
}

NeighborList knn(ClusterId query, const std::vector<ClusterId>& candidates, Modality modality,
                 std::size_t k, const Partition& source) {
  return knn(query, candidates, k, [&](std::int64_t id) -> const Embedding& {
    return source.clusters.at(id).centroids.at(modality);
  });
}

bool ratio_distinctive(double d1, double d2, double rho) {
  if (d1 > d2) throw std::invalid_argument("NN distances out of order");
  if (d2 == 0.0) return d1 == 0.0;
  return d1 / d2 <= rho;
}

}  // namespace pcluster
