#include "pcluster/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <stdexcept>

#include "pcluster/distance.hpp"
#include "pcluster/parallel.hpp"
#include "pcluster/threshold.hpp"

namespace pcluster {

void CannotLinkSet::insert(TrackId a, TrackId b) {
  if (a == b) return;
  pairs_.emplace(std::min(a, b), std::max(a, b));
}

bool CannotLinkSet::contains(TrackId a, TrackId b) const {
  return pairs_.count({std::min(a, b), std::max(a, b)}) > 0;
}

CannotLinkSet build_cannot_links(const Dataset& dataset) {
  CannotLinkSet out;
  // Sweep over tracks ordered by first frame; only pairs whose frame ranges
  // overlap can intersect.
  std::vector<const Track*> order;
  order.reserve(dataset.tracks.size());
  for (const Track& t : dataset.tracks) {
    if (!t.frames.empty()) order.push_back(&t);
  }
  std::sort(order.begin(), order.end(), [](const Track* a, const Track* b) {
    return a->frames.min_frame() < b->frames.min_frame();
  });
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::int64_t hi = order[i]->frames.max_frame();
    for (std::size_t j = i + 1; j < order.size() && order[j]->frames.min_frame() <= hi; ++j) {
      if (order[i]->frames.intersects(order[j]->frames)) {
        out.insert(order[i]->id, order[j]->id);
      }
    }
  }
  return out;
}

namespace {

// Union-find over cluster ids that carries, per root, the set of roots it is
// cannot-linked to, and refuses unions between linked roots.
class ConstrainedUnionFind {
 public:
  explicit ConstrainedUnionFind(const std::vector<ClusterId>& ids) {
    for (ClusterId id : ids) parent_.emplace(id, id);
  }

  void add_enemies(ClusterId a, ClusterId b) {
    a = find(a);
    b = find(b);
    if (a == b) return;  // pre-existing violation; nothing to record
    enemies_[a].insert(b);
    enemies_[b].insert(a);
  }

  ClusterId find(ClusterId x) {
    auto it = parent_.find(x);
    while (it->second != x) {
      x = it->second;
      it = parent_.find(x);
    }
    return x;
  }

  bool linked(ClusterId a, ClusterId b) {
    a = find(a);
    b = find(b);
    auto it = enemies_.find(a);
    return it != enemies_.end() && it->second.count(b) > 0;
  }

  // Returns false (and does nothing) when the union is refused or redundant.
  bool unite(ClusterId a, ClusterId b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (linked(a, b)) return false;
    const ClusterId root = std::min(a, b);
    const ClusterId child = std::max(a, b);
    parent_[child] = root;
    auto ce = enemies_.find(child);
    if (ce != enemies_.end()) {
      for (ClusterId e : ce->second) {
        enemies_[e].erase(child);
        if (e != root) {
          enemies_[e].insert(root);
          enemies_[root].insert(e);
        }
      }
      enemies_.erase(child);
    }
    return true;
  }

 private:
  std::map<ClusterId, ClusterId> parent_;
  std::map<ClusterId, std::set<ClusterId>> enemies_;
};

// Cluster-level cannot-link pairs induced by track-level constraints.
std::set<std::pair<ClusterId, ClusterId>> cluster_links(const Partition& partition,
                                                        const CannotLinkSet& cannot) {
  std::set<std::pair<ClusterId, ClusterId>> out;
  for (const auto& [a, b] : cannot.pairs()) {
    auto ia = partition.assignment.find(a);
    auto ib = partition.assignment.find(b);
    if (ia == partition.assignment.end() || ib == partition.assignment.end()) continue;
    if (ia->second == ib->second) continue;
    out.emplace(std::min(ia->second, ib->second), std::max(ia->second, ib->second));
  }
  return out;
}

// Rebuilds a partition from union-find components: each new cluster takes the
// smallest old cluster id in its component and the merged member list.
Partition rebuild(const Partition& old, const Dataset& dataset, ConstrainedUnionFind& uf,
                  int level) {
  std::map<ClusterId, std::vector<ClusterId>> components;
  for (const auto& [cid, cluster] : old.clusters) {
    components[uf.find(cid)].push_back(cid);
  }
  Partition next;
  next.level = level;
  for (const auto& [root, olds] : components) {
    ClusterId id = *std::min_element(olds.begin(), olds.end());
    Cluster merged;
    for (ClusterId o : olds) {
      const auto& m = old.clusters.at(o).members;
      merged.members.insert(merged.members.end(), m.begin(), m.end());
    }
    std::sort(merged.members.begin(), merged.members.end());
    for (TrackId t : merged.members) next.assignment[t] = id;
    next.clusters.emplace(id, std::move(merged));
  }
  recompute_centroids(next, dataset);
  return next;
}

struct Edge {
  double weight;
  ClusterId lo;
  ClusterId hi;
  bool operator<(const Edge& o) const {
    if (weight != o.weight) return weight < o.weight;
    if (lo != o.lo) return lo < o.lo;
    return hi < o.hi;
  }
};

}  // namespace

Partition stage1_step(const Partition& partition, const Dataset& dataset,
                      const CannotLinkSet& cannot, double tau) {
  std::vector<ClusterId> ids;
  ids.reserve(partition.clusters.size());
  for (const auto& [cid, cluster] : partition.clusters) {
    if (cluster.centroids.count(Modality::face)) ids.push_back(cid);
  }
  if (ids.size() < 2) return partition;

  const auto links = cluster_links(partition, cannot);
  auto is_linked = [&](ClusterId a, ClusterId b) {
    return links.count({std::min(a, b), std::max(a, b)}) > 0;
  };

  auto feature = [&](std::int64_t id) -> const Embedding& {
    return partition.clusters.at(id).centroids.at(Modality::face);
  };

  // First NN per cluster (ties by ascending id via knn).
  std::vector<std::pair<ClusterId, double>> nn(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) {
    NeighborList nl = knn(ids[i], ids, 1, feature);
    nn[i] = nl.neighbors.front();
  });
  std::map<ClusterId, std::pair<ClusterId, double>> first;
  for (std::size_t i = 0; i < ids.size(); ++i) first[ids[i]] = nn[i];

  std::vector<Edge> edges;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      const ClusterId a = ids[i];
      const ClusterId b = ids[j];
      // An NN link participates only when its own distance passes tau;
      // a shared first NN relates a and b only through two valid links.
      const bool a_valid = first[a].second <= tau;
      const bool b_valid = first[b].second <= tau;
      const bool adjacent = (first[a].first == b && a_valid) ||
                            (first[b].first == a && b_valid) ||
                            (first[a].first == first[b].first && a_valid && b_valid);
      if (!adjacent) continue;
      if (is_linked(a, b)) continue;
      edges.push_back({cosine_distance(feature(a), feature(b)), std::min(a, b), std::max(a, b)});
    }
  }
  std::sort(edges.begin(), edges.end());

  std::vector<ClusterId> all_ids;
  for (const auto& [cid, cluster] : partition.clusters) all_ids.push_back(cid);
  ConstrainedUnionFind uf(all_ids);
  for (const auto& [a, b] : links) uf.add_enemies(a, b);

  bool merged = false;
  for (const Edge& e : edges) {
    merged |= uf.unite(e.lo, e.hi);
  }
  if (!merged) return partition;
  return rebuild(partition, dataset, uf, partition.level + 1);
}

Stage1Result stage1_cluster(const Dataset& dataset, const ClusteringConfig& config,
                            const CannotLinkSet& cannot) {
  std::vector<TrackId> face_ids;
  for (const Track& t : dataset.tracks) {
    if (t.face) face_ids.push_back(t.id);
  }
  std::sort(face_ids.begin(), face_ids.end());

  Stage1Result result;
  result.final = singleton_partition(dataset, face_ids, 1);
  result.partitions.push_back(result.final);
  while (true) {
    Partition next = stage1_step(result.final, dataset, cannot, config.tau_f_tight);
    if (next.level == result.final.level) break;  // no merge happened
    result.final = next;
    result.partitions.push_back(result.final);
  }
  return result;
}

Stage2Result stage2_bridge(const Partition& partition, const Dataset& dataset,
                           const ClusteringConfig& config, const CannotLinkSet& cannot) {
  if (!config.tau_v_loose) throw std::runtime_error("voice threshold unavailable");
  const double tau_f = config.tau_f_loose();
  const double tau_v = *config.tau_v_loose;
  const auto idx = track_index(dataset);

  // Speaking tracks (face + usable voice) per cluster, ascending id.
  std::map<ClusterId, std::vector<const Track*>> speakers;
  for (const auto& [cid, cluster] : partition.clusters) {
    for (TrackId t : cluster.members) {
      const Track& track = dataset.tracks[idx.at(t)];
      if (track.face && track.voice) speakers[cid].push_back(&track);
    }
  }

  const auto links = cluster_links(partition, cannot);
  auto is_linked = [&](ClusterId a, ClusterId b) {
    return links.count({std::min(a, b), std::max(a, b)}) > 0;
  };

  struct Candidate {
    double weight;  // d_face + d_voice of the best witness
    ClusterId lo, hi;
    BridgeMerge merge;
    bool operator<(const Candidate& o) const {
      if (weight != o.weight) return weight < o.weight;
      if (lo != o.lo) return lo < o.lo;
      return hi < o.hi;
    }
  };

  std::vector<std::pair<ClusterId, ClusterId>> pairs;
  for (auto a = speakers.begin(); a != speakers.end(); ++a) {
    for (auto b = std::next(a); b != speakers.end(); ++b) {
      if (is_linked(a->first, b->first)) continue;
      pairs.emplace_back(a->first, b->first);
    }
  }

  std::vector<std::optional<Candidate>> found(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t p) {
    const auto& [ca, cb] = pairs[p];
    std::optional<Candidate> best;
    for (const Track* i : speakers.at(ca)) {
      for (const Track* j : speakers.at(cb)) {
        const double df = cosine_distance(*i->face, *j->face);
        if (!(df < tau_f)) continue;
        const double dv = cosine_distance(*i->voice, *j->voice);
        if (!(dv < tau_v)) continue;
        Candidate c{df + dv, ca, cb, BridgeMerge{ca, cb, i->id, j->id, df, dv}};
        if (!best || c < *best) best = c;
      }
    }
    found[p] = best;
  });

  std::vector<Candidate> candidates;
  for (auto& c : found) {
    if (c) candidates.push_back(std::move(*c));
  }
  std::sort(candidates.begin(), candidates.end());

  std::vector<ClusterId> all_ids;
  for (const auto& [cid, cluster] : partition.clusters) all_ids.push_back(cid);
  ConstrainedUnionFind uf(all_ids);
  for (const auto& [a, b] : links) uf.add_enemies(a, b);

  Stage2Result result;
  for (const Candidate& c : candidates) {
    if (uf.unite(c.lo, c.hi)) result.bridges.push_back(c.merge);
  }
  if (result.bridges.empty()) {
    result.partition = partition;
  } else {
    result.partition = rebuild(partition, dataset, uf, partition.level + 1);
  }
  return result;
}

Stage3Result stage3_assign_backs(const Partition& partition, const Dataset& dataset,
                                 const ClusteringConfig& config, const CannotLinkSet& cannot) {
  const auto idx = track_index(dataset);

  std::vector<const Track*> backs;
  for (const Track& t : dataset.tracks) {
    if (t.body && !t.face) backs.push_back(&t);
  }
  std::sort(backs.begin(), backs.end(),
            [](const Track* a, const Track* b) { return a->id < b->id; });

  // Clustered tracks carrying a body embedding, the stage-3 candidate pool.
  std::vector<const Track*> pool_all;
  for (const auto& [t, cid] : partition.assignment) {
    const Track& track = dataset.tracks[idx.at(t)];
    if (track.body) pool_all.push_back(&track);
  }

  struct Outcome {
    bool assigned = false;
    BackAssignment assignment;
  };
  std::vector<Outcome> outcomes(backs.size());

  parallel_for(backs.size(), [&](std::size_t bi) {
    const Track& b = *backs[bi];
    std::vector<std::int64_t> pool;
    for (const Track* p : pool_all) {
      if (std::llabs(p->shot - b.shot) <= config.shot_window) pool.push_back(p->id);
    }
    std::sort(pool.begin(), pool.end());
    if (pool.empty()) return;

    auto feature = [&](std::int64_t id) -> const Embedding& {
      return *dataset.tracks[idx.at(id)].body;
    };
    NeighborList nl = knn(b.id, pool, 2, feature);
    const double d1 = nl.neighbors[0].second;
    // A lone candidate cannot be non-distinctive relative to alternatives;
    // only the absolute threshold applies then.
    if (nl.neighbors.size() >= 2 &&
        !ratio_distinctive(d1, nl.neighbors[1].second, config.rho)) {
      return;
    }
    if (d1 > config.tau_b_back) return;
    Outcome& o = outcomes[bi];
    o.assigned = true;
    o.assignment.track = b.id;
    o.assignment.neighbor = nl.neighbors[0].first;
    o.assignment.cluster = partition.assignment.at(nl.neighbors[0].first);
    o.assignment.d1 = d1;
    if (nl.neighbors.size() >= 2) o.assignment.d2 = nl.neighbors[1].second;
  });

  Stage3Result result;
  result.partition = partition;
  // Sequential application in ascending back id; an assignment is refused when
  // it would co-cluster a cannot-linked pair (including backs placed earlier).
  for (std::size_t bi = 0; bi < backs.size(); ++bi) {
    const Track& b = *backs[bi];
    if (!outcomes[bi].assigned) {
      result.unassigned.push_back(b.id);
      continue;
    }
    const BackAssignment& a = outcomes[bi].assignment;
    Cluster& target = result.partition.clusters.at(a.cluster);
    bool violates = false;
    for (TrackId member : target.members) {
      if (cannot.contains(b.id, member)) {
        violates = true;
        break;
      }
    }
    if (violates) {
      result.unassigned.push_back(b.id);
      continue;
    }
    target.members.insert(
        std::upper_bound(target.members.begin(), target.members.end(), b.id), b.id);
    result.partition.assignment[b.id] = a.cluster;
    result.assignments.push_back(a);
  }
  recompute_centroids(result.partition, dataset);
  return result;
}

Partition reduce_to_oracle(const Partition& partition, const Dataset& dataset, int C,
                           const CannotLinkSet* cannot,
                           std::vector<std::pair<TrackId, TrackId>>* violations) {
  if (C < 1) throw std::invalid_argument("oracle cluster count must be positive");
  if (static_cast<std::size_t>(C) > partition.cluster_count())
    throw std::runtime_error("cannot split clusters");

  Partition out = partition;
  while (out.cluster_count() > static_cast<std::size_t>(C)) {
    // Smallest by (size, id) over all clusters, then largest by (size, id)
    // over the rest.
    ClusterId smallest = 0;
    std::size_t smallest_size = 0;
    bool have = false;
    for (const auto& [cid, cluster] : out.clusters) {
      if (!have || cluster.members.size() < smallest_size) {
        smallest = cid;
        smallest_size = cluster.members.size();
        have = true;
      }
    }
    ClusterId largest = 0;
    std::size_t largest_size = 0;
    have = false;
    for (const auto& [cid, cluster] : out.clusters) {
      if (cid == smallest) continue;
      if (!have || cluster.members.size() > largest_size) {
        largest = cid;
        largest_size = cluster.members.size();
        have = true;
      }
    }
    Cluster& target = out.clusters.at(largest);
    Cluster& source = out.clusters.at(smallest);
    target.members.insert(target.members.end(), source.members.begin(), source.members.end());
    std::sort(target.members.begin(), target.members.end());
    for (TrackId t : source.members) out.assignment[t] = largest;
    out.clusters.erase(smallest);
  }
  recompute_centroids(out, dataset);

  if (cannot && violations) {
    for (const auto& [a, b] : cannot->pairs()) {
      auto ia = out.assignment.find(a);
      auto ib = out.assignment.find(b);
      if (ia != out.assignment.end() && ib != out.assignment.end() && ia->second == ib->second) {
        violations->emplace_back(a, b);
      }
    }
  }
  return out;
}

PipelineResult run_pipeline(const Dataset& dataset, const ClusteringConfig& config) {
  config.validate();

  const auto usable = filter_voice_tracks(dataset, config.voice_overlap_max,
                                          config.voice_min_seconds);
  const Dataset masked = apply_voice_mask(dataset, usable);
  const CannotLinkSet cannot = build_cannot_links(masked);

  PipelineResult result;
  Stage1Result s1 = stage1_cluster(masked, config, cannot);
  for (const Partition& p : s1.partitions) {
    result.history.push_back(
        {p.level, static_cast<std::int64_t>(p.cluster_count()), "stage1"});
  }

  ClusteringConfig effective = config;
  if (!effective.tau_v_loose) {
    const auto negatives = collect_voice_negatives(s1.final, cannot, masked);
    if (!negatives.empty()) {
      result.learned_tau_v_loose =
          learn_voice_threshold(negatives, effective.voice_percentile);
      effective.tau_v_loose = result.learned_tau_v_loose;
    }
  }

  Partition after2 = s1.final;
  if (effective.tau_v_loose) {
    Stage2Result s2 = stage2_bridge(s1.final, masked, effective, cannot);
    result.bridges = std::move(s2.bridges);
    after2 = std::move(s2.partition);
    if (after2.level != s1.final.level) {
      result.history.push_back(
          {after2.level, static_cast<std::int64_t>(after2.cluster_count()), "stage2"});
    }
  }
  // No usable voice threshold means no bridge candidates existed either: any
  // cross-cluster speaking pair would have supplied a negative sample.

  Stage3Result s3 = stage3_assign_backs(after2, masked, effective, cannot);
  result.back_assignments = std::move(s3.assignments);
  result.unassigned_backs = std::move(s3.unassigned);
  result.final = std::move(s3.partition);

  if (config.protocol == Protocol::oracle_count) {
    result.final = reduce_to_oracle(result.final, masked, config.oracle_clusters, &cannot,
                                    &result.oracle_violations);
  }
  return result;
}

}  // namespace pcluster
