#pragma once

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pcluster/core.hpp"

namespace pcluster {

/// Unordered track-id pairs with non-empty temporal intersection. Two tracks
/// that share a frame show different people and must never share a cluster.
class CannotLinkSet {
 public:
  void insert(TrackId a, TrackId b);
  bool contains(TrackId a, TrackId b) const;
  std::size_t size() const { return pairs_.size(); }
  const std::set<std::pair<TrackId, TrackId>>& pairs() const { return pairs_; }

 private:
  std::set<std::pair<TrackId, TrackId>> pairs_;  // normalized lo < hi
};

CannotLinkSet build_cannot_links(const Dataset& dataset);

struct StageSummary {
  int level = 0;
  std::int64_t clusters = 0;
  std::string stage;  // "stage1" or "stage2"

  friend bool operator==(const StageSummary&, const StageSummary&) = default;
};

struct BridgeMerge {
  ClusterId cluster_a = 0;
  ClusterId cluster_b = 0;
  TrackId track_a = 0;  // witnessing speaking track in cluster_a
  TrackId track_b = 0;
  double d_face = 0.0;
  double d_voice = 0.0;

  friend bool operator==(const BridgeMerge&, const BridgeMerge&) = default;
};

struct BackAssignment {
  TrackId track = 0;
  ClusterId cluster = 0;
  TrackId neighbor = 0;  // NN body-track providing the assignment
  double d1 = 0.0;
  std::optional<double> d2;  // absent when the candidate pool had one member

  friend bool operator==(const BackAssignment&, const BackAssignment&) = default;
};

struct PipelineResult {
  Partition final;
  std::vector<StageSummary> history;
  std::vector<BridgeMerge> bridges;
  std::vector<BackAssignment> back_assignments;
  std::vector<TrackId> unassigned_backs;
  std::optional<double> learned_tau_v_loose;  // set only when auto-learned
  // Cannot-link pairs co-clustered by the oracle-count reduction, which
  // applies the size prior unconditionally.
  std::vector<std::pair<TrackId, TrackId>> oracle_violations;

  friend bool operator==(const PipelineResult&, const PipelineResult&) = default;
};

/// One agglomeration round over face centroids: first-NN adjacency gated by
/// tau, cannot-link edges discarded, unions applied in ascending edge distance
/// with constraint-violating unions refused. Returns the input partition
/// unchanged when no merge happened.
Partition stage1_step(const Partition& partition, const Dataset& dataset,
                      const CannotLinkSet& cannot, double tau);

struct Stage1Result {
  Partition final;
  std::vector<Partition> partitions;  // full history, initial singletons first
};

/// Iterates stage1_step from the singleton partition over face tracks until a
/// round produces no merge.
Stage1Result stage1_cluster(const Dataset& dataset, const ClusteringConfig& config,
                            const CannotLinkSet& cannot);

struct Stage2Result {
  Partition partition;
  std::vector<BridgeMerge> bridges;
};

/// Single bridging pass: clusters merge when some cross-cluster track pair
/// agrees on identity in both face and voice. Uses track features, not
/// centroids. Throws "voice threshold unavailable" when config.tau_v_loose is
/// unset.
Stage2Result stage2_bridge(const Partition& partition, const Dataset& dataset,
                           const ClusteringConfig& config, const CannotLinkSet& cannot);

struct Stage3Result {
  Partition partition;
  std::vector<BackAssignment> assignments;
  std::vector<TrackId> unassigned;
};

/// Assigns face-less body tracks to the cluster of their nearest clustered
/// body in the same or neighbouring shots, gated by the ratio test and
/// tau_b_back. Assignments that would co-cluster a cannot-linked pair are
/// refused. Cluster count is unchanged.
Stage3Result stage3_assign_backs(const Partition& partition, const Dataset& dataset,
                                 const ClusteringConfig& config, const CannotLinkSet& cannot);

/// Merges the smallest cluster into the largest until exactly C remain.
/// Cannot-link constraints are not consulted; violations created here are
/// reported through `violations` when given. Throws when C exceeds the
/// current cluster count.
Partition reduce_to_oracle(const Partition& partition, const Dataset& dataset, int C,
                           const CannotLinkSet* cannot = nullptr,
                           std::vector<std::pair<TrackId, TrackId>>* violations = nullptr);

/// Full pipeline: voice filtering, cannot-links, stage 1, voice-threshold
/// learning when needed, stage 2, stage 3, and oracle reduction under the
/// oracle_count protocol. Deterministic in (dataset, config).
PipelineResult run_pipeline(const Dataset& dataset, const ClusteringConfig& config);

}  // namespace pcluster
