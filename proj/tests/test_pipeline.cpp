#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "helpers.hpp"
#include "oracles.hpp"
#include "pcluster/data_io.hpp"
#include "pcluster/distance.hpp"
#include "pcluster/parallel.hpp"
#include "pcluster/pipeline.hpp"
#include "pcluster/synthetic.hpp"
#include "pcluster/threshold.hpp"

using namespace pcluster;
using testutil::angle_for_distance;
using testutil::make_track;
using testutil::unit2;

namespace {

Partition make_partition(const Dataset& d, const std::vector<std::vector<TrackId>>& groups) {
  Partition p;
  p.level = 1;
  for (std::vector<TrackId> members : groups) {
    std::sort(members.begin(), members.end());
    const ClusterId id = members.front();
    Cluster c;
    c.members = members;
    for (TrackId t : members) p.assignment[t] = id;
    p.clusters.emplace(id, std::move(c));
  }
  recompute_centroids(p, d);
  return p;
}

bool respects_cannot_links(const Partition& p, const CannotLinkSet& cannot) {
  for (const auto& [a, b] : cannot.pairs()) {
    auto ia = p.assignment.find(a);
    auto ib = p.assignment.find(b);
    if (ia != p.assignment.end() && ib != p.assignment.end() && ia->second == ib->second)
      return false;
  }
  return true;
}

std::multiset<std::size_t> cluster_sizes(const Partition& p) {
  std::multiset<std::size_t> sizes;
  for (const auto& [cid, c] : p.clusters) sizes.insert(c.members.size());
  return sizes;
}

std::set<std::set<TrackId>> member_sets(const Partition& p) {
  std::set<std::set<TrackId>> out;
  for (const auto& [cid, c] : p.clusters) out.emplace(c.members.begin(), c.members.end());
  return out;
}

}  // namespace

TEST_CASE("cannot-links from overlapping intervals") {
  Dataset d;
  d.tracks.push_back(make_track({.id = 1, .frame_lo = 1, .frame_hi = 10, .face = unit2(0.0)}));
  d.tracks.push_back(make_track({.id = 2, .frame_lo = 5, .frame_hi = 8, .face = unit2(0.2)}));
  CannotLinkSet cl = build_cannot_links(d);
  CHECK(cl.size() == 1);
  CHECK(cl.contains(1, 2));
  CHECK(cl.contains(2, 1));
}

TEST_CASE("no cannot-link for disjoint intervals") {
  Dataset d;
  d.tracks.push_back(make_track({.id = 1, .frame_lo = 1, .frame_hi = 10, .face = unit2(0.0)}));
  d.tracks.push_back(make_track({.id = 2, .frame_lo = 11, .frame_hi = 20, .face = unit2(0.2)}));
  CHECK(build_cannot_links(d).size() == 0);
}

TEST_CASE("cannot-links are exactly the pairwise intersections") {
  Dataset d;
  d.tracks.push_back(make_track({.id = 1, .frame_lo = 1, .frame_hi = 10, .face = unit2(0.0)}));
  d.tracks.push_back(make_track({.id = 2, .frame_lo = 5, .frame_hi = 8, .face = unit2(0.2)}));
  d.tracks.push_back(make_track({.id = 3, .frame_lo = 9, .frame_hi = 12, .face = unit2(0.4)}));
  CannotLinkSet cl = build_cannot_links(d);
  CHECK(cl.size() == 2);
  CHECK(cl.contains(1, 2));
  CHECK(cl.contains(1, 3));
  CHECK_FALSE(cl.contains(2, 3));
}

TEST_CASE("stage1_step merges mutual NNs within the threshold") {
  Dataset d;
  d.tracks.push_back(make_track({.id = 1, .frame_lo = 1, .frame_hi = 10, .face = unit2(0.0)}));
  d.tracks.push_back(make_track(
      {.id = 2, .frame_lo = 20, .frame_hi = 30, .face = unit2(angle_for_distance(0.3))}));
  Partition p = singleton_partition(d, {1, 2});
  CannotLinkSet cl;
  Partition next = stage1_step(p, d, cl, 0.48);
  CHECK(next.cluster_count() == 1);
  CHECK(next.level == 2);
  CHECK(check_partition(next, d).empty());
}

TEST_CASE("stage1_step refuses merges beyond the threshold") {
  Dataset d;
  d.tracks.push_back(make_track({.id = 1, .frame_lo = 1, .frame_hi = 10, .face = unit2(0.0)}));
  d.tracks.push_back(make_track(
      {.id = 2, .frame_lo = 20, .frame_hi = 30, .face = unit2(angle_for_distance(0.6))}));
  Partition p = singleton_partition(d, {1, 2});
  CannotLinkSet cl;
  Partition next = stage1_step(p, d, cl, 0.48);
  CHECK(next.cluster_count() == 2);
  CHECK(next.level == p.level);  // unchanged partition signals termination
}

TEST_CASE("stage1_step union order: closer edge wins, the other union is refused") {
  // nn(A) = nn(B) = C with d(A,C) = 0.2 < d(B,C) = 0.3, and (A,B) cannot-linked.
  const double theta_c = angle_for_distance(0.2);
  const double theta_b = theta_c + angle_for_distance(0.3);
  Dataset d;
  d.tracks.push_back(make_track({.id = 1, .frame_lo = 1, .frame_hi = 10, .face = unit2(0.0)}));
  d.tracks.push_back(
      make_track({.id = 2, .frame_lo = 5, .frame_hi = 8, .face = unit2(theta_b)}));
  d.tracks.push_back(
      make_track({.id = 3, .frame_lo = 20, .frame_hi = 30, .face = unit2(theta_c)}));
  // Sanity of the construction: C is the first NN of both A and B.
  CHECK(cosine_distance(*d.tracks[0].face, *d.tracks[2].face) == doctest::Approx(0.2));
  CHECK(cosine_distance(*d.tracks[1].face, *d.tracks[2].face) == doctest::Approx(0.3));
  CHECK(cosine_distance(*d.tracks[0].face, *d.tracks[1].face) > 0.5);

  CannotLinkSet cl = build_cannot_links(d);
  REQUIRE(cl.contains(1, 2));
  Partition p = singleton_partition(d, {1, 2, 3});
  Partition next = stage1_step(p, d, cl, 0.48);
  CHECK(member_sets(next) == std::set<std::set<TrackId>>{{1, 3}, {2}});
}

TEST_CASE("stage1_cluster: no merges when all distances exceed the threshold") {
  Dataset d;
  for (int i = 0; i < 4; ++i) {
    d.tracks.push_back(make_track({.id = i,
                                   .frame_lo = i * 100,
                                   .frame_hi = i * 100 + 10,
                                   .face = unit2(i * 1.4)}));
  }
  ClusteringConfig config;
  CannotLinkSet cl = build_cannot_links(d);
  Stage1Result r = stage1_cluster(d, config, cl);
  CHECK(r.final.cluster_count() == 4);
  CHECK(r.partitions.size() == 1);
}

TEST_CASE("stage1_cluster recovers two tight separable groups") {
  Dataset d;
  int id = 0;
  for (int g = 0; g < 2; ++g) {
    for (int i = 0; i < 5; ++i) {
      const double theta = g * 2.0 + i * 0.05;  // groups centred 2.0 rad apart
      d.tracks.push_back(make_track(
          {.id = id, .frame_lo = id * 50, .frame_hi = id * 50 + 20, .face = unit2(theta)}));
      ++id;
    }
  }
  // Exhaustive distance table proves the construction: intra < 0.1, inter > 0.9.
  double max_intra = 0.0, min_inter = 2.0;
  for (int i = 0; i < 10; ++i) {
    for (int j = i + 1; j < 10; ++j) {
      const double dist = cosine_distance(*d.tracks[i].face, *d.tracks[j].face);
      if (i / 5 == j / 5) {
        max_intra = std::max(max_intra, dist);
      } else {
        min_inter = std::min(min_inter, dist);
      }
    }
  }
  REQUIRE(max_intra < 0.1);
  REQUIRE(min_inter > 0.9);

  ClusteringConfig config;
  CannotLinkSet cl = build_cannot_links(d);
  Stage1Result r = stage1_cluster(d, config, cl);
  CHECK(r.final.cluster_count() == 2);
  CHECK(member_sets(r.final) ==
        std::set<std::set<TrackId>>{{0, 1, 2, 3, 4}, {5, 6, 7, 8, 9}});
  CHECK(check_partition(r.final, d).empty());
}

TEST_CASE("stage1_cluster on a single track") {
  Dataset d;
  d.tracks.push_back(make_track({.id = 1, .frame_lo = 1, .frame_hi = 10, .face = unit2(0.0)}));
  ClusteringConfig config;
  CannotLinkSet cl;
  Stage1Result r = stage1_cluster(d, config, cl);
  CHECK(r.final.cluster_count() == 1);
  CHECK(r.partitions.size() == 1);
}

namespace {

// Two speaking tracks in separate clusters at face distance df and voice
// distance dv, plus a third far-away cluster as ballast.
Dataset bridge_dataset(double df, double dv) {
  Dataset d;
  Track a = make_track({.id = 1, .frame_lo = 0, .frame_hi = 99, .face = unit2(0.0)});
  a.voice = unit2(0.0);
  a.voice_span = a.frames;
  Track b = make_track(
      {.id = 2, .frame_lo = 200, .frame_hi = 299, .face = unit2(angle_for_distance(df))});
  b.voice = unit2(angle_for_distance(dv));
  b.voice_span = b.frames;
  d.tracks.push_back(a);
  d.tracks.push_back(b);
  d.tracks.push_back(make_track({.id = 3, .frame_lo = 400, .frame_hi = 499, .face = unit2(3.0)}));
  return d;
}

}  // namespace

TEST_CASE("stage2 bridges when face and voice agree") {
  Dataset d = bridge_dataset(0.50, 0.10);
  ClusteringConfig config;
  config.tau_v_loose = 0.31;
  CannotLinkSet cl;
  Stage1Result s1 = stage1_cluster(d, config, cl);
  REQUIRE(s1.final.cluster_count() == 3);  // 0.50 > tau_f_tight keeps them apart

  Stage2Result s2 = stage2_bridge(s1.final, d, config, cl);
  CHECK(s2.partition.cluster_count() == 2);
  REQUIRE(s2.bridges.size() == 1);
  CHECK(s2.bridges[0].track_a == 1);
  CHECK(s2.bridges[0].track_b == 2);
  CHECK(s2.bridges[0].d_face == doctest::Approx(0.50));
  CHECK(s2.bridges[0].d_voice == doctest::Approx(0.10));
  CHECK(check_partition(s2.partition, d).empty());
}

TEST_CASE("stage2 requires both modalities below their thresholds") {
  Dataset d = bridge_dataset(0.50, 0.40);  // voice too far
  ClusteringConfig config;
  config.tau_v_loose = 0.31;
  CannotLinkSet cl;
  Stage1Result s1 = stage1_cluster(d, config, cl);
  Stage2Result s2 = stage2_bridge(s1.final, d, config, cl);
  CHECK(s2.partition.cluster_count() == 3);
  CHECK(s2.bridges.empty());
  CHECK(s2.partition == s1.final);
}

TEST_CASE("stage2 without speaking tracks changes nothing") {
  Dataset d;
  d.tracks.push_back(make_track({.id = 1, .frame_lo = 0, .frame_hi = 9, .face = unit2(0.0)}));
  d.tracks.push_back(make_track({.id = 2, .frame_lo = 20, .frame_hi = 29, .face = unit2(0.6)}));
  ClusteringConfig config;
  config.tau_v_loose = 0.31;
  CannotLinkSet cl;
  Stage1Result s1 = stage1_cluster(d, config, cl);
  Stage2Result s2 = stage2_bridge(s1.final, d, config, cl);
  CHECK(s2.partition == s1.final);
  CHECK(s2.bridges.empty());
}

TEST_CASE("stage2 without a voice threshold is an error") {
  Dataset d = bridge_dataset(0.50, 0.10);
  ClusteringConfig config;
  CannotLinkSet cl;
  Stage1Result s1 = stage1_cluster(d, config, cl);
  CHECK_THROWS_WITH_AS(stage2_bridge(s1.final, d, config, cl), "voice threshold unavailable",
                       std::runtime_error);
}

TEST_CASE("stage2 refuses cannot-linked bridges") {
  Dataset d = bridge_dataset(0.50, 0.10);
  // Overlap the two speaking tracks so their clusters are cannot-linked.
  d.tracks[1].frames = FrameSet::single(50, 149);
  d.tracks[1].voice_span = d.tracks[1].frames;
  ClusteringConfig config;
  config.tau_v_loose = 0.31;
  CannotLinkSet cl = build_cannot_links(d);
  REQUIRE(cl.contains(1, 2));
  Stage1Result s1 = stage1_cluster(d, config, cl);
  Stage2Result s2 = stage2_bridge(s1.final, d, config, cl);
  CHECK(s2.partition.cluster_count() == 3);
  CHECK(s2.bridges.empty());
}

namespace {

// One clustered face track with a body at angle 0, another clustered track
// with a body at distance d2_from_first, and one back at distance d1 from the
// first body.
Dataset back_dataset(double d1, double d2, std::int64_t back_shot) {
  Dataset d;
  Track t1 = make_track({.id = 1, .frame_lo = 0, .frame_hi = 9, .shot = 0, .face = unit2(0.0)});
  t1.body = unit2(0.0);
  const double theta_back = angle_for_distance(d1);
  Track t2 = make_track(
      {.id = 2, .frame_lo = 20, .frame_hi = 29, .shot = 0, .face = unit2(2.6)});
  t2.body = unit2(theta_back + angle_for_distance(d2));
  Track back = make_track({.id = 3,
                           .frame_lo = 40 + 100 * back_shot,
                           .frame_hi = 49 + 100 * back_shot,
                           .shot = back_shot});
  back.body = unit2(theta_back);
  d.tracks.push_back(t1);
  d.tracks.push_back(t2);
  d.tracks.push_back(back);
  return d;
}

}  // namespace

TEST_CASE("stage3 assigns a distinctive nearby back") {
  Dataset d = back_dataset(0.1, 0.8, 0);
  REQUIRE(cosine_distance(*d.tracks[2].body, *d.tracks[0].body) == doctest::Approx(0.1));
  REQUIRE(cosine_distance(*d.tracks[2].body, *d.tracks[1].body) == doctest::Approx(0.8));
  ClusteringConfig config;
  CannotLinkSet cl = build_cannot_links(d);
  Stage1Result s1 = stage1_cluster(d, config, cl);
  REQUIRE(s1.final.cluster_count() == 2);
  Stage3Result s3 = stage3_assign_backs(s1.final, d, config, cl);
  REQUIRE(s3.assignments.size() == 1);
  CHECK(s3.assignments[0].track == 3);
  CHECK(s3.assignments[0].cluster == 1);
  CHECK(s3.assignments[0].neighbor == 1);
  CHECK(s3.assignments[0].d1 == doctest::Approx(0.1));
  REQUIRE(s3.assignments[0].d2.has_value());
  CHECK(*s3.assignments[0].d2 == doctest::Approx(0.8));
  CHECK(s3.partition.cluster_count() == 2);  // count unchanged
  CHECK(s3.partition.assignment.at(3) == 1);
  CHECK(check_partition(s3.partition, d).empty());
}

TEST_CASE("stage3 ignores backs beyond tau_b_back") {
  Dataset d = back_dataset(0.5, 0.9, 0);
  ClusteringConfig config;
  CannotLinkSet cl = build_cannot_links(d);
  Stage1Result s1 = stage1_cluster(d, config, cl);
  Stage3Result s3 = stage3_assign_backs(s1.final, d, config, cl);
  CHECK(s3.assignments.empty());
  CHECK(s3.unassigned == std::vector<TrackId>{3});
}

TEST_CASE("stage3 ignores backs outside the shot window") {
  Dataset d = back_dataset(0.1, 0.8, 10);  // bodies in shot 0, back in shot 10
  ClusteringConfig config;
  CannotLinkSet cl = build_cannot_links(d);
  Stage1Result s1 = stage1_cluster(d, config, cl);
  Stage3Result s3 = stage3_assign_backs(s1.final, d, config, cl);
  CHECK(s3.assignments.empty());
  CHECK(s3.unassigned == std::vector<TrackId>{3});
}

TEST_CASE("stage3 ignores non-distinctive backs") {
  // Two clustered bodies at nearly equal distance from the back: ratio ~ 1.
  Dataset d = back_dataset(0.30, 0.32, 0);
  const double d1 = cosine_distance(*d.tracks[2].body, *d.tracks[0].body);
  const double d2 = cosine_distance(*d.tracks[2].body, *d.tracks[1].body);
  REQUIRE(std::min(d1, d2) / std::max(d1, d2) > 0.9);
  ClusteringConfig config;
  CannotLinkSet cl = build_cannot_links(d);
  Stage1Result s1 = stage1_cluster(d, config, cl);
  Stage3Result s3 = stage3_assign_backs(s1.final, d, config, cl);
  CHECK(s3.assignments.empty());
  CHECK(s3.unassigned == std::vector<TrackId>{3});
}

TEST_CASE("stage3 lone candidate passes the ratio test") {
  Dataset d;
  Track t1 = make_track({.id = 1, .frame_lo = 0, .frame_hi = 9, .shot = 0, .face = unit2(0.0)});
  t1.body = unit2(0.0);
  Track back = make_track({.id = 2, .frame_lo = 20, .frame_hi = 29, .shot = 0});
  back.body = unit2(angle_for_distance(0.2));
  d.tracks.push_back(t1);
  d.tracks.push_back(back);
  ClusteringConfig config;
  CannotLinkSet cl = build_cannot_links(d);
  Stage1Result s1 = stage1_cluster(d, config, cl);
  Stage3Result s3 = stage3_assign_backs(s1.final, d, config, cl);
  REQUIRE(s3.assignments.size() == 1);
  CHECK_FALSE(s3.assignments[0].d2.has_value());
}

TEST_CASE("stage3 refuses assignments that violate a cannot-link") {
  Dataset d = back_dataset(0.1, 0.8, 0);
  // The back now overlaps the clustered track it would join.
  d.tracks[2].frames = FrameSet::single(5, 15);
  ClusteringConfig config;
  CannotLinkSet cl = build_cannot_links(d);
  REQUIRE(cl.contains(1, 3));
  Stage1Result s1 = stage1_cluster(d, config, cl);
  Stage3Result s3 = stage3_assign_backs(s1.final, d, config, cl);
  CHECK(s3.assignments.empty());
  CHECK(s3.unassigned == std::vector<TrackId>{3});
  CHECK(respects_cannot_links(s3.partition, cl));
}

namespace {

Dataset sized_cluster_dataset(const std::vector<std::size_t>& sizes,
                              std::vector<std::vector<TrackId>>* groups) {
  Dataset d;
  TrackId id = 0;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    groups->push_back({});
    for (std::size_t i = 0; i < sizes[g]; ++i) {
      d.tracks.push_back(make_track({.id = id,
                                     .frame_lo = id * 100,
                                     .frame_hi = id * 100 + 10,
                                     .face = unit2(static_cast<double>(g))}));
      groups->back().push_back(id);
      ++id;
    }
  }
  return d;
}

}  // namespace

TEST_CASE("reduce_to_oracle merges smallest into largest") {
  std::vector<std::vector<TrackId>> groups;
  Dataset d = sized_cluster_dataset({10, 3, 1}, &groups);
  Partition p = make_partition(d, groups);
  Partition r = reduce_to_oracle(p, d, 2);
  CHECK(cluster_sizes(r) == std::multiset<std::size_t>{11, 3});
  CHECK(check_partition(r, d).empty());
}

TEST_CASE("reduce_to_oracle with matching count is the identity") {
  std::vector<std::vector<TrackId>> groups;
  Dataset d = sized_cluster_dataset({10, 3, 1}, &groups);
  Partition p = make_partition(d, groups);
  Partition r = reduce_to_oracle(p, d, 3);
  CHECK(r == p);
}

TEST_CASE("reduce_to_oracle tie-break: equal largest sizes pick the smaller id") {
  std::vector<std::vector<TrackId>> groups;
  Dataset d = sized_cluster_dataset({5, 5, 1}, &groups);
  Partition p = make_partition(d, groups);
  Partition r = reduce_to_oracle(p, d, 2);
  CHECK(cluster_sizes(r) == std::multiset<std::size_t>{6, 5});
  // The singleton (track 10) joins the first size-5 cluster, whose id is 0.
  CHECK(r.assignment.at(10) == 0);
}

TEST_CASE("reduce_to_oracle cannot split") {
  std::vector<std::vector<TrackId>> groups;
  Dataset d = sized_cluster_dataset({3, 2}, &groups);
  Partition p = make_partition(d, groups);
  CHECK_THROWS_WITH_AS(reduce_to_oracle(p, d, 4), "cannot split clusters", std::runtime_error);
}

TEST_CASE("reduce_to_oracle ignores cannot-links but reports the violations") {
  std::vector<std::vector<TrackId>> groups;
  Dataset d = sized_cluster_dataset({2, 1}, &groups);
  // Overlap one track from each cluster.
  d.tracks[0].frames = FrameSet::single(0, 50);
  d.tracks[2].frames = FrameSet::single(40, 90);
  CannotLinkSet cl = build_cannot_links(d);
  REQUIRE(cl.contains(0, 2));
  Partition p = make_partition(d, groups);
  std::vector<std::pair<TrackId, TrackId>> violations;
  Partition r = reduce_to_oracle(p, d, 1, &cl, &violations);
  CHECK(r.cluster_count() == 1);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0] == std::make_pair<TrackId, TrackId>(0, 2));
}

TEST_CASE("run_pipeline on faces-only data equals stage 1 alone") {
  Dataset d;
  for (int i = 0; i < 6; ++i) {
    d.tracks.push_back(make_track({.id = i,
                                   .frame_lo = i * 100,
                                   .frame_hi = i * 100 + 10,
                                   .face = unit2(i * 0.9)}));
  }
  ClusteringConfig config;
  PipelineResult result = run_pipeline(d, config);
  Stage1Result s1 = stage1_cluster(d, config, build_cannot_links(d));
  CHECK(result.final == s1.final);
  CHECK(result.bridges.empty());
  CHECK(result.back_assignments.empty());
  CHECK(result.unassigned_backs.empty());
  CHECK_FALSE(result.learned_tau_v_loose.has_value());
}

TEST_CASE("run_pipeline bridges a split character via the speaking pair") {
  // Character X: frontal mode (tracks 1, 2; 2 speaks) and profile mode
  // (tracks 3, 4; 3 speaks) at cross-mode face distance 0.49. Character Y:
  // tracks 5, 6 far from everything. Voice agrees within X, disagrees with Y.
  const double profile = angle_for_distance(0.49);
  Dataset d;
  auto add = [&](TrackId id, double face_theta, std::optional<double> voice_theta) {
    Track t = make_track({.id = id,
                          .frame_lo = (id - 1) * 200,
                          .frame_hi = (id - 1) * 200 + 99,
                          .face = unit2(face_theta)});
    if (voice_theta) {
      t.voice = unit2(*voice_theta);
      t.voice_span = t.frames;
    }
    d.tracks.push_back(t);
  };
  add(1, 0.0, std::nullopt);
  add(2, 0.0, 0.0);
  add(3, profile, 0.05);
  add(4, profile, std::nullopt);
  add(5, 3.0, M_PI / 2.0);
  add(6, 3.0, std::nullopt);

  ClusteringConfig config;
  config.tau_v_loose = 0.31;
  PipelineResult result = run_pipeline(d, config);
  CHECK(result.final.cluster_count() == 2);
  REQUIRE(result.bridges.size() == 1);
  CHECK(result.bridges[0].track_a == 2);
  CHECK(result.bridges[0].track_b == 3);
  CHECK(member_sets(result.final) == std::set<std::set<TrackId>>{{1, 2, 3, 4}, {5, 6}});
}

TEST_CASE("run_pipeline oracle protocol forces the cluster count") {
  GeneratorParams params;
  params.n_characters = 6;
  params.n_tracks = 60;
  params.seed = 3;
  auto [d, manifest] = generate(params);
  ClusteringConfig config;
  config.protocol = Protocol::oracle_count;
  config.oracle_clusters = 4;
  PipelineResult result = run_pipeline(d, config);
  CHECK(result.final.cluster_count() == 4);
}

TEST_CASE("stage1 agrees with the naive full-adjacency reference") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int round = 0; round < 40; ++round) {
    const int n = 2 + static_cast<int>(rng() % 14);
    Dataset d;
    std::int64_t cursor = 0;
    for (int i = 0; i < n; ++i) {
      const std::int64_t len = 5 + static_cast<std::int64_t>(rng() % 50);
      // Random gaps, sometimes negative, to plant overlaps.
      const std::int64_t start =
          std::max<std::int64_t>(0, cursor + static_cast<std::int64_t>(rng() % 40) - 15);
      d.tracks.push_back(make_track({.id = i,
                                     .frame_lo = start,
                                     .frame_hi = start + len,
                                     .face = testutil::random_unit(rng, 3)}));
      cursor = start + len / 2;
    }
    const double tau = 0.2 + uni(rng) * 0.9;
    ClusteringConfig config;
    config.tau_f_tight = tau;
    const CannotLinkSet cl = build_cannot_links(d);
    const Stage1Result got = stage1_cluster(d, config, cl);
    const auto expected = oracle::naive_stage1(d, tau);
    std::set<std::set<TrackId>> got_sets;
    for (const auto& s : member_sets(got.final)) got_sets.insert(s);
    REQUIRE(got_sets == expected);
    CHECK(respects_cannot_links(got.final, cl));
  }
}

TEST_CASE("pipeline invariants on random synthetic data") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    GeneratorParams params;
    params.n_characters = 5;
    params.n_tracks = 80;
    params.p_back = 0.2;
    params.p_speaking = 0.4;
    params.p_concurrent = 0.3;
    params.seed = seed;
    params.face.sigma = 0.04;
    params.body.sigma = 0.04;
    params.voice.sigma = 0.04;
    auto [d, manifest] = generate(params);
    ClusteringConfig config;
    const CannotLinkSet cl = build_cannot_links(d);

    const auto usable = filter_voice_tracks(d, config.voice_overlap_max, config.voice_min_seconds);
    const Dataset masked = apply_voice_mask(d, usable);
    Stage1Result s1 = stage1_cluster(masked, config, cl);
    for (std::size_t i = 0; i < s1.partitions.size(); ++i) {
      CHECK(respects_cannot_links(s1.partitions[i], cl));
      CHECK(check_partition(s1.partitions[i], masked).empty());
      if (i > 0) {
        CHECK(s1.partitions[i].cluster_count() < s1.partitions[i - 1].cluster_count());
        CHECK(s1.partitions[i].level > s1.partitions[i - 1].level);
      }
    }

    ClusteringConfig with_tau = config;
    const auto negatives = collect_voice_negatives(s1.final, cl, masked);
    if (!negatives.empty()) {
      with_tau.tau_v_loose = learn_voice_threshold(negatives, config.voice_percentile);
      Stage2Result s2 = stage2_bridge(s1.final, masked, with_tau, cl);
      CHECK(s2.partition.cluster_count() <= s1.final.cluster_count());
      CHECK(respects_cannot_links(s2.partition, cl));
      Stage3Result s3 = stage3_assign_backs(s2.partition, masked, with_tau, cl);
      CHECK(s3.partition.cluster_count() == s2.partition.cluster_count());
      CHECK(respects_cannot_links(s3.partition, cl));
      CHECK(check_partition(s3.partition, masked).empty());
      // Every bridge has recorded evidence passing both inequalities.
      for (const BridgeMerge& b : s2.bridges) {
        CHECK(b.d_face < with_tau.tau_f_loose());
        CHECK(b.d_voice < *with_tau.tau_v_loose);
      }
    }
  }
}

TEST_CASE("run_pipeline is deterministic, including under parallelism") {
  GeneratorParams params;
  params.n_characters = 6;
  params.n_tracks = 90;
  params.p_back = 0.2;
  params.p_speaking = 0.4;
  params.seed = 17;
  auto [d, manifest] = generate(params);
  ClusteringConfig config;

  PipelineResult a = run_pipeline(d, config);
  PipelineResult b = run_pipeline(d, config);
  CHECK(a == b);
  CHECK(serialize_result(a) == serialize_result(b));

  set_parallelism(4);
  PipelineResult c = run_pipeline(d, config);
  set_parallelism(1);
  CHECK(a == c);
  CHECK(serialize_result(a) == serialize_result(c));
}

TEST_CASE("raising tau_f_tight never increases the stage-1 cluster count") {
  // Cannot-link-free datasets: refusal order cannot interact with the sweep.
  std::mt19937_64 rng(91);
  for (int round = 0; round < 5; ++round) {
    Dataset d;
    for (int i = 0; i < 40; ++i) {
      d.tracks.push_back(make_track({.id = i,
                                     .frame_lo = i * 100,
                                     .frame_hi = i * 100 + 50,
                                     .face = testutil::random_unit(rng, 4)}));
    }
    const CannotLinkSet cl;
    std::size_t prev = SIZE_MAX;
    for (double tau : {0.1, 0.2, 0.3, 0.4, 0.5, 0.7, 0.9, 1.1}) {
      ClusteringConfig config;
      config.tau_f_tight = tau;
      const std::size_t k = stage1_cluster(d, config, cl).final.cluster_count();
      CHECK(k <= prev);
      prev = k;
    }
  }
}
