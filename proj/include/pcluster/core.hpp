#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pcluster {

using TrackId = std::int64_t;
using ClusterId = std::int64_t;

enum class Modality { face, body, voice };

const char* modality_name(Modality m);

/// L2-normalized feature vector. Construction normalizes the input unless it
/// is already within 1e-9 of unit length; zero vectors are rejected.
class Embedding {
 public:
  Embedding() = default;
  explicit Embedding(std::vector<double> values);

  std::size_t dim() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }
  double norm() const;

  friend bool operator==(const Embedding&, const Embedding&) = default;

 private:
  std::vector<double> values_;
};

double dot(const Embedding& a, const Embedding& b);

/// Set of integer frame indices stored as sorted, disjoint, inclusive
/// [start, end] intervals. Touching intervals ([1,5],[6,9]) are kept as given
/// so that files round-trip byte-identically.
class FrameSet {
 public:
  using Interval = std::pair<std::int64_t, std::int64_t>;

  FrameSet() = default;
  explicit FrameSet(std::vector<Interval> intervals);

  static FrameSet single(std::int64_t start, std::int64_t end);

  bool empty() const { return intervals_.empty(); }
  std::int64_t count() const;
  std::int64_t min_frame() const;
  std::int64_t max_frame() const;
  std::int64_t median_frame() const;  // lower median of the frame multiset
  const std::vector<Interval>& intervals() const { return intervals_; }

  bool intersects(const FrameSet& other) const;
  std::int64_t intersection_count(const FrameSet& other) const;

  /// Coalesced union of several frame sets (derived data, never serialized).
  static FrameSet union_of(const std::vector<const FrameSet*>& sets);

  friend bool operator==(const FrameSet&, const FrameSet&) = default;

 private:
  std::vector<Interval> intervals_;
};

/// One person-track. At least one of face/body must be present; a voice
/// embedding must come with its voice_span.
struct Track {
  TrackId id = 0;
  FrameSet frames;
  std::int64_t shot = 0;
  std::optional<Embedding> face;
  std::optional<Embedding> body;
  std::optional<Embedding> voice;
  std::optional<FrameSet> voice_span;
  std::optional<std::string> label;  // ground truth, evaluation only

  bool has(Modality m) const;
  const Embedding& embedding(Modality m) const;
};

struct Dataset {
  std::vector<Track> tracks;
  double fps = 25.0;
  std::string program_set;  // optional tag; empty means unset
};

/// Map from track id to index in dataset.tracks.
std::map<TrackId, std::size_t> track_index(const Dataset& dataset);

struct Violation {
  std::optional<TrackId> track;
  std::string rule;
};

/// Structural invariant check; empty report iff the dataset is valid.
std::vector<Violation> validate_dataset(const Dataset& dataset);

struct Cluster {
  std::vector<TrackId> members;             // sorted ascending
  std::map<Modality, Embedding> centroids;  // derived; excluded from equality

  bool operator==(const Cluster& other) const { return members == other.members; }
};

/// Disjoint assignment of tracks to clusters at partition index `level`.
/// Centroids are the re-normalized arithmetic means of member embeddings and
/// are derived data: recompute_centroids rebuilds them from a dataset.
struct Partition {
  std::map<TrackId, ClusterId> assignment;
  std::map<ClusterId, Cluster> clusters;
  int level = 1;

  std::size_t cluster_count() const { return clusters.size(); }
  bool operator==(const Partition& other) const {
    return level == other.level && assignment == other.assignment &&
           clusters == other.clusters;
  }
};

/// Mean of the given embeddings (summed in the given order), re-normalized.
Embedding mean_embedding(const std::vector<const Embedding*>& members);

void recompute_centroids(Partition& partition, const Dataset& dataset);

/// One singleton cluster per id, cluster id = track id.
Partition singleton_partition(const Dataset& dataset, const std::vector<TrackId>& ids,
                              int level = 1);

/// Checks disjoint-cover and centroid-mean invariants; empty result iff valid.
/// Pass require_centroids = false for partitions loaded from result files,
/// which carry no centroids.
std::vector<std::string> check_partition(const Partition& partition, const Dataset& dataset,
                                         bool require_centroids = true);

enum class Protocol { automatic_termination, oracle_count };

struct ClusteringConfig {
  double tau_f_tight = 0.48;
  double delta = 0.025;
  std::optional<double> tau_v_loose;  // learned per dataset when absent
  double rho = 0.9;
  double tau_b_back = 0.4;
  int shot_window = 1;
  double voice_overlap_max = 0.20;
  double voice_min_seconds = 1.0;
  double voice_percentile = 99.9;
  Protocol protocol = Protocol::automatic_termination;
  int oracle_clusters = 0;  // required iff protocol == oracle_count

  double tau_f_loose() const { return tau_f_tight + delta; }

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

}  // namespace pcluster
