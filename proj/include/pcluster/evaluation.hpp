#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pcluster/core.hpp"

namespace pcluster {

enum class Weighting { per_track, per_frame };

const char* weighting_name(Weighting w);

/// Weighted cluster purity: sum over clusters of the weight of the most
/// frequent label, divided by total weight. Weight is 1 per track or the
/// track's frame count. Throws when an evaluated track has no label.
double wcp(const Partition& partition, const Dataset& dataset, Weighting weighting);

/// Normalized mutual information 2*I(Y;C)/(H(Y)+H(C)), entropies in nats.
/// Both entropies zero -> 1; exactly one zero -> 0.
double nmi(const Partition& partition, const Dataset& dataset, Weighting weighting);

struct HungarianResult {
  // assignment[row] = column, or nullopt when the row is unmatched
  // (happens when there are more rows than columns).
  std::vector<std::optional<int>> assignment;
  double cost = 0.0;  // total over matched pairs
};

/// Minimum-cost assignment of min(rows, cols) pairs. Rectangular inputs are
/// padded implicitly with the worst entry, which never alters the optimal
/// real assignment. Among optimal assignments, returns the lexicographically
/// smallest row-to-column mapping (unmatched ranks after every column).
HungarianResult hungarian(const std::vector<std::vector<double>>& cost);

struct CharacterRow {
  std::string character;
  std::optional<ClusterId> cluster;
  double cp = 0.0;
  double cr = 0.0;

  friend bool operator==(const CharacterRow&, const CharacterRow&) = default;
};

struct CharacterPr {
  double cp = 0.0;
  double cr = 0.0;
  std::vector<CharacterRow> rows;  // ascending character name
};

/// Character precision/recall under the unique character-to-cluster
/// assignment maximizing total CR; characters without a cluster score zero.
/// Means are unweighted over all characters.
CharacterPr character_pr(const Partition& partition, const Dataset& dataset,
                         Weighting weighting);

struct MetricsReport {
  double wcp = 0.0;
  double nmi = 0.0;
  double cp = 0.0;
  double cr = 0.0;
  std::int64_t predicted_clusters = 0;
  std::int64_t ground_truth_clusters = 0;
  std::vector<CharacterRow> per_character;
  Weighting weighting = Weighting::per_track;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

MetricsReport evaluate(const Partition& partition, const Dataset& dataset, Weighting weighting);

/// Unweighted arithmetic mean of per-episode reports (per-character rows are
/// omitted; cluster counts are averaged and rounded down).
MetricsReport average_reports(const std::vector<MetricsReport>& reports);

struct CoOccurrenceMatrix {
  std::vector<std::string> characters;
  std::vector<std::vector<double>> values;  // symmetric, fractions of total_frames
  std::int64_t total_frames = 0;
};

/// Fraction of all frames in which both characters appear, from ground-truth
/// labels. total_frames = 0 derives max frame index + 1. Throws when a
/// requested character labels no track.
CoOccurrenceMatrix cooccurrence_ground_truth(const Dataset& dataset,
                                             const std::vector<std::string>& characters,
                                             std::int64_t total_frames = 0);

/// Same, but each clustered track contributes to the majority ground-truth
/// label of its cluster (majority by track count, ties by name).
CoOccurrenceMatrix cooccurrence_predicted(const Dataset& dataset, const Partition& partition,
                                          const std::vector<std::string>& characters,
                                          std::int64_t total_frames = 0);

/// Entrywise predicted / ground-truth; 0/0 -> 1.
CoOccurrenceMatrix relative_cooccurrence(const CoOccurrenceMatrix& predicted,
                                         const CoOccurrenceMatrix& ground_truth);

}  // namespace pcluster
