#pragma once

#include <set>
#include <vector>

#include "pcluster/core.hpp"

namespace pcluster {

class CannotLinkSet;
struct Partition;

/// Track ids whose voice embedding is usable: the voice span is at least
/// min_seconds long at dataset.fps, and at most overlap_max of its frames are
/// shared with any other track's voice span. Single pass over the original
/// spans, so applying the mask and filtering again is a no-op.
std::set<TrackId> filter_voice_tracks(const Dataset& dataset, double overlap_max,
                                      double min_seconds);

/// Copy of the dataset with voice and voice_span removed from tracks outside
/// `usable`; face/body are untouched.
Dataset apply_voice_mask(Dataset dataset, const std::set<TrackId>& usable);

enum class NegativeSource { cannot_link, cross_cluster };

/// Voice distance between two tracks treated as different identities.
struct NegativeDistanceSample {
  TrackId a = 0;  // a < b
  TrackId b = 0;
  double d_voice = 0.0;
  NegativeSource source = NegativeSource::cannot_link;
};

/// Different-identity voice distances: every cannot-link pair whose voices are
/// both present, plus every voiced pair lying in different stage-1 clusters.
/// Pairs found by both routes are counted once as cannot_link. Expects a
/// dataset whose unusable voices are already masked.
std::vector<NegativeDistanceSample> collect_voice_negatives(const Partition& stage1,
                                                            const CannotLinkSet& cannot,
                                                            const Dataset& dataset);

/// The (100 - percentile)-th percentile of the negative distances, by linear
/// interpolation between order statistics (inclusive endpoints). With the
/// default 99.9, at most 0.1% of negatives fall below the returned threshold.
/// Throws "insufficient negatives" on an empty sample set.
double learn_voice_threshold(const std::vector<NegativeDistanceSample>& samples,
                             double percentile);

}  // namespace pcluster
