#include "pcluster/threshold.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>

#include "pcluster/distance.hpp"
#include "pcluster/pipeline.hpp"

namespace pcluster {

namespace {

// Piecewise-constant coverage of all voice spans, as (position, coverage from
// this position on) breakpoints.
struct Coverage {
  std::vector<std::pair<std::int64_t, std::int64_t>> steps;

  // Frames of [lo, hi] covered by at least `min_cover` spans.
  std::int64_t covered(std::int64_t lo, std::int64_t hi, std::int64_t min_cover) const {
    std::int64_t total = 0;
    auto it = std::upper_bound(steps.begin(), steps.end(), std::make_pair(lo, INT64_MAX));
    if (it != steps.begin()) --it;
    for (; it != steps.end() && it->first <= hi; ++it) {
      const std::int64_t seg_lo = std::max(lo, it->first);
      const std::int64_t seg_hi =
          std::min(hi, std::next(it) == steps.end() ? hi : std::next(it)->first - 1);
      if (seg_lo <= seg_hi && it->second >= min_cover) total += seg_hi - seg_lo + 1;
    }
    return total;
  }
};

Coverage build_coverage(const std::vector<const Track*>& voiced) {
  std::map<std::int64_t, std::int64_t> delta;
  for (const Track* t : voiced) {
    for (const auto& [s, e] : t->voice_span->intervals()) {
      delta[s] += 1;
      delta[e + 1] -= 1;
    }
  }
  Coverage cov;
  std::int64_t cur = 0;
  for (const auto& [pos, d] : delta) {
    cur += d;
    cov.steps.emplace_back(pos, cur);
  }
  return cov;
}

}  // namespace

std::set<TrackId> filter_voice_tracks(const Dataset& dataset, double overlap_max,
                                      double min_seconds) {
  if (!(dataset.fps > 0.0)) throw std::invalid_argument("fps must be positive");
  std::vector<const Track*> voiced;
  for (const Track& t : dataset.tracks) {
    if (t.voice && t.voice_span) voiced.push_back(&t);
  }
  const Coverage cov = build_coverage(voiced);
  const double min_frames = min_seconds * dataset.fps;

  std::set<TrackId> usable;
  for (const Track* t : voiced) {
    const std::int64_t total = t->voice_span->count();
    if (static_cast<double>(total) < min_frames) continue;
    std::int64_t overlapped = 0;
    // Own span contributes coverage exactly 1, so coverage >= 2 means another
    // track's span is present too.
    for (const auto& [s, e] : t->voice_span->intervals()) {
      overlapped += cov.covered(s, e, 2);
    }
    if (static_cast<double>(overlapped) / static_cast<double>(total) > overlap_max) continue;
    usable.insert(t->id);
  }
  return usable;
}

Dataset apply_voice_mask(Dataset dataset, const std::set<TrackId>& usable) {
  for (Track& t : dataset.tracks) {
    if (t.voice && !usable.count(t.id)) {
      t.voice.reset();
      t.voice_span.reset();
    }
  }
  return dataset;
}

std::vector<NegativeDistanceSample> collect_voice_negatives(const Partition& stage1,
                                                            const CannotLinkSet& cannot,
                                                            const Dataset& dataset) {
  const auto idx = track_index(dataset);
  auto voiced = [&](TrackId id) {
    auto it = idx.find(id);
    return it != idx.end() && dataset.tracks[it->second].voice.has_value();
  };
  auto voice_of = [&](TrackId id) -> const Embedding& {
    return *dataset.tracks[idx.at(id)].voice;
  };

  std::map<std::pair<TrackId, TrackId>, NegativeDistanceSample> samples;
  for (const auto& [a, b] : cannot.pairs()) {
    if (!voiced(a) || !voiced(b)) continue;
    samples.emplace(std::make_pair(a, b),
                    NegativeDistanceSample{a, b, cosine_distance(voice_of(a), voice_of(b)),
                                           NegativeSource::cannot_link});
  }

  std::vector<TrackId> clustered_voiced;
  for (const auto& [t, cid] : stage1.assignment) {
    if (voiced(t)) clustered_voiced.push_back(t);
  }
  for (std::size_t i = 0; i < clustered_voiced.size(); ++i) {
    for (std::size_t j = i + 1; j < clustered_voiced.size(); ++j) {
      const TrackId a = clustered_voiced[i];
      const TrackId b = clustered_voiced[j];
      if (stage1.assignment.at(a) == stage1.assignment.at(b)) continue;
      samples.emplace(std::make_pair(std::min(a, b), std::max(a, b)),
                      NegativeDistanceSample{std::min(a, b), std::max(a, b),
                                             cosine_distance(voice_of(a), voice_of(b)),
                                             NegativeSource::cross_cluster});
    }
  }

  std::vector<NegativeDistanceSample> out;
  out.reserve(samples.size());
  for (const auto& [key, s] : samples) out.push_back(s);
  return out;
}

double learn_voice_threshold(const std::vector<NegativeDistanceSample>& samples,
                             double percentile) {
  if (samples.empty()) throw std::runtime_error("insufficient negatives");
  if (!(percentile > 0.0 && percentile < 100.0))
    throw std::invalid_argument("voice_percentile out of range (0,100)");
  std::vector<double> d;
  d.reserve(samples.size());
  for (const auto& s : samples) d.push_back(s.d_voice);
  std::sort(d.begin(), d.end());

  const double q = (100.0 - percentile) / 100.0;
  const double pos = q * static_cast<double>(d.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= d.size()) return d.back();
  return d[lo] * (1.0 - frac) + d[lo + 1] * frac;
}

}  // namespace pcluster
