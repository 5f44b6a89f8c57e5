#pragma once

// Shared builders for test datasets. Kept free of the library's internal
// logic so that expected values can be derived independently.

#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcluster/core.hpp"

namespace testutil {

using namespace pcluster;

// 2D unit vector at angle theta; cosine distance between two of these is
// 1 - cos(theta_a - theta_b).
inline Embedding unit2(double theta) {
  return Embedding({std::cos(theta), std::sin(theta)});
}

// Angle whose unit2 vector sits at the given cosine distance from unit2(0).
inline double angle_for_distance(double d) { return std::acos(1.0 - d); }

struct TrackSpec {
  TrackId id = 0;
  std::int64_t frame_lo = 0;
  std::int64_t frame_hi = 0;
  std::int64_t shot = 0;
  std::optional<Embedding> face;
  std::optional<Embedding> body;
  std::optional<Embedding> voice;
  std::optional<FrameSet> voice_span;
  std::optional<std::string> label;
};

inline Track make_track(const TrackSpec& spec) {
  Track t;
  t.id = spec.id;
  t.frames = FrameSet::single(spec.frame_lo, spec.frame_hi);
  t.shot = spec.shot;
  t.face = spec.face;
  t.body = spec.body;
  t.voice = spec.voice;
  t.voice_span = spec.voice_span;
  if (spec.voice && !spec.voice_span) t.voice_span = t.frames;
  t.label = spec.label;
  return t;
}

// Random unit vector via Gaussian components.
inline Embedding random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  for (double& x : v) x = normal(rng);
  return Embedding(std::move(v));
}

}  // namespace testutil
