#include "pcluster/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace pcluster {

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::face: return "face";
    case Modality::body: return "body";
    case Modality::voice: return "voice";
  }
  return "?";
}

Embedding::Embedding(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw std::invalid_argument("empty embedding");
  double sq = 0.0;
  for (double v : values_) sq += v * v;
  const double n = std::sqrt(sq);
  if (n < 1e-12) throw std::invalid_argument("zero-norm embedding");
  // Skip renormalization near 1 so that normalization is idempotent and
  // already-normalized files round-trip bit-exactly.
  if (std::abs(n - 1.0) > 1e-9) {
    for (double& v : values_) v /= n;
  }
}

double Embedding::norm() const {
  double sq = 0.0;
  for (double v : values_) sq += v * v;
  return std::sqrt(sq);
}

double dot(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("incompatible embeddings");
  double s = 0.0;
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  return s;
}

FrameSet::FrameSet(std::vector<Interval> intervals) : intervals_(std::move(intervals)) {
  for (std::size_t i = 0; i < intervals_.size(); ++i) {
    if (intervals_[i].first > intervals_[i].second)
      throw std::invalid_argument("inverted interval");
    if (i > 0 && intervals_[i].first <= intervals_[i - 1].second)
      throw std::invalid_argument("intervals not sorted and disjoint");
  }
}

FrameSet FrameSet::single(std::int64_t start, std::int64_t end) {
  return FrameSet{{{start, end}}};
}

std::int64_t FrameSet::count() const {
  std::int64_t n = 0;
  for (const auto& [s, e] : intervals_) n += e - s + 1;
  return n;
}

std::int64_t FrameSet::min_frame() const {
  if (empty()) throw std::logic_error("empty frame set");
  return intervals_.front().first;
}

std::int64_t FrameSet::max_frame() const {
  if (empty()) throw std::logic_error("empty frame set");
  return intervals_.back().second;
}

std::int64_t FrameSet::median_frame() const {
  if (empty()) throw std::logic_error("empty frame set");
  std::int64_t k = (count() - 1) / 2;
  for (const auto& [s, e] : intervals_) {
    const std::int64_t len = e - s + 1;
    if (k < len) return s + k;
    k -= len;
  }
  return intervals_.back().second;  // unreachable
}

bool FrameSet::intersects(const FrameSet& other) const {
  std::size_t i = 0, j = 0;
  while (i < intervals_.size() && j < other.intervals_.size()) {
    const auto& a = intervals_[i];
    const auto& b = other.intervals_[j];
    if (a.second < b.first) {
      ++i;
    } else if (b.second < a.first) {
      ++j;
    } else {
      return true;
    }
  }
  return false;
}

std::int64_t FrameSet::intersection_count(const FrameSet& other) const {
  std::int64_t n = 0;
  std::size_t i = 0, j = 0;
  while (i < intervals_.size() && j < other.intervals_.size()) {
    const auto& a = intervals_[i];
    const auto& b = other.intervals_[j];
    const std::int64_t lo = std::max(a.first, b.first);
    const std::int64_t hi = std::min(a.second, b.second);
    if (lo <= hi) n += hi - lo + 1;
    if (a.second < b.second) {
      ++i;
    } else {
      ++j;
    }
  }
  return n;
}

FrameSet FrameSet::union_of(const std::vector<const FrameSet*>& sets) {
  std::vector<Interval> all;
  for (const FrameSet* s : sets) {
    all.insert(all.end(), s->intervals_.begin(), s->intervals_.end());
  }
  if (all.empty()) return {};
  std::sort(all.begin(), all.end());
  std::vector<Interval> merged;
  merged.push_back(all.front());
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (all[i].first <= merged.back().second + 1) {
      merged.back().second = std::max(merged.back().second, all[i].second);
    } else {
      merged.push_back(all[i]);
    }
  }
  FrameSet out;
  out.intervals_ = std::move(merged);
  return out;
}

bool Track::has(Modality m) const {
  switch (m) {
    case Modality::face: return face.has_value();
    case Modality::body: return body.has_value();
    case Modality::voice: return voice.has_value();
  }
  return false;
}

const Embedding& Track::embedding(Modality m) const {
  switch (m) {
    case Modality::face:
      if (face) return *face;
      break;
    case Modality::body:
      if (body) return *body;
      break;
    case Modality::voice:
      if (voice) return *voice;
      break;
  }
  throw std::logic_error("track " + std::to_string(id) + " has no " + modality_name(m) +
                         " embedding");
}

std::map<TrackId, std::size_t> track_index(const Dataset& dataset) {
  std::map<TrackId, std::size_t> idx;
  for (std::size_t i = 0; i < dataset.tracks.size(); ++i) {
    idx.emplace(dataset.tracks[i].id, i);
  }
  return idx;
}

std::vector<Violation> validate_dataset(const Dataset& dataset) {
  std::vector<Violation> out;
  std::set<TrackId> seen;
  std::map<Modality, std::size_t> dims;

  for (const Track& t : dataset.tracks) {
    if (!seen.insert(t.id).second) out.push_back({t.id, "duplicate id"});
    if (!t.face && !t.body) out.push_back({t.id, "no visual modality"});
    if (t.frames.empty()) out.push_back({t.id, "empty frames"});
    if (t.voice && !t.voice_span) out.push_back({t.id, "voice without span"});
    for (Modality m : {Modality::face, Modality::body, Modality::voice}) {
      if (!t.has(m)) continue;
      const Embedding& e = t.embedding(m);
      if (std::abs(e.norm() - 1.0) > 1e-6)
        out.push_back({t.id, std::string(modality_name(m)) + " embedding not normalized"});
      auto [it, inserted] = dims.emplace(m, e.dim());
      if (!inserted && it->second != e.dim())
        out.push_back({t.id, std::string(modality_name(m)) + " embedding dimension mismatch"});
    }
  }

  // Shots must follow video order: sorted by median frame, shot indices are
  // non-decreasing.
  std::vector<const Track*> order;
  order.reserve(dataset.tracks.size());
  for (const Track& t : dataset.tracks) {
    if (!t.frames.empty()) order.push_back(&t);
  }
  std::sort(order.begin(), order.end(), [](const Track* a, const Track* b) {
    const auto ma = a->frames.median_frame();
    const auto mb = b->frames.median_frame();
    if (ma != mb) return ma < mb;
    return a->shot < b->shot;
  });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (order[i]->shot < order[i - 1]->shot)
      out.push_back({order[i]->id, "shot index decreases against frame order"});
  }
  return out;
}

Embedding mean_embedding(const std::vector<const Embedding*>& members) {
  if (members.empty()) throw std::invalid_argument("mean of no embeddings");
  std::vector<double> sum(members.front()->dim(), 0.0);
  for (const Embedding* e : members) {
    if (e->dim() != sum.size()) throw std::invalid_argument("incompatible embeddings");
    const auto& v = e->values();
    for (std::size_t i = 0; i < v.size(); ++i) sum[i] += v[i];
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  for (double& x : sum) x *= inv;
  return Embedding(std::move(sum));
}

void recompute_centroids(Partition& partition, const Dataset& dataset) {
  const auto idx = track_index(dataset);
  for (auto& [cid, cluster] : partition.clusters) {
    cluster.centroids.clear();
    for (Modality m : {Modality::face, Modality::body, Modality::voice}) {
      std::vector<const Embedding*> feats;
      for (TrackId t : cluster.members) {
        const Track& track = dataset.tracks[idx.at(t)];
        if (track.has(m)) feats.push_back(&track.embedding(m));
      }
      if (!feats.empty()) cluster.centroids.emplace(m, mean_embedding(feats));
    }
  }
}

Partition singleton_partition(const Dataset& dataset, const std::vector<TrackId>& ids,
                              int level) {
  Partition p;
  p.level = level;
  const auto idx = track_index(dataset);
  for (TrackId t : ids) {
    const Track& track = dataset.tracks[idx.at(t)];
    Cluster c;
    c.members = {t};
    for (Modality m : {Modality::face, Modality::body, Modality::voice}) {
      if (track.has(m)) c.centroids.emplace(m, track.embedding(m));
    }
    p.assignment.emplace(t, t);
    p.clusters.emplace(t, std::move(c));
  }
  return p;
}

std::vector<std::string> check_partition(const Partition& partition, const Dataset& dataset,
                                         bool require_centroids) {
  std::vector<std::string> out;
  const auto idx = track_index(dataset);

  std::set<TrackId> covered;
  for (const auto& [cid, cluster] : partition.clusters) {
    if (cluster.members.empty()) out.push_back("cluster " + std::to_string(cid) + " is empty");
    if (!std::is_sorted(cluster.members.begin(), cluster.members.end()))
      out.push_back("cluster " + std::to_string(cid) + " members not sorted");
    for (TrackId t : cluster.members) {
      if (!covered.insert(t).second)
        out.push_back("track " + std::to_string(t) + " in more than one cluster");
      auto it = partition.assignment.find(t);
      if (it == partition.assignment.end() || it->second != cid)
        out.push_back("track " + std::to_string(t) + " not assigned to its cluster");
      if (!idx.count(t)) out.push_back("track " + std::to_string(t) + " unknown to dataset");
    }
  }
  for (const auto& [t, cid] : partition.assignment) {
    if (!covered.count(t))
      out.push_back("assigned track " + std::to_string(t) + " missing from clusters");
  }

  if (require_centroids) {
    for (const auto& [cid, cluster] : partition.clusters) {
      for (Modality m : {Modality::face, Modality::body, Modality::voice}) {
        std::vector<const Embedding*> feats;
        for (TrackId t : cluster.members) {
          auto it = idx.find(t);
          if (it == idx.end()) continue;
          const Track& track = dataset.tracks[it->second];
          if (track.has(m)) feats.push_back(&track.embedding(m));
        }
        const bool have = cluster.centroids.count(m) > 0;
        if (feats.empty()) {
          if (have)
            out.push_back("cluster " + std::to_string(cid) + " has spurious " +
                          modality_name(m) + " centroid");
          continue;
        }
        if (!have) {
          out.push_back("cluster " + std::to_string(cid) + " missing " + modality_name(m) +
                        " centroid");
          continue;
        }
        const Embedding expect = mean_embedding(feats);
        const Embedding& got = cluster.centroids.at(m);
        if (expect.dim() != got.dim()) {
          out.push_back("cluster " + std::to_string(cid) + " " + modality_name(m) +
                        " centroid dimension mismatch");
          continue;
        }
        double err = 0.0;
        for (std::size_t i = 0; i < expect.dim(); ++i)
          err = std::max(err, std::abs(expect.values()[i] - got.values()[i]));
        if (err > 1e-9)
          out.push_back("cluster " + std::to_string(cid) + " " + modality_name(m) +
                        " centroid is not the member mean");
      }
    }
  }
  return out;
}

void ClusteringConfig::validate() const {
  auto in_range = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  if (!in_range(tau_f_tight, 0.0, 2.0)) throw std::invalid_argument("tau_f_tight out of range [0,2]");
  if (!in_range(delta, 0.0, 2.0)) throw std::invalid_argument("delta out of range [0,2]");
  if (!in_range(tau_f_loose(), 0.0, 2.0))
    throw std::invalid_argument("tau_f_loose out of range [0,2]");
  if (tau_v_loose && !in_range(*tau_v_loose, 0.0, 2.0))
    throw std::invalid_argument("tau_v_loose out of range [0,2]");
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("rho out of range (0,1]");
  if (!in_range(tau_b_back, 0.0, 2.0)) throw std::invalid_argument("tau_b_back out of range [0,2]");
  if (shot_window < 0) throw std::invalid_argument("shot_window must be non-negative");
  if (!in_range(voice_overlap_max, 0.0, 1.0))
    throw std::invalid_argument("voice_overlap_max out of range [0,1]");
  if (!(voice_min_seconds > 0.0)) throw std::invalid_argument("voice_min_seconds must be positive");
  if (!(voice_percentile > 0.0 && voice_percentile < 100.0))
    throw std::invalid_argument("voice_percentile out of range (0,100)");
  if (protocol == Protocol::oracle_count && oracle_clusters < 1)
    throw std::invalid_argument("oracle_clusters must be positive");
}

}  // namespace pcluster
