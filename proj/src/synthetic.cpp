#include "pcluster/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace pcluster {

namespace {

// Deterministic draws layered over mt19937_64: the standard distributions are
// implementation-defined, so uniform/normal are produced here explicitly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform01() {  // [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// `count` unit anchors with pairwise cosine similarity 1 - separation:
// a_i = sqrt(separation) * e_i + sqrt(1 - separation) * e_shared.
std::vector<Embedding> simplex_anchors(std::size_t count, std::size_t dim, double separation,
                                       const char* modality) {
  if (separation < 0.0 || separation > 1.0)
    throw std::invalid_argument(std::string(modality) + " separation must lie in [0,1]");
  if (dim < count + 1)
    throw std::invalid_argument(std::string(modality) + " dim must be at least anchors + 1");
  const double axis = std::sqrt(separation);
  const double shared = std::sqrt(1.0 - separation);
  std::vector<Embedding> anchors;
  anchors.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> v(dim, 0.0);
    v[i] = axis;
    v[count] = shared;
    anchors.emplace_back(std::move(v));
  }
  return anchors;
}

Embedding sample_around(const Embedding& anchor, double sigma, Rng& rng) {
  std::vector<double> v = anchor.values();
  if (sigma > 0.0) {
    for (double& x : v) x += sigma * rng.normal();
  }
  return Embedding(std::move(v));
}

}  // namespace

double expected_intra_distance(double sigma, std::size_t dim) {
  const double s2d = sigma * sigma * static_cast<double>(dim);
  return s2d / (1.0 + s2d);
}

double expected_inter_distance(double sigma, std::size_t dim, double separation) {
  const double s2d = sigma * sigma * static_cast<double>(dim);
  return 1.0 - (1.0 - separation) / (1.0 + s2d);
}

std::pair<Dataset, Manifest> generate(const GeneratorParams& params) {
  if (params.n_characters < 1) throw std::invalid_argument("infeasible params: no characters");
  if (params.n_tracks < params.n_characters)
    throw std::invalid_argument("infeasible params: fewer tracks than characters");
  for (double p : {params.p_speaking, params.p_back, params.p_concurrent}) {
    if (p < 0.0 || p > 1.0)
      throw std::invalid_argument("infeasible params: probability outside [0,1]");
  }
  if (params.scenes < 1 || params.shots_per_scene < 1 || params.frames_per_shot < 1)
    throw std::invalid_argument("infeasible params: empty timeline");
  if (!(params.fps > 0.0)) throw std::invalid_argument("infeasible params: fps must be positive");
  for (const ModalityModel* m : {&params.face, &params.body, &params.voice}) {
    if (m->sigma < 0.0) throw std::invalid_argument("infeasible params: negative sigma");
  }

  const std::size_t n_chars = static_cast<std::size_t>(params.n_characters);
  Manifest manifest;
  manifest.params = params;
  manifest.face_anchors = simplex_anchors(n_chars, params.face.dim, params.face.separation,
                                          "face");
  manifest.voice_anchors = simplex_anchors(n_chars, params.voice.dim, params.voice.separation,
                                           "voice");
  // One clothing anchor per (character, scene), all mutually separated.
  const auto flat_body = simplex_anchors(n_chars * static_cast<std::size_t>(params.scenes),
                                         params.body.dim, params.body.separation, "body");
  manifest.body_anchors.resize(n_chars);
  for (std::size_t c = 0; c < n_chars; ++c) {
    for (int s = 0; s < params.scenes; ++s) {
      manifest.body_anchors[c].push_back(flat_body[c * params.scenes + s]);
    }
  }
  for (std::size_t c = 0; c < n_chars; ++c) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "char_%02zu", c);
    manifest.character_names.emplace_back(buf);
  }

  Rng rng(params.seed);

  // Slots of one or two concurrent tracks; one slot per shot until the
  // timeline wraps, then shots split their frame range between slots.
  struct Slot {
    std::vector<int> characters;
  };
  std::vector<Slot> slots;
  int placed = 0;
  int round_robin = 0;
  while (placed < params.n_tracks) {
    Slot slot;
    slot.characters.push_back(round_robin++ % params.n_characters);
    ++placed;
    if (placed < params.n_tracks && params.n_characters > 1 &&
        rng.bernoulli(params.p_concurrent)) {
      int other = static_cast<int>(rng.below(static_cast<std::uint64_t>(params.n_characters - 1)));
      if (other >= slot.characters.front()) ++other;
      slot.characters.push_back(other);
      ++placed;
    }
    slots.push_back(std::move(slot));
  }

  const std::int64_t total_shots =
      static_cast<std::int64_t>(params.scenes) * params.shots_per_scene;
  const std::int64_t n_slots = static_cast<std::int64_t>(slots.size());
  std::vector<std::int64_t> slot_shot(slots.size());
  std::vector<std::size_t> slots_in_shot(static_cast<std::size_t>(total_shots), 0);
  for (std::int64_t g = 0; g < n_slots; ++g) {
    slot_shot[g] = g * total_shots / n_slots;
    slots_in_shot[static_cast<std::size_t>(slot_shot[g])] += 1;
  }

  Dataset dataset;
  dataset.fps = params.fps;
  TrackId next_id = 0;
  std::vector<std::size_t> seen_in_shot(static_cast<std::size_t>(total_shots), 0);
  for (std::size_t g = 0; g < slots.size(); ++g) {
    const std::int64_t shot = slot_shot[g];
    const std::size_t share = slots_in_shot[static_cast<std::size_t>(shot)];
    const std::size_t pos = seen_in_shot[static_cast<std::size_t>(shot)]++;
    const std::int64_t shot_start = shot * params.frames_per_shot;
    const std::int64_t chunk = params.frames_per_shot / static_cast<std::int64_t>(share);
    if (chunk < 1) throw std::invalid_argument("infeasible params: more slots than frames in a shot");
    const std::int64_t lo = shot_start + static_cast<std::int64_t>(pos) * chunk;
    const std::int64_t hi =
        pos + 1 == share ? shot_start + params.frames_per_shot - 1 : lo + chunk - 1;
    const int scene = static_cast<int>(shot / params.shots_per_scene);

    std::vector<TrackId> slot_ids;
    for (int character : slots[g].characters) {
      Track t;
      t.id = next_id++;
      t.shot = shot;
      t.frames = FrameSet::single(lo, hi);
      t.label = manifest.character_names[static_cast<std::size_t>(character)];
      const bool back = rng.bernoulli(params.p_back);
      const bool speaking = !back && rng.bernoulli(params.p_speaking);
      t.body = sample_around(manifest.body_anchors[static_cast<std::size_t>(character)]
                                                  [static_cast<std::size_t>(scene)],
                             params.body.sigma, rng);
      if (!back) {
        t.face = sample_around(manifest.face_anchors[static_cast<std::size_t>(character)],
                               params.face.sigma, rng);
      }
      if (speaking) {
        t.voice = sample_around(manifest.voice_anchors[static_cast<std::size_t>(character)],
                                params.voice.sigma, rng);
        t.voice_span = t.frames;
      }
      manifest.tracks.push_back({t.id, character, scene, static_cast<int>(shot), back, speaking});
      slot_ids.push_back(t.id);
      dataset.tracks.push_back(std::move(t));
    }
    for (std::size_t i = 0; i < slot_ids.size(); ++i) {
      for (std::size_t k = i + 1; k < slot_ids.size(); ++k) {
        manifest.cannot_links.emplace_back(slot_ids[i], slot_ids[k]);
      }
    }
  }
  return {std::move(dataset), std::move(manifest)};
}

std::string manifest_to_json(const Manifest& manifest) {
  using nlohmann::json;
  json j;
  j["n_characters"] = manifest.params.n_characters;
  j["n_tracks"] = manifest.params.n_tracks;
  j["seed"] = manifest.params.seed;
  j["characters"] = manifest.character_names;

  json tracks = json::array();
  for (const PlannedTrack& t : manifest.tracks) {
    tracks.push_back({{"id", t.id},
                      {"character", t.character},
                      {"scene", t.scene},
                      {"shot", t.shot},
                      {"back", t.back},
                      {"speaking", t.speaking}});
  }
  j["tracks"] = tracks;

  json links = json::array();
  for (const auto& [a, b] : manifest.cannot_links) links.push_back(json::array({a, b}));
  j["cannot_links"] = links;

  auto anchors_json = [](const std::vector<Embedding>& anchors) {
    json out = json::array();
    for (const Embedding& a : anchors) out.push_back(a.values());
    return out;
  };
  j["face_anchors"] = anchors_json(manifest.face_anchors);
  j["voice_anchors"] = anchors_json(manifest.voice_anchors);
  json body = json::array();
  for (const auto& per_scene : manifest.body_anchors) body.push_back(anchors_json(per_scene));
  j["body_anchors"] = body;
  return j.dump(2) + "\n";
}

}  // namespace pcluster
