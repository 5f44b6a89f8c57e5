#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pcluster/core.hpp"

namespace pcluster {

/// Noise model for one modality: samples are anchor + isotropic Gaussian noise
/// of scale sigma, re-normalized. Anchors for distinct identities are planted
/// with pairwise cosine distance `separation` (simplex construction, so
/// separation lies in [0, 1] and the embedding needs anchors + 1 dimensions).
struct ModalityModel {
  std::size_t dim = 64;
  double sigma = 0.05;
  double separation = 1.0;
};

struct GeneratorParams {
  int n_characters = 4;
  int n_tracks = 40;
  ModalityModel face;
  ModalityModel body;
  ModalityModel voice;
  double p_speaking = 0.3;   // face tracks only; backs never speak
  double p_back = 0.1;
  double p_concurrent = 0.2; // chance a slot holds two overlapping characters
  int scenes = 2;            // clothing anchors per character
  int shots_per_scene = 4;
  int frames_per_shot = 100;
  double fps = 25.0;
  std::uint64_t seed = 0;
};

struct PlannedTrack {
  TrackId id = 0;
  int character = 0;
  int scene = 0;
  int shot = 0;
  bool back = false;
  bool speaking = false;
};

struct Manifest {
  GeneratorParams params;
  std::vector<std::string> character_names;
  std::vector<PlannedTrack> tracks;
  std::vector<std::pair<TrackId, TrackId>> cannot_links;  // planted overlaps
  std::vector<Embedding> face_anchors;                    // per character
  std::vector<Embedding> voice_anchors;                   // per character
  std::vector<std::vector<Embedding>> body_anchors;       // [character][scene]
};

/// Deterministic labelled dataset: per character one face and voice anchor,
/// per (character, scene) one clothing anchor; concurrent slots plant
/// cannot-links between distinct characters; backs omit the face. Throws on
/// infeasible parameters.
std::pair<Dataset, Manifest> generate(const GeneratorParams& params);

std::string manifest_to_json(const Manifest& manifest);

/// Calibration of the noise model: expected cosine distance between two
/// samples around the same anchor is approximately s2d / (1 + s2d) with
/// s2d = sigma^2 * dim, and between anchors at separation `sep` it is
/// 1 - (1 - sep) / (1 + s2d).
double expected_intra_distance(double sigma, std::size_t dim);
double expected_inter_distance(double sigma, std::size_t dim, double separation);

}  // namespace pcluster
