#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

#include "pcluster/core.hpp"
#include "pcluster/evaluation.hpp"
#include "pcluster/pipeline.hpp"

namespace pcluster {

/// File access failures (missing/unreadable paths). Content-level problems
/// throw std::runtime_error / std::invalid_argument instead.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using WarnFn = std::function<void(const std::string&)>;

// Dataset files are line-delimited JSON, one track per line with keys
// id, shot, frames, and optionally label, face, body, voice, voice_span.
// Unknown keys are rejected. Embeddings are normalized on load; a warning is
// emitted when an input norm deviates from 1 by more than 1e-3. Serialization
// is canonical (sorted keys, shortest round-trip decimals), so
// save(load(x)) == normalize(x) and load(save(y)) == y.

Dataset parse_dataset(const std::string& text, double fps, const WarnFn& warn = {});
std::string serialize_dataset(const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path, double fps, const WarnFn& warn = {});
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

// Result files are a single JSON document with schema_version 1 carrying the
// final assignment, per-stage history summary, bridge/back evidence, learned
// voice threshold, and oracle-reduction violations. Loaded partitions carry
// no centroids (derived data).

std::string serialize_result(const PipelineResult& result);
PipelineResult parse_result(const std::string& text);
void save_result(const PipelineResult& result, const std::filesystem::path& path);
PipelineResult load_result(const std::filesystem::path& path);

// Config files are a flat JSON object; unspecified keys take the defaults.
// tau_f_loose is always derived from tau_f_tight + delta and is rejected as a
// key. protocol is "at" or "oc" (the latter requires oracle_clusters).

ClusteringConfig parse_config(const std::string& text);
ClusteringConfig load_config(const std::filesystem::path& path);

/// Named tau_v_loose presets, a JSON object of program-set name -> threshold.
std::map<std::string, double> load_voice_presets(const std::filesystem::path& path);

std::string report_to_text(const MetricsReport& report);
std::string report_to_json(const MetricsReport& report);

std::string cooccurrence_to_text(const CoOccurrenceMatrix& matrix);
std::string cooccurrence_to_json(const CoOccurrenceMatrix& matrix);

void write_text_file(const std::string& text, const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);

}  // namespace pcluster
