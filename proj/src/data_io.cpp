#include "pcluster/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace pcluster {

using nlohmann::json;

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

std::string at_line(std::size_t line) { return "line " + std::to_string(line); }

std::int64_t require_int(const json& j, const std::string& key, std::size_t line) {
  if (!j.is_number_integer())
    throw std::runtime_error(key + " must be an integer, " + at_line(line));
  return j.get<std::int64_t>();
}

FrameSet parse_intervals(const json& j, const std::string& key, std::size_t line) {
  if (!j.is_array()) throw std::runtime_error(key + " must be a list of pairs, " + at_line(line));
  std::vector<FrameSet::Interval> intervals;
  for (const json& pair : j) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
        !pair[1].is_number_integer())
      throw std::runtime_error(key + " must hold [start, end] integer pairs, " + at_line(line));
    intervals.emplace_back(pair[0].get<std::int64_t>(), pair[1].get<std::int64_t>());
  }
  try {
    return FrameSet(std::move(intervals));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string(e.what()) + ", " + at_line(line));
  }
}

Embedding parse_embedding(const json& j, TrackId id, const char* modality, std::size_t line,
                          const WarnFn& warn) {
  if (!j.is_array() || j.empty())
    throw std::runtime_error(std::string(modality) + " must be a non-empty list of numbers, " +
                             at_line(line));
  std::vector<double> values;
  values.reserve(j.size());
  for (const json& v : j) {
    if (!v.is_number())
      throw std::runtime_error(std::string(modality) + " must hold numbers, " + at_line(line));
    values.push_back(v.get<double>());
  }
  double sq = 0.0;
  for (double v : values) sq += v * v;
  const double norm = std::sqrt(sq);
  if (warn && std::abs(norm - 1.0) > 1e-3) {
    warn("track " + std::to_string(id) + ": " + modality + " norm " + format_double(norm) +
         " deviates from 1, " + at_line(line));
  }
  try {
    return Embedding(std::move(values));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string(e.what()) + ", " + at_line(line));
  }
}

const std::set<std::string> kTrackKeys = {"id",   "shot",  "frames",    "label",
                                          "face", "body",  "voice",     "voice_span"};

Track parse_track(const std::string& text, std::size_t line, const WarnFn& warn) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("malformed " + at_line(line) + ": " + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("record must be an object, " + at_line(line));
  for (const auto& [key, value] : j.items()) {
    if (!kTrackKeys.count(key))
      throw std::runtime_error("unknown key '" + key + "', " + at_line(line));
  }
  if (!j.contains("id")) throw std::runtime_error("missing id, " + at_line(line));
  if (!j.contains("shot")) throw std::runtime_error("missing shot, " + at_line(line));
  if (!j.contains("frames")) throw std::runtime_error("missing frames, " + at_line(line));

  Track t;
  t.id = require_int(j["id"], "id", line);
  t.shot = require_int(j["shot"], "shot", line);
  t.frames = parse_intervals(j["frames"], "frames", line);
  if (j.contains("label")) {
    if (!j["label"].is_string())
      throw std::runtime_error("label must be a string, " + at_line(line));
    t.label = j["label"].get<std::string>();
  }
  if (j.contains("face")) t.face = parse_embedding(j["face"], t.id, "face", line, warn);
  if (j.contains("body")) t.body = parse_embedding(j["body"], t.id, "body", line, warn);
  if (j.contains("voice")) t.voice = parse_embedding(j["voice"], t.id, "voice", line, warn);
  if (j.contains("voice_span")) t.voice_span = parse_intervals(j["voice_span"], "voice_span", line);
  return t;
}

json intervals_to_json(const FrameSet& fs) {
  json out = json::array();
  for (const auto& [s, e] : fs.intervals()) out.push_back(json::array({s, e}));
  return out;
}

json embedding_to_json(const Embedding& e) {
  json out = json::array();
  for (double v : e.values()) out.push_back(v);
  return out;
}

}  // namespace

Dataset parse_dataset(const std::string& text, double fps, const WarnFn& warn) {
  if (!(fps > 0.0)) throw std::invalid_argument("fps must be positive");
  Dataset dataset;
  dataset.fps = fps;
  std::size_t line = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    ++line;
    const std::string record = text.substr(start, end - start);
    start = end + 1;
    if (record.find_first_not_of(" \t\r") == std::string::npos) {
      if (end == text.size()) break;
      continue;
    }
    dataset.tracks.push_back(parse_track(record, line, warn));
    if (end == text.size()) break;
  }

  const auto violations = validate_dataset(dataset);
  if (!violations.empty()) {
    std::string msg = "invalid dataset:";
    for (const Violation& v : violations) {
      msg += "\n  ";
      if (v.track) msg += "track " + std::to_string(*v.track) + ": ";
      msg += v.rule;
    }
    throw std::runtime_error(msg);
  }
  return dataset;
}

std::string serialize_dataset(const Dataset& dataset) {
  std::string out;
  for (const Track& t : dataset.tracks) {
    json j;
    j["id"] = t.id;
    j["shot"] = t.shot;
    j["frames"] = intervals_to_json(t.frames);
    if (t.label) j["label"] = *t.label;
    if (t.face) j["face"] = embedding_to_json(*t.face);
    if (t.body) j["body"] = embedding_to_json(*t.body);
    if (t.voice) j["voice"] = embedding_to_json(*t.voice);
    if (t.voice_span) j["voice_span"] = intervals_to_json(*t.voice_span);
    out += j.dump();
    out += '\n';
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& path, double fps, const WarnFn& warn) {
  return parse_dataset(read_text_file(path), fps, warn);
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_text_file(serialize_dataset(dataset), path);
}

std::string serialize_result(const PipelineResult& result) {
  json j;
  j["schema_version"] = 1;
  j["level"] = result.final.level;

  json assignment = json::array();
  for (const auto& [track, cluster] : result.final.assignment) {
    assignment.push_back(json::array({track, cluster}));
  }
  j["assignment"] = assignment;

  json history = json::array();
  for (const StageSummary& s : result.history) {
    history.push_back({{"level", s.level}, {"clusters", s.clusters}, {"stage", s.stage}});
  }
  j["history"] = history;

  json bridges = json::array();
  for (const BridgeMerge& b : result.bridges) {
    bridges.push_back({{"cluster_a", b.cluster_a},
                       {"cluster_b", b.cluster_b},
                       {"track_a", b.track_a},
                       {"track_b", b.track_b},
                       {"d_face", b.d_face},
                       {"d_voice", b.d_voice}});
  }
  j["bridges"] = bridges;

  json backs = json::array();
  for (const BackAssignment& b : result.back_assignments) {
    json e = {{"track", b.track}, {"cluster", b.cluster}, {"neighbor", b.neighbor},
              {"d1", b.d1}};
    e["d2"] = b.d2 ? json(*b.d2) : json(nullptr);
    backs.push_back(e);
  }
  j["back_assignments"] = backs;

  j["unassigned_backs"] = result.unassigned_backs;
  j["learned_tau_v_loose"] =
      result.learned_tau_v_loose ? json(*result.learned_tau_v_loose) : json(nullptr);

  json violations = json::array();
  for (const auto& [a, b] : result.oracle_violations) violations.push_back(json::array({a, b}));
  j["oracle_violations"] = violations;

  return j.dump(2) + "\n";
}

PipelineResult parse_result(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("malformed result file: ") + e.what());
  }
  if (!j.is_object() || !j.contains("schema_version") ||
      !j["schema_version"].is_number_integer())
    throw std::runtime_error("result file has no schema_version");
  if (j["schema_version"].get<int>() != 1)
    throw std::runtime_error("unsupported schema_version " + j["schema_version"].dump());
  if (!j.contains("assignment")) throw std::runtime_error("result file has no assignment");

  PipelineResult result;
  result.final.level = j.value("level", 1);
  for (const json& pair : j["assignment"]) {
    const TrackId track = pair.at(0).get<TrackId>();
    const ClusterId cluster = pair.at(1).get<ClusterId>();
    result.final.assignment[track] = cluster;
    result.final.clusters[cluster].members.push_back(track);
  }
  for (auto& [cid, cluster] : result.final.clusters) {
    std::sort(cluster.members.begin(), cluster.members.end());
  }

  for (const json& s : j.value("history", json::array())) {
    result.history.push_back({s.at("level").get<int>(), s.at("clusters").get<std::int64_t>(),
                              s.at("stage").get<std::string>()});
  }
  for (const json& b : j.value("bridges", json::array())) {
    result.bridges.push_back({b.at("cluster_a").get<ClusterId>(),
                              b.at("cluster_b").get<ClusterId>(),
                              b.at("track_a").get<TrackId>(), b.at("track_b").get<TrackId>(),
                              b.at("d_face").get<double>(), b.at("d_voice").get<double>()});
  }
  for (const json& b : j.value("back_assignments", json::array())) {
    BackAssignment back;
    back.track = b.at("track").get<TrackId>();
    back.cluster = b.at("cluster").get<ClusterId>();
    back.neighbor = b.at("neighbor").get<TrackId>();
    back.d1 = b.at("d1").get<double>();
    if (!b.at("d2").is_null()) back.d2 = b.at("d2").get<double>();
    result.back_assignments.push_back(back);
  }
  for (const json& t : j.value("unassigned_backs", json::array())) {
    result.unassigned_backs.push_back(t.get<TrackId>());
  }
  if (j.contains("learned_tau_v_loose") && !j["learned_tau_v_loose"].is_null()) {
    result.learned_tau_v_loose = j["learned_tau_v_loose"].get<double>();
  }
  for (const json& pair : j.value("oracle_violations", json::array())) {
    result.oracle_violations.emplace_back(pair.at(0).get<TrackId>(),
                                          pair.at(1).get<TrackId>());
  }
  return result;
}

void save_result(const PipelineResult& result, const std::filesystem::path& path) {
  write_text_file(serialize_result(result), path);
}

PipelineResult load_result(const std::filesystem::path& path) {
  return parse_result(read_text_file(path));
}

ClusteringConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("malformed config: ") + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("config must be a JSON object");

  const std::set<std::string> known = {
      "tau_f_tight",  "delta",         "tau_v_loose",       "rho",
      "tau_b_back",   "shot_window",   "voice_overlap_max", "voice_min_seconds",
      "voice_percentile", "protocol",  "oracle_clusters"};
  for (const auto& [key, value] : j.items()) {
    if (key == "tau_f_loose")
      throw std::runtime_error("tau_f_loose is derived from tau_f_tight + delta; do not set it");
    if (!known.count(key)) throw std::runtime_error("unknown config key '" + key + "'");
  }

  ClusteringConfig config;
  auto num = [&](const char* key, double& field) {
    if (j.contains(key)) {
      if (!j[key].is_number()) throw std::runtime_error(std::string(key) + " must be a number");
      field = j[key].get<double>();
    }
  };
  num("tau_f_tight", config.tau_f_tight);
  num("delta", config.delta);
  num("rho", config.rho);
  num("tau_b_back", config.tau_b_back);
  num("voice_overlap_max", config.voice_overlap_max);
  num("voice_min_seconds", config.voice_min_seconds);
  num("voice_percentile", config.voice_percentile);
  if (j.contains("tau_v_loose")) {
    if (!j["tau_v_loose"].is_number()) throw std::runtime_error("tau_v_loose must be a number");
    config.tau_v_loose = j["tau_v_loose"].get<double>();
  }
  if (j.contains("shot_window")) {
    if (!j["shot_window"].is_number_integer())
      throw std::runtime_error("shot_window must be an integer");
    config.shot_window = j["shot_window"].get<int>();
  }
  if (j.contains("protocol")) {
    const std::string p = j["protocol"].get<std::string>();
    if (p == "at") {
      config.protocol = Protocol::automatic_termination;
    } else if (p == "oc") {
      config.protocol = Protocol::oracle_count;
    } else {
      throw std::runtime_error("protocol must be \"at\" or \"oc\"");
    }
  }
  if (j.contains("oracle_clusters")) {
    if (!j["oracle_clusters"].is_number_integer())
      throw std::runtime_error("oracle_clusters must be an integer");
    config.oracle_clusters = j["oracle_clusters"].get<int>();
  }
  config.validate();
  return config;
}

ClusteringConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_text_file(path));
}

std::map<std::string, double> load_voice_presets(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("malformed presets file: ") + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("presets file must be a JSON object");
  std::map<std::string, double> presets;
  for (const auto& [name, value] : j.items()) {
    if (!value.is_number())
      throw std::runtime_error("preset " + name + " must be a number");
    presets[name] = value.get<double>();
  }
  return presets;
}

std::string report_to_text(const MetricsReport& report) {
  std::string out;
  out += "wcp " + format_double(report.wcp) + "\n";
  out += "nmi " + format_double(report.nmi) + "\n";
  out += "cp " + format_double(report.cp) + "\n";
  out += "cr " + format_double(report.cr) + "\n";
  out += "predicted_clusters " + std::to_string(report.predicted_clusters) + "\n";
  out += "ground_truth_clusters " + std::to_string(report.ground_truth_clusters) + "\n";
  out += std::string("weighting ") + weighting_name(report.weighting) + "\n";
  for (const CharacterRow& row : report.per_character) {
    out += "character " + row.character + " cluster " +
           (row.cluster ? std::to_string(*row.cluster) : std::string("none")) + " cp " +
           format_double(row.cp) + " cr " + format_double(row.cr) + "\n";
  }
  return out;
}

std::string report_to_json(const MetricsReport& report) {
  json j;
  j["wcp"] = report.wcp;
  j["nmi"] = report.nmi;
  j["cp"] = report.cp;
  j["cr"] = report.cr;
  j["predicted_clusters"] = report.predicted_clusters;
  j["ground_truth_clusters"] = report.ground_truth_clusters;
  j["weighting"] = weighting_name(report.weighting);
  json rows = json::array();
  for (const CharacterRow& row : report.per_character) {
    rows.push_back({{"character", row.character},
                    {"cluster", row.cluster ? json(*row.cluster) : json(nullptr)},
                    {"cp", row.cp},
                    {"cr", row.cr}});
  }
  j["per_character"] = rows;
  return j.dump(2) + "\n";
}

std::string cooccurrence_to_text(const CoOccurrenceMatrix& matrix) {
  std::string out = "total_frames " + std::to_string(matrix.total_frames) + "\n";
  for (std::size_t i = 0; i < matrix.characters.size(); ++i) {
    out += matrix.characters[i];
    for (std::size_t k = 0; k < matrix.characters.size(); ++k) {
      out += " " + format_double(matrix.values[i][k]);
    }
    out += "\n";
  }
  return out;
}

std::string cooccurrence_to_json(const CoOccurrenceMatrix& matrix) {
  json j;
  j["characters"] = matrix.characters;
  j["total_frames"] = matrix.total_frames;
  j["values"] = matrix.values;
  return j.dump(2) + "\n";
}

}  // namespace pcluster
