// Command-line front end: cluster | eval | cooccur | learn-voice-threshold |
// synth | validate. Exit codes: 0 success, 1 domain error, 2 usage/IO error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcluster/core.hpp"
#include "pcluster/data_io.hpp"
#include "pcluster/distance.hpp"
#include "pcluster/evaluation.hpp"
#include "pcluster/parallel.hpp"
#include "pcluster/pipeline.hpp"
#include "pcluster/synthetic.hpp"
#include "pcluster/threshold.hpp"

namespace {

using namespace pcluster;

void apply_protocol_flag(ClusteringConfig& config, const std::string& flag) {
  if (flag.empty()) return;
  if (flag == "at") {
    config.protocol = Protocol::automatic_termination;
    return;
  }
  if (flag.rfind("oc:", 0) == 0) {
    config.protocol = Protocol::oracle_count;
    config.oracle_clusters = std::stoi(flag.substr(3));
    if (config.oracle_clusters < 1)
      throw CLI::ValidationError("--protocol", "oc requires a positive cluster count");
    return;
  }
  throw CLI::ValidationError("--protocol", "expected at or oc:<C>");
}

Weighting parse_weighting(const std::string& flag) {
  if (flag == "track") return Weighting::per_track;
  if (flag == "frame") return Weighting::per_frame;
  throw CLI::ValidationError("--weighting", "expected track or frame");
}

// Concatenates several dataset files into one program run. Shot and frame
// indices of each file are offset past the previous file's so that no
// cross-file pair can look temporally close.
Dataset load_concatenated(const std::vector<std::string>& paths, double fps, int shot_window) {
  Dataset merged;
  merged.fps = fps;
  std::int64_t shot_offset = 0;
  std::int64_t frame_offset = 0;
  for (const std::string& path : paths) {
    Dataset part = load_dataset(path, fps, [](const std::string& w) {
      std::cerr << "warning: " << w << "\n";
    });
    std::int64_t max_shot = 0;
    std::int64_t max_frame = 0;
    for (Track& t : part.tracks) {
      t.shot += shot_offset;
      std::vector<FrameSet::Interval> shifted;
      for (auto [s, e] : t.frames.intervals()) shifted.emplace_back(s + frame_offset, e + frame_offset);
      t.frames = FrameSet(std::move(shifted));
      if (t.voice_span) {
        std::vector<FrameSet::Interval> vs;
        for (auto [s, e] : t.voice_span->intervals()) vs.emplace_back(s + frame_offset, e + frame_offset);
        t.voice_span = FrameSet(std::move(vs));
      }
      max_shot = std::max(max_shot, t.shot);
      max_frame = std::max(max_frame, t.frames.max_frame());
      merged.tracks.push_back(std::move(t));
    }
    shot_offset = max_shot + shot_window + 1;
    frame_offset = max_frame + 1;
  }
  return merged;
}

int cmd_cluster(const std::vector<std::string>& inputs, double fps,
                const std::string& config_path, const std::string& protocol_flag,
                const std::string& preset, const std::string& presets_path,
                const std::string& output, int threads) {
  set_parallelism(threads);
  ClusteringConfig config = config_path.empty() ? ClusteringConfig{} : load_config(config_path);
  apply_protocol_flag(config, protocol_flag);
  if (!preset.empty()) {
    const auto presets = load_voice_presets(presets_path);
    auto it = presets.find(preset);
    if (it == presets.end()) throw std::runtime_error("unknown voice preset " + preset);
    config.tau_v_loose = it->second;
  }
  config.validate();

  const Dataset dataset = load_concatenated(inputs, fps, config.shot_window);
  const PipelineResult result = run_pipeline(dataset, config);

  for (const StageSummary& s : result.history) {
    std::cout << s.stage << " level " << s.level << ": " << s.clusters << " clusters\n";
  }
  bool stage2_ran = false;
  for (const StageSummary& s : result.history) stage2_ran |= s.stage == "stage2";
  if (!stage2_ran) std::cout << "stage2: no-op\n";
  if (result.learned_tau_v_loose)
    std::cout << "learned tau_v_loose " << format_double(*result.learned_tau_v_loose) << "\n";
  std::cout << "bridges " << result.bridges.size() << "\n";
  if (result.back_assignments.empty() && result.unassigned_backs.empty()) {
    std::cout << "stage3: no-op\n";
  } else {
    std::cout << "backs assigned " << result.back_assignments.size() << ", unassigned "
              << result.unassigned_backs.size() << "\n";
  }
  if (!result.oracle_violations.empty())
    std::cout << "oracle reduction violated " << result.oracle_violations.size()
              << " cannot-links\n";
  std::cout << "final clusters " << result.final.cluster_count() << "\n";

  if (!output.empty()) save_result(result, output);
  return 0;
}

int cmd_eval(const std::vector<std::string>& inputs, const std::vector<std::string>& results,
             double fps, const std::string& weighting_flag, const std::string& output,
             const std::string& text_output) {
  if (inputs.size() != results.size())
    throw CLI::ValidationError("--result", "need one result file per input dataset");
  const Weighting weighting = parse_weighting(weighting_flag);

  std::vector<MetricsReport> reports;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Dataset dataset = load_dataset(inputs[i], fps);
    const PipelineResult result = load_result(results[i]);
    reports.push_back(evaluate(result.final, dataset, weighting));
  }
  const MetricsReport summary = reports.size() == 1 ? reports.front() : average_reports(reports);

  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (reports.size() > 1) std::cout << "episode " << i << "\n";
    std::cout << report_to_text(reports[i]);
  }
  if (reports.size() > 1) {
    std::cout << "average\n" << report_to_text(summary);
  }
  if (!output.empty()) write_text_file(report_to_json(summary), output);
  if (!text_output.empty()) write_text_file(report_to_text(summary), text_output);
  return 0;
}

int cmd_cooccur(const std::string& input, const std::string& result_path, double fps,
                const std::string& characters_csv, std::int64_t total_frames,
                const std::string& prefix) {
  const Dataset dataset = load_dataset(input, fps);
  std::vector<std::string> characters;
  std::string name;
  for (char c : characters_csv + ",") {
    if (c == ',') {
      if (!name.empty()) characters.push_back(name);
      name.clear();
    } else {
      name += c;
    }
  }
  if (characters.empty()) throw CLI::ValidationError("--characters", "no character names given");

  const CoOccurrenceMatrix gt = cooccurrence_ground_truth(dataset, characters, total_frames);
  std::cout << "ground truth\n" << cooccurrence_to_text(gt);
  if (!prefix.empty()) {
    write_text_file(cooccurrence_to_text(gt), prefix + "_gt.txt");
    write_text_file(cooccurrence_to_json(gt), prefix + "_gt.json");
  }
  if (!result_path.empty()) {
    const PipelineResult result = load_result(result_path);
    const CoOccurrenceMatrix pred =
        cooccurrence_predicted(dataset, result.final, characters, total_frames);
    const CoOccurrenceMatrix rel = relative_cooccurrence(pred, gt);
    std::cout << "predicted\n" << cooccurrence_to_text(pred);
    std::cout << "relative\n" << cooccurrence_to_text(rel);
    if (!prefix.empty()) {
      write_text_file(cooccurrence_to_text(pred), prefix + "_pred.txt");
      write_text_file(cooccurrence_to_json(pred), prefix + "_pred.json");
      write_text_file(cooccurrence_to_text(rel), prefix + "_rel.txt");
      write_text_file(cooccurrence_to_json(rel), prefix + "_rel.json");
    }
  }
  return 0;
}

int cmd_learn_voice_threshold(const std::string& input, double fps,
                              const std::string& config_path) {
  ClusteringConfig config = config_path.empty() ? ClusteringConfig{} : load_config(config_path);
  const Dataset dataset = load_dataset(input, fps);
  const auto usable =
      filter_voice_tracks(dataset, config.voice_overlap_max, config.voice_min_seconds);
  const Dataset masked = apply_voice_mask(dataset, usable);
  const CannotLinkSet cannot = build_cannot_links(masked);
  const Stage1Result s1 = stage1_cluster(masked, config, cannot);
  const auto negatives = collect_voice_negatives(s1.final, cannot, masked);
  const double tau = learn_voice_threshold(negatives, config.voice_percentile);
  std::cout << "negatives " << negatives.size() << "\n";
  std::cout << "tau_v_loose " << format_double(tau) << "\n";
  return 0;
}

int cmd_synth(const GeneratorParams& params, const std::string& output,
              const std::string& manifest_path) {
  const auto [dataset, manifest] = generate(params);
  save_dataset(dataset, output);
  if (!manifest_path.empty()) write_text_file(manifest_to_json(manifest), manifest_path);
  std::cout << "tracks " << dataset.tracks.size() << "\n";
  std::cout << "cannot_links " << manifest.cannot_links.size() << "\n";
  return 0;
}

int cmd_validate(const std::string& input, double fps) {
  const std::string text = read_text_file(input);
  // Parse without the hard validation failure so every violation is listed.
  Dataset dataset;
  try {
    dataset = parse_dataset(text, fps, [](const std::string& w) {
      std::cout << "warning: " << w << "\n";
    });
  } catch (const std::runtime_error& e) {
    std::cout << e.what() << "\n";
    return 1;
  }
  std::cout << "ok: " << dataset.tracks.size() << " tracks\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"person-track identity clustering"};
  app.require_subcommand(1);
  app.fallthrough();  // accept global flags after the subcommand name

  double fps = 25.0;
  app.add_option("--fps", fps, "frames per second")->capture_default_str();

  // cluster
  auto* cluster = app.add_subcommand("cluster", "run the clustering pipeline");
  std::vector<std::string> cluster_inputs;
  std::string cluster_config, cluster_protocol, cluster_output, cluster_preset;
  std::string presets_path = "data/voice_threshold_presets.json";
  int threads = 1;
  cluster->add_option("--input", cluster_inputs, "dataset file(s); several are concatenated")
      ->required();
  cluster->add_option("--config", cluster_config, "config JSON file");
  cluster->add_option("--protocol", cluster_protocol, "at | oc:<C>");
  cluster->add_option("--voice-preset", cluster_preset, "named tau_v_loose preset");
  cluster->add_option("--presets", presets_path, "presets file")->capture_default_str();
  cluster->add_option("--output", cluster_output, "result JSON file");
  cluster->add_option("--threads", threads, "worker threads")->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "score a result against ground-truth labels");
  std::vector<std::string> eval_inputs, eval_results;
  std::string weighting = "track", eval_output, eval_text;
  eval->add_option("--input", eval_inputs, "labelled dataset file(s)")->required();
  eval->add_option("--result", eval_results, "result file(s), paired with --input")->required();
  eval->add_option("--weighting", weighting, "track | frame")->capture_default_str();
  eval->add_option("--output", eval_output, "report JSON file");
  eval->add_option("--report-txt", eval_text, "report text file");

  // cooccur
  auto* cooccur = app.add_subcommand("cooccur", "character co-occurrence matrices");
  std::string co_input, co_result, co_characters, co_prefix;
  std::int64_t co_total = 0;
  cooccur->add_option("--input", co_input, "labelled dataset file")->required();
  cooccur->add_option("--result", co_result, "result file for the predicted matrix");
  cooccur->add_option("--characters", co_characters, "comma-separated character names")
      ->required();
  cooccur->add_option("--total-frames", co_total, "video length in frames (0 = derive)");
  cooccur->add_option("--output-prefix", co_prefix, "write <prefix>_{gt,pred,rel}.{txt,json}");

  // learn-voice-threshold
  auto* learn = app.add_subcommand("learn-voice-threshold",
                                   "learn tau_v_loose from negative voice distances");
  std::string learn_input, learn_config;
  learn->add_option("--input", learn_input, "dataset file")->required();
  learn->add_option("--config", learn_config, "config JSON file");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a labelled synthetic dataset");
  GeneratorParams params;
  std::string synth_output, synth_manifest;
  synth->add_option("--output", synth_output, "dataset file to write")->required();
  synth->add_option("--manifest", synth_manifest, "manifest JSON file");
  synth->add_option("--characters", params.n_characters)->capture_default_str();
  synth->add_option("--tracks", params.n_tracks)->capture_default_str();
  synth->add_option("--seed", params.seed)->capture_default_str();
  synth->add_option("--p-speaking", params.p_speaking)->capture_default_str();
  synth->add_option("--p-back", params.p_back)->capture_default_str();
  synth->add_option("--p-concurrent", params.p_concurrent)->capture_default_str();
  synth->add_option("--scenes", params.scenes)->capture_default_str();
  synth->add_option("--shots-per-scene", params.shots_per_scene)->capture_default_str();
  synth->add_option("--frames-per-shot", params.frames_per_shot)->capture_default_str();
  synth->add_option("--face-dim", params.face.dim)->capture_default_str();
  synth->add_option("--face-sigma", params.face.sigma)->capture_default_str();
  synth->add_option("--face-sep", params.face.separation)->capture_default_str();
  synth->add_option("--body-dim", params.body.dim)->capture_default_str();
  synth->add_option("--body-sigma", params.body.sigma)->capture_default_str();
  synth->add_option("--body-sep", params.body.separation)->capture_default_str();
  synth->add_option("--voice-dim", params.voice.dim)->capture_default_str();
  synth->add_option("--voice-sigma", params.voice.sigma)->capture_default_str();
  synth->add_option("--voice-sep", params.voice.separation)->capture_default_str();

  // validate
  auto* validate = app.add_subcommand("validate", "check a dataset file");
  std::string validate_input;
  validate->add_option("--input", validate_input, "dataset file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (cluster->parsed()) {
      return cmd_cluster(cluster_inputs, fps, cluster_config, cluster_protocol, cluster_preset,
                         presets_path, cluster_output, threads);
    }
    if (eval->parsed()) {
      return cmd_eval(eval_inputs, eval_results, fps, weighting, eval_output, eval_text);
    }
    if (cooccur->parsed()) {
      return cmd_cooccur(co_input, co_result, fps, co_characters, co_total, co_prefix);
    }
    if (learn->parsed()) {
      return cmd_learn_voice_threshold(learn_input, fps, learn_config);
    }
    if (synth->parsed()) {
      params.fps = fps;
      return cmd_synth(params, synth_output, synth_manifest);
    }
    if (validate->parsed()) {
      return cmd_validate(validate_input, fps);
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const pcluster::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
