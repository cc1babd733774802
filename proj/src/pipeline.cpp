#include "poselift/pipeline.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "poselift/behavior.hpp"
#include "poselift/calibration.hpp"
#include "poselift/csv.hpp"
#include "poselift/error.hpp"
#include "poselift/random.hpp"
#include "poselift/skeleton.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace poselift {

namespace {

json synth_to_json(const SynthSettings& s) {
  return {{"subjects", s.subjects},
          {"frames", s.frames},
          {"noise_sigma", s.noise_sigma},
          {"occlusion_prob", s.occlusion_prob},
          {"low_confidence_fraction", s.low_confidence_fraction},
          {"outlier_cameras", s.outlier_cameras},
          {"outlier_offset_px", s.outlier_offset_px},
          {"outlier_probability", s.outlier_probability},
          {"box", {s.box.width, s.box.depth, s.box.height}},
          {"focal_px", s.focal_px},
          {"mode_min_frames", s.mode_min_frames},
          {"mode_max_frames", s.mode_max_frames}};
}

template <typename T>
void read_into(const json& j, T& out, const std::string& key, const std::string& source) {
  try {
    out = j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(source + ": field '" + key + "' has the wrong type");
  }
}

SynthSettings synth_from_json(const json& doc, const std::string& source) {
  if (!doc.is_object()) throw ConfigError(source + ": 'synth' must be an object");
  SynthSettings s;
  for (const auto& [key, v] : doc.items()) {
    if (key == "subjects") read_into(v, s.subjects, key, source);
    else if (key == "frames") read_into(v, s.frames, key, source);
    else if (key == "noise_sigma") read_into(v, s.noise_sigma, key, source);
    else if (key == "occlusion_prob") read_into(v, s.occlusion_prob, key, source);
    else if (key == "low_confidence_fraction") read_into(v, s.low_confidence_fraction, key, source);
    else if (key == "outlier_cameras") read_into(v, s.outlier_cameras, key, source);
    else if (key == "outlier_offset_px") read_into(v, s.outlier_offset_px, key, source);
    else if (key == "outlier_probability") read_into(v, s.outlier_probability, key, source);
    else if (key == "focal_px") read_into(v, s.focal_px, key, source);
    else if (key == "mode_min_frames") read_into(v, s.mode_min_frames, key, source);
    else if (key == "mode_max_frames") read_into(v, s.mode_max_frames, key, source);
    else if (key == "box") {
      std::vector<double> b;
      read_into(v, b, key, source);
      if (b.size() != 3) throw ConfigError(source + ": 'box' needs [width, depth, height]");
      s.box = {b[0], b[1], b[2]};
    } else {
      throw ConfigError(source + ": unknown synth field '" + key + "'");
    }
  }
  return s;
}

std::string path_string(const fs::path& p) { return p.generic_string(); }

}  // namespace

json config_to_json(const PipelineConfig& c) {
  return {{"dataset", path_string(c.dataset)},
          {"calibration", path_string(c.calibration)},
          {"tracks_dir", path_string(c.tracks_dir)},
          {"skeleton", path_string(c.skeleton)},
          {"annotations", path_string(c.annotations)},
          {"poses", path_string(c.poses)},
          {"output_dir", path_string(c.output_dir)},
          {"likelihood_threshold", c.likelihood_threshold},
          {"reproj_threshold_px", c.reproj_threshold_px},
          {"min_cams", c.min_cams},
          {"medfilt_window", c.medfilt_window},
          {"arma", {{"enabled", c.arma}, {"p", c.arma_p}, {"q", c.arma_q}}},
          {"segment_length", c.segment_length},
          {"n_trees", c.n_trees},
          {"seed", c.seed},
          {"threads", c.threads},
          {"synth", synth_to_json(c.synth)}};
}

PipelineConfig config_from_json(const json& doc, const std::string& source) {
  if (!doc.is_object()) throw ConfigError(source + ": configuration must be a JSON object");
  PipelineConfig c;
  auto path = [&](const json& v, fs::path& out, const std::string& key) {
    std::string s;
    read_into(v, s, key, source);
    out = s;
  };
  for (const auto& [key, v] : doc.items()) {
    if (key == "dataset") path(v, c.dataset, key);
    else if (key == "calibration") path(v, c.calibration, key);
    else if (key == "tracks_dir") path(v, c.tracks_dir, key);
    else if (key == "skeleton") path(v, c.skeleton, key);
    else if (key == "annotations") path(v, c.annotations, key);
    else if (key == "poses") path(v, c.poses, key);
    else if (key == "output_dir") path(v, c.output_dir, key);
    else if (key == "likelihood_threshold") read_into(v, c.likelihood_threshold, key, source);
    else if (key == "reproj_threshold_px") read_into(v, c.reproj_threshold_px, key, source);
    else if (key == "min_cams") read_into(v, c.min_cams, key, source);
    else if (key == "medfilt_window") read_into(v, c.medfilt_window, key, source);
    else if (key == "segment_length") read_into(v, c.segment_length, key, source);
    else if (key == "n_trees") read_into(v, c.n_trees, key, source);
    else if (key == "seed") read_into(v, c.seed, key, source);
    else if (key == "threads") read_into(v, c.threads, key, source);
    else if (key == "synth") c.synth = synth_from_json(v, source);
    else if (key == "stage") continue;  // written by snapshots, informational
    else if (key == "arma") {
      if (!v.is_object()) throw ConfigError(source + ": 'arma' must be an object");
      for (const auto& [k, a] : v.items()) {
        if (k == "enabled") read_into(a, c.arma, k, source);
        else if (k == "p") read_into(a, c.arma_p, k, source);
        else if (k == "q") read_into(a, c.arma_q, k, source);
        else throw ConfigError(source + ": unknown arma field '" + k + "'");
      }
    } else {
      throw ConfigError(source + ": unknown field '" + key + "'");
    }
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) { return config_from_json(read_json(path), path.string()); }

void validate(const PipelineConfig& c) {
  if (!(c.likelihood_threshold >= 0 && c.likelihood_threshold <= 1))
    throw ConfigError("likelihood_threshold must lie in [0, 1]");
  if (!(c.reproj_threshold_px >= 0)) throw ConfigError("reproj_threshold_px must be non-negative");
  if (c.min_cams < 2) throw ConfigError("min_cams must be at least 2");
  if (c.medfilt_window < 1 || c.medfilt_window % 2 == 0) throw ConfigError("medfilt_window must be odd and >= 1");
  if (c.arma_p < 0 || c.arma_q < 0) throw ConfigError("ARMA orders must be non-negative");
  if (c.segment_length < 1) throw ConfigError("segment_length must be positive");
  if (c.n_trees < 1) throw ConfigError("n_trees must be positive");
  const auto& s = c.synth;
  if (s.subjects < 1) throw ConfigError("synth.subjects must be positive");
  if (s.frames < 1) throw ConfigError("synth.frames must be positive");
  if (s.mode_min_frames < 1 || s.mode_min_frames > s.mode_max_frames)
    throw ConfigError("synth mode durations need 1 <= min <= max");
}

PipelineConfig resolve(PipelineConfig c) {
  if (!c.dataset.empty()) {
    if (c.calibration.empty()) c.calibration = c.dataset / "calibration.json";
    if (c.annotations.empty()) c.annotations = c.dataset / "annotations.csv";
    if (c.skeleton.empty() && fs::exists(c.dataset / "skeleton.json")) c.skeleton = c.dataset / "skeleton.json";
  }
  return c;
}

std::uint64_t stage_seed(const PipelineConfig& config, std::string_view stream) {
  return derive_seed(config.seed, stream);
}

LiftConfig lift_config(const PipelineConfig& c) {
  LiftConfig lc;
  lc.min_cams = c.min_cams;
  lc.reproj_threshold_px = c.reproj_threshold_px;
  lc.median_window = c.medfilt_window;
  lc.threads = c.threads;
  return lc;
}

TrackSet prepare_tracks(TrackSet tracks, const Camera& camera, const PipelineConfig& c) {
  if (c.arma) tracks = arma_filter(std::move(tracks), c.arma_p, c.arma_q);
  tracks = threshold_likelihood(std::move(tracks), c.likelihood_threshold);
  return rescale(std::move(tracks), camera.image_size);
}

SkeletonDefinition load_skeleton_or_default(const PipelineConfig& c) {
  return c.skeleton.empty() ? horse28() : load_skeleton(c.skeleton);
}

std::vector<std::string> subject_names(const fs::path& dataset) {
  if (!fs::is_directory(dataset)) throw ConfigError("dataset directory '" + dataset.string() + "' does not exist");
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dataset))
    if (e.is_directory() && fs::is_directory(e.path() / "tracks")) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

void snapshot(const PipelineConfig& c, const std::string& stage, StageResult& result) {
  const fs::path p = c.output_dir / ("config." + stage + ".json");
  json doc = config_to_json(c);
  doc["stage"] = stage;
  write_json(doc, p);
  result.written.push_back(p);
}

void require_output(const PipelineConfig& c) {
  if (c.output_dir.empty()) throw ConfigError("an output directory is required");
}

void write(StageResult& r, const fs::path& p, const std::string& content) {
  write_text(p, content);
  r.written.push_back(p);
}

std::string json_text(const json& doc) { return doc.dump(2) + "\n"; }

json diagnostics_json(const LiftDiagnostics& d) {
  return {{"triangulations", d.triangulations},
          {"insufficient_views", d.insufficient_views},
          {"degenerate_subsets", d.degenerate_subsets},
          {"undistort_failures", d.undistort_failures},
          {"dropped_by_threshold", d.dropped_by_threshold}};
}

std::vector<fs::path> track_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("tracks directory '" + dir.string() + "' does not exist");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw ConfigError("no track files in '" + dir.string() + "'");
  return out;
}

std::string lift_one(const PipelineConfig& c, const Rig& rig, const SkeletonDefinition& skel,
                     const fs::path& tracks_dir, const fs::path& out, StageResult& result) {
  std::vector<TrackSet> tracks;
  for (const auto& f : track_files(tracks_dir)) {
    TrackSet t = read_tracks(f, skel);
    const auto cam = std::find_if(rig.cameras.begin(), rig.cameras.end(),
                                  [&](const Camera& cm) { return cm.name == t.camera; });
    if (cam == rig.cameras.end()) throw ConfigError(f.string() + ": camera '" + t.camera + "' is not calibrated");
    tracks.push_back(prepare_tracks(std::move(t), *cam, c));
  }
  LiftDiagnostics diag;
  PoseSequence3D seq = lift_sequence(tracks, rig, skel, lift_config(c), &diag);
  const PoseStatistics stats = pose_statistics(seq);
  write(result, out / "poses.csv", pose_csv(seq));
  write(result, out / "stats.csv", statistics_csv(stats));
  write(result, out / "stats.txt", statistics_table(stats));
  write(result, out / "diagnostics.json", json_text(diagnostics_json(diag)));
  std::ostringstream os;
  os << seq.frame_count() << " frames, " << stats.present_observations << " keypoints kept";
  if (stats.mean_error) os << ", mean reprojection error " << format_double(*stats.mean_error) << " px";
  return os.str();
}

std::map<std::string, PoseSequence3D> load_subject_poses(const PipelineConfig& c, const SkeletonDefinition& skel,
                                                         const std::set<std::string>& subjects) {
  std::map<std::string, PoseSequence3D> out;
  for (const auto& s : subjects) {
    const fs::path p = c.output_dir / s / "poses.csv";
    if (!fs::exists(p)) throw StateError("no lifted poses for subject '" + s + "' at '" + p.string() + "'");
    out.emplace(s, read_poses(p, skel));
  }
  return out;
}

std::vector<Segment> load_segments_with_features(const PipelineConfig& c, const SkeletonDefinition& skel) {
  const fs::path p = c.output_dir / "segments.csv";
  if (!fs::exists(p)) throw StateError("no segments at '" + p.string() + "'; run the segments stage first");
  auto segments = read_segments(p);
  std::set<std::string> subjects;
  for (const auto& s : segments) subjects.insert(s.subject);
  attach_features(segments, load_subject_poses(c, skel, subjects));
  return segments;
}

std::vector<Segment> select(const std::vector<Segment>& all, const std::string& behavior, Split split) {
  std::vector<Segment> out;
  for (const auto& s : all)
    if (s.behavior == behavior && s.split == split) out.push_back(s);
  return out;
}

fs::path model_path(const PipelineConfig& c, const std::string& behavior) {
  return c.output_dir / "models" / (behavior + ".json");
}

std::vector<ForestModel> load_models(const PipelineConfig& c) {
  std::vector<ForestModel> models;
  for (const auto& b : default_behaviors()) {
    models.push_back(load_forest(model_path(c, b)));
    if (models.back().behavior != b)
      throw ConfigError(model_path(c, b).string() + ": model is for behavior '" + models.back().behavior + "'");
  }
  return models;
}

}  // namespace

StageResult run_synth(const PipelineConfig& config) {
  require_output(config);
  validate(config);
  const auto& s = config.synth;
  const fs::path out = config.output_dir;
  const SkeletonDefinition skel = load_skeleton_or_default(config);
  StageResult result;

  SynthScenario scenario;
  scenario.box = s.box;
  scenario.rig = make_default_rig(s.box, kCalibrationImageSize, s.focal_px);
  scenario.noise_sigma = s.noise_sigma;
  scenario.occlusion_prob = s.occlusion_prob;
  scenario.low_confidence_fraction = s.low_confidence_fraction;
  scenario.outliers = {s.outlier_cameras, s.outlier_offset_px, s.outlier_probability};
  validate(scenario);

  save_rig(scenario.rig, out / "calibration.json");
  result.written.push_back(out / "calibration.json");
  save_skeleton(skel, out / "skeleton.json");
  result.written.push_back(out / "skeleton.json");

  std::vector<AnnotationSet> annotations;
  for (int i = 0; i < s.subjects; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "horse%02d", i + 1);
    const std::string subject = name;
    MotionOptions mo;
    mo.fps = scenario.fps;
    mo.pain_state = i % 2 == 0 ? PainState::healthy : PainState::painful;
    mo.mode_min_frames = s.mode_min_frames;
    mo.mode_max_frames = s.mode_max_frames;
    const SynthTruth truth = synth_motion(skel, s.box, s.frames, derive_seed(stage_seed(config, "motion"), subject), mo);
    scenario.seed = derive_seed(stage_seed(config, "observe"), subject);
    const SynthObservation obs = observe(truth, scenario);
    for (const auto& t : obs.tracks) {
      const fs::path p = out / subject / "tracks" / (t.camera + ".csv");
      write_tracks(t, p);
      result.written.push_back(p);
      result.written.push_back(fs::path(p).replace_extension(".json"));
    }
    const fs::path truth_path = out / subject / "truth.csv";
    write_poses(ground_truth_sequence(truth, obs), truth_path, true);
    result.written.push_back(truth_path);
    annotations.push_back({subject, mo.pain_state, truth.intervals});
  }
  write(result, out / "annotations.csv", annotations_csv(annotations));

  PipelineConfig snap = config;
  snap.dataset = out;
  snap = resolve(snap);
  snapshot(snap, "synth", result);
  result.summary = std::to_string(s.subjects) + " subjects x " + std::to_string(s.frames) + " frames";
  return result;
}

StageResult run_lift(const PipelineConfig& raw) {
  const PipelineConfig c = resolve(raw);
  require_output(c);
  validate(c);
  if (c.calibration.empty()) throw ConfigError("a calibration file is required");
  const Rig rig = load_rig(c.calibration);
  const SkeletonDefinition skel = load_skeleton_or_default(c);
  StageResult result;
  if (!c.tracks_dir.empty()) {
    result.summary = lift_one(c, rig, skel, c.tracks_dir, c.output_dir, result);
  } else {
    if (c.dataset.empty()) throw ConfigError("lift needs a tracks directory or a dataset");
    const auto subjects = subject_names(c.dataset);
    if (subjects.empty()) throw ConfigError("dataset '" + c.dataset.string() + "' has no subjects");
    for (const auto& s : subjects) {
      result.summary += s + ": " + lift_one(c, rig, skel, c.dataset / s / "tracks", c.output_dir / s, result);
      result.summary += '\n';
    }
    if (!result.summary.empty()) result.summary.pop_back();
  }
  snapshot(c, "lift", result);
  return result;
}

StageResult run_stats(const PipelineConfig& raw) {
  const PipelineConfig c = resolve(raw);
  require_output(c);
  if (c.poses.empty()) throw ConfigError("a poses file is required");
  if (!fs::exists(c.poses)) throw ConfigError("poses file '" + c.poses.string() + "' does not exist");
  const PoseStatistics stats = pose_statistics(read_poses(c.poses, load_skeleton_or_default(c)));
  StageResult result;
  write(result, c.output_dir / "stats.csv", statistics_csv(stats));
  write(result, c.output_dir / "stats.txt", statistics_table(stats));
  snapshot(c, "stats", result);
  result.summary = statistics_table(stats);
  return result;
}

StageResult run_segments(const PipelineConfig& raw) {
  const PipelineConfig c = resolve(raw);
  require_output(c);
  validate(c);
  if (c.annotations.empty()) throw ConfigError("an annotation file is required");
  const SkeletonDefinition skel = load_skeleton_or_default(c);
  const auto annotations = read_annotations(c.annotations);
  std::set<std::string> subjects;
  for (const auto& a : annotations) subjects.insert(a.subject);
  const auto poses = load_subject_poses(c, skel, subjects);

  std::vector<Segment> segments;
  json summary = json::object();
  for (const auto& behavior : default_behaviors()) {
    ExtractionStats stats;
    for (const auto& a : annotations) {
      auto s = extract_segments(a, poses.at(a.subject), behavior, stage_seed(c, "segments"), c.segment_length, &stats);
      std::move(s.begin(), s.end(), std::back_inserter(segments));
    }
    summary[behavior] = {{"pairs", stats.pairs},
                         {"short_intervals", stats.short_intervals},
                         {"skipped_no_negative", stats.skipped_no_negative}};
  }
  split_segments(segments, stage_seed(c, "split"));
  for (const auto& behavior : default_behaviors()) {
    std::map<std::string, std::size_t> counts{{"train", 0}, {"val", 0}, {"test", 0}};
    for (const auto& s : segments)
      if (s.behavior == behavior) ++counts[to_string(s.split)];
    summary[behavior]["segments"] = counts;
  }

  StageResult result;
  write(result, c.output_dir / "segments.csv", segments_csv(segments));
  write(result, c.output_dir / "segments_summary.json", json_text(summary));
  snapshot(c, "segments", result);
  result.summary = std::to_string(segments.size()) + " segments";
  return result;
}

StageResult run_train(const PipelineConfig& raw) {
  const PipelineConfig c = resolve(raw);
  require_output(c);
  validate(c);
  const auto segments = load_segments_with_features(c, load_skeleton_or_default(c));
  StageResult result;
  for (const auto& behavior : default_behaviors()) {
    const auto train = select(segments, behavior, Split::train);
    if (train.empty()) throw StateError("no training segments for behavior '" + behavior + "'");
    ForestOptions opt;
    opt.n_trees = c.n_trees;
    opt.seed = derive_seed(stage_seed(c, "forest"), behavior);
    opt.threads = c.threads;
    const ForestModel model = train_behavior_forest(train, opt);
    save_forest(model, model_path(c, behavior));
    result.written.push_back(model_path(c, behavior));
    result.summary += behavior + ": " + std::to_string(train.size()) + " training segments\n";
  }
  if (!result.summary.empty()) result.summary.pop_back();
  snapshot(c, "train", result);
  return result;
}

StageResult run_eval(const PipelineConfig& raw) {
  const PipelineConfig c = resolve(raw);
  require_output(c);
  validate(c);
  const auto models = load_models(c);
  const auto segments = load_segments_with_features(c, load_skeleton_or_default(c));
  std::vector<EvalReport> reports;
  for (const auto& m : models) reports.push_back(evaluate(m, select(segments, m.behavior, Split::test)));
  StageResult result;
  write(result, c.output_dir / "eval.csv", eval_csv(reports));
  write(result, c.output_dir / "eval.txt", eval_table(reports));
  snapshot(c, "eval", result);
  result.summary = eval_table(reports);
  return result;
}

StageResult run_bias(const PipelineConfig& raw) {
  const PipelineConfig c = resolve(raw);
  require_output(c);
  validate(c);
  const auto segments = load_segments_with_features(c, load_skeleton_or_default(c));
  StageResult result;
  std::vector<EvalReport> reports;
  for (const auto& behavior : default_behaviors()) {
    const auto train = select(segments, behavior, Split::train);
    if (train.empty()) throw StateError("no training segments for behavior '" + behavior + "'");
    const auto balanced = balance_by_group(train, derive_seed(stage_seed(c, "balance"), behavior));
    ForestOptions opt;
    opt.n_trees = c.n_trees;
    opt.seed = derive_seed(stage_seed(c, "bias-forest"), behavior);
    opt.threads = c.threads;
    const ForestModel model = train_behavior_forest(balanced, opt);
    const fs::path path = c.output_dir / "models" / "balanced" / (behavior + ".json");
    save_forest(model, path);
    result.written.push_back(path);
    reports.push_back(evaluate(model, select(segments, behavior, Split::test)));
  }
  write(result, c.output_dir / "bias.csv", bias_csv(reports));
  write(result, c.output_dir / "bias.txt", bias_table(reports));
  snapshot(c, "bias", result);
  result.summary = bias_table(reports);
  return result;
}

}  // namespace poselift
