// poselift: 2D keypoint tracks to 3D skeletons and behavior reports.

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "poselift/error.hpp"
#include "poselift/pipeline.hpp"

namespace {

using poselift::PipelineConfig;

struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> dataset, calibration, tracks_dir, skeleton, annotations, poses, output_dir;
  std::optional<double> likelihood_threshold, reproj_threshold_px;
  std::optional<int> min_cams, medfilt_window, arma_p, arma_q, n_trees;
  std::optional<std::size_t> segment_length;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool no_arma = false;

  std::optional<int> subjects;
  std::optional<std::size_t> frames, mode_min_frames, mode_max_frames;
  std::optional<double> noise_sigma, occlusion_prob, outlier_offset_px, outlier_probability, focal_px;
  std::vector<std::string> outlier_cameras;
  std::vector<double> box;
};

template <typename T, typename U>
void apply(const std::optional<T>& v, U& target) {
  if (v) target = U(*v);
}

PipelineConfig build_config(const Overrides& o) {
  PipelineConfig c = o.config ? poselift::load_config(*o.config) : PipelineConfig{};
  apply(o.dataset, c.dataset);
  apply(o.calibration, c.calibration);
  apply(o.tracks_dir, c.tracks_dir);
  apply(o.skeleton, c.skeleton);
  apply(o.annotations, c.annotations);
  apply(o.poses, c.poses);
  apply(o.output_dir, c.output_dir);
  apply(o.likelihood_threshold, c.likelihood_threshold);
  apply(o.reproj_threshold_px, c.reproj_threshold_px);
  apply(o.min_cams, c.min_cams);
  apply(o.medfilt_window, c.medfilt_window);
  apply(o.arma_p, c.arma_p);
  apply(o.arma_q, c.arma_q);
  apply(o.n_trees, c.n_trees);
  apply(o.segment_length, c.segment_length);
  apply(o.seed, c.seed);
  apply(o.threads, c.threads);
  if (o.no_arma) c.arma = false;

  auto& s = c.synth;
  apply(o.subjects, s.subjects);
  apply(o.frames, s.frames);
  apply(o.mode_min_frames, s.mode_min_frames);
  apply(o.mode_max_frames, s.mode_max_frames);
  apply(o.noise_sigma, s.noise_sigma);
  apply(o.occlusion_prob, s.occlusion_prob);
  apply(o.outlier_offset_px, s.outlier_offset_px);
  apply(o.outlier_probability, s.outlier_probability);
  apply(o.focal_px, s.focal_px);
  if (!o.outlier_cameras.empty()) s.outlier_cameras = o.outlier_cameras;
  if (!o.box.empty()) s.box = {o.box[0], o.box[1], o.box[2]};
  return c;
}

void log(const std::string& msg) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%S", std::localtime(&now));
  std::cerr << '[' << stamp << "] " << msg << '\n';
}

int fail(poselift::ErrorClass cls, const std::string& msg) {
  std::string line = msg;
  for (char& ch : line)
    if (ch == '\n') ch = ' ';
  std::cerr << "error class=" << poselift::to_string(cls) << ": " << line << std::endl;
  return poselift::exit_code(cls);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lift multi-camera 2D keypoint tracks to 3D skeletons and run the behavior protocol."};
  app.fallthrough();
  app.require_subcommand(1);
  Overrides o;

  app.add_option("--config", o.config, "JSON configuration file; flags override its values");
  app.add_option("--dataset", o.dataset, "Dataset root (synth output)");
  app.add_option("--calibration", o.calibration, "Camera calibration JSON");
  app.add_option("--tracks-dir", o.tracks_dir, "Directory of per-camera track CSVs");
  app.add_option("--skeleton", o.skeleton, "Skeleton JSON (default: bundled horse-28)");
  app.add_option("--annotations", o.annotations, "Behavior annotation CSV");
  app.add_option("--poses", o.poses, "Pose CSV for stats");
  app.add_option("--out", o.output_dir, "Output / working directory");
  app.add_option("--likelihood-threshold", o.likelihood_threshold, "Drop 2D points below this likelihood (0.6)");
  app.add_option("--reproj-threshold", o.reproj_threshold_px, "Drop 3D points above this error in px (200)");
  app.add_option("--min-cams", o.min_cams, "Minimum cameras per triangulation (2)");
  app.add_option("--medfilt-window", o.medfilt_window, "Odd temporal median window (13)");
  app.add_option("--arma-p", o.arma_p, "ARMA autoregressive order (3)");
  app.add_option("--arma-q", o.arma_q, "ARMA moving-average order (1)");
  app.add_flag("--no-arma", o.no_arma, "Disable ARMA smoothing of 2D tracks");
  app.add_option("--segment-length", o.segment_length, "Frames per behavior segment (200)");
  app.add_option("--n-trees", o.n_trees, "Trees per forest (100)");
  app.add_option("--seed", o.seed, "Master seed");
  app.add_option("--threads", o.threads, "Worker thread cap (0: all cores)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-camera dataset");
  synth->add_option("--subjects", o.subjects, "Number of subjects (4)");
  synth->add_option("--frames", o.frames, "Frames per subject (12000)");
  synth->add_option("--noise-sigma", o.noise_sigma, "2D noise in calibration px (2)");
  synth->add_option("--occlusion-prob", o.occlusion_prob, "Per-point occlusion probability (0.02)");
  synth->add_option("--outlier-cameras", o.outlier_cameras, "Cameras receiving outliers");
  synth->add_option("--outlier-offset", o.outlier_offset_px, "Outlier offset in px (300)");
  synth->add_option("--outlier-prob", o.outlier_probability, "Per-frame outlier probability (0)");
  synth->add_option("--focal", o.focal_px, "Focal length in px (900)");
  synth->add_option("--mode-min-frames", o.mode_min_frames, "Shortest motion mode (250)");
  synth->add_option("--mode-max-frames", o.mode_max_frames, "Longest motion mode (700)");
  synth->add_option("--box", o.box, "Box width depth height")->expected(3);

  const std::map<std::string, std::function<poselift::StageResult(const PipelineConfig&)>> stages = {
      {"synth", poselift::run_synth},       {"lift", poselift::run_lift},   {"stats", poselift::run_stats},
      {"segments", poselift::run_segments}, {"train", poselift::run_train}, {"eval", poselift::run_eval},
      {"bias", poselift::run_bias}};
  app.add_subcommand("lift", "Triangulate 2D tracks into 3D poses");
  app.add_subcommand("stats", "Pose statistics for a pose CSV");
  app.add_subcommand("segments", "Extract and split behavior segments");
  app.add_subcommand("train", "Train one forest per behavior");
  app.add_subcommand("eval", "Evaluate the forests on the test split");
  app.add_subcommand("bias", "Train on pain-balanced data and report per-group positive rates");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(poselift::ErrorClass::argument, e.what());
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    const PipelineConfig config = build_config(o);
    log("stage " + stage + " started");
    const auto result = stages.at(stage)(config);
    std::cout << result.summary << '\n';
    log("stage " + stage + " wrote " + std::to_string(result.written.size()) + " files");
    return 0;
  } catch (const poselift::Error& e) {
    return fail(e.error_class(), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(poselift::ErrorClass::config, e.what());
  } catch (const std::exception& e) {
    std::cerr << "error class=internal: " << e.what() << std::endl;
    return 1;
  }
}
