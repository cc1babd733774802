#pragma once

// Activity-budget protocol on lifted poses: paired positive/negative segment
// extraction, per-subject splitting, frame-level forest training with segment
// voting, metrics, and the pain-group bias analysis.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "poselift/forest.hpp"
#include "poselift/pose.hpp"
#include "poselift/random.hpp"
#include "poselift/synth.hpp"

namespace poselift {

constexpr std::size_t kDefaultSegmentLength = 200;

const std::vector<std::string>& default_behaviors();

struct AnnotationSet {
  std::string subject;
  PainState pain_state = PainState::healthy;
  std::vector<BehaviorInterval> intervals;
};

/// `subject,pain_state,behavior,start_frame,end_frame`; one AnnotationSet per
/// subject in order of first appearance.
std::vector<AnnotationSet> read_annotations(const std::filesystem::path& path,
                                            const std::vector<std::string>& behaviors = default_behaviors());
std::string annotations_csv(std::span<const AnnotationSet> sets);

enum class Split { train, val, test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct Segment {
  std::string subject;
  PainState pain_state = PainState::healthy;
  std::string behavior;
  int label = 0;  // 1 when the behavior occurs
  std::size_t start = 0;
  std::size_t length = kDefaultSegmentLength;
  std::size_t pair = 0;  // pairs are numbered per (subject, behavior)
  Split split = Split::train;
  Eigen::MatrixXd features;  // length x (3 * keypoints); empty until attached
};

/// (x, y, z) per keypoint in skeleton order; absent keypoints contribute zeros.
Eigen::VectorXd featurize_frame(const PoseSequence3D& poses, std::size_t frame);

struct ExtractionStats {
  std::size_t pairs = 0;
  std::size_t short_intervals = 0;
  std::size_t skipped_no_negative = 0;
};

/// One positive per interval of `behavior` at least `length` frames long (start
/// uniform within the interval) and a matched negative of the same length from
/// the same subject that overlaps no interval of that behavior. Segments come
/// out as consecutive (positive, negative) pairs with features attached.
std::vector<Segment> extract_segments(const AnnotationSet& annotations, const PoseSequence3D& poses,
                                      const std::string& behavior, std::uint64_t seed,
                                      std::size_t length = kDefaultSegmentLength, ExtractionStats* stats = nullptr);

/// Split for each of `pair_count` pairs of one subject: more than five pairs
/// send one pair to validation and three to test, the rest train.
std::vector<Split> assign_pair_splits(std::size_t pair_count, Rng& rng);

/// Applies assign_pair_splits per (subject, behavior); both segments of a pair
/// share the split.
void split_segments(std::vector<Segment>& segments, std::uint64_t seed);

/// Fills each segment's feature matrix from the subject's poses.
void attach_features(std::vector<Segment>& segments, const std::map<std::string, PoseSequence3D>& poses_by_subject);

std::string segments_csv(std::span<const Segment> segments);
/// `subject,pain_state,behavior,label,start_frame,length,pair,split`
std::vector<Segment> read_segments(const std::filesystem::path& path);

/// Stacks frame rows of every segment; each row inherits its segment label.
void frame_rows(std::span<const Segment> segments, Eigen::MatrixXd& X, std::vector<int>& y);

ForestModel train_behavior_forest(std::span<const Segment> train, const ForestOptions& options);

/// Mean of the per-frame class-1 probabilities, rounded half up.
int vote(std::span<const double> frame_probabilities);
int predict_segment_voting(const ForestModel& model, const Segment& segment);

struct EvalReport {
  std::string behavior;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::map<PainState, std::optional<double>> positive_rate;  // share predicted 1 per group

  std::size_t total() const { return tp + fp + fn + tn; }
};

/// Confusion counts, precision/recall (absent when undefined) and per-group
/// positive rates from aligned truth/prediction/group arrays.
EvalReport make_report(std::span<const int> truth, std::span<const int> predicted, std::span<const PainState> groups);

/// Throws ArgumentError for an empty test set.
EvalReport evaluate(const ForestModel& model, std::span<const Segment> test);

/// Per-group fraction of segments predicted positive; a group without
/// segments maps to nullopt.
std::map<PainState, std::optional<double>> prediction_distribution(std::span<const int> predicted,
                                                                   std::span<const PainState> groups);
std::map<PainState, std::optional<double>> prediction_distribution(const ForestModel& model,
                                                                   std::span<const Segment> test);

/// Uniformly downsamples the larger pain group to the size of the smaller one,
/// preserving input order. Throws ArgumentError when a group is empty.
std::vector<Segment> balance_by_group(std::span<const Segment> segments, std::uint64_t seed);

std::string eval_csv(std::span<const EvalReport> reports);
std::string eval_table(std::span<const EvalReport> reports);
std::string bias_csv(std::span<const EvalReport> reports);
std::string bias_table(std::span<const EvalReport> reports);

}  // namespace poselift
