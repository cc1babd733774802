#include "poselift/behavior.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include "poselift/csv.hpp"
#include "poselift/error.hpp"
#include "poselift/random.hpp"

namespace poselift {

const std::vector<std::string>& default_behaviors() {
  static const std::vector<std::string> b = {"eating", "movement", "standing"};
  return b;
}

std::vector<AnnotationSet> read_annotations(const std::filesystem::path& path,
                                            const std::vector<std::string>& behaviors) {
  constexpr std::string_view header = "subject,pain_state,behavior,start_frame,end_frame";
  const auto lines = read_lines(path);
  const std::string src = path.string();
  if (lines.empty() || lines[0] != header) throw ParseError(src, 1, "header must be '" + std::string(header) + "'");
  std::vector<AnnotationSet> sets;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t row = i + 1;
    if (lines[i].empty()) continue;
    const auto fields = split_fields(lines[i]);
    if (fields.size() != 5) throw ParseError(src, row, "expected 5 fields");
    const std::string subject(fields[0]);
    if (subject.empty()) throw ParseError(src, row, "empty subject");
    PainState pain;
    try {
      pain = pain_state_from_string(std::string(fields[1]));
    } catch (const ArgumentError& e) {
      throw ParseError(src, row, e.what());
    }
    const std::string behavior(fields[2]);
    if (std::find(behaviors.begin(), behaviors.end(), behavior) == behaviors.end())
      throw ParseError(src, row, "unknown behavior '" + behavior + "'");
    const long long start = parse_integer(fields[3], src, row);
    const long long end = parse_integer(fields[4], src, row);
    if (start < 0 || start >= end) throw ParseError(src, row, "interval needs 0 <= start < end");

    auto it = std::find_if(sets.begin(), sets.end(), [&](const AnnotationSet& s) { return s.subject == subject; });
    if (it == sets.end()) {
      sets.push_back({subject, pain, {}});
      it = sets.end() - 1;
    } else if (it->pain_state != pain) {
      throw ParseError(src, row, "subject '" + subject + "' has conflicting pain states");
    }
    it->intervals.push_back({behavior, static_cast<std::size_t>(start), static_cast<std::size_t>(end)});
  }
  return sets;
}

std::string annotations_csv(std::span<const AnnotationSet> sets) {
  std::string out = "subject,pain_state,behavior,start_frame,end_frame\n";
  for (const auto& s : sets)
    for (const auto& iv : s.intervals)
      out += s.subject + ',' + to_string(s.pain_state) + ',' + iv.behavior + ',' + std::to_string(iv.start) + ',' +
             std::to_string(iv.end) + '\n';
  return out;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ArgumentError("unknown split '" + s + "'");
}

Eigen::VectorXd featurize_frame(const PoseSequence3D& poses, std::size_t frame) {
  const std::size_t nkp = poses.skeleton.size();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 * nkp));
  for (std::size_t k = 0; k < nkp; ++k) {
    const auto& kp = poses.at(frame, k);
    if (kp.present) v.segment<3>(static_cast<Eigen::Index>(3 * k)) = kp.position;
  }
  return v;
}

namespace {

Eigen::MatrixXd segment_features(const PoseSequence3D& poses, std::size_t start, std::size_t length) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(length), static_cast<Eigen::Index>(3 * poses.skeleton.size()));
  for (std::size_t i = 0; i < length; ++i) m.row(static_cast<Eigen::Index>(i)) = featurize_frame(poses, start + i);
  return m;
}

}  // namespace

std::vector<Segment> extract_segments(const AnnotationSet& ann, const PoseSequence3D& poses,
                                      const std::string& behavior, std::uint64_t seed, std::size_t length,
                                      ExtractionStats* stats) {
  if (length < 1) throw ArgumentError("segment length must be positive");
  const std::size_t frames = poses.frame_count();
  Rng rng(derive_seed(derive_seed(seed, ann.subject), behavior));

  std::vector<BehaviorInterval> intervals;
  for (const auto& iv : ann.intervals)
    if (iv.behavior == behavior) intervals.push_back(iv);
  std::sort(intervals.begin(), intervals.end(),
            [](const BehaviorInterval& a, const BehaviorInterval& b) { return a.start < b.start; });

  // Feasible negative starts: windows that touch no interval of the behavior.
  std::vector<char> covered(frames, 0);
  for (const auto& iv : intervals)
    for (std::size_t f = iv.start; f < std::min(iv.end, frames); ++f) covered[f] = 1;
  std::vector<std::size_t> feasible;
  if (frames >= length) {
    std::size_t run = 0;  // uncovered frames ending at f
    for (std::size_t f = 0; f < frames; ++f) {
      run = covered[f] ? 0 : run + 1;
      if (run >= length) feasible.push_back(f + 1 - length);
    }
  }

  ExtractionStats local;
  std::vector<Segment> out;
  std::size_t pair = 0;
  for (const auto& iv : intervals) {
    const std::size_t end = std::min(iv.end, frames);
    if (end < iv.start + length) {
      ++local.short_intervals;
      continue;
    }
    const std::size_t pos_start = iv.start + uniform_index(rng, end - iv.start - length + 1);
    if (feasible.empty()) {
      ++local.skipped_no_negative;
      continue;
    }
    const std::size_t neg_start = feasible[uniform_index(rng, feasible.size())];
    for (int label : {1, 0}) {
      Segment s;
      s.subject = ann.subject;
      s.pain_state = ann.pain_state;
      s.behavior = behavior;
      s.label = label;
      s.start = label ? pos_start : neg_start;
      s.length = length;
      s.pair = pair;
      s.features = segment_features(poses, s.start, length);
      out.push_back(std::move(s));
    }
    ++pair;
  }
  local.pairs = pair;
  if (stats) {
    stats->pairs += local.pairs;
    stats->short_intervals += local.short_intervals;
    stats->skipped_no_negative += local.skipped_no_negative;
  }
  return out;
}

std::vector<Split> assign_pair_splits(std::size_t pair_count, Rng& rng) {
  std::vector<Split> out(pair_count, Split::train);
  if (pair_count <= 5) return out;
  std::vector<std::size_t> order(pair_count);
  for (std::size_t i = 0; i < pair_count; ++i) order[i] = i;
  shuffle(order.begin(), order.end(), rng);
  out[order[0]] = Split::val;
  for (std::size_t i = 1; i <= 3; ++i) out[order[i]] = Split::test;
  return out;
}

void split_segments(std::vector<Segment>& segments, std::uint64_t seed) {
  std::map<std::pair<std::string, std::string>, std::size_t> pair_counts;
  for (const auto& s : segments) {
    auto& n = pair_counts[{s.subject, s.behavior}];
    n = std::max(n, s.pair + 1);
  }
  std::map<std::pair<std::string, std::string>, std::vector<Split>> splits;
  for (const auto& [key, n] : pair_counts) {
    Rng rng(derive_seed(derive_seed(seed, key.first), key.second));
    splits[key] = assign_pair_splits(n, rng);
  }
  for (auto& s : segments) s.split = splits[{s.subject, s.behavior}][s.pair];
}

void attach_features(std::vector<Segment>& segments, const std::map<std::string, PoseSequence3D>& poses_by_subject) {
  for (auto& s : segments) {
    const auto it = poses_by_subject.find(s.subject);
    if (it == poses_by_subject.end()) throw ConfigError("no poses for subject '" + s.subject + "'");
    if (s.start + s.length > it->second.frame_count())
      throw ConfigError("segment of subject '" + s.subject + "' runs past the end of its poses");
    s.features = segment_features(it->second, s.start, s.length);
  }
}

std::string segments_csv(std::span<const Segment> segments) {
  std::string out = "subject,pain_state,behavior,label,start_frame,length,pair,split\n";
  for (const auto& s : segments)
    out += s.subject + ',' + to_string(s.pain_state) + ',' + s.behavior + ',' + std::to_string(s.label) + ',' +
           std::to_string(s.start) + ',' + std::to_string(s.length) + ',' + std::to_string(s.pair) + ',' +
           to_string(s.split) + '\n';
  return out;
}

std::vector<Segment> read_segments(const std::filesystem::path& path) {
  constexpr std::string_view header = "subject,pain_state,behavior,label,start_frame,length,pair,split";
  const auto lines = read_lines(path);
  const std::string src = path.string();
  if (lines.empty() || lines[0] != header) throw ParseError(src, 1, "header must be '" + std::string(header) + "'");
  std::vector<Segment> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t row = i + 1;
    if (lines[i].empty()) continue;
    const auto f = split_fields(lines[i]);
    if (f.size() != 8) throw ParseError(src, row, "expected 8 fields");
    Segment s;
    try {
      s.subject = std::string(f[0]);
      s.pain_state = pain_state_from_string(std::string(f[1]));
      s.behavior = std::string(f[2]);
      s.split = split_from_string(std::string(f[7]));
    } catch (const ArgumentError& e) {
      throw ParseError(src, row, e.what());
    }
    const auto label = parse_integer(f[3], src, row);
    if (label != 0 && label != 1) throw ParseError(src, row, "label must be 0 or 1");
    s.label = static_cast<int>(label);
    const auto start = parse_integer(f[4], src, row), length = parse_integer(f[5], src, row),
               pair = parse_integer(f[6], src, row);
    if (start < 0 || length < 1 || pair < 0) throw ParseError(src, row, "invalid segment geometry");
    s.start = static_cast<std::size_t>(start);
    s.length = static_cast<std::size_t>(length);
    s.pair = static_cast<std::size_t>(pair);
    out.push_back(std::move(s));
  }
  return out;
}

void frame_rows(std::span<const Segment> segments, Eigen::MatrixXd& X, std::vector<int>& y) {
  Eigen::Index rows = 0, cols = -1;
  for (const auto& s : segments) {
    if (s.features.rows() == 0) throw StateError("segment features are not attached");
    if (cols >= 0 && s.features.cols() != cols) throw ArgumentError("segments disagree on feature length");
    cols = s.features.cols();
    rows += s.features.rows();
  }
  X.resize(rows, std::max<Eigen::Index>(cols, 0));
  y.clear();
  y.reserve(static_cast<std::size_t>(rows));
  Eigen::Index r = 0;
  for (const auto& s : segments) {
    X.middleRows(r, s.features.rows()) = s.features;
    r += s.features.rows();
    y.insert(y.end(), static_cast<std::size_t>(s.features.rows()), s.label);
  }
}

ForestModel train_behavior_forest(std::span<const Segment> train, const ForestOptions& options) {
  if (train.empty()) throw ArgumentError("no training segments");
  Eigen::MatrixXd X;
  std::vector<int> y;
  frame_rows(train, X, y);
  return train_forest(X, y, options, train.front().behavior);
}

int vote(std::span<const double> frame_probabilities) {
  if (frame_probabilities.empty()) throw ArgumentError("cannot vote over zero frames");
  double sum = 0;
  for (double p : frame_probabilities) sum += p;
  return sum / double(frame_probabilities.size()) >= 0.5 ? 1 : 0;
}

int predict_segment_voting(const ForestModel& model, const Segment& segment) {
  if (static_cast<std::size_t>(segment.features.cols()) != model.n_features)
    throw ArgumentError("segment feature length " + std::to_string(segment.features.cols()) +
                        " does not match the model's " + std::to_string(model.n_features));
  const Eigen::VectorXd p = model.predict_proba_rows(segment.features);
  return vote(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
}

std::map<PainState, std::optional<double>> prediction_distribution(std::span<const int> predicted,
                                                                   std::span<const PainState> groups) {
  if (predicted.size() != groups.size()) throw ArgumentError("one group per prediction is required");
  std::map<PainState, std::pair<std::size_t, std::size_t>> counts;  // positives, total
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    auto& c = counts[groups[i]];
    c.first += predicted[i] == 1;
    ++c.second;
  }
  std::map<PainState, std::optional<double>> out;
  for (PainState g : {PainState::healthy, PainState::painful}) {
    const auto it = counts.find(g);
    out[g] = it == counts.end() ? std::nullopt : std::optional(double(it->second.first) / double(it->second.second));
  }
  return out;
}

EvalReport make_report(std::span<const int> truth, std::span<const int> predicted, std::span<const PainState> groups) {
  if (truth.size() != predicted.size()) throw ArgumentError("truth and predictions differ in length");
  EvalReport r;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] == 1, p = predicted[i] == 1;
    if (t && p) ++r.tp;
    else if (!t && p) ++r.fp;
    else if (t) ++r.fn;
    else ++r.tn;
  }
  if (r.tp + r.fp) r.precision = double(r.tp) / double(r.tp + r.fp);
  if (r.tp + r.fn) r.recall = double(r.tp) / double(r.tp + r.fn);
  r.positive_rate = prediction_distribution(predicted, groups);
  return r;
}

EvalReport evaluate(const ForestModel& model, std::span<const Segment> test) {
  if (test.empty()) throw ArgumentError("empty test set");
  std::vector<int> truth, predicted;
  std::vector<PainState> groups;
  for (const auto& s : test) {
    truth.push_back(s.label);
    predicted.push_back(predict_segment_voting(model, s));
    groups.push_back(s.pain_state);
  }
  EvalReport r = make_report(truth, predicted, groups);
  r.behavior = model.behavior;
  return r;
}

std::map<PainState, std::optional<double>> prediction_distribution(const ForestModel& model,
                                                                   std::span<const Segment> test) {
  std::vector<int> predicted;
  std::vector<PainState> groups;
  for (const auto& s : test) {
    predicted.push_back(predict_segment_voting(model, s));
    groups.push_back(s.pain_state);
  }
  return prediction_distribution(predicted, groups);
}

std::vector<Segment> balance_by_group(std::span<const Segment> segments, std::uint64_t seed) {
  std::vector<std::size_t> healthy, painful;
  for (std::size_t i = 0; i < segments.size(); ++i)
    (segments[i].pain_state == PainState::healthy ? healthy : painful).push_back(i);
  if (healthy.empty() || painful.empty()) throw ArgumentError("balancing needs segments from both pain groups");
  auto& larger = healthy.size() > painful.size() ? healthy : painful;
  const std::size_t target = std::min(healthy.size(), painful.size());
  Rng rng(derive_seed(seed, "balance"));
  shuffle(larger.begin(), larger.end(), rng);
  larger.resize(target);
  std::vector<std::size_t> keep = healthy;
  keep.insert(keep.end(), painful.begin(), painful.end());
  std::sort(keep.begin(), keep.end());
  std::vector<Segment> out;
  out.reserve(keep.size());
  for (std::size_t i : keep) out.push_back(segments[i]);
  return out;
}

namespace {

std::string percent(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << 100.0 * *v << '%';
  return os.str();
}

std::string rate(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << *v;
  return os.str();
}

}  // namespace

std::string eval_csv(std::span<const EvalReport> reports) {
  std::string out = "behavior,tp,fp,fn,tn,precision,recall\n";
  for (const auto& r : reports)
    out += r.behavior + ',' + std::to_string(r.tp) + ',' + std::to_string(r.fp) + ',' + std::to_string(r.fn) + ',' +
           std::to_string(r.tn) + ',' + format_optional(r.precision) + ',' + format_optional(r.recall) + '\n';
  return out;
}

std::string eval_table(std::span<const EvalReport> reports) {
  std::ostringstream os;
  for (const auto& r : reports) {
    os << r.behavior << "  precision " << percent(r.precision) << "  recall " << percent(r.recall) << '\n';
    os << "            pred 0  pred 1\n";
    os << "  true 0  " << std::setw(8) << r.tn << std::setw(8) << r.fp << '\n';
    os << "  true 1  " << std::setw(8) << r.fn << std::setw(8) << r.tp << "\n\n";
  }
  return os.str();
}

std::string bias_csv(std::span<const EvalReport> reports) {
  std::string out = "behavior,healthy,painful,precision,recall\n";
  for (const auto& r : reports) {
    auto get = [&](PainState g) {
      const auto it = r.positive_rate.find(g);
      return it == r.positive_rate.end() ? std::optional<double>() : it->second;
    };
    out += r.behavior + ',' + format_optional(get(PainState::healthy)) + ',' +
           format_optional(get(PainState::painful)) + ',' + format_optional(r.precision) + ',' +
           format_optional(r.recall) + '\n';
  }
  return out;
}

std::string bias_table(std::span<const EvalReport> reports) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "" << std::right << std::setw(9) << "Healthy" << std::setw(9) << "Painful"
     << std::setw(11) << "Precision" << std::setw(9) << "Recall" << '\n';
  for (const auto& r : reports) {
    auto get = [&](PainState g) {
      const auto it = r.positive_rate.find(g);
      return it == r.positive_rate.end() ? std::optional<double>() : it->second;
    };
    os << std::left << std::setw(10) << r.behavior << std::right << std::setw(9) << rate(get(PainState::healthy))
       << std::setw(9) << rate(get(PainState::painful)) << std::setw(11) << percent(r.precision) << std::setw(9)
       << percent(r.recall) << '\n';
  }
  return os.str();
}

}  // namespace poselift
