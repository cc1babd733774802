#include "poselift/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "poselift/csv.hpp"
#include "poselift/error.hpp"
#include "poselift/pose.hpp"

namespace poselift {

std::optional<std::size_t> SkeletonDefinition::index_of(std::string_view keypoint) const {
  const auto it = std::find(keypoints.begin(), keypoints.end(), keypoint);
  if (it == keypoints.end()) return std::nullopt;
  return static_cast<std::size_t>(it - keypoints.begin());
}

std::vector<std::string> SkeletonDefinition::group_names() const {
  std::vector<std::string> out;
  for (const auto& g : groups)
    if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(g);
  return out;
}

std::vector<std::size_t> SkeletonDefinition::members(std::string_view group) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < groups.size(); ++i)
    if (groups[i] == group) out.push_back(i);
  return out;
}

const std::vector<std::pair<std::string, std::size_t>>& horse28_group_sizes() {
  static const std::vector<std::pair<std::string, std::size_t>> sizes = {
      {"Nostrils", 2}, {"Ears", 2},  {"Eyes", 2}, {"Head Top", 1},
      {"Withers", 1},  {"Croup", 1}, {"Tail", 3}, {"Legs", 16}};
  return sizes;
}

const SkeletonDefinition& horse28() {
  static const SkeletonDefinition skel = [] {
    SkeletonDefinition s;
    s.name = "horse-28";
    auto add = [&](std::string kp, std::string group) {
      s.keypoints.push_back(std::move(kp));
      s.groups.push_back(std::move(group));
    };
    add("nostril_left", "Nostrils");
    add("nostril_right", "Nostrils");
    add("ear_left", "Ears");
    add("ear_right", "Ears");
    add("eye_left", "Eyes");
    add("eye_right", "Eyes");
    add("head_top", "Head Top");
    add("withers", "Withers");
    add("croup", "Croup");
    add("tail_base", "Tail");
    add("tail_mid", "Tail");
    add("tail_tip", "Tail");
    // Four points per leg, top to bottom.
    for (const char* leg : {"front_left", "front_right"})
      for (const char* joint : {"elbow", "carpus", "fetlock", "hoof"}) add(std::string(leg) + "_" + joint, "Legs");
    for (const char* leg : {"hind_left", "hind_right"})
      for (const char* joint : {"stifle", "tarsus", "fetlock", "hoof"}) add(std::string(leg) + "_" + joint, "Legs");

    s.edges = {{"nostril_left", "eye_left"}, {"nostril_right", "eye_right"}, {"eye_left", "ear_left"},
               {"eye_right", "ear_right"},   {"ear_left", "head_top"},       {"ear_right", "head_top"},
               {"head_top", "withers"},      {"withers", "croup"},           {"croup", "tail_base"},
               {"tail_base", "tail_mid"},    {"tail_mid", "tail_tip"}};
    for (const char* leg : {"front_left", "front_right"}) {
      const std::string l(leg);
      s.edges.emplace_back("withers", l + "_elbow");
      s.edges.emplace_back(l + "_elbow", l + "_carpus");
      s.edges.emplace_back(l + "_carpus", l + "_fetlock");
      s.edges.emplace_back(l + "_fetlock", l + "_hoof");
    }
    for (const char* leg : {"hind_left", "hind_right"}) {
      const std::string l(leg);
      s.edges.emplace_back("croup", l + "_stifle");
      s.edges.emplace_back(l + "_stifle", l + "_tarsus");
      s.edges.emplace_back(l + "_tarsus", l + "_fetlock");
      s.edges.emplace_back(l + "_fetlock", l + "_hoof");
    }
    return s;
  }();
  return skel;
}

void validate(const SkeletonDefinition& skel) {
  if (skel.keypoints.empty()) throw ConfigError("skeleton has no keypoints");
  if (skel.groups.size() != skel.keypoints.size()) throw ConfigError("every keypoint needs a group");
  std::set<std::string> names;
  for (const auto& kp : skel.keypoints) {
    if (kp.empty()) throw ConfigError("empty keypoint name");
    if (!names.insert(kp).second) throw ConfigError("duplicate keypoint '" + kp + "'");
  }
  for (const auto& [a, b] : skel.edges)
    if (!names.count(a) || !names.count(b)) throw ConfigError("edge references unknown keypoint " + a + "-" + b);
  if (skel.name == "horse-28") {
    std::map<std::string, std::size_t> counts;
    for (const auto& g : skel.groups) ++counts[g];
    const auto& expected = horse28_group_sizes();
    bool ok = counts.size() == expected.size();
    for (const auto& [g, n] : expected) ok = ok && counts[g] == n;
    if (!ok) throw ConfigError("skeleton 'horse-28' does not match the 28-keypoint group cardinalities");
  }
}

SkeletonDefinition skeleton_from_json(const nlohmann::json& doc, const std::string& source) {
  if (!doc.is_object()) throw ParseError(source, 0, "skeleton must be a JSON object");
  for (const auto& [key, _] : doc.items())
    if (key != "name" && key != "keypoints" && key != "groups" && key != "edges")
      throw ParseError(source, 0, "unknown field '" + key + "'");
  SkeletonDefinition s;
  try {
    s.name = doc.at("name").get<std::string>();
    s.keypoints = doc.at("keypoints").get<std::vector<std::string>>();
    const auto& groups = doc.at("groups");
    if (!groups.is_object()) throw ParseError(source, 0, "'groups' must be an object");
    std::set<std::string> kps(s.keypoints.begin(), s.keypoints.end());
    for (const auto& [kp, _] : groups.items())
      if (!kps.count(kp)) throw ConfigError("group assigned to unknown keypoint '" + kp + "'");
    for (const auto& kp : s.keypoints) {
      if (!groups.contains(kp)) throw ConfigError("keypoint '" + kp + "' has no group");
      s.groups.push_back(groups.at(kp).get<std::string>());
    }
    if (doc.contains("edges")) {
      for (const auto& e : doc.at("edges")) {
        if (!e.is_array() || e.size() != 2) throw ParseError(source, 0, "edges must be [a, b] pairs");
        s.edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, 0, e.what());
  }
  validate(s);
  return s;
}

nlohmann::json skeleton_to_json(const SkeletonDefinition& skel) {
  nlohmann::json groups = nlohmann::json::object();
  for (std::size_t i = 0; i < skel.size(); ++i) groups[skel.keypoints[i]] = skel.groups[i];
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [a, b] : skel.edges) edges.push_back({a, b});
  return {{"name", skel.name}, {"keypoints", skel.keypoints}, {"groups", groups}, {"edges", edges}};
}

SkeletonDefinition load_skeleton(const std::filesystem::path& path) {
  return skeleton_from_json(read_json(path), path.string());
}

void save_skeleton(const SkeletonDefinition& skel, const std::filesystem::path& path) {
  write_json(skeleton_to_json(skel), path);
}

namespace {

struct Moments {
  std::vector<double> values;
  void add(double v) { values.push_back(v); }
  void append(const Moments& o) { values.insert(values.end(), o.values.begin(), o.values.end()); }
  std::optional<double> mean() const {
    if (values.empty()) return std::nullopt;
    double sum = 0;
    for (double v : values) sum += v;
    return sum / double(values.size());
  }
  // Two-pass population standard deviation.
  std::optional<double> stddev() const {
    const auto m = mean();
    if (!m) return std::nullopt;
    double ss = 0;
    for (double v : values) ss += (v - *m) * (v - *m);
    return std::sqrt(ss / double(values.size()));
  }
};

}  // namespace

PoseStatistics pose_statistics(const PoseSequence3D& seq) {
  const std::size_t frames = seq.frame_count();
  const std::size_t nkp = seq.skeleton.size();
  if (frames == 0 || nkp == 0) throw ArgumentError("cannot report on an empty pose sequence");

  PoseStatistics out;
  out.frames = frames;
  std::vector<double> errors;
  std::vector<std::size_t> present_frames(nkp, 0);
  std::vector<Moments> kp_err(nkp);
  Moments count;
  for (std::size_t f = 0; f < frames; ++f) {
    std::size_t present = 0;
    for (std::size_t k = 0; k < nkp; ++k) {
      const auto& kp = seq.at(f, k);
      if (!kp.present) continue;
      ++present;
      ++present_frames[k];
      errors.push_back(kp.reproj_error);
      kp_err[k].add(kp.reproj_error);
    }
    count.add(double(present));
  }
  out.present_observations = errors.size();
  out.mean_present_per_frame = *count.mean();
  out.std_present_per_frame = *count.stddev();

  Moments all{errors};
  out.mean_error = all.mean();
  out.std_error = all.stddev();
  if (!errors.empty()) {
    std::sort(errors.begin(), errors.end());
    const std::size_t n = errors.size();
    out.median_error = n % 2 ? errors[n / 2] : 0.5 * (errors[n / 2 - 1] + errors[n / 2]);
  }

  for (const auto& group : seq.skeleton.group_names()) {
    GroupStatistics g;
    g.group = group;
    Moments m;
    double kpp_sum = 0;
    for (std::size_t k : seq.skeleton.members(group)) {
      ++g.keypoint_count;
      kpp_sum += double(present_frames[k]) / double(frames);
      m.append(kp_err[k]);
    }
    g.kpp = kpp_sum / double(g.keypoint_count);
    g.mean_error = m.mean();
    g.std_error = m.stddev();
    out.groups.push_back(std::move(g));
  }
  return out;
}

std::string statistics_csv(const PoseStatistics& stats) {
  std::ostringstream os;
  os << "group,mean_err,std_err,kpp,kp_no\n";
  double kpp_weighted = 0;
  std::size_t total_kp = 0;
  for (const auto& g : stats.groups) {
    os << g.group << ',' << format_optional(g.mean_error) << ',' << format_optional(g.std_error) << ','
       << format_double(g.kpp) << ',' << g.keypoint_count << '\n';
    kpp_weighted += g.kpp * double(g.keypoint_count);
    total_kp += g.keypoint_count;
  }
  os << "All," << format_optional(stats.mean_error) << ',' << format_optional(stats.std_error) << ','
     << format_double(total_kp ? kpp_weighted / double(total_kp) : 0.0) << ',' << total_kp << '\n';
  return os.str();
}

std::string statistics_table(const PoseStatistics& stats) {
  auto pm = [](const std::optional<double>& m, const std::optional<double>& s) {
    if (!m) return std::string("-");
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << *m << "+-" << *s;
    return os.str();
  };
  std::ostringstream os;
  os << std::left << std::setw(12) << "group" << std::right << std::setw(20) << "repr. err. [px]"
     << std::setw(10) << "KPP" << std::setw(8) << "KP_no" << '\n';
  for (const auto& g : stats.groups) {
    std::ostringstream kpp;
    kpp << std::fixed << std::setprecision(2) << 100.0 * g.kpp << '%';
    os << std::left << std::setw(12) << g.group << std::right << std::setw(20) << pm(g.mean_error, g.std_error)
       << std::setw(10) << kpp.str() << std::setw(8) << g.keypoint_count << '\n';
  }
  os << std::fixed << std::setprecision(2);
  os << "frames: " << stats.frames << '\n';
  os << "reprojection error: " << pm(stats.mean_error, stats.std_error) << " px, median ";
  if (stats.median_error)
    os << *stats.median_error;
  else
    os << '-';
  os << " px\n";
  os << "keypoints per pose: " << stats.mean_present_per_frame << "+-" << stats.std_present_per_frame << '\n';
  return os.str();
}

}  // namespace poselift
