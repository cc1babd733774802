#include "poselift/tracks.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "poselift/csv.hpp"
#include "poselift/error.hpp"

namespace poselift {
namespace {

constexpr std::string_view kTrackHeader = "frame,keypoint,x,y,likelihood";

struct Sidecar {
  std::string camera;
  ImageSize resolution;
  double fps = 0;
  std::optional<std::size_t> frames;
};

Sidecar read_sidecar(const std::filesystem::path& path) {
  const auto doc = read_json(path);
  const std::string src = path.string();
  if (!doc.is_object()) throw ParseError(src, 0, "sidecar must be a JSON object");
  for (const auto& [key, _] : doc.items())
    if (key != "camera" && key != "resolution" && key != "fps" && key != "frames")
      throw ParseError(src, 0, "unknown field '" + key + "'");
  Sidecar s;
  try {
    s.camera = doc.at("camera").get<std::string>();
    const auto& res = doc.at("resolution");
    if (!res.is_array() || res.size() != 2) throw ParseError(src, 0, "'resolution' must be [w, h]");
    s.resolution = {res[0].get<int>(), res[1].get<int>()};
    s.fps = doc.at("fps").get<double>();
    if (doc.contains("frames")) s.frames = doc.at("frames").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(src, 0, e.what());
  }
  if (s.resolution.width <= 0 || s.resolution.height <= 0) throw ParseError(src, 0, "resolution must be positive");
  return s;
}

}  // namespace

TrackSet read_tracks(const std::filesystem::path& csv, const SkeletonDefinition& skeleton) {
  auto sidecar = csv;
  sidecar.replace_extension(".json");
  return read_tracks(csv, sidecar, skeleton);
}

TrackSet read_tracks(const std::filesystem::path& csv, const std::filesystem::path& sidecar_path,
                     const SkeletonDefinition& skeleton) {
  const Sidecar sidecar = read_sidecar(sidecar_path);
  const auto lines = read_lines(csv);
  const std::string src = csv.string();
  if (lines.empty() || lines[0] != kTrackHeader)
    throw ParseError(src, 1, "header must be '" + std::string(kTrackHeader) + "'");

  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t k = 0; k < skeleton.size(); ++k) index.emplace(skeleton.keypoints[k], k);

  struct Row {
    std::size_t line, frame, kp;
    double x, y, likelihood;
  };
  std::vector<Row> rows;
  std::size_t max_frame_plus_one = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t row = i + 1;
    if (lines[i].empty()) continue;
    const auto fields = split_fields(lines[i]);
    if (fields.size() != 5) throw ParseError(src, row, "expected 5 fields, got " + std::to_string(fields.size()));
    const long long frame = parse_integer(fields[0], src, row);
    if (frame < 0) throw ParseError(src, row, "negative frame index");
    const auto it = index.find(fields[1]);
    if (it == index.end()) throw ParseError(src, row, "unknown keypoint '" + std::string(fields[1]) + "'");
    Row r{row, static_cast<std::size_t>(frame), it->second, parse_double(fields[2], src, row),
          parse_double(fields[3], src, row), parse_double(fields[4], src, row)};
    if (r.likelihood < 0.0 || r.likelihood > 1.0)
      throw ParseError(src, row, "likelihood " + std::string(fields[4]) + " outside [0, 1]");
    if (sidecar.frames && r.frame >= *sidecar.frames)
      throw ParseError(src, row, "frame beyond the sidecar frame count");
    max_frame_plus_one = std::max(max_frame_plus_one, r.frame + 1);
    rows.push_back(r);
  }

  TrackSet t(sidecar.camera, sidecar.resolution, sidecar.fps, skeleton.keypoints,
             sidecar.frames.value_or(max_frame_plus_one));
  for (const auto& r : rows) {
    auto& obs = t.at(r.frame, r.kp);
    if (!obs.missing)
      throw ParseError(src, r.line, "duplicate row for frame " + std::to_string(r.frame) + " keypoint '" +
                                       skeleton.keypoints[r.kp] + "'");
    obs = {r.x, r.y, r.likelihood, false};
  }
  return t;
}

std::string tracks_csv(const TrackSet& t) {
  std::string out(kTrackHeader);
  out += '\n';
  for (std::size_t f = 0; f < t.frames; ++f) {
    for (std::size_t k = 0; k < t.keypoints.size(); ++k) {
      const auto& o = t.at(f, k);
      if (o.missing) continue;
      out += std::to_string(f) + ',' + t.keypoints[k] + ',' + format_double(o.x) + ',' + format_double(o.y) + ',' +
             format_double(o.likelihood) + '\n';
    }
  }
  return out;
}

void write_tracks(const TrackSet& t, const std::filesystem::path& csv) {
  write_text(csv, tracks_csv(t));
  auto sidecar = csv;
  sidecar.replace_extension(".json");
  write_json({{"camera", t.camera},
              {"resolution", {t.resolution.width, t.resolution.height}},
              {"fps", t.fps},
              {"frames", t.frames}},
             sidecar);
}

TrackSet threshold_likelihood(TrackSet t, double threshold) {
  for (auto& o : t.observations)
    if (o.likelihood < threshold) o.missing = true;
  return t;
}

std::vector<double> arma_smooth(std::span<const double> run, int p, int q) {
  if (p < 0 || q < 0) throw ArgumentError("ARMA orders must be non-negative");
  const auto n = static_cast<Eigen::Index>(run.size());
  std::vector<double> out(run.begin(), run.end());
  if (n < p + q + 2) return out;

  double mean = 0;
  for (double v : run) mean += v;
  mean /= double(n);
  Eigen::VectorXd y(n);
  for (Eigen::Index t = 0; t < n; ++t) y[t] = run[static_cast<std::size_t>(t)] - mean;

  // Stage 1: a long autoregression supplies innovation estimates for the MA
  // regressors.
  Eigen::VectorXd innov = Eigen::VectorXd::Zero(n);
  Eigen::Index long_order = 0;
  if (q > 0) {
    long_order = std::max<Eigen::Index>(p + q, std::min<Eigen::Index>(20, n / 4));
    const Eigen::Index rows = n - long_order;
    if (rows < 1) return out;
    Eigen::MatrixXd A(rows, long_order);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index i = 0; i < long_order; ++i) A(r, i) = y[long_order + r - 1 - i];
    const Eigen::VectorXd b = y.tail(rows);
    const Eigen::VectorXd phi_long = A.completeOrthogonalDecomposition().solve(b);
    innov.tail(rows) = b - A * phi_long;
  }

  // Stage 2: regress on lagged values and lagged innovations.
  const Eigen::Index start = std::max<Eigen::Index>(p, long_order + q);
  const Eigen::Index rows = n - start;
  if (rows < 1) return out;
  Eigen::MatrixXd A(rows, p + q);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::Index t = start + r;
    for (int i = 0; i < p; ++i) A(r, i) = y[t - 1 - i];
    for (int j = 0; j < q; ++j) A(r, p + j) = innov[t - 1 - j];
  }
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(p + q);
  if (p + q > 0) coef = A.completeOrthogonalDecomposition().solve(y.tail(rows));

  // Keep the innovation recursion stable.
  const double ma_mass = coef.tail(q).cwiseAbs().sum();
  if (ma_mass > 0.99) coef.tail(q) *= 0.99 / ma_mass;

  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  for (Eigen::Index t = p; t < n; ++t) {
    double pred = 0;
    for (int i = 0; i < p; ++i) pred += coef[i] * y[t - 1 - i];
    for (int j = 0; j < q; ++j)
      if (t - 1 - j >= 0) pred += coef[p + j] * e[t - 1 - j];
    e[t] = y[t] - pred;
    out[static_cast<std::size_t>(t)] = mean + pred;
  }
  return out;
}

TrackSet arma_filter(TrackSet t, int p, int q) {
  if (p < 0 || q < 0) throw ArgumentError("ARMA orders must be non-negative");
  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < t.keypoints.size(); ++k) {
    std::size_t f = 0;
    while (f < t.frames) {
      if (t.at(f, k).missing) {
        ++f;
        continue;
      }
      const std::size_t begin = f;
      xs.clear();
      ys.clear();
      for (; f < t.frames && !t.at(f, k).missing; ++f) {
        const auto& o = t.at(f, k);
        if (!std::isfinite(o.x) || !std::isfinite(o.y))
          throw NumericError("non-finite coordinate for keypoint '" + t.keypoints[k] + "' at frame " +
                             std::to_string(f) + " of camera '" + t.camera + "'");
        xs.push_back(o.x);
        ys.push_back(o.y);
      }
      const auto sx = arma_smooth(xs, p, q);
      const auto sy = arma_smooth(ys, p, q);
      for (std::size_t i = 0; i < sx.size(); ++i) {
        t.at(begin + i, k).x = sx[i];
        t.at(begin + i, k).y = sy[i];
      }
    }
  }
  return t;
}

Series median_filter_series(const Series& s, int window) {
  if (window < 1 || window % 2 == 0) throw ArgumentError("median window must be odd and >= 1, got " + std::to_string(window));
  const auto half = static_cast<std::ptrdiff_t>(window / 2);
  const auto n = static_cast<std::ptrdiff_t>(s.size());
  Series out(s.size());
  std::vector<double> buf;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (!s[static_cast<std::size_t>(i)]) continue;
    buf.clear();
    for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - half); j <= std::min(n - 1, i + half); ++j)
      if (const auto& v = s[static_cast<std::size_t>(j)]) buf.push_back(*v);
    const auto mid = buf.begin() + static_cast<std::ptrdiff_t>((buf.size() - 1) / 2);
    std::nth_element(buf.begin(), mid, buf.end());
    out[static_cast<std::size_t>(i)] = *mid;
  }
  return out;
}

TrackSet rescale(TrackSet t, ImageSize target) {
  if (target.width <= 0 || target.height <= 0 || t.resolution.width <= 0 || t.resolution.height <= 0)
    throw ArgumentError("rescale needs positive resolutions");
  const double sx = double(target.width) / double(t.resolution.width);
  const double sy = double(target.height) / double(t.resolution.height);
  for (auto& o : t.observations) {
    o.x *= sx;
    o.y *= sy;
  }
  t.resolution = target;
  return t;
}

}  // namespace poselift
