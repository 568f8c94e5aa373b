// Copyright 2026 The handlefit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "handlefit/observations.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "file_util.hpp"
#include "handlefit/error.hpp"

namespace handlefit {
namespace {

static_assert(std::endian::native == std::endian::little,
              ".flo reader assumes a little-endian host");

using json = nlohmann::json;

// Reads whitespace/comment separated header tokens of a PGM file.
class PgmHeaderReader {
 public:
  explicit PgmHeaderReader(std::string_view bytes) : bytes_(bytes) {}

  std::string token() {
    skip_space_and_comments();
    const size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    if (start == pos_) throw Error(ErrorKind::kParse, "pgm header ended early");
    return std::string(bytes_.substr(start, pos_ - start));
  }

  int integer() {
    const std::string t = token();
    int value = 0;
    for (char c : t) {
      if (c < '0' || c > '9') throw Error(ErrorKind::kParse, "pgm: bad integer '" + t + "'");
      value = value * 10 + (c - '0');
      if (value > (1 << 24)) throw Error(ErrorKind::kParse, "pgm: value too large");
    }
    return value;
  }

  // Binary raster begins after exactly one whitespace byte.
  size_t raster_start() const { return pos_ + 1; }
  size_t position() const { return pos_; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  std::string_view bytes_;
  size_t pos_ = 0;
};

template <typename T>
T read_le(std::string_view bytes, size_t offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

// Stand-in for "no foreground"; finite so the envelope arithmetic stays valid.
constexpr double kFar = 1e20;

// 1D squared-distance transform (Felzenszwalb & Huttenlocher) of f into d.
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
            std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    double s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * (q - v[k]));
    while (s <= z[k]) {
      --k;
      s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * (q - v[k]));
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double diff = q - v[k];
    d[q] = diff * diff + f[v[k]];
  }
}

}  // namespace

int Mask::foreground_count() const {
  return static_cast<int>(std::count_if(pixels.begin(), pixels.end(),
                                        [](std::uint8_t p) { return p != 0; }));
}

Mask parse_pgm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '2' && bytes[1] != '5')) {
    throw Error(ErrorKind::kUnsupportedFormat, "mask must be a P2 or P5 PGM file");
  }
  const bool binary = bytes[1] == '5';
  PgmHeaderReader reader(bytes.substr(2));
  Mask mask;
  mask.width = reader.integer();
  mask.height = reader.integer();
  const int maxval = reader.integer();
  if (maxval != 255) {
    throw Error(ErrorKind::kUnsupportedFormat, "pgm maxval must be 255, got " + std::to_string(maxval));
  }
  if (mask.width <= 0 || mask.height <= 0) {
    throw Error(ErrorKind::kZeroResolution, "pgm has zero size");
  }
  const size_t count = static_cast<size_t>(mask.width) * mask.height;
  mask.pixels.resize(count);
  if (binary) {
    const size_t start = 2 + reader.raster_start();
    if (bytes.size() < start + count) {
      throw Error(ErrorKind::kTruncatedFile, "pgm raster is truncated");
    }
    for (size_t i = 0; i < count; ++i) {
      mask.pixels[i] = static_cast<unsigned char>(bytes[start + i]) >= kMaskThreshold ? 1 : 0;
    }
  } else {
    for (size_t i = 0; i < count; ++i) {
      int value = 0;
      try {
        value = reader.integer();
      } catch (const Error&) {
        throw Error(ErrorKind::kTruncatedFile, "pgm raster is truncated");
      }
      if (value > 255) throw Error(ErrorKind::kParse, "pgm value exceeds maxval");
      mask.pixels[i] = value >= kMaskThreshold ? 1 : 0;
    }
  }
  return mask;
}

Mask load_mask(const std::filesystem::path& path) { return parse_pgm(detail::read_file(path)); }

std::string format_pgm(const Mask& mask) {
  std::string out = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
  out.reserve(out.size() + mask.pixels.size());
  for (std::uint8_t p : mask.pixels) out.push_back(static_cast<char>(p ? 255 : 0));
  return out;
}

void save_mask(const Mask& mask, const std::filesystem::path& path) {
  detail::write_file(path, format_pgm(mask));
}

bool FlowField::valid(int x, int y) const {
  const Eigen::Vector2d f = at(x, y);
  return std::isfinite(f[0]) && std::isfinite(f[1]) && std::abs(f[0]) <= kInvalidFlowThreshold &&
         std::abs(f[1]) <= kInvalidFlowThreshold;
}

FlowField parse_flo(std::string_view bytes) {
  if (bytes.size() < 4) throw Error(ErrorKind::kTruncatedFile, "flo header is truncated");
  if (read_le<float>(bytes, 0) != kFloMagic) throw Error(ErrorKind::kBadMagic, "not a .flo file");
  if (bytes.size() < 12) throw Error(ErrorKind::kTruncatedFile, "flo header is truncated");
  FlowField flow;
  flow.width = read_le<std::int32_t>(bytes, 4);
  flow.height = read_le<std::int32_t>(bytes, 8);
  if (flow.width <= 0 || flow.height <= 0) {
    throw Error(ErrorKind::kZeroResolution, "flo has zero size");
  }
  const size_t values = 2 * static_cast<size_t>(flow.width) * flow.height;
  if (bytes.size() < 12 + 4 * values) throw Error(ErrorKind::kTruncatedFile, "flo data is truncated");
  flow.data.resize(values);
  std::memcpy(flow.data.data(), bytes.data() + 12, 4 * values);
  return flow;
}

FlowField load_flo(const std::filesystem::path& path) { return parse_flo(detail::read_file(path)); }

std::string format_flo(const FlowField& flow) {
  std::string out(12 + 4 * flow.data.size(), '\0');
  const float magic = kFloMagic;
  const std::int32_t w = flow.width, h = flow.height;
  std::memcpy(out.data(), &magic, 4);
  std::memcpy(out.data() + 4, &w, 4);
  std::memcpy(out.data() + 8, &h, 4);
  std::memcpy(out.data() + 12, flow.data.data(), 4 * flow.data.size());
  return out;
}

void save_flo(const FlowField& flow, const std::filesystem::path& path) {
  detail::write_file(path, format_flo(flow));
}

std::optional<FlowSample> sample_flow(const FlowField& flow, const Eigen::Vector2d& p) {
  if (!(p[0] >= -0.5 && p[0] <= flow.width - 0.5 && p[1] >= -0.5 && p[1] <= flow.height - 0.5)) {
    std::ostringstream msg;
    msg << "flow sample at (" << p[0] << ", " << p[1] << ") outside " << flow.width << "x"
        << flow.height;
    throw Error(ErrorKind::kOutOfBounds, msg.str());
  }
  const int x0 = static_cast<int>(std::floor(p[0]));
  const int y0 = static_cast<int>(std::floor(p[1]));
  const double fx = p[0] - x0;
  const double fy = p[1] - y0;
  const double wx[2] = {1.0 - fx, fx};
  const double wy[2] = {1.0 - fy, fy};

  bool usable = true;
  Eigen::Vector2d tap[2][2];
  for (int j = 0; j < 2; ++j) {
    for (int i = 0; i < 2; ++i) {
      const int x = x0 + i, y = y0 + j;
      const bool ok = x >= 0 && y >= 0 && x < flow.width && y < flow.height && flow.valid(x, y);
      if (ok) {
        tap[j][i] = flow.at(x, y);
      } else if (wx[i] * wy[j] != 0.0) {
        usable = false;
      } else {
        tap[j][i] = Eigen::Vector2d::Constant(std::numeric_limits<double>::quiet_NaN());
      }
    }
  }

  if (usable) {
    // Zero-weight taps that are unavailable borrow their neighbour so the
    // one-sided derivative stays finite.
    for (int j = 0; j < 2; ++j) {
      for (int i = 0; i < 2; ++i) {
        if (!tap[j][i].allFinite()) {
          const Eigen::Vector2d& alt = tap[j][1 - i].allFinite() ? tap[j][1 - i] : tap[1 - j][i];
          tap[j][i] = alt.allFinite() ? alt : tap[1 - j][1 - i];
        }
      }
    }
    FlowSample s;
    s.value = wy[0] * (wx[0] * tap[0][0] + wx[1] * tap[0][1]) +
              wy[1] * (wx[0] * tap[1][0] + wx[1] * tap[1][1]);
    s.jacobian.col(0) = wy[0] * (tap[0][1] - tap[0][0]) + wy[1] * (tap[1][1] - tap[1][0]);
    s.jacobian.col(1) = wx[0] * (tap[1][0] - tap[0][0]) + wx[1] * (tap[1][1] - tap[0][1]);
    s.interpolated = true;
    return s;
  }

  // Nearest valid pixel centre; ties resolved by row-major order.
  double best = std::numeric_limits<double>::infinity();
  int bx = -1, by = -1;
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      if (!flow.valid(x, y)) continue;
      const double d = (Eigen::Vector2d(x, y) - p).squaredNorm();
      if (d < best) {
        best = d;
        bx = x;
        by = y;
      }
    }
  }
  if (bx < 0) return std::nullopt;
  FlowSample s;
  s.value = flow.at(bx, by);
  s.jacobian.setZero();
  s.interpolated = false;
  return s;
}

void validate_keypoints(const KeypointSet& keypoints) {
  for (const Keypoint& k : keypoints.points) {
    if (!std::isfinite(k.x) || !std::isfinite(k.y)) {
      throw Error(ErrorKind::kInvalidArgument, "keypoint '" + k.name + "' is not finite");
    }
  }
  if (!keypoints.regressor) return;
  const Eigen::MatrixXd& r = *keypoints.regressor;
  if (r.rows() != static_cast<Eigen::Index>(keypoints.points.size())) {
    throw Error(ErrorKind::kDimensionMismatch,
                "regressor has " + std::to_string(r.rows()) + " rows for " +
                    std::to_string(keypoints.points.size()) + " keypoints");
  }
  for (Eigen::Index j = 0; j < r.rows(); ++j) {
    if (!r.row(j).allFinite() || (r.row(j).array() < 0.0).any()) {
      throw Error(ErrorKind::kInvalidArgument,
                  "regressor row " + std::to_string(j) + " has negative or non-finite entries");
    }
    if (std::abs(r.row(j).sum() - 1.0) > kRowSumTolerance) {
      throw Error(ErrorKind::kInvalidArgument,
                  "regressor row " + std::to_string(j) + " does not sum to 1");
    }
  }
}

KeypointSet keypoints_from_json(std::string_view text) {
  KeypointSet out;
  try {
    const json j = json::parse(text);
    for (const json& p : j.at("points")) {
      Keypoint k;
      k.name = p.value("name", std::string());
      k.x = p.at("x").get<double>();
      k.y = p.at("y").get<double>();
      k.visible = p.value("visible", true);
      out.points.push_back(std::move(k));
    }
    if (j.contains("regressor") && !j["regressor"].is_null()) {
      const auto rows = j["regressor"].get<std::vector<std::vector<double>>>();
      const size_t cols = rows.empty() ? 0 : rows.front().size();
      Eigen::MatrixXd r(rows.size(), cols);
      for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != cols) throw Error(ErrorKind::kParse, "ragged regressor rows");
        for (size_t c = 0; c < cols; ++c) r(i, c) = rows[i][c];
      }
      out.regressor = std::move(r);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("keypoints json: ") + e.what());
  }
  validate_keypoints(out);
  return out;
}

std::string keypoints_to_json(const KeypointSet& keypoints) {
  json j;
  j["points"] = json::array();
  for (const Keypoint& k : keypoints.points) {
    j["points"].push_back({{"name", k.name}, {"x", k.x}, {"y", k.y}, {"visible", k.visible}});
  }
  if (keypoints.regressor) {
    json rows = json::array();
    const Eigen::MatrixXd& r = *keypoints.regressor;
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
      std::vector<double> row(r.cols());
      for (Eigen::Index c = 0; c < r.cols(); ++c) row[c] = r(i, c);
      rows.push_back(row);
    }
    j["regressor"] = rows;
  }
  return j.dump();
}

KeypointSet load_keypoints(const std::filesystem::path& path) {
  return keypoints_from_json(detail::read_file(path));
}

void save_keypoints(const KeypointSet& keypoints, const std::filesystem::path& path) {
  detail::write_file(path, keypoints_to_json(keypoints));
}

DistanceField distance_transform(const Mask& mask) {
  if (mask.width <= 0 || mask.height <= 0) {
    throw Error(ErrorKind::kZeroResolution, "mask has zero size");
  }
  if (mask.empty()) throw Error(ErrorKind::kEmptyMask, "mask has no foreground pixels");
  const int w = mask.width, h = mask.height;
  std::vector<double> grid(static_cast<size_t>(w) * h);
  for (size_t i = 0; i < grid.size(); ++i) grid[i] = mask.pixels[i] ? 0.0 : kFar;

  const int longest = std::max(w, h);
  std::vector<double> f(longest), d(longest), z(longest + 1);
  std::vector<int> v(longest);
  // Columns, then rows. Integer-valued squared distances keep this exact.
  f.resize(h);
  d.resize(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = grid[static_cast<size_t>(y) * w + x];
    edt_1d(f, d, v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<size_t>(y) * w + x] = d[y];
  }
  f.resize(w);
  d.resize(w);
  for (int y = 0; y < h; ++y) {
    std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(y) * w, w, f.begin());
    edt_1d(f, d, v, z);
    std::copy_n(d.begin(), w, grid.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }

  DistanceField out;
  out.width = w;
  out.height = h;
  out.values.resize(grid.size());
  for (size_t i = 0; i < grid.size(); ++i) out.values[i] = std::sqrt(grid[i]);
  return out;
}

DistanceSample sample_distance(const DistanceField& field, const Eigen::Vector2d& p) {
  const double max_x = field.width - 1, max_y = field.height - 1;
  const double cx = std::clamp(p[0], 0.0, max_x);
  const double cy = std::clamp(p[1], 0.0, max_y);
  const bool clamped_x = p[0] < 0.0 || p[0] > max_x;
  const bool clamped_y = p[1] < 0.0 || p[1] > max_y;
  const int x0 = std::min(static_cast<int>(std::floor(cx)), std::max(field.width - 2, 0));
  const int y0 = std::min(static_cast<int>(std::floor(cy)), std::max(field.height - 2, 0));
  const int x1 = std::min(x0 + 1, field.width - 1);
  const int y1 = std::min(y0 + 1, field.height - 1);
  const double fx = cx - x0, fy = cy - y0;
  const double d00 = field.at(x0, y0), d10 = field.at(x1, y0);
  const double d01 = field.at(x0, y1), d11 = field.at(x1, y1);

  DistanceSample s;
  s.value = (1 - fy) * ((1 - fx) * d00 + fx * d10) + fy * ((1 - fx) * d01 + fx * d11);
  s.gradient[0] = clamped_x || x1 == x0 ? 0.0 : (1 - fy) * (d10 - d00) + fy * (d11 - d01);
  s.gradient[1] = clamped_y || y1 == y0 ? 0.0 : (1 - fx) * (d01 - d00) + fx * (d11 - d10);
  return s;
}

std::vector<Eigen::Vector2d> boundary_points(const Mask& mask) {
  std::vector<Eigen::Vector2d> out;
  auto background = [&](int x, int y) { return !mask.in_bounds(x, y) || !mask.at(x, y); };
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      if (background(x - 1, y) || background(x + 1, y) || background(x, y - 1) ||
          background(x, y + 1)) {
        out.emplace_back(x, y);
      }
    }
  }
  return out;
}

FrameObservation FrameObservation::create(Mask mask, std::optional<KeypointSet> keypoints,
                                          std::optional<FlowField> flow_to_next) {
  if (mask.width <= 0 || mask.height <= 0) {
    throw Error(ErrorKind::kZeroResolution, "mask has zero size");
  }
  if (flow_to_next && (flow_to_next->width != mask.width || flow_to_next->height != mask.height)) {
    throw Error(ErrorKind::kDimensionMismatch, "flow and mask sizes differ");
  }
  if (keypoints) validate_keypoints(*keypoints);
  FrameObservation obs;
  obs.mask = std::move(mask);
  obs.keypoints = std::move(keypoints);
  obs.flow_to_next = std::move(flow_to_next);
  if (!obs.mask.empty()) {
    obs.distance = distance_transform(obs.mask);
    obs.boundary = boundary_points(obs.mask);
  }
  return obs;
}

Eigen::Vector2i pixel_of(const Eigen::Vector2d& p) {
  return {static_cast<int>(std::lround(p[0])), static_cast<int>(std::lround(p[1]))};
}

std::vector<std::uint8_t> vertex_visibility(const Eigen::MatrixX3d& vertices,
                                            const Eigen::MatrixX3i& faces,
                                            const WeakPerspectiveCamera& cam, int width,
                                            int height, double tau_fraction) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorKind::kZeroResolution, "visibility raster has zero size");
  }
  validate_camera(cam);
  const ProjectionWithDepth proj = project_with_depth(cam, vertices);
  const auto n = vertices.rows();
  std::vector<std::uint8_t> visible(static_cast<size_t>(n), 0);
  if (n == 0) return visible;

  constexpr double kEdgeEps = 1e-9;
  std::vector<double> zbuf(static_cast<size_t>(width) * height,
                           std::numeric_limits<double>::infinity());
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    const int ia = faces(f, 0), ib = faces(f, 1), ic = faces(f, 2);
    const Eigen::Vector2d a = proj.image.row(ia), b = proj.image.row(ib), c = proj.image.row(ic);
    const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (std::abs(area) < 1e-12) continue;
    const int xmin = std::max(0, static_cast<int>(std::ceil(std::min({a.x(), b.x(), c.x()}) - kEdgeEps)));
    const int xmax = std::min(width - 1, static_cast<int>(std::floor(std::max({a.x(), b.x(), c.x()}) + kEdgeEps)));
    const int ymin = std::max(0, static_cast<int>(std::ceil(std::min({a.y(), b.y(), c.y()}) - kEdgeEps)));
    const int ymax = std::min(height - 1, static_cast<int>(std::floor(std::max({a.y(), b.y(), c.y()}) + kEdgeEps)));
    for (int y = ymin; y <= ymax; ++y) {
      for (int x = xmin; x <= xmax; ++x) {
        const Eigen::Vector2d p(x, y);
        const double wa = ((b - p).x() * (c - p).y() - (b - p).y() * (c - p).x()) / area;
        const double wb = ((c - p).x() * (a - p).y() - (c - p).y() * (a - p).x()) / area;
        const double wc = 1.0 - wa - wb;
        if (wa < -kEdgeEps || wb < -kEdgeEps || wc < -kEdgeEps) continue;
        const double depth = wa * proj.depth[ia] + wb * proj.depth[ib] + wc * proj.depth[ic];
        double& slot = zbuf[static_cast<size_t>(y) * width + x];
        slot = std::min(slot, depth);
      }
    }
  }

  const double tau = tau_fraction * (proj.depth.maxCoeff() - proj.depth.minCoeff());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector2i px = pixel_of(proj.image.row(i).transpose());
    if (px.x() < 0 || px.y() < 0 || px.x() >= width || px.y() >= height) continue;
    const double z = zbuf[static_cast<size_t>(px.y()) * width + px.x()];
    // A pixel no triangle covers cannot occlude.
    visible[i] = (std::isinf(z) || proj.depth[i] <= z + tau) ? 1 : 0;
  }
  return visible;
}

std::vector<std::uint8_t> vertex_visibility(const TriMesh& mesh, const WeakPerspectiveCamera& cam,
                                            int width, int height, double tau_fraction) {
  return vertex_visibility(mesh.vertices, mesh.faces, cam, width, height, tau_fraction);
}

std::vector<std::uint8_t> motion_eligibility(const std::vector<std::uint8_t>& visible_t,
                                             const std::vector<std::uint8_t>& visible_t1,
                                             const Eigen::MatrixX2d& projected_t,
                                             const Mask& mask_t) {
  const size_t n = visible_t.size();
  if (visible_t1.size() != n || static_cast<size_t>(projected_t.rows()) != n) {
    throw Error(ErrorKind::kDimensionMismatch, "eligibility inputs have different lengths");
  }
  std::vector<std::uint8_t> gamma(n, 0);
  for (size_t i = 0; i < n; ++i) {
    if (!visible_t[i] || !visible_t1[i]) continue;
    const Eigen::Vector2i px = pixel_of(projected_t.row(static_cast<Eigen::Index>(i)).transpose());
    gamma[i] = mask_t.in_bounds(px.x(), px.y()) && mask_t.at(px.x(), px.y()) ? 1 : 0;
  }
  return gamma;
}

}  // namespace handlefit
