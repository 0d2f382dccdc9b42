#include "dal/augment/augment.hpp"

#include <algorithm>
#include <cmath>

namespace dal::aug {

void ResizeRange::validate() const {
  if (!(lo > 0) || !(lo <= hi)) throw ConfigError("resize range needs 0 < lo <= hi");
}

ResizeDraw draw_resize(const ResizeConfig& config, int src_height, int src_width, bool train, Rng& rng) {
  config.range.validate();
  ResizeDraw d;
  d.scale = train ? rng.uniform(config.range.lo, config.range.hi) : config.eval_scale;
  const int h = static_cast<int>(src_height * d.scale), w = static_cast<int>(src_width * d.scale);
  d.crop_y = h - config.input_height;
  const int slack = w - config.input_width;
  if (train && slack > 0)
    d.crop_x = static_cast<int>(rng.randint(0, slack));
  else
    d.crop_x = slack / 2;  // centred, or symmetric padding when negative
  return d;
}

void resize_view(const synth::Image& src, const synth::CameraView& view, const ResizeDraw& draw, int out_height,
                 int out_width, synth::Image& out, synth::CameraView& out_view) {
  const double s = draw.scale;
  const int h = static_cast<int>(src.height * s), w = static_cast<int>(src.width * s);
  if (!(s > 0) || h < 1 || w < 1 || draw.crop_x >= w || draw.crop_y >= h || draw.crop_x + out_width <= 0 ||
      draw.crop_y + out_height <= 0)
    throw ConfigError("resize: crop window does not overlap the scaled image (scale " + std::to_string(s) + ")");
  out.height = out_height;
  out.width = out_width;
  out.rgb.assign(static_cast<std::size_t>(out_height) * out_width * 3, 0);
  for (int r = 0; r < out_height; ++r) {
    const int ry = r + draw.crop_y;
    if (ry < 0 || ry >= h) continue;
    const double sy = std::clamp((ry + 0.5) / s - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(sy), y1 = std::min(y0 + 1, src.height - 1);
    const double fy = sy - y0;
    for (int c = 0; c < out_width; ++c) {
      const int rx = c + draw.crop_x;
      if (rx < 0 || rx >= w) continue;
      const double sx = std::clamp((rx + 0.5) / s - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(sx), x1 = std::min(x0 + 1, src.width - 1);
      const double fx = sx - x0;
      for (int k = 0; k < 3; ++k) {
        auto px = [&](int y, int x) { return static_cast<double>(src.rgb[(static_cast<std::size_t>(y) * src.width + x) * 3 + k]); };
        const double v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x1)) + fy * ((1 - fx) * px(y1, x0) + fx * px(y1, x1));
        out.rgb[(static_cast<std::size_t>(r) * out_width + c) * 3 + k] = static_cast<std::uint8_t>(std::lround(v));
      }
    }
  }
  out_view = view;
  out_view.fx = s * view.fx;
  out_view.fy = s * view.fy;
  out_view.cx = s * view.cx - draw.crop_x;
  out_view.cy = s * view.cy - draw.crop_y;
  out_view.height = out_height;
  out_view.width = out_width;
}

Mat3 GlobalDraw::matrix() const {
  const Mat3 flip = Mat3::diag(flip_y ? -1 : 1, flip_x ? -1 : 1, 1);
  return flip * Mat3::diag(scale, scale, scale) * Mat3::rot_z(rotation);
}

GlobalDraw draw_global(const GlobalAugConfig& config, Rng& rng) {
  GlobalDraw d;
  if (!config.enabled) return d;
  d.rotation = rng.uniform(-config.rot_range, config.rot_range);
  d.scale = rng.uniform(config.scale_lo, config.scale_hi);
  d.flip_x = rng.bernoulli(config.flip_x_prob);
  d.flip_y = rng.bernoulli(config.flip_y_prob);
  return d;
}

synth::Box3D transform_box(const synth::Box3D& box, const Mat3& m) {
  synth::Box3D b = box;
  b.center = m * box.center;
  const double s = std::sqrt(std::abs(m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0)));
  b.size = box.size * s;
  const Vec3 heading = m * Vec3{std::cos(box.yaw), std::sin(box.yaw), 0};
  b.yaw = wrap_angle(std::atan2(heading.y, heading.x));
  const Vec3 v = m * Vec3{box.vx, box.vy, 0};
  b.vx = v.x;
  b.vy = v.y;
  return b;
}

void global_aug(const Mat3& m, std::vector<synth::LidarPoint>& points, synth::AnnotationSet& annotations) {
  if (m == Mat3::identity()) return;
  for (auto& p : points) {
    const Vec3 q = m * Vec3{p.x, p.y, p.z};
    p.x = q.x;
    p.y = q.y;
    p.z = q.z;
  }
  for (auto& a : annotations) {
    a.box = transform_box(a.box, m);
    a.gravity_center = m * a.gravity_center;
  }
}

int velocity_aug(std::vector<synth::LidarPoint>& points, synth::Box3D& box, double vx, double vy) {
  if (box.vx != 0 || box.vy != 0) throw ConfigError("velocity_aug: box is not static");
  int moved = 0;
  for (auto& p : points)
    if (box.contains({p.x, p.y, p.z})) {
      p.x -= vx * p.dt;
      p.y -= vy * p.dt;
      ++moved;
    }
  box.vx = vx;
  box.vy = vy;
  return moved;
}

int velocity_aug_sample(const VelocityAugConfig& config, std::vector<synth::LidarPoint>& points,
                        synth::AnnotationSet& annotations, Rng& rng) {
  if (!config.enabled) return 0;
  // membership is fixed before any shift so moved points never join a second box
  std::vector<int> owner(points.size(), -1);
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t a = 0; a < annotations.size(); ++a)
      if (annotations[a].box.contains({points[i].x, points[i].y, points[i].z})) {
        owner[i] = static_cast<int>(a);
        break;
      }
  int augmented = 0;
  for (std::size_t a = 0; a < annotations.size(); ++a) {
    auto& box = annotations[a].box;
    if (box.vx != 0 || box.vy != 0 || !rng.bernoulli(config.probability)) continue;
    const double speed = rng.uniform(0, config.max_speed), heading = rng.uniform(-M_PI, M_PI);
    box.vx = speed * std::cos(heading);
    box.vy = speed * std::sin(heading);
    double sx = 0, sy = 0, sz = 0;
    int n = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (owner[i] != static_cast<int>(a)) continue;
      auto& p = points[i];
      p.x -= box.vx * p.dt;
      p.y -= box.vy * p.dt;
      sx += p.x;
      sy += p.y;
      sz += p.z;
      ++n;
    }
    if (n > 0) annotations[a].gravity_center = {sx / n, sy / n, sz / n};
    ++augmented;
  }
  return augmented;
}

CbgsResult cbgs_resample(const std::vector<std::vector<int>>& class_counts, int num_classes, std::uint64_t seed) {
  CbgsResult r;
  std::vector<std::vector<std::size_t>> with_class(num_classes);
  for (std::size_t i = 0; i < class_counts.size(); ++i)
    for (int c = 0; c < num_classes && c < static_cast<int>(class_counts[i].size()); ++c)
      if (class_counts[i][c] > 0) with_class[c].push_back(i);
  std::size_t total = 0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (with_class[c].empty())
      r.excluded_classes.push_back(c);
    else
      ++present;
    total += with_class[c].size();
  }
  if (present == 0) return r;
  Rng rng(seed);
  const double frac = 1.0 / present;
  for (int c = 0; c < num_classes; ++c) {
    const auto& idx = with_class[c];
    if (idx.empty()) continue;
    const double ratio = frac / (static_cast<double>(idx.size()) / total);
    const auto draws = static_cast<std::size_t>(idx.size() * ratio);
    for (std::size_t k = 0; k < draws; ++k) r.indices.push_back(idx[rng.randint(0, static_cast<std::int64_t>(idx.size()) - 1)]);
  }
  return r;
}

}  // namespace dal::aug
