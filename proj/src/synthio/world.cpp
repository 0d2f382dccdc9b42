#include "dal/synthio/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "dal/common/rng.hpp"

namespace dal::synth {

Vec3 Box3D::to_local(const Vec3& p) const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double dx = p.x - center.x, dy = p.y - center.y;
  return {c * dx + s * dy, -s * dx + c * dy, p.z - center.z};
}

bool Box3D::contains(const Vec3& p, double margin) const {
  const Vec3 q = to_local(p);
  return std::abs(q.x) <= size.y / 2 + margin && std::abs(q.y) <= size.x / 2 + margin &&
         std::abs(q.z) <= size.z / 2 + margin;
}

double Box3D::speed() const { return std::hypot(vx, vy); }

SceneConfig SceneConfig::defaults() {
  SceneConfig c;
  c.classes = {
      {"car", {1.9, 4.5, 1.6}, 0.05, 0.60, 0.85, 1.0, 10.0, {220, 40, 40}},
      {"van", {2.0, 4.8, 1.8}, 0.05, 0.25, 0.85, 1.0, 10.0, {40, 200, 60}},
      {"truck", {2.5, 8.0, 3.2}, 0.05, 0.15, 0.90, 1.0, 10.0, {40, 80, 230}},
  };
  return c;
}

void SceneConfig::validate() const {
  if (classes.size() < 2) throw ConfigError("scene: at least 2 classes are required");
  for (const auto& k : classes) {
    if (k.size.x <= 0 || k.size.y <= 0 || k.size.z <= 0)
      throw ConfigError("scene: class '" + k.name + "' has a non-positive size");
    if (k.frequency <= 0) throw ConfigError("scene: class '" + k.name + "' frequency must be > 0");
    if (k.static_fraction < 0 || k.static_fraction > 1)
      throw ConfigError("scene: class '" + k.name + "' static_fraction outside [0, 1]");
    if (k.min_speed < 0 || k.max_speed < k.min_speed)
      throw ConfigError("scene: class '" + k.name + "' speed range invalid");
    if (k.size_jitter < 0 || k.size_jitter >= 1)
      throw ConfigError("scene: class '" + k.name + "' size_jitter outside [0, 1)");
  }
  if (min_objects < 0 || max_objects < min_objects) throw ConfigError("scene: object count range invalid");
  if (bounds <= 0 || edge_margin < 0 || edge_margin >= bounds) throw ConfigError("scene: bounds invalid");
  if (sweeps < 1 || dt <= 0) throw ConfigError("scene: sweeps >= 1 and dt > 0 required");
}

Scene gen_scene(const SceneConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Scene scene;
  scene.bounds = config.bounds;
  scene.dt = config.dt;
  scene.seed = seed;
  for (int s = 0; s < config.sweeps; ++s)
    scene.ego_poses.push_back({-config.ego_speed * config.dt * s, 0.0, 0.0});

  std::vector<double> cumulative;
  double total = 0;
  for (const auto& k : config.classes) cumulative.push_back(total += k.frequency);

  const auto count = rng.randint(config.min_objects, config.max_objects);
  const double lim = config.bounds - config.edge_margin;
  std::vector<double> radii;
  int attempts = 0;
  while (static_cast<std::int64_t>(scene.boxes.size()) < count) {
    const double r = rng.uniform(0, total);
    const int cls = static_cast<int>(std::upper_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin());
    const ClassSpec& k = config.classes[std::min<std::size_t>(cls, config.classes.size() - 1)];
    Box3D b;
    b.class_id = std::min<int>(cls, config.num_classes() - 1);
    b.size = {k.size.x * (1 + rng.uniform(-k.size_jitter, k.size_jitter)),
              k.size.y * (1 + rng.uniform(-k.size_jitter, k.size_jitter)),
              k.size.z * (1 + rng.uniform(-k.size_jitter, k.size_jitter))};
    b.yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
    b.center = {rng.uniform(-lim, lim), rng.uniform(-lim, lim), b.size.z / 2};
    const bool moving = !rng.bernoulli(k.static_fraction);
    const double speed = rng.uniform(k.min_speed, k.max_speed);
    if (moving) {
      b.vx = speed * std::cos(b.yaw);
      b.vy = speed * std::sin(b.yaw);
    }
    const double radius = 0.5 * std::hypot(b.size.x, b.size.y);
    bool ok = std::hypot(b.center.x, b.center.y) >= config.ego_clearance + radius;
    for (std::size_t i = 0; ok && i < scene.boxes.size(); ++i) {
      const auto& o = scene.boxes[i].center;
      ok = std::hypot(o.x - b.center.x, o.y - b.center.y) >= radius + radii[i] + config.min_gap;
    }
    if (ok) {
      scene.boxes.push_back(b);
      radii.push_back(radius);
    } else if (++attempts > config.max_attempts) {
      throw PlacementError("gen_scene: could not place " + std::to_string(count) + " objects within ±" +
                           std::to_string(config.bounds) + " m (placed " + std::to_string(scene.boxes.size()) + ")");
    }
  }
  return scene;
}

double ray_box(const Vec3& origin, const Vec3& dir, const Box3D& box, int* face) {
  const Vec3 o = box.to_local(origin);
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const Vec3 d{c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z};
  const double half[3] = {box.size.y / 2, box.size.x / 2, box.size.z / 2};
  const double oo[3] = {o.x, o.y, o.z}, dd[3] = {d.x, d.y, d.z};
  double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
  int entry_axis = -1;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dd[a]) < 1e-15) {
      if (std::abs(oo[a]) > half[a]) return -1;
      continue;
    }
    double ta = (-half[a] - oo[a]) / dd[a], tb = (half[a] - oo[a]) / dd[a];
    if (ta > tb) std::swap(ta, tb);
    if (ta > t0) {
      t0 = ta;
      entry_axis = a;
    }
    t1 = std::min(t1, tb);
    if (t0 > t1) return -1;
  }
  if (t0 <= 0) return -1;  // origin inside or box behind
  if (face) *face = entry_axis == 0 ? 1 : entry_axis == 1 ? 0 : 2;
  return t0;
}

}  // namespace dal::synth
