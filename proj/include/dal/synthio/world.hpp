#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dal/common/error.hpp"
#include "dal/common/geometry.hpp"

namespace dal::synth {

/// Slack used when testing whether a surface point lies inside a box.
inline constexpr double kContainMargin = 1e-6;

/// Oriented box on the ground plane. `size` is (w, l, h) with l along the
/// heading; `center` is the geometric centre.
struct Box3D {
  Vec3 center;
  Vec3 size{1, 1, 1};
  double yaw = 0;
  double vx = 0, vy = 0;
  int class_id = 0;

  /// Point in the box frame: x along the heading, y to the left, z up.
  Vec3 to_local(const Vec3& p) const;
  bool contains(const Vec3& p, double margin = kContainMargin) const;
  double speed() const;
  bool operator==(const Box3D&) const = default;
};

struct Pose2 {
  double x = 0, y = 0, yaw = 0;
  bool operator==(const Pose2&) const = default;
};

struct Scene {
  std::vector<Box3D> boxes;
  std::vector<Pose2> ego_poses;  // one per sweep, index 0 is the reference
  double bounds = 24;            // half extent of the square BEV area
  double dt = 0.1;
  std::uint64_t seed = 0;
  bool operator==(const Scene&) const = default;
};

struct ClassSpec {
  std::string name;
  Vec3 size;                 // nominal (w, l, h)
  double size_jitter = 0.05; // relative, uniform per dimension
  double frequency = 1;      // relative sampling weight
  double static_fraction = 0.85;
  double min_speed = 1, max_speed = 10;
  std::array<std::uint8_t, 3> color{255, 0, 0};
  bool operator==(const ClassSpec&) const = default;
};

struct SceneConfig {
  std::vector<ClassSpec> classes;
  int min_objects = 8, max_objects = 14;
  double bounds = 24;
  double edge_margin = 2;     // keep centres this far inside the bounds
  double ego_clearance = 3.5; // no object centre closer to the ego
  double min_gap = 0.5;       // between footprint circles
  int sweeps = 3;
  double dt = 0.1;
  double ego_speed = 0;       // forward ego motion between sweeps
  int max_attempts = 4000;

  /// Three classes: car, van (close to car in shape) and truck.
  static SceneConfig defaults();
  int num_classes() const { return static_cast<int>(classes.size()); }
  void validate() const;
  bool operator==(const SceneConfig&) const = default;
};

/// Raised when the requested objects cannot be placed without overlap.
class PlacementError : public Error {
 public:
  using Error::Error;
};

/// Pure function of (config, seed).
Scene gen_scene(const SceneConfig& config, std::uint64_t seed);

/// Ray / oriented-box intersection. Returns the entry distance along `dir`
/// (> 0) or a negative value for a miss; `face` receives 0 for sides along the
/// length, 1 for the ends, 2 for the top or bottom.
double ray_box(const Vec3& origin, const Vec3& dir, const Box3D& box, int* face = nullptr);

}  // namespace dal::synth
