#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dal/common/rng.hpp"
#include "dal/synthio/dataset.hpp"

namespace dal::aug {

struct ResizeRange {
  double lo = 0.36, hi = 0.88;
  static ResizeRange wide() { return {0.36, 0.88}; }
  static ResizeRange narrow() { return {0.36, 0.55}; }
  void validate() const;
  bool operator==(const ResizeRange&) const = default;
};

struct ResizeConfig {
  ResizeRange range;
  int input_height = 64, input_width = 176;  // network input
  double eval_scale = 0.5;
  bool operator==(const ResizeConfig&) const = default;
};

/// Scale and crop window of one frame. The crop keeps the bottom rows; its
/// column offset is random in training and centred otherwise. Negative
/// offsets or windows past the resized image pad with zeros.
struct ResizeDraw {
  double scale = 1;
  int crop_x = 0, crop_y = 0;
};

ResizeDraw draw_resize(const ResizeConfig& config, int src_height, int src_width, bool train, Rng& rng);

/// Bilinear rescale (pixel centres at i + 0.5) followed by the crop window;
/// intrinsics follow as fx' = s fx, cx' = s cx - crop_x (same for y).
/// Throws ConfigError when the window does not overlap the scaled image.
void resize_view(const synth::Image& src, const synth::CameraView& view, const ResizeDraw& draw, int out_height,
                 int out_width, synth::Image& out_image, synth::CameraView& out_view);

struct GlobalAugConfig {
  bool enabled = true;
  double rot_range = 0.39269908169872414;  // pi / 8
  double scale_lo = 0.95, scale_hi = 1.05;
  double flip_x_prob = 0.5, flip_y_prob = 0.5;
  bool operator==(const GlobalAugConfig&) const = default;
};

struct GlobalDraw {
  double rotation = 0, scale = 1;
  bool flip_x = false;  // mirror across the x axis: y -> -y
  bool flip_y = false;  // mirror across the y axis: x -> -x
  /// flip * scale * rot_z(rotation)
  Mat3 matrix() const;
};

GlobalDraw draw_global(const GlobalAugConfig& config, Rng& rng);

/// Maps a box through the linear transform m (rotation, uniform scale and
/// mirrors about z-aligned planes): centre, size, yaw and velocity.
synth::Box3D transform_box(const synth::Box3D& box, const Mat3& m);
void global_aug(const Mat3& m, std::vector<synth::LidarPoint>& points, synth::AnnotationSet& annotations);

struct VelocityAugConfig {
  bool enabled = false;
  double probability = 0.5;
  double max_speed = 10;
  bool operator==(const VelocityAugConfig&) const = default;
};

/// Gives the static `box` velocity v: each point inside it moves by
/// (-vx dt, -vy dt, 0) for its sweep lag dt. Throws on a moving box.
/// Returns the number of moved points.
int velocity_aug(std::vector<synth::LidarPoint>& points, synth::Box3D& box, double vx, double vy);

/// Draws per static annotation and applies velocity_aug; gravity centres are
/// recomputed. Returns the number of augmented instances.
int velocity_aug_sample(const VelocityAugConfig& config, std::vector<synth::LidarPoint>& points,
                        synth::AnnotationSet& annotations, Rng& rng);

struct CbgsResult {
  std::vector<std::size_t> indices;   // epoch sample list
  std::vector<int> excluded_classes;  // absent from every sample
};

/// Class-balanced grouping and sampling: for every present class, samples
/// containing it are drawn with replacement n_c * (1 / P) / (n_c / N) times,
/// where n_c counts samples with the class, N = sum n_c and P is the number
/// of present classes.
CbgsResult cbgs_resample(const std::vector<std::vector<int>>& class_counts, int num_classes, std::uint64_t seed);

}  // namespace dal::aug
