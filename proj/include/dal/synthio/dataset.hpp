#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dal/common/json_util.hpp"
#include "dal/synthio/sensors.hpp"

namespace dal::synth {

struct Annotation {
  Box3D box;
  int point_count = 0;
  Vec3 gravity_center;
  bool operator==(const Annotation&) const = default;
};
using AnnotationSet = std::vector<Annotation>;

/// Keeps boxes holding at least one point of any sweep; the gravity centre is
/// the mean of those points.
AnnotationSet annotate(const Scene& scene, const PointCloudSweeps& sweeps);

struct WorldConfig {
  SceneConfig scene = SceneConfig::defaults();
  LidarConfig lidar;
  RigConfig rig;

  void validate() const;
  bool operator==(const WorldConfig&) const = default;
};

Json to_json(const WorldConfig& w);
WorldConfig world_from_json(const Json& j);

struct Sample {
  std::uint64_t seed = 0;
  Scene scene;
  PointCloudSweeps sweeps;
  std::vector<Image> images;
  AnnotationSet annotations;
  bool operator==(const Sample&) const = default;
};

/// Scene, LiDAR, cameras and annotation for one seed.
Sample make_sample(const WorldConfig& world, std::uint64_t seed);
/// Seed of sample `index` in a dataset generated from `base_seed`.
std::uint64_t sample_seed(std::uint64_t base_seed, std::uint64_t index);

inline constexpr int kDatasetVersion = 1;

struct SampleEntry {
  std::string file;
  std::uint64_t seed = 0;
  std::uint64_t bytes = 0;
  std::uint32_t crc32 = 0;
  std::uint64_t offset_points = 0, offset_images = 0, offset_annotations = 0;
  std::vector<int> class_counts;  // annotated instances per class
};

struct DatasetManifest {
  int version = kDatasetVersion;
  WorldConfig world;
  std::uint64_t base_seed = 0;
  std::vector<SampleEntry> samples;
};

/// Writes one record file per sample plus manifest.json. The directory must
/// be absent or empty unless `force` is set.
DatasetManifest write_dataset(const std::filesystem::path& dir, const WorldConfig& world, std::uint64_t base_seed,
                              const std::vector<Sample>& samples, bool force = false);
DatasetManifest read_manifest(const std::filesystem::path& dir);
/// Reads and verifies (version tag, CRC) one record.
Sample read_sample(const std::filesystem::path& dir, const SampleEntry& entry);
std::vector<Sample> read_dataset(const std::filesystem::path& dir, DatasetManifest* manifest = nullptr);

/// Generates `count` samples (parallel over samples) and writes them.
DatasetManifest generate_dataset(const std::filesystem::path& dir, const WorldConfig& world, std::uint64_t base_seed,
                                 int count, bool force = false);

std::vector<std::uint8_t> encode_sample(const Sample& s, std::uint64_t* offsets = nullptr);
Sample decode_sample(const std::vector<std::uint8_t>& bytes, const std::string& where);

struct Histogram {
  double bin_width = 1;
  std::vector<std::int64_t> counts;
  std::int64_t total() const;
};

/// Speed histogram of annotated instances of one class. Speeds beyond the
/// last bin fall into it.
Histogram velocity_histogram(const std::vector<AnnotationSet>& dataset, int class_id, int num_classes,
                             double bin_width, double max_speed = 20.0);

}  // namespace dal::synth
