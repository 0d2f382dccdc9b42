#include "dal/synthio/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "dal/common/bytes.hpp"
#include "dal/common/rng.hpp"

#include <cstring>

namespace dal::synth {

namespace {

constexpr char kMagic[8] = {'D', 'A', 'L', 'S', 'C', 'N', '0', '1'};

void put_box(ByteWriter& w, const Box3D& b) {
  for (double v : {b.center.x, b.center.y, b.center.z, b.size.x, b.size.y, b.size.z, b.yaw, b.vx, b.vy}) w.put(v);
  w.put(static_cast<std::int32_t>(b.class_id));
}

Box3D get_box(ByteReader& r) {
  Box3D b;
  b.center.x = r.get<double>();
  b.center.y = r.get<double>();
  b.center.z = r.get<double>();
  b.size.x = r.get<double>();
  b.size.y = r.get<double>();
  b.size.z = r.get<double>();
  b.yaw = r.get<double>();
  b.vx = r.get<double>();
  b.vy = r.get<double>();
  b.class_id = r.get<std::int32_t>();
  return b;
}

Json vec_json(const Vec3& v) { return Json::array({v.x, v.y, v.z}); }
Vec3 vec_from(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

AnnotationSet annotate(const Scene& scene, const PointCloudSweeps& sweeps) {
  AnnotationSet out;
  for (const auto& box : scene.boxes) {
    Annotation a{box, 0, {}};
    double sx = 0, sy = 0, sz = 0;
    for (const auto& p : sweeps.points) {
      if (!box.contains({p.x, p.y, p.z})) continue;
      ++a.point_count;
      sx += p.x;
      sy += p.y;
      sz += p.z;
    }
    if (a.point_count == 0) continue;
    a.gravity_center = {sx / a.point_count, sy / a.point_count, sz / a.point_count};
    out.push_back(a);
  }
  return out;
}

void WorldConfig::validate() const {
  scene.validate();
  lidar.validate();
  rig.validate();
  if (scene.sweeps != lidar.sweeps || scene.dt != lidar.dt)
    throw ConfigError("world: scene and lidar disagree on sweep count or interval");
}

Json to_json(const WorldConfig& w) {
  Json classes = Json::array();
  for (const auto& k : w.scene.classes)
    classes.push_back({{"name", k.name},
                       {"size", vec_json(k.size)},
                       {"size_jitter", k.size_jitter},
                       {"frequency", k.frequency},
                       {"static_fraction", k.static_fraction},
                       {"min_speed", k.min_speed},
                       {"max_speed", k.max_speed},
                       {"color", {k.color[0], k.color[1], k.color[2]}}});
  const auto& s = w.scene;
  const auto& l = w.lidar;
  const auto& r = w.rig;
  return {{"scene",
           {{"classes", classes},
            {"min_objects", s.min_objects},
            {"max_objects", s.max_objects},
            {"bounds", s.bounds},
            {"edge_margin", s.edge_margin},
            {"ego_clearance", s.ego_clearance},
            {"min_gap", s.min_gap},
            {"sweeps", s.sweeps},
            {"dt", s.dt},
            {"ego_speed", s.ego_speed},
            {"max_attempts", s.max_attempts}}},
          {"lidar",
           {{"beams", l.beams},
            {"elevation_lo_deg", l.elevation_lo_deg},
            {"elevation_hi_deg", l.elevation_hi_deg},
            {"azimuth_step_deg", l.azimuth_step_deg},
            {"max_range", l.max_range},
            {"height", l.height},
            {"sweeps", l.sweeps},
            {"dt", l.dt},
            {"range_noise", l.range_noise},
            {"box_intensity", l.box_intensity},
            {"ground_intensity", l.ground_intensity}}},
          {"rig",
           {{"views", r.views},
            {"hfov_deg", r.hfov_deg},
            {"height", r.height},
            {"width", r.width},
            {"mount_height", r.mount_height},
            {"mount_offset", r.mount_offset}}}};
}

WorldConfig world_from_json(const Json& j) {
  WorldConfig w;
  StrictObject top(j, "world");
  if (top.has("scene")) {
    StrictObject o(top.child("scene"), "world.scene");
    auto& s = w.scene;
    if (o.has("classes")) {
      const Json& arr = o.child("classes");
      if (!arr.is_array()) throw ConfigError("world.scene.classes: expected an array");
      s.classes.clear();
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string where = "world.scene.classes[" + std::to_string(i) + "]";
        StrictObject c(arr[i], where);
        ClassSpec k;
        c.require("name", k.name);
        k.size = vec_from(c.child("size"), where + ".size");
        c.get("size_jitter", k.size_jitter);
        c.get("frequency", k.frequency);
        c.get("static_fraction", k.static_fraction);
        c.get("min_speed", k.min_speed);
        c.get("max_speed", k.max_speed);
        if (c.has("color")) {
          const auto col = c.child("color").get<std::vector<int>>();
          if (col.size() != 3) throw ConfigError(where + ".color: expected [r, g, b]");
          for (int q = 0; q < 3; ++q) k.color[q] = static_cast<std::uint8_t>(col[q]);
        }
        c.finish();
        s.classes.push_back(k);
      }
    }
    o.get("min_objects", s.min_objects);
    o.get("max_objects", s.max_objects);
    o.get("bounds", s.bounds);
    o.get("edge_margin", s.edge_margin);
    o.get("ego_clearance", s.ego_clearance);
    o.get("min_gap", s.min_gap);
    o.get("sweeps", s.sweeps);
    o.get("dt", s.dt);
    o.get("ego_speed", s.ego_speed);
    o.get("max_attempts", s.max_attempts);
    o.finish();
  }
  if (top.has("lidar")) {
    StrictObject o(top.child("lidar"), "world.lidar");
    auto& l = w.lidar;
    o.get("beams", l.beams);
    o.get("elevation_lo_deg", l.elevation_lo_deg);
    o.get("elevation_hi_deg", l.elevation_hi_deg);
    o.get("azimuth_step_deg", l.azimuth_step_deg);
    o.get("max_range", l.max_range);
    o.get("height", l.height);
    o.get("sweeps", l.sweeps);
    o.get("dt", l.dt);
    o.get("range_noise", l.range_noise);
    o.get("box_intensity", l.box_intensity);
    o.get("ground_intensity", l.ground_intensity);
    o.finish();
  }
  if (top.has("rig")) {
    StrictObject o(top.child("rig"), "world.rig");
    auto& r = w.rig;
    o.get("views", r.views);
    o.get("hfov_deg", r.hfov_deg);
    o.get("height", r.height);
    o.get("width", r.width);
    o.get("mount_height", r.mount_height);
    o.get("mount_offset", r.mount_offset);
    o.finish();
  }
  top.finish();
  w.validate();
  return w;
}

Sample make_sample(const WorldConfig& world, std::uint64_t seed) {
  Sample s;
  s.seed = seed;
  s.scene = gen_scene(world.scene, seed);
  s.sweeps = simulate_lidar(s.scene, world.lidar);
  s.images = render_cameras(s.scene, CameraRig::surround(world.rig), world.scene.classes);
  s.annotations = annotate(s.scene, s.sweeps);
  return s;
}

std::uint64_t sample_seed(std::uint64_t base_seed, std::uint64_t index) {
  Rng r(base_seed);
  return r.fork(index).next();
}

std::vector<std::uint8_t> encode_sample(const Sample& s, std::uint64_t* offsets) {
  ByteWriter w;
  w.put_bytes(kMagic, sizeof kMagic);
  w.put(static_cast<std::uint32_t>(kDatasetVersion));
  w.put(s.seed);
  w.put(s.scene.seed);
  w.put(s.scene.bounds);
  w.put(s.scene.dt);
  w.put(static_cast<std::uint64_t>(s.scene.ego_poses.size()));
  for (const auto& p : s.scene.ego_poses) {
    w.put(p.x);
    w.put(p.y);
    w.put(p.yaw);
  }
  w.put(static_cast<std::uint64_t>(s.scene.boxes.size()));
  for (const auto& b : s.scene.boxes) put_box(w, b);

  if (offsets) offsets[0] = w.size();
  w.put(static_cast<std::int32_t>(s.sweeps.sweep_count));
  w.put(s.sweeps.dt);
  w.put(static_cast<std::uint64_t>(s.sweeps.points.size()));
  for (const auto& p : s.sweeps.points)
    for (double v : {p.x, p.y, p.z, p.intensity, p.dt}) w.put(v);

  if (offsets) offsets[1] = w.size();
  w.put(static_cast<std::uint64_t>(s.images.size()));
  for (const auto& img : s.images) {
    w.put(static_cast<std::int32_t>(img.height));
    w.put(static_cast<std::int32_t>(img.width));
    w.put(static_cast<std::uint64_t>(img.rgb.size()));
    w.put_bytes(img.rgb.data(), img.rgb.size());
  }

  if (offsets) offsets[2] = w.size();
  w.put(static_cast<std::uint64_t>(s.annotations.size()));
  for (const auto& a : s.annotations) {
    put_box(w, a.box);
    w.put(static_cast<std::int32_t>(a.point_count));
    w.put(a.gravity_center.x);
    w.put(a.gravity_center.y);
    w.put(a.gravity_center.z);
  }
  const std::uint32_t crc = crc32(w.buffer().data(), w.size());
  w.put(crc);
  return std::move(w.buffer());
}

Sample decode_sample(const std::vector<std::uint8_t>& bytes, const std::string& where) {
  if (bytes.size() < sizeof kMagic + 8) throw FormatError(where + ": truncated record");
  if (std::memcmp(bytes.data(), kMagic, 6) != 0) throw FormatError(where + ": not a scene record");
  ByteReader r(bytes.data(), bytes.size() - 4, where);
  char magic[8];
  r.get_bytes(magic, 8);
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetVersion)
    throw FormatError(where + ": record version " + std::to_string(version) + " but reader expects " +
                      std::to_string(kDatasetVersion));
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  if (crc32(bytes.data(), bytes.size() - 4) != stored) throw FormatError(where + ": checksum mismatch (corrupt record)");

  Sample s;
  s.seed = r.get<std::uint64_t>();
  s.scene.seed = r.get<std::uint64_t>();
  s.scene.bounds = r.get<double>();
  s.scene.dt = r.get<double>();
  s.scene.ego_poses.resize(r.get_count(24));
  for (auto& p : s.scene.ego_poses) {
    p.x = r.get<double>();
    p.y = r.get<double>();
    p.yaw = r.get<double>();
  }
  s.scene.boxes.resize(r.get_count(76));
  for (auto& b : s.scene.boxes) b = get_box(r);

  s.sweeps.sweep_count = r.get<std::int32_t>();
  s.sweeps.dt = r.get<double>();
  s.sweeps.points.resize(r.get_count(40));
  for (auto& p : s.sweeps.points) {
    p.x = r.get<double>();
    p.y = r.get<double>();
    p.z = r.get<double>();
    p.intensity = r.get<double>();
    p.dt = r.get<double>();
  }
  s.images.resize(r.get_count(16));
  for (auto& img : s.images) {
    img.height = r.get<std::int32_t>();
    img.width = r.get<std::int32_t>();
    img.rgb.resize(r.get_count(1));
    if (img.rgb.size() != 3ull * img.height * img.width) throw FormatError(where + ": image size mismatch");
    r.get_bytes(img.rgb.data(), img.rgb.size());
  }
  s.annotations.resize(r.get_count(104));
  for (auto& a : s.annotations) {
    a.box = get_box(r);
    a.point_count = r.get<std::int32_t>();
    a.gravity_center.x = r.get<double>();
    a.gravity_center.y = r.get<double>();
    a.gravity_center.z = r.get<double>();
  }
  if (r.remaining() != 0) throw FormatError(where + ": trailing bytes in record");
  return s;
}

DatasetManifest write_dataset(const std::filesystem::path& dir, const WorldConfig& world, std::uint64_t base_seed,
                              const std::vector<Sample>& samples, bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("'" + dir.string() + "' exists and is not a directory");
    if (!fs::is_empty(dir)) {
      if (!force) throw ConfigError("output directory '" + dir.string() + "' is not empty (use --force)");
      for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".bin" || e.path().filename() == "manifest.json") fs::remove(e.path());
    }
  }
  fs::create_directories(dir);
  DatasetManifest m;
  m.world = world;
  m.base_seed = base_seed;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::uint64_t off[3];
    const auto bytes = encode_sample(samples[i], off);
    SampleEntry e;
    char name[32];
    std::snprintf(name, sizeof name, "scene_%06zu.bin", i);
    e.file = name;
    e.seed = samples[i].seed;
    e.bytes = bytes.size();
    std::memcpy(&e.crc32, bytes.data() + bytes.size() - 4, 4);
    e.offset_points = off[0];
    e.offset_images = off[1];
    e.offset_annotations = off[2];
    e.class_counts.assign(world.scene.num_classes(), 0);
    for (const auto& a : samples[i].annotations) ++e.class_counts.at(a.box.class_id);
    write_file_atomic(dir / e.file, bytes);
    m.samples.push_back(e);
  }
  Json js = Json::array();
  for (const auto& e : m.samples)
    js.push_back({{"file", e.file},
                  {"seed", e.seed},
                  {"bytes", e.bytes},
                  {"crc32", e.crc32},
                  {"offsets", {{"points", e.offset_points}, {"images", e.offset_images}, {"annotations", e.offset_annotations}}},
                  {"class_counts", e.class_counts}});
  const Json manifest = {{"format", "dal-dataset"},
                         {"version", m.version},
                         {"base_seed", base_seed},
                         {"count", m.samples.size()},
                         {"world", to_json(world)},
                         {"samples", js}};
  write_text_atomic(dir / "manifest.json", manifest.dump(1) + "\n");
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) throw Error("no dataset manifest at '" + path.string() + "'");
  const auto bytes = read_file(path);
  Json j;
  try {
    j = Json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "dal-dataset") throw FormatError(path.string() + ": not a dataset manifest");
  const int version = j.value("version", -1);
  if (version != kDatasetVersion)
    throw FormatError(path.string() + ": dataset version " + std::to_string(version) + " but reader expects " +
                      std::to_string(kDatasetVersion));
  DatasetManifest m;
  m.version = version;
  m.base_seed = j.at("base_seed").get<std::uint64_t>();
  m.world = world_from_json(j.at("world"));
  for (const auto& e : j.at("samples")) {
    SampleEntry s;
    s.file = e.at("file").get<std::string>();
    s.seed = e.at("seed").get<std::uint64_t>();
    s.bytes = e.at("bytes").get<std::uint64_t>();
    s.crc32 = e.at("crc32").get<std::uint32_t>();
    s.offset_points = e.at("offsets").at("points").get<std::uint64_t>();
    s.offset_images = e.at("offsets").at("images").get<std::uint64_t>();
    s.offset_annotations = e.at("offsets").at("annotations").get<std::uint64_t>();
    s.class_counts = e.at("class_counts").get<std::vector<int>>();
    m.samples.push_back(s);
  }
  if (j.at("count").get<std::size_t>() != m.samples.size()) throw FormatError(path.string() + ": sample count mismatch");
  return m;
}

Sample read_sample(const std::filesystem::path& dir, const SampleEntry& entry) {
  const auto bytes = read_file(dir / entry.file);
  const std::string where = (dir / entry.file).string();
  if (bytes.size() != entry.bytes) throw FormatError(where + ": size differs from manifest");
  Sample s = decode_sample(bytes, where);
  if (s.seed != entry.seed) throw FormatError(where + ": seed differs from manifest");
  return s;
}

std::vector<Sample> read_dataset(const std::filesystem::path& dir, DatasetManifest* manifest) {
  DatasetManifest m = read_manifest(dir);
  std::vector<Sample> out(m.samples.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = read_sample(dir, m.samples[i]);
  if (manifest) *manifest = std::move(m);
  return out;
}

DatasetManifest generate_dataset(const std::filesystem::path& dir, const WorldConfig& world, std::uint64_t base_seed,
                                 int count, bool force) {
  world.validate();
  if (count < 0) throw ConfigError("scene count must be >= 0");
  std::vector<Sample> samples(count);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i) samples[i] = make_sample(world, sample_seed(base_seed, i));
  return write_dataset(dir, world, base_seed, samples, force);
}

std::int64_t Histogram::total() const {
  std::int64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

Histogram velocity_histogram(const std::vector<AnnotationSet>& dataset, int class_id, int num_classes,
                             double bin_width, double max_speed) {
  if (bin_width <= 0) throw ConfigError("velocity_histogram: bin_width must be > 0");
  if (class_id < 0 || class_id >= num_classes)
    throw ConfigError("velocity_histogram: unknown class_id " + std::to_string(class_id));
  Histogram h;
  h.bin_width = bin_width;
  h.counts.assign(std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(max_speed / bin_width))), 0);
  for (const auto& set : dataset)
    for (const auto& a : set) {
      if (a.box.class_id != class_id) continue;
      const auto bin = static_cast<std::size_t>(a.box.speed() / bin_width);
      ++h.counts[std::min(bin, h.counts.size() - 1)];
    }
  return h;
}

}  // namespace dal::synth
