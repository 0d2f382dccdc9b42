#include "dal/fusionhead/head.hpp"

#include <algorithm>
#include <cstring>
#include <tuple>
#include <cmath>

#include "dal/common/bytes.hpp"
#include "dal/common/json_util.hpp"

namespace dal::fh {

BoxCode encode_box(const synth::Box3D& box, int ix, int iy, const BevGrid& grid) {
  return {(box.center.x - grid.x_min) / grid.cell - ix,
          (box.center.y - grid.y_min) / grid.cell - iy,
          box.center.z,
          std::log(box.size.x),
          std::log(box.size.y),
          std::log(box.size.z),
          std::sin(box.yaw),
          std::cos(box.yaw),
          box.vx,
          box.vy};
}

synth::Box3D decode_box(const BoxCode& c, int ix, int iy, const BevGrid& grid, int class_id) {
  synth::Box3D b;
  b.center = {grid.x_min + (ix + c[0]) * grid.cell, grid.y_min + (iy + c[1]) * grid.cell, c[2]};
  b.size = {std::exp(c[3]), std::exp(c[4]), std::exp(c[5])};
  b.yaw = wrap_angle(std::atan2(c[6], c[7]));
  b.vx = c[8];
  b.vy = c[9];
  b.class_id = class_id;
  return b;
}

std::vector<Proposal> select_candidates(std::span<const float> scores, int classes, int nx, int ny, int k) {
  const std::int64_t plane = static_cast<std::int64_t>(nx) * ny;
  if (static_cast<std::int64_t>(scores.size()) != classes * plane)
    throw ShapeError("select_candidates: score map size does not match (C, X, Y)");
  if (k < 0 || k > classes * plane) throw ShapeError("select_candidates: K exceeds C*X*Y");
  std::vector<Proposal> all;
  all.reserve(classes * plane);
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < ny; ++j) {
        const float s = scores[c * plane + static_cast<std::int64_t>(i) * ny + j];
        bool peak = true;
        for (int di = -1; di <= 1 && peak; ++di)
          for (int dj = -1; dj <= 1; ++dj) {
            const int a = i + di, b = j + dj;
            if ((di || dj) && a >= 0 && a < nx && b >= 0 && b < ny &&
                scores[c * plane + static_cast<std::int64_t>(a) * ny + b] > s) {
              peak = false;
              break;
            }
          }
        all.push_back({c, i, j, peak ? s : 0.f});
      }
  auto before = [](const Proposal& a, const Proposal& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.class_id, a.ix, a.iy) < std::tie(b.class_id, b.ix, b.iy);
  };
  std::partial_sort(all.begin(), all.begin() + k, all.end(), before);
  all.resize(k);
  return all;
}

namespace {
constexpr char kDetMagic[8] = {'D', 'A', 'L', 'D', 'E', 'T', '0', '1'};
constexpr std::uint32_t kDetVersion = 1;
}  // namespace

void write_detections(const std::filesystem::path& stem, const std::vector<FrameDetections>& frames) {
  ByteWriter w;
  w.put_bytes(kDetMagic, 8);
  w.put(kDetVersion);
  w.put(static_cast<std::uint64_t>(frames.size()));
  Json jf = Json::array();
  for (const auto& f : frames) {
    w.put(f.frame_id);
    w.put(static_cast<std::uint64_t>(f.detections.size()));
    Json jd = Json::array();
    for (const auto& d : f.detections) {
      const auto& b = d.box;
      for (double v : {b.center.x, b.center.y, b.center.z, b.size.x, b.size.y, b.size.z, b.yaw, b.vx, b.vy, d.confidence})
        w.put(v);
      w.put(static_cast<std::int32_t>(b.class_id));
      jd.push_back({{"class_id", b.class_id},
                    {"confidence", d.confidence},
                    {"center", {b.center.x, b.center.y, b.center.z}},
                    {"size", {b.size.x, b.size.y, b.size.z}},
                    {"yaw", b.yaw},
                    {"velocity", {b.vx, b.vy}}});
    }
    jf.push_back({{"frame_id", f.frame_id}, {"detections", jd}});
  }
  w.put(crc32(w.buffer().data(), w.size()));
  auto bin = stem;
  bin += ".bin";
  auto js = stem;
  js += ".json";
  write_file_atomic(bin, w.buffer());
  write_text_atomic(js, Json{{"format", "dal-detections"}, {"version", kDetVersion}, {"frames", jf}}.dump(1) + "\n");
}

std::vector<FrameDetections> read_detections(const std::filesystem::path& stem) {
  auto bin = stem;
  bin += ".bin";
  const auto bytes = read_file(bin);
  const std::string where = bin.string();
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kDetMagic, 8) != 0) throw FormatError(where + ": not a detection file");
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  if (crc32(bytes.data(), bytes.size() - 4) != stored) throw FormatError(where + ": checksum mismatch");
  ByteReader r(bytes.data() + 8, bytes.size() - 12, where);
  if (r.get<std::uint32_t>() != kDetVersion) throw FormatError(where + ": unsupported version");
  std::vector<FrameDetections> frames(r.get_count(16));
  for (auto& f : frames) {
    f.frame_id = r.get<std::uint64_t>();
    f.detections.resize(r.get_count(84));
    for (auto& d : f.detections) {
      auto& b = d.box;
      double v[10];
      for (double& x : v) x = r.get<double>();
      b.center = {v[0], v[1], v[2]};
      b.size = {v[3], v[4], v[5]};
      b.yaw = v[6];
      b.vx = v[7];
      b.vy = v[8];
      d.confidence = v[9];
      b.class_id = r.get<std::int32_t>();
    }
  }
  return frames;
}

FusionHead::FusionHead(tc::ParamStore<float>& store, const std::string& name, HeadConfig config) : config_(config) {
  if (config_.num_classes < 1 || config_.top_k < 1) throw ConfigError("head: need >= 1 class and K >= 1");
  const int F = config_.fuse_channels, H = config_.ffn_hidden, B = config_.bev_channels;
  reduce_ = tc::ConvBnAct<float>(store, name + ".fuse.reduce", 2 * B, F, 1);
  block0_ = tc::BasicBlock<float>(store, name + ".fuse.block0", F, F);
  block1_ = tc::BasicBlock<float>(store, name + ".fuse.block1", F, F);
  heatmap_ = tc::Conv2d<float>(store, name + ".heatmap", F, config_.num_classes, 3, 1, 1, true);
  std::fill(heatmap_.bias().data_mut().begin(), heatmap_.bias().data_mut().end(), static_cast<float>(config_.heatmap_bias));
  // Near-zero weights so the initial logits sit at the prior bias.
  for (auto& w : heatmap_.weight().data_mut()) w *= 0.01f;
  reg0_ = tc::Linear<float>(store, name + ".reg.fc0", B, H);
  reg1_ = tc::Linear<float>(store, name + ".reg.fc1", H, kCodeSize);
  cls0_ = tc::Linear<float>(store, name + ".cls.fc0", 3 * B + 1, H);
  cls1_ = tc::Linear<float>(store, name + ".cls.fc1", H, config_.num_classes);
  std::fill(cls1_.bias().data_mut().begin(), cls1_.bias().data_mut().end(), static_cast<float>(config_.heatmap_bias));
}

tc::Tensorf FusionHead::fuse(const tc::Tensorf& lidar_bev, const tc::Tensorf& image_bev) {
  if (lidar_bev.ndim() != 4 || image_bev.ndim() != 4 || lidar_bev.dim(0) != image_bev.dim(0) ||
      lidar_bev.dim(2) != image_bev.dim(2) || lidar_bev.dim(3) != image_bev.dim(3))
    throw ShapeError("fuse_bev: grid mismatch between LiDAR BEV " + tc::to_string(lidar_bev.shape()) + " and image BEV " +
                     tc::to_string(image_bev.shape()));
  return block1_(block0_(reduce_(tc::concat<float>({lidar_bev, image_bev}, 1))));
}

tc::Tensorf FusionHead::heatmap_logits(const tc::Tensorf& fused) { return heatmap_(fused); }

tc::Tensorf FusionHead::regress(const tc::Tensorf& point_features) { return reg1_(tc::relu(reg0_(point_features))); }

tc::Tensorf FusionHead::classify(const tc::Tensorf& image_at_center, const tc::Tensorf& image_bev_at_cell,
                                 const tc::Tensorf& point_bev_at_cell, const tc::Tensorf& valid) {
  return cls1_(tc::relu(cls0_(tc::concat<float>({image_at_center, image_bev_at_cell, point_bev_at_cell, valid}, 1))));
}

tc::Tensorf gather_cells(const tc::Tensorf& bev, std::span<const int> sample, std::span<const std::int64_t> cell) {
  if (bev.ndim() != 4 || sample.size() != cell.size()) throw ShapeError("gather_cells: bad arguments");
  const std::int64_t B = bev.dim(0), C = bev.dim(1), cells = bev.dim(2) * bev.dim(3);
  std::vector<std::int64_t> rows(cell.size());
  for (std::size_t i = 0; i < cell.size(); ++i) {
    if (sample[i] < 0 || sample[i] >= B || cell[i] < 0 || cell[i] >= cells) throw ShapeError("gather_cells: index out of range");
    rows[i] = sample[i] * cells + cell[i];
  }
  auto flat = tc::permute(bev, {0, 2, 3, 1}).reshape({B * cells, C});
  return tc::gather(flat, 0, rows);
}

}  // namespace dal::fh
