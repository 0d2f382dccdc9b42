#include "dal/tensorcore/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "dal/common/error.hpp"

namespace dal::tc {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'A', 'L', 'C', 'K', 'P', 'T', '\0'};

enum class Kind : std::uint8_t { Param = 0, Buffer = 1, AdamM = 2, AdamV = 3 };

template <class V>
void put(std::ofstream& os, const V& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V get(std::ifstream& is) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw FormatError("checkpoint truncated");
  return v;
}

void put_string(std::ofstream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::ifstream& is) {
  const auto n = get<std::uint32_t>(is);
  if (n > (1u << 26)) throw FormatError("checkpoint string too long");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw FormatError("checkpoint truncated");
  return s;
}

void put_tensor(std::ofstream& os, Kind kind, const std::string& name, const Shape& shape,
                const float* data, std::size_t count) {
  put<std::uint8_t>(os, static_cast<std::uint8_t>(kind));
  put_string(os, name);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) put<std::int64_t>(os, d);
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(float)));
}

CheckpointMeta read_header(std::ifstream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw FormatError("not a checkpoint file");
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  CheckpointMeta meta;
  meta.step = get<std::int64_t>(is);
  meta.beta1_power = get<double>(is);
  meta.beta2_power = get<double>(is);
  meta.config_json = get_string(is);
  return meta;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore<float>& store,
                     Adam<float>* optimizer, const CheckpointMeta& meta) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw FormatError("cannot write checkpoint " + tmp);
    os.write(kMagic, 8);
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::int64_t>(os, meta.step);
    put<double>(os, meta.beta1_power);
    put<double>(os, meta.beta2_power);
    put_string(os, meta.config_json);
    const auto& params = store.params();
    const auto& buffers = store.buffers();
    std::uint32_t count = static_cast<std::uint32_t>(params.size() + buffers.size());
    if (optimizer) count += static_cast<std::uint32_t>(2 * params.size());
    put<std::uint32_t>(os, count);
    for (const auto& [name, t] : params) put_tensor(os, Kind::Param, name, t.shape(), t.data().data(), t.numel());
    for (const auto& [name, t] : buffers) put_tensor(os, Kind::Buffer, name, t.shape(), t.data().data(), t.numel());
    if (optimizer) {
      for (std::size_t k = 0; k < params.size(); ++k) {
        const auto& [name, t] = params[k];
        put_tensor(os, Kind::AdamM, name, t.shape(), optimizer->first_moments()[k].data(), t.numel());
        put_tensor(os, Kind::AdamV, name, t.shape(), optimizer->second_moments()[k].data(), t.numel());
      }
    }
    if (!os) throw FormatError("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  return read_header(is);
}

CheckpointMeta load_checkpoint(const std::filesystem::path& path, ParamStore<float>& store,
                               Adam<float>* optimizer) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  CheckpointMeta meta = read_header(is);

  std::map<std::string, std::pair<Tensor<float>, std::size_t>> params, buffers;
  for (std::size_t k = 0; k < store.params().size(); ++k) params.emplace(store.params()[k].first, std::pair{store.params()[k].second, k});
  for (const auto& [name, t] : store.buffers()) buffers.emplace(name, std::pair{t, std::size_t{0}});

  std::size_t seen_params = 0, seen_buffers = 0;
  const auto count = get<std::uint32_t>(is);
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto kind = static_cast<Kind>(get<std::uint8_t>(is));
    const std::string name = get_string(is);
    const auto nd = get<std::uint32_t>(is);
    if (nd > 8) throw FormatError("checkpoint tensor '" + name + "' has invalid rank");
    Shape shape(nd);
    for (auto& d : shape) d = get<std::int64_t>(is);
    auto& table = (kind == Kind::Buffer) ? buffers : params;
    auto it = table.find(name);
    if (it == table.end()) throw FormatError("checkpoint tensor '" + name + "' not present in model");
    auto t = it->second.first;
    if (t.shape() != shape)
      throw FormatError("checkpoint tensor '" + name + "' has shape " + to_string(shape) + ", model expects " +
                        to_string(t.shape()));
    float* dst = nullptr;
    std::vector<float> sink;
    switch (kind) {
      case Kind::Param: dst = t.data_mut().data(); ++seen_params; break;
      case Kind::Buffer: dst = t.data_mut().data(); ++seen_buffers; break;
      case Kind::AdamM:
      case Kind::AdamV:
        if (optimizer) {
          auto& moments = kind == Kind::AdamM ? optimizer->first_moments() : optimizer->second_moments();
          dst = moments[it->second.second].data();
        } else {
          sink.resize(t.numel());
          dst = sink.data();
        }
        break;
      default: throw FormatError("checkpoint entry of unknown kind");
    }
    is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!is) throw FormatError("checkpoint truncated in tensor '" + name + "'");
  }
  if (seen_params != params.size() || seen_buffers != buffers.size())
    throw FormatError("checkpoint is missing model tensors");
  if (optimizer) optimizer->restore(meta.step, meta.beta1_power, meta.beta2_power);
  return meta;
}

}  // namespace dal::tc
