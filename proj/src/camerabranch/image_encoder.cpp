#include "dal/camerabranch/image_encoder.hpp"

namespace dal::cam {

ImageEncoder::ImageEncoder(tc::ParamStore<float>& store, const std::string& name, ImageEncoderConfig config)
    : config_(std::move(config)) {
  if (config_.widths.size() != 4 || config_.blocks < 1) throw ConfigError("image encoder: need 4 widths and >= 1 block");
  stem_ = tc::ConvBnAct<float>(store, name + ".stem", 3, config_.widths[0], 3, 2);
  for (int s = 1; s < 4; ++s) {
    stages_.emplace_back();
    for (int b = 0; b < config_.blocks; ++b)
      stages_.back().emplace_back(store, name + ".stage" + std::to_string(s) + ".block" + std::to_string(b),
                                  b == 0 ? config_.widths[s - 1] : config_.widths[s], config_.widths[s], b == 0 ? 2 : 1);
  }
  lateral8_ = tc::ConvBnAct<float>(store, name + ".neck.lateral8", config_.widths[2], config_.out_channels, 1, 1, false);
  lateral16_ = tc::ConvBnAct<float>(store, name + ".neck.lateral16", config_.widths[3], config_.out_channels, 1, 1, false);
  if (config_.smooth)
    smooth_ = tc::ConvBnAct<float>(store, name + ".neck.smooth", config_.out_channels, config_.out_channels, 3);
}

tc::Tensorf ImageEncoder::operator()(const tc::Tensorf& images) {
  constexpr int s = ImageEncoderConfig::total_stride();
  if (images.ndim() != 4 || images.dim(1) != 3 || images.dim(2) % s != 0 || images.dim(3) % s != 0)
    throw ShapeError("image encoder: input " + tc::to_string(images.shape()) + " must be (B*N, 3, H, W) with H, W divisible by " +
                     std::to_string(s));
  auto x = stem_(images);
  std::vector<tc::Tensorf> outs;
  for (auto& stage : stages_) {
    for (auto& b : stage) x = b(x);
    outs.push_back(x);
  }
  auto top = tc::upsample_nearest2d(lateral16_(outs[2]), 2);
  auto merged = tc::relu(tc::add(lateral8_(outs[1]), top));
  return config_.smooth ? smooth_(merged) : merged;
}

DepthHead::DepthHead(tc::ParamStore<float>& store, const std::string& name, int in_channels, int bins)
    : conv_(store, name, in_channels, bins, 1, 1, 0, true) {
  if (bins < 2) throw ConfigError("depth head: at least 2 bins");
}

tc::Tensorf images_to_tensor(const std::vector<const synth::Image*>& images) {
  if (images.empty()) throw ShapeError("images_to_tensor: no images");
  const int h = images.front()->height, w = images.front()->width;
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  std::vector<float> out(images.size() * 3 * plane);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto* img = images[i];
    if (img->height != h || img->width != w) throw ShapeError("images_to_tensor: mixed image sizes");
    for (std::int64_t p = 0; p < plane; ++p)
      for (int c = 0; c < 3; ++c) out[(i * 3 + c) * plane + p] = (img->rgb[3 * p + c] / 255.f - 0.5f) / 0.25f;
  }
  return tc::Tensorf::from_data({static_cast<std::int64_t>(images.size()), 3, h, w}, std::move(out));
}

}  // namespace dal::cam
