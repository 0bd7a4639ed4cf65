// Deterministic toy dataset: small labeled images of geometric figures over
// cluttered backgrounds. Figure position, size and color are randomized per
// sample; only the figure type carries class information, so a 1x1 color
// summary of the image tells a classifier nothing.
//
// Pack file layout (little-endian): magic "TDS1", u32 version, u32 count,
// u32 channels, u32 height, u32 width; then per record: u32 label followed by
// height*width*channels bytes in row-major HWC order. Single images use the
// same raster layout with magic "RAS1" and no label.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tokcom/rng.hpp"
#include "tokcom/tensor.hpp"
#include "tokcom/vit.hpp"

namespace tokcom {

struct Image {
  std::uint32_t height = 0, width = 0, channels = 0;
  std::vector<std::uint8_t> pixels;  // HWC row-major
};

struct Dataset {
  std::vector<Image> images;
  std::vector<std::size_t> labels;
  std::size_t classes = 0;

  std::size_t size() const { return images.size(); }
};

struct ToyDatasetSpec {
  std::size_t classes = 10;
  std::size_t train_per_class = 60;
  std::size_t test_per_class = 20;
  std::size_t height = 32, width = 32, channels = 3;
  std::size_t clutter_dots = 8;
  std::uint64_t seed = 1;
};

namespace detail {

inline void paint(std::vector<double>& canvas, std::size_t w, std::size_t c, std::size_t x,
                  std::size_t y, const double rgb[3]) {
  for (std::size_t ch = 0; ch < c; ++ch) canvas[(y * w + x) * c + ch] = rgb[ch % 3];
}

inline Image render_toy_image(const ToyDatasetSpec& spec, std::size_t label, RngStream& rng) {
  const std::size_t H = spec.height, W = spec.width, C = spec.channels;
  std::vector<double> canvas(H * W * C);
  for (std::size_t k = 0; k < canvas.size(); ++k) canvas[k] = 0.08 + 0.05 * rng.uniform();

  for (std::size_t dot = 0; dot < spec.clutter_dots; ++dot) {
    std::size_t cx = rng.uniform_index(W), cy = rng.uniform_index(H);
    double rgb[3] = {0.2 + 0.3 * rng.uniform(), 0.2 + 0.3 * rng.uniform(),
                     0.2 + 0.3 * rng.uniform()};
    for (long dy = -1; dy <= 1; ++dy)
      for (long dx = -1; dx <= 1; ++dx) {
        long x = static_cast<long>(cx) + dx, y = static_cast<long>(cy) + dy;
        if (x >= 0 && y >= 0 && x < static_cast<long>(W) && y < static_cast<long>(H))
          paint(canvas, W, C, x, y, rgb);
      }
  }

  const double scale = static_cast<double>(std::min(H, W)) / 32.0;
  const double cx = W / 2.0 + rng.uniform(-3.0, 3.0) * scale;
  const double cy = H / 2.0 + rng.uniform(-3.0, 3.0) * scale;
  const double r = rng.uniform(8.0, 11.0) * scale;
  double rgb[3] = {0.75 + 0.25 * rng.uniform(), 0.75 + 0.25 * rng.uniform(),
                   0.75 + 0.25 * rng.uniform()};

  auto inside = [&](double px, double py) -> bool {
    const double dx = px - cx, dy = py - cy;
    const double ax = std::fabs(dx), ay = std::fabs(dy);
    switch (label % 10) {
      case 0:  // filled circle
        return dx * dx + dy * dy <= r * r;
      case 1: {  // ring
        double d2 = dx * dx + dy * dy;
        return d2 <= r * r && d2 >= 0.55 * 0.55 * r * r;
      }
      case 2:  // filled square
        return ax <= r * 0.82 && ay <= r * 0.82;
      case 3:  // square frame
        return ax <= r * 0.82 && ay <= r * 0.82 && std::max(ax, ay) >= r * 0.5;
      case 4:  // upward triangle
        return dy >= -r * 0.8 && dy <= r * 0.8 && ax <= (dy + r * 0.8) * 0.55;
      case 5:  // plus
        return (ax <= r * 0.28 && ay <= r) || (ay <= r * 0.28 && ax <= r);
      case 6:  // diamond
        return ax + ay <= r;
      case 7:  // x cross
        return (std::fabs(dx - dy) <= r * 0.38 || std::fabs(dx + dy) <= r * 0.38) &&
               ax <= r * 0.9 && ay <= r * 0.9;
      case 8:  // horizontal bar
        return ax <= r && ay <= r * 0.3;
      default:  // vertical bar
        return ay <= r && ax <= r * 0.3;
    }
  };

  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      if (inside(x + 0.5, y + 0.5)) paint(canvas, W, C, x, y, rgb);

  Image img;
  img.height = static_cast<std::uint32_t>(H);
  img.width = static_cast<std::uint32_t>(W);
  img.channels = static_cast<std::uint32_t>(C);
  img.pixels.resize(canvas.size());
  for (std::size_t k = 0; k < canvas.size(); ++k) {
    double v = std::clamp(canvas[k], 0.0, 1.0);
    img.pixels[k] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return img;
}

inline Dataset generate_split(const ToyDatasetSpec& spec, std::size_t per_class,
                              std::string_view ns) {
  Dataset ds;
  ds.classes = spec.classes;
  const std::size_t total = per_class * spec.classes;
  ds.images.reserve(total);
  ds.labels.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t label = i % spec.classes;
    RngStream rng(spec.seed, ns, i);
    ds.images.push_back(render_toy_image(spec, label, rng));
    ds.labels.push_back(label);
  }
  return ds;
}

}  // namespace detail

inline Dataset generate_toy_train(const ToyDatasetSpec& spec) {
  return detail::generate_split(spec, spec.train_per_class, "data/train");
}
inline Dataset generate_toy_test(const ToyDatasetSpec& spec) {
  return detail::generate_split(spec, spec.test_per_class, "data/test");
}

// Pixels scaled to [-1, 1].
inline std::vector<double> to_input(const Image& img) {
  std::vector<double> out(img.pixels.size());
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = (static_cast<double>(img.pixels[k]) / 255.0 - 0.5) * 2.0;
  return out;
}

inline Tensor to_patches(const Image& img, const ModelConfig& cfg) {
  return patchify(to_input(img), cfg);
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("dataset: cannot open " + path + " for writing");
  auto w32 = [&](std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    os.write(b, 4);
  };
  os.write("TDS1", 4);
  w32(1);
  w32(static_cast<std::uint32_t>(ds.size()));
  if (ds.size() == 0) throw std::runtime_error("dataset: refusing to write empty dataset");
  w32(ds.images[0].channels);
  w32(ds.images[0].height);
  w32(ds.images[0].width);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    w32(static_cast<std::uint32_t>(ds.labels[i]));
    os.write(reinterpret_cast<const char*>(ds.images[i].pixels.data()),
             static_cast<std::streamsize>(ds.images[i].pixels.size()));
  }
  if (!os) throw std::runtime_error("dataset: write failed for " + path);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("dataset: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "TDS1", 4) != 0)
    throw std::runtime_error("dataset: bad magic in " + path);
  auto r32 = [&]() {
    char b[4];
    is.read(b, 4);
    if (!is) throw std::runtime_error("dataset: truncated file " + path);
    std::uint32_t v;
    std::memcpy(&v, b, 4);
    return v;
  };
  std::uint32_t version = r32();
  if (version != 1) throw std::runtime_error("dataset: unsupported version");
  std::uint32_t count = r32(), c = r32(), h = r32(), w = r32();
  Dataset ds;
  std::size_t max_label = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t label = r32();
    Image img;
    img.channels = c;
    img.height = h;
    img.width = w;
    img.pixels.resize(static_cast<std::size_t>(c) * h * w);
    is.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (!is) throw std::runtime_error("dataset: truncated records in " + path);
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
    max_label = std::max<std::size_t>(max_label, label);
  }
  ds.classes = max_label + 1;
  return ds;
}

inline void save_raster(const std::string& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("raster: cannot open " + path + " for writing");
  auto w32 = [&](std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    os.write(b, 4);
  };
  os.write("RAS1", 4);
  w32(img.channels);
  w32(img.height);
  w32(img.width);
  os.write(reinterpret_cast<const char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
}

inline Image load_raster(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("raster: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "RAS1", 4) != 0)
    throw std::runtime_error("raster: bad magic in " + path);
  auto r32 = [&]() {
    char b[4];
    is.read(b, 4);
    std::uint32_t v;
    std::memcpy(&v, b, 4);
    return v;
  };
  Image img;
  img.channels = r32();
  img.height = r32();
  img.width = r32();
  img.pixels.resize(static_cast<std::size_t>(img.channels) * img.height * img.width);
  is.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!is) throw std::runtime_error("raster: truncated file " + path);
  return img;
}

}  // namespace tokcom
