// Digital capacity-achieving comparison schemes: Shannon bit budget, the
// resize baseline (24 L^2 bits for an L x L x 3 thumbnail), and a pluggable
// monotone-quality codec baseline with a built-in uniform re-quantizer.
// Reception is assumed perfect whenever the payload fits the bit budget.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tokcom/dataset.hpp"
#include "tokcom/djscc.hpp"

namespace tokcom {

inline double capacity_bits_linear(double q, double snr_linear) {
  if (q < 0.0) throw std::invalid_argument("capacity_bits: q must be non-negative");
  return q * std::log2(1.0 + snr_linear);
}

inline double capacity_bits(double q, double snr_db) {
  return capacity_bits_linear(q, std::pow(10.0, snr_db / 10.0));
}

struct ResizeResult {
  bool ok = false;
  std::size_t side = 0;  // L, the thumbnail edge in pixels
};

// Largest integer L >= 1 with 24 L^2 <= b_max; failure when even L = 1 does
// not fit (the image then counts as misclassified).
inline ResizeResult resize_side(double b_max) {
  if (b_max < 24.0) return ResizeResult{false, 0};
  auto fits = [&](std::size_t L) { return 24.0 * static_cast<double>(L) * static_cast<double>(L) <= b_max; };
  std::size_t L = static_cast<std::size_t>(std::floor(std::sqrt(b_max / 24.0)));
  if (L < 1) L = 1;
  while (fits(L + 1)) ++L;
  while (L >= 1 && !fits(L)) --L;
  return ResizeResult{L >= 1, L};
}

struct CodecResult {
  std::size_t bits = 0;
  Image reconstruction;
};

class CodecPlugin {
 public:
  virtual ~CodecPlugin() = default;
  // Supported quality levels, ascending.
  virtual std::vector<int> qualities() const = 0;
  virtual CodecResult encode_decode(const Image& img, int quality) const = 0;
};

// Uniform re-quantization at k bits per channel, k in 1..8. Payload cost is
// exactly pixels * k bits; k = 8 reconstructs the image losslessly.
class RequantizePlugin final : public CodecPlugin {
 public:
  std::vector<int> qualities() const override { return {1, 2, 3, 4, 5, 6, 7, 8}; }

  CodecResult encode_decode(const Image& img, int quality) const override {
    if (quality < 1 || quality > 8)
      throw std::invalid_argument("RequantizePlugin: quality must lie in 1..8");
    CodecResult out;
    out.bits = img.pixels.size() * static_cast<std::size_t>(quality);
    out.reconstruction = img;
    const double levels = static_cast<double>((1u << quality) - 1u);
    for (std::uint8_t& px : out.reconstruction.pixels) {
      double level = std::round(static_cast<double>(px) / 255.0 * levels);
      px = static_cast<std::uint8_t>(std::lround(level / levels * 255.0));
    }
    return out;
  }
};

// Highest quality whose payload fits b_max; nullopt when none fits.
inline std::optional<CodecResult> codec_quality_fit(const Image& img, double b_max,
                                                    const CodecPlugin& plugin) {
  std::vector<int> qs = plugin.qualities();
  std::sort(qs.begin(), qs.end());
  for (std::size_t i = qs.size(); i-- > 0;) {
    CodecResult res = plugin.encode_decode(img, qs[i]);
    if (static_cast<double>(res.bits) <= b_max) return res;
  }
  return std::nullopt;
}

// Box-filter downscale to L x L with 8-bit quantization per channel.
inline Image downscale_area(const Image& img, std::size_t side) {
  Image out;
  out.height = static_cast<std::uint32_t>(side);
  out.width = static_cast<std::uint32_t>(side);
  out.channels = img.channels;
  out.pixels.resize(side * side * img.channels);
  for (std::size_t ty = 0; ty < side; ++ty)
    for (std::size_t tx = 0; tx < side; ++tx) {
      std::size_t y0 = ty * img.height / side, y1 = std::max<std::size_t>((ty + 1) * img.height / side, y0 + 1);
      std::size_t x0 = tx * img.width / side, x1 = std::max<std::size_t>((tx + 1) * img.width / side, x0 + 1);
      for (std::size_t c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t x = x0; x < x1; ++x)
            acc += img.pixels[(y * img.width + x) * img.channels + c];
        acc /= static_cast<double>((y1 - y0) * (x1 - x0));
        out.pixels[(ty * side + tx) * img.channels + c] =
            static_cast<std::uint8_t>(std::lround(std::clamp(acc, 0.0, 255.0)));
      }
    }
  return out;
}

inline Image upscale_nearest(const Image& img, std::size_t height, std::size_t width) {
  Image out;
  out.height = static_cast<std::uint32_t>(height);
  out.width = static_cast<std::uint32_t>(width);
  out.channels = img.channels;
  out.pixels.resize(height * width * img.channels);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      std::size_t sy = std::min<std::size_t>(y * img.height / height, img.height - 1);
      std::size_t sx = std::min<std::size_t>(x * img.width / width, img.width - 1);
      for (std::size_t c = 0; c < img.channels; ++c)
        out.pixels[(y * width + x) * img.channels + c] =
            img.pixels[(sy * img.width + sx) * img.channels + c];
    }
  return out;
}

enum class BaselineScheme { kResize, kCodec };

inline const char* baseline_scheme_name(BaselineScheme s) {
  return s == BaselineScheme::kResize ? "resize" : "codec";
}

// Each image is compressed to fit the capacity budget, reconstructed,
// upscaled back to the model's native input, and classified by the unsplit
// model; images that cannot fit count as errors.
inline double digital_baseline_accuracy(const Dataset& ds, double q, double snr_db,
                                        BaselineScheme scheme, DjsccModel& classifier,
                                        const CodecPlugin* plugin = nullptr,
                                        std::size_t limit = 0) {
  const std::size_t n = (limit == 0) ? ds.size() : std::min(limit, ds.size());
  if (n == 0) return 0.0;
  RequantizePlugin builtin;
  if (plugin == nullptr) plugin = &builtin;
  const double b_max = capacity_bits(q, snr_db);
  PlainEngine e;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Image& img = ds.images[i];
    std::optional<Image> recon;
    if (scheme == BaselineScheme::kResize) {
      ResizeResult rr = resize_side(b_max);
      if (rr.ok)
        recon = upscale_nearest(downscale_area(img, rr.side), img.height, img.width);
    } else {
      std::optional<CodecResult> fit = codec_quality_fit(img, b_max, *plugin);
      if (fit.has_value()) recon = std::move(fit->reconstruction);
    }
    if (!recon.has_value()) continue;  // unfit images count as errors
    Tensor logits = backbone_forward(e, classifier, to_patches(*recon, classifier.cfg));
    if (kernels::argmax_row(logits) == ds.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace tokcom
