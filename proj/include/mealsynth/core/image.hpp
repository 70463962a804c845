#pragma once

#include <string>
#include <vector>

#include "mealsynth/core/tensor.hpp"

namespace mealsynth {

// RGB raster in HWC layout. Pixel values live in the generator domain
// [-1, 1]; the encoder domain is the affine map below.
struct Image {
  int64_t h = 0, w = 0;
  std::vector<double> px;  // h*w*3, HWC

  Image() = default;
  Image(int64_t h_, int64_t w_, double fill = 0.0)
      : h(h_), w(w_), px(static_cast<size_t>(h_ * w_ * 3), fill) {}

  double& at(int64_t y, int64_t x, int64_t c) { return px[(y * w + x) * 3 + c]; }
  double at(int64_t y, int64_t x, int64_t c) const { return px[(y * w + x) * 3 + c]; }
  bool square() const { return h == w; }
};

// Encoder-domain normalization: enc = (gen - mean) / stddev, per channel.
// Constants are fixed project-wide so stored images stay in one domain.
inline constexpr double kEncoderMean = 0.0;
inline constexpr double kEncoderStd = 0.5;

// Binary PPM (P6), 8-bit. Quantization maps [-1,1] -> [0,255] by rounding;
// loading maps back with v = 2*b/255 - 1. Lossless for already-quantized data.
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

// Bilinear resize (square in, square out). Throws ShapeError otherwise.
Image rescale_image(const Image& img, int64_t target_size);

// HWC image [-1,1] -> 1x3xHxW tensor in encoder domain.
Tensor image_to_encoder_tensor(const Image& img);
// HWC image -> 1x3xHxW tensor, generator domain (no normalization).
Tensor image_to_tensor(const Image& img);
// 3xHxW slice of an NCHW tensor -> HWC image (values clamped to [-1,1]).
Image tensor_to_image(const Tensor& t, int64_t batch_index = 0);

}  // namespace mealsynth
