#include "mealsynth/core/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mealsynth/core/kernels.hpp"

namespace mealsynth {

void write_ppm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for write: " + path);
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> buf(img.px.size());
  for (size_t i = 0; i < img.px.size(); ++i) {
    const double v = std::clamp(img.px[i], -1.0, 1.0);
    buf[i] = static_cast<unsigned char>(std::lround((v + 1.0) * 0.5 * 255.0));
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw ConfigError("short write: " + path);
}

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open for read: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw ShapeError("not a P6 ppm: " + path);
  auto skip_ws_comments = [&in]() {
    while (true) {
      int c = in.peek();
      if (c == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
  };
  int64_t w = 0, h = 0, maxval = 0;
  skip_ws_comments();
  in >> w;
  skip_ws_comments();
  in >> h;
  skip_ws_comments();
  in >> maxval;
  in.get();  // single whitespace after header
  if (w <= 0 || h <= 0 || maxval != 255) throw ShapeError("unsupported ppm header: " + path);
  Image img(h, w);
  std::vector<unsigned char> buf(static_cast<size_t>(h * w * 3));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size()))
    throw ShapeError("truncated ppm: " + path);
  for (size_t i = 0; i < buf.size(); ++i)
    img.px[i] = 2.0 * static_cast<double>(buf[i]) / 255.0 - 1.0;
  return img;
}

Image rescale_image(const Image& img, int64_t target_size) {
  if (target_size < 1) throw ShapeError("rescale_image: target_size must be >= 1");
  if (!img.square()) throw ShapeError("rescale_image: non-square input");
  if (img.h == target_size) return img;
  Image out(target_size, target_size);
  kernels::resize_bilinear(img.px.data(), img.h, img.w, 3, out.px.data(), target_size,
                           target_size);
  return out;
}

Tensor image_to_encoder_tensor(const Image& img) {
  Tensor t({1, 3, img.h, img.w});
  const int64_t hw = img.h * img.w;
  for (int64_t y = 0; y < img.h; ++y)
    for (int64_t x = 0; x < img.w; ++x)
      for (int64_t c = 0; c < 3; ++c)
        t.data[static_cast<size_t>(c * hw + y * img.w + x)] =
            (img.at(y, x, c) - kEncoderMean) / kEncoderStd;
  return t;
}

Tensor image_to_tensor(const Image& img) {
  Tensor t({1, 3, img.h, img.w});
  const int64_t hw = img.h * img.w;
  for (int64_t y = 0; y < img.h; ++y)
    for (int64_t x = 0; x < img.w; ++x)
      for (int64_t c = 0; c < 3; ++c)
        t.data[static_cast<size_t>(c * hw + y * img.w + x)] = img.at(y, x, c);
  return t;
}

Image tensor_to_image(const Tensor& t, int64_t batch_index) {
  if (t.ndim() != 4 || t.dim(1) != 3) throw ShapeError("tensor_to_image: expects [B,3,H,W]");
  const int64_t h = t.dim(2), w = t.dim(3), hw = h * w;
  Image img(h, w);
  const double* base = &t.data[static_cast<size_t>(batch_index * 3 * hw)];
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < 3; ++c)
        img.at(y, x, c) = std::clamp(base[c * hw + y * w + x], -1.0, 1.0);
  return img;
}

}  // namespace mealsynth
