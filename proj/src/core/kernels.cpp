#include "mealsynth/core/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace mealsynth::kernels {

namespace {

inline void matmul_row(const double* a, const double* b, double* c,
                       int64_t i, int64_t k, int64_t n) {
  double* ci = c + i * n;
  std::memset(ci, 0, sizeof(double) * static_cast<size_t>(n));
  const double* ai = a + i * k;
  for (int64_t p = 0; p < k; ++p) {
    const double av = ai[p];
    const double* bp = b + p * n;
    for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
  }
}

inline void matmul_tn_row(const double* a, const double* b, double* c,
                          int64_t i, int64_t m, int64_t k, int64_t n) {
  double* ci = c + i * n;
  std::memset(ci, 0, sizeof(double) * static_cast<size_t>(n));
  for (int64_t p = 0; p < k; ++p) {
    const double av = a[p * m + i];
    const double* bp = b + p * n;
    for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
  }
}

inline void matmul_nt_row(const double* a, const double* b, double* c,
                          int64_t i, int64_t k, int64_t n) {
  const double* ai = a + i * k;
  double* ci = c + i * n;
  for (int64_t j = 0; j < n; ++j) {
    const double* bj = b + j * k;
    double acc = 0.0;
    for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
    ci[j] = acc;
  }
}

inline void im2col_row(const double* img, int64_t c, int64_t h, int64_t w,
                       int64_t kh, int64_t kw, int64_t stride, int64_t pad,
                       int64_t ow, int64_t r, double* col) {
  const int64_t oy = r / ow;
  const int64_t ox = r % ow;
  double* dst = col + r * (c * kh * kw);
  int64_t idx = 0;
  for (int64_t ch = 0; ch < c; ++ch) {
    const double* plane = img + ch * h * w;
    for (int64_t ky = 0; ky < kh; ++ky) {
      const int64_t y = oy * stride - pad + ky;
      for (int64_t kx = 0; kx < kw; ++kx) {
        const int64_t x = ox * stride - pad + kx;
        dst[idx++] = (y >= 0 && y < h && x >= 0 && x < w) ? plane[y * w + x] : 0.0;
      }
    }
  }
}

// col2im scatter: parallel over destination pixels, each gathers its own
// contributions so no atomics are needed and order is fixed.
inline void col2im_pixel(const double* col, int64_t c, int64_t h, int64_t w,
                         int64_t kh, int64_t kw, int64_t stride, int64_t pad,
                         int64_t oh, int64_t ow, int64_t pix, double* img) {
  const int64_t ch = pix / (h * w);
  const int64_t y = (pix / w) % h;
  const int64_t x = pix % w;
  double acc = 0.0;
  for (int64_t ky = 0; ky < kh; ++ky) {
    const int64_t ty = y + pad - ky;
    if (ty < 0 || ty % stride != 0) continue;
    const int64_t oy = ty / stride;
    if (oy >= oh) continue;
    for (int64_t kx = 0; kx < kw; ++kx) {
      const int64_t tx = x + pad - kx;
      if (tx < 0 || tx % stride != 0) continue;
      const int64_t ox = tx / stride;
      if (ox >= ow) continue;
      const int64_t row = oy * ow + ox;
      const int64_t colidx = (ch * kh + ky) * kw + kx;
      acc += col[row * (c * kh * kw) + colidx];
    }
  }
  img[pix] = acc;
}

struct ResizeCoord {
  int64_t lo, hi;
  double t;
};

inline ResizeCoord resize_coord(int64_t i, int64_t out, int64_t in) {
  // half-pixel centers, clamped at borders
  const double pos = (static_cast<double>(i) + 0.5) * static_cast<double>(in) /
                         static_cast<double>(out) -
                     0.5;
  ResizeCoord rc;
  const double f = std::floor(pos);
  rc.lo = std::clamp(static_cast<int64_t>(f), int64_t{0}, in - 1);
  rc.hi = std::min(rc.lo + 1, in - 1);
  rc.t = std::clamp(pos - f, 0.0, 1.0);
  if (pos < 0) rc.t = 0.0;
  return rc;
}

inline void resize_row(const double* src, int64_t h, int64_t w, int64_t ch,
                       double* dst, int64_t oh, int64_t ow, int64_t oy) {
  const ResizeCoord ry = resize_coord(oy, oh, h);
  for (int64_t ox = 0; ox < ow; ++ox) {
    const ResizeCoord rx = resize_coord(ox, ow, w);
    const double* p00 = src + (ry.lo * w + rx.lo) * ch;
    const double* p01 = src + (ry.lo * w + rx.hi) * ch;
    const double* p10 = src + (ry.hi * w + rx.lo) * ch;
    const double* p11 = src + (ry.hi * w + rx.hi) * ch;
    double* out = dst + (oy * ow + ox) * ch;
    for (int64_t k = 0; k < ch; ++k) {
      const double top = p00[k] + (p01[k] - p00[k]) * rx.t;
      const double bot = p10[k] + (p11[k] - p10[k]) * rx.t;
      out[k] = top + (bot - top) * ry.t;
    }
  }
}

}  // namespace

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) matmul_row(a, b, c, i, k, n);
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) matmul_tn_row(a, b, c, i, m, k, n);
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) matmul_nt_row(a, b, c, i, k, n);
}

void im2col(const double* img, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, double* col) {
  const int64_t oh = conv_out_size(h, kh, stride, pad);
  const int64_t ow = conv_out_size(w, kw, stride, pad);
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < oh * ow; ++r) im2col_row(img, c, h, w, kh, kw, stride, pad, ow, r, col);
}

void col2im(const double* col, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, double* img) {
  const int64_t oh = conv_out_size(h, kh, stride, pad);
  const int64_t ow = conv_out_size(w, kw, stride, pad);
#pragma omp parallel for schedule(static)
  for (int64_t pix = 0; pix < c * h * w; ++pix)
    col2im_pixel(col, c, h, w, kh, kw, stride, pad, oh, ow, pix, img);
}

void resize_bilinear(const double* src, int64_t h, int64_t w, int64_t ch,
                     double* dst, int64_t oh, int64_t ow) {
#pragma omp parallel for schedule(static)
  for (int64_t oy = 0; oy < oh; ++oy) resize_row(src, h, w, ch, dst, oh, ow, oy);
}

void axpy(const double* x, double* y, double alpha, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

namespace serial {

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) matmul_row(a, b, c, i, k, n);
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) matmul_tn_row(a, b, c, i, m, k, n);
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) matmul_nt_row(a, b, c, i, k, n);
}

void im2col(const double* img, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, double* col) {
  const int64_t oh = conv_out_size(h, kh, stride, pad);
  const int64_t ow = conv_out_size(w, kw, stride, pad);
  for (int64_t r = 0; r < oh * ow; ++r) im2col_row(img, c, h, w, kh, kw, stride, pad, ow, r, col);
}

void col2im(const double* col, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, double* img) {
  const int64_t oh = conv_out_size(h, kh, stride, pad);
  const int64_t ow = conv_out_size(w, kw, stride, pad);
  for (int64_t pix = 0; pix < c * h * w; ++pix)
    col2im_pixel(col, c, h, w, kh, kw, stride, pad, oh, ow, pix, img);
}

void resize_bilinear(const double* src, int64_t h, int64_t w, int64_t ch,
                     double* dst, int64_t oh, int64_t ow) {
  for (int64_t oy = 0; oy < oh; ++oy) resize_row(src, h, w, ch, dst, oh, ow, oy);
}

void axpy(const double* x, double* y, double alpha, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace serial

}  // namespace mealsynth::kernels
