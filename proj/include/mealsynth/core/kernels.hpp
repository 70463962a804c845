#pragma once

#include <cstdint>

namespace mealsynth::kernels {

// Data-parallel kernels. Every kernel computes each output element with a
// fixed, thread-independent accumulation order, so the OpenMP versions are
// bit-identical to the serial references in kernels::serial (asserted in
// tests, compared in tools/bench_kernels).

// C[m x n] = A[m x k] * B[k x n]
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
// C[m x n] = A^T[k x m]^T... i.e. A is stored [k x m], C = A^T * B[k x n]
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
// C[m x n] = A[m x k] * B^T, B stored [n x k]
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

// NCHW conv helpers. col has rows oh*ow and cols c*kh*kw for one sample.
void im2col(const double* img, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, double* col);
void col2im(const double* col, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, double* img);

// Bilinear resize of an h x w x ch (HWC) image, half-pixel centers.
void resize_bilinear(const double* src, int64_t h, int64_t w, int64_t ch,
                     double* dst, int64_t oh, int64_t ow);

// y += alpha * x
void axpy(const double* x, double* y, double alpha, int64_t n);

namespace serial {
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void im2col(const double* img, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, double* col);
void col2im(const double* col, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, double* img);
void resize_bilinear(const double* src, int64_t h, int64_t w, int64_t ch,
                     double* dst, int64_t oh, int64_t ow);
void axpy(const double* x, double* y, double alpha, int64_t n);
}  // namespace serial

inline int64_t conv_out_size(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace mealsynth::kernels
