#include "dsal/kernels.hpp"

#include <cblas.h>
#include <malloc.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

extern "C" void openblas_set_num_threads(int);

namespace dsal::kernels {

namespace {

struct RuntimeSetup {
  RuntimeSetup() {
    // The chunked gemm below owns all threading; BLAS itself stays serial.
    openblas_set_num_threads(1);
    // Activation tensors are multi-megabyte and short-lived. Keeping freed
    // blocks in the heap instead of handing them back to the kernel avoids
    // refaulting the same pages on every layer.
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
  }
};
const RuntimeSetup runtime_setup;

inline int64_t idx4(int64_t a, int64_t b, int64_t c, int64_t d, int64_t B,
                    int64_t C, int64_t D) {
  return ((a * B + b) * C + c) * D + d;
}

// Valid output range [lo, hi) for one kernel tap: 0 <= o*s - p + d < extent.
inline void tap_range(int extent, int out, int s, int p, int d, int* lo,
                      int* hi) {
  int shift = p - d;
  *lo = shift > 0 ? (shift + s - 1) / s : 0;
  int num = extent - 1 + shift;
  *hi = num < 0 ? 0 : std::min(out, num / s + 1);
  if (*hi < *lo) *hi = *lo;
}

// im2col for the temporal output slices [t0, t1): col is
// [ci*kt*kh*kw, (t1-t0)*ho*wo], slices packed along the column axis.
void im2col_group(const float* x, int ci, int t, int h, int w,
                  const ConvGeom& g, int t0, int t1, int ho, int wo,
                  float* col) {
  const int rows = ci * g.kt * g.kh * g.kw;
  const int64_t l = static_cast<int64_t>(ho) * wo;
  const int64_t ld = static_cast<int64_t>(t1 - t0) * l;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; r++) {
    int rem = r;
    const int dw = rem % g.kw;
    rem /= g.kw;
    const int dh = rem % g.kh;
    rem /= g.kh;
    const int dt = rem % g.kt;
    const int c = rem / g.kt;
    int oh_lo, oh_hi, ow_lo, ow_hi;
    tap_range(h, ho, g.sh, g.ph, dh, &oh_lo, &oh_hi);
    tap_range(w, wo, g.sw, g.pw, dw, &ow_lo, &ow_hi);
    for (int a = t0; a < t1; a++) {
      float* dst = col + static_cast<int64_t>(r) * ld + (a - t0) * l;
      const int tt = a * g.st - g.pt + dt;
      if (tt < 0 || tt >= t) {
        std::memset(dst, 0, sizeof(float) * l);
        continue;
      }
      const float* plane = x + (static_cast<int64_t>(c) * t + tt) * h * w;
      for (int oh = 0; oh < ho; oh++) {
        float* row = dst + static_cast<int64_t>(oh) * wo;
        if (oh < oh_lo || oh >= oh_hi) {
          std::memset(row, 0, sizeof(float) * wo);
          continue;
        }
        const int ih = oh * g.sh - g.ph + dh;
        const float* src = plane + static_cast<int64_t>(ih) * w;
        if (ow_lo > 0) std::memset(row, 0, sizeof(float) * ow_lo);
        if (ow_hi < wo)
          std::memset(row + ow_hi, 0, sizeof(float) * (wo - ow_hi));
        if (g.sw == 1) {
          if (ow_hi > ow_lo)
            std::memcpy(row + ow_lo, src + (ow_lo - g.pw + dw),
                        sizeof(float) * (ow_hi - ow_lo));
        } else {
          for (int ow = ow_lo; ow < ow_hi; ow++)
            row[ow] = src[ow * g.sw - g.pw + dw];
        }
      }
    }
  }
}

void col2im_group(const float* col, int ci, int t, int h, int w,
                  const ConvGeom& g, int t0, int t1, int ho, int wo,
                  float* gx) {
  const int64_t l = static_cast<int64_t>(ho) * wo;
  const int64_t ld = static_cast<int64_t>(t1 - t0) * l;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < ci; c++) {
    for (int a = t0; a < t1; a++) {
      for (int dt = 0; dt < g.kt; dt++) {
        const int tt = a * g.st - g.pt + dt;
        if (tt < 0 || tt >= t) continue;
        float* plane = gx + (static_cast<int64_t>(c) * t + tt) * h * w;
        for (int dh = 0; dh < g.kh; dh++) {
          int oh_lo, oh_hi, ow_lo, ow_hi;
          tap_range(h, ho, g.sh, g.ph, dh, &oh_lo, &oh_hi);
          for (int dw = 0; dw < g.kw; dw++) {
            tap_range(w, wo, g.sw, g.pw, dw, &ow_lo, &ow_hi);
            const int r = ((c * g.kt + dt) * g.kh + dh) * g.kw + dw;
            const float* src =
                col + static_cast<int64_t>(r) * ld + (a - t0) * l;
            for (int oh = oh_lo; oh < oh_hi; oh++) {
              const int ih = oh * g.sh - g.ph + dh;
              float* dst = plane + static_cast<int64_t>(ih) * w - g.pw + dw;
              const float* s = src + static_cast<int64_t>(oh) * wo;
              if (g.sw == 1) {
                for (int ow = ow_lo; ow < ow_hi; ow++) dst[ow] += s[ow];
              } else {
                for (int ow = ow_lo; ow < ow_hi; ow++)
                  dst[ow * g.sw] += s[ow];
              }
            }
          }
        }
      }
    }
  }
}

// Temporal slices per im2col buffer, bounded by a cache-friendly working set.
int slice_group(int kdim, int64_t l, int to) {
  const int64_t budget = 12ll * 1024 * 1024 / static_cast<int64_t>(sizeof(float));
  int g = static_cast<int>(budget / std::max<int64_t>(1, kdim * l));
  return std::clamp(g, 1, to);
}

// Conv scratch reused across calls; the orchestration is single-threaded so
// one buffer per purpose suffices and repeated large allocations (and their
// page faults) are avoided.
std::vector<float>& scratch(int which, size_t count) {
  static std::vector<float> bufs[2];
  if (bufs[which].size() < count) bufs[which].resize(count);
  return bufs[which];
}

inline bool is_pointwise(const ConvGeom& g) {
  return g.kt == 1 && g.kh == 1 && g.kw == 1 && g.pt == 0 && g.ph == 0 &&
         g.pw == 0;
}

inline bool is_unit_stride(const ConvGeom& g) {
  return g.st == 1 && g.sh == 1 && g.sw == 1;
}

// Gather x at the strided sample positions of a pointwise conv:
// out[c][to,ho,wo] = x[c][to*st, ho*sh, wo*sw]
void gather_strided(const float* x, int ci, int t, int h, int w,
                    const ConvGeom& g, int to, int ho, int wo, float* out) {
  const int64_t l = static_cast<int64_t>(to) * ho * wo;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < ci; c++) {
    float* dst = out + c * l;
    const float* src = x + static_cast<int64_t>(c) * t * h * w;
    for (int a = 0; a < to; a++)
      for (int b = 0; b < ho; b++) {
        const float* row = src + (static_cast<int64_t>(a) * g.st * h +
                                  static_cast<int64_t>(b) * g.sh) *
                                     w;
        for (int d = 0; d < wo; d++) *dst++ = row[d * g.sw];
      }
  }
}

void scatter_strided_add(const float* grad, int ci, int t, int h, int w,
                         const ConvGeom& g, int to, int ho, int wo,
                         float* gx) {
  const int64_t l = static_cast<int64_t>(to) * ho * wo;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < ci; c++) {
    const float* src = grad + c * l;
    float* dst = gx + static_cast<int64_t>(c) * t * h * w;
    for (int a = 0; a < to; a++)
      for (int b = 0; b < ho; b++) {
        float* row = dst + (static_cast<int64_t>(a) * g.st * h +
                            static_cast<int64_t>(b) * g.sh) *
                               w;
        for (int d = 0; d < wo; d++) row[d * g.sw] += *src++;
      }
  }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc) {
  const int nt = omp_get_max_threads();
  // Row chunks sized once from the thread count; each chunk is serial BLAS.
  const int chunk = std::max(1, (m + nt - 1) / nt);
  const int nchunks = (m + chunk - 1) / chunk;
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < nchunks; ci++) {
    const int m0 = ci * chunk;
    const int m1 = std::min(m, m0 + chunk);
    const float* ablock =
        trans_a ? a + m0 : a + static_cast<int64_t>(m0) * lda;
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m1 - m0, n, k, alpha,
                ablock, lda, b, ldb, beta, c + static_cast<int64_t>(m0) * ldc,
                ldc);
  }
}

void conv3d_forward(const float* x, int n, int ci, int t, int h, int w,
                    const float* weight, int co, const float* bias,
                    const ConvGeom& g, float* y) {
  const int to = conv_out_dim(t, g.kt, g.st, g.pt);
  const int ho = conv_out_dim(h, g.kh, g.sh, g.ph);
  const int wo = conv_out_dim(w, g.kw, g.sw, g.pw);
  const int64_t in_sz = static_cast<int64_t>(ci) * t * h * w;
  const int64_t out_sz = static_cast<int64_t>(co) * to * ho * wo;
  const int64_t l = static_cast<int64_t>(ho) * wo;
  const int kdim = ci * g.kt * g.kh * g.kw;

  if (is_pointwise(g) && is_unit_stride(g)) {
    const int64_t thw = static_cast<int64_t>(t) * h * w;
    for (int i = 0; i < n; i++)
      gemm(false, false, co, static_cast<int>(thw), ci, 1.0f, weight, ci,
           x + i * in_sz, static_cast<int>(thw), 0.0f, y + i * out_sz,
           static_cast<int>(thw));
  } else if (is_pointwise(g)) {
    const int64_t lt = static_cast<int64_t>(to) * ho * wo;
    std::vector<float>& tmp = scratch(0, static_cast<size_t>(ci) * lt);
    for (int i = 0; i < n; i++) {
      gather_strided(x + i * in_sz, ci, t, h, w, g, to, ho, wo, tmp.data());
      gemm(false, false, co, static_cast<int>(lt), ci, 1.0f, weight, ci,
           tmp.data(), static_cast<int>(lt), 0.0f, y + i * out_sz,
           static_cast<int>(lt));
    }
  } else {
    const int group = slice_group(kdim, l, to);
    std::vector<float>& col = scratch(0, static_cast<size_t>(kdim) * group * l);
    for (int i = 0; i < n; i++) {
      for (int a = 0; a < to; a += group) {
        const int a1 = std::min(to, a + group);
        const int64_t cols = (a1 - a) * l;
        im2col_group(x + i * in_sz, ci, t, h, w, g, a, a1, ho, wo,
                     col.data());
        gemm(false, false, co, static_cast<int>(cols), kdim, 1.0f, weight,
             kdim, col.data(), static_cast<int>(cols), 0.0f,
             y + i * out_sz + static_cast<int64_t>(a) * l,
             static_cast<int>(to * l));
      }
    }
  }

  if (bias) {
    const int64_t plane = static_cast<int64_t>(to) * ho * wo;
#pragma omp parallel for schedule(static) collapse(2)
    for (int i = 0; i < n; i++)
      for (int c = 0; c < co; c++) {
        float* p = y + i * out_sz + c * plane;
        const float b = bias[c];
        for (int64_t j = 0; j < plane; j++) p[j] += b;
      }
  }
}

void conv3d_backward_input(const float* weight, int co, int ci, int t, int h,
                           int w, const ConvGeom& g, const float* gy, int n,
                           float* gx) {
  const int to = conv_out_dim(t, g.kt, g.st, g.pt);
  const int ho = conv_out_dim(h, g.kh, g.sh, g.ph);
  const int wo = conv_out_dim(w, g.kw, g.sw, g.pw);
  const int64_t in_sz = static_cast<int64_t>(ci) * t * h * w;
  const int64_t out_sz = static_cast<int64_t>(co) * to * ho * wo;
  const int64_t l = static_cast<int64_t>(ho) * wo;
  const int kdim = ci * g.kt * g.kh * g.kw;

  std::memset(gx, 0, sizeof(float) * static_cast<size_t>(n) * in_sz);

  if (is_pointwise(g) && is_unit_stride(g)) {
    const int64_t thw = static_cast<int64_t>(t) * h * w;
    for (int i = 0; i < n; i++)
      gemm(true, false, ci, static_cast<int>(thw), co, 1.0f, weight, ci,
           gy + i * out_sz, static_cast<int>(thw), 0.0f, gx + i * in_sz,
           static_cast<int>(thw));
  } else if (is_pointwise(g)) {
    const int64_t lt = static_cast<int64_t>(to) * ho * wo;
    std::vector<float>& tmp = scratch(0, static_cast<size_t>(ci) * lt);
    for (int i = 0; i < n; i++) {
      gemm(true, false, ci, static_cast<int>(lt), co, 1.0f, weight, ci,
           gy + i * out_sz, static_cast<int>(lt), 0.0f, tmp.data(),
           static_cast<int>(lt));
      scatter_strided_add(tmp.data(), ci, t, h, w, g, to, ho, wo,
                          gx + i * in_sz);
    }
  } else {
    const int group = slice_group(kdim, l, to);
    std::vector<float>& colgrad = scratch(1, static_cast<size_t>(kdim) * group * l);
    for (int i = 0; i < n; i++) {
      for (int a = 0; a < to; a += group) {
        const int a1 = std::min(to, a + group);
        const int64_t cols = (a1 - a) * l;
        gemm(true, false, kdim, static_cast<int>(cols), co, 1.0f, weight,
             kdim, gy + i * out_sz + static_cast<int64_t>(a) * l,
             static_cast<int>(to * l), 0.0f, colgrad.data(),
             static_cast<int>(cols));
        col2im_group(colgrad.data(), ci, t, h, w, g, a, a1, ho, wo,
                     gx + i * in_sz);
      }
    }
  }
}

void conv3d_backward_params(const float* x, int n, int ci, int t, int h,
                            int w, const float* gy, int co, const ConvGeom& g,
                            float* gw, float* gb) {
  const int to = conv_out_dim(t, g.kt, g.st, g.pt);
  const int ho = conv_out_dim(h, g.kh, g.sh, g.ph);
  const int wo = conv_out_dim(w, g.kw, g.sw, g.pw);
  const int64_t in_sz = static_cast<int64_t>(ci) * t * h * w;
  const int64_t out_sz = static_cast<int64_t>(co) * to * ho * wo;
  const int64_t l = static_cast<int64_t>(ho) * wo;
  const int kdim = ci * g.kt * g.kh * g.kw;

  if (is_pointwise(g) && is_unit_stride(g)) {
    const int64_t thw = static_cast<int64_t>(t) * h * w;
    for (int i = 0; i < n; i++)
      gemm(false, true, co, ci, static_cast<int>(thw), 1.0f, gy + i * out_sz,
           static_cast<int>(thw), x + i * in_sz, static_cast<int>(thw), 1.0f,
           gw, ci);
  } else if (is_pointwise(g)) {
    const int64_t lt = static_cast<int64_t>(to) * ho * wo;
    std::vector<float>& tmp = scratch(0, static_cast<size_t>(ci) * lt);
    for (int i = 0; i < n; i++) {
      gather_strided(x + i * in_sz, ci, t, h, w, g, to, ho, wo, tmp.data());
      gemm(false, true, co, ci, static_cast<int>(lt), 1.0f, gy + i * out_sz,
           static_cast<int>(lt), tmp.data(), static_cast<int>(lt), 1.0f, gw,
           ci);
    }
  } else {
    const int group = slice_group(kdim, l, to);
    std::vector<float>& col = scratch(0, static_cast<size_t>(kdim) * group * l);
    for (int i = 0; i < n; i++) {
      for (int a = 0; a < to; a += group) {
        const int a1 = std::min(to, a + group);
        const int64_t cols = (a1 - a) * l;
        im2col_group(x + i * in_sz, ci, t, h, w, g, a, a1, ho, wo,
                     col.data());
        gemm(false, true, co, kdim, static_cast<int>(cols), 1.0f,
             gy + i * out_sz + static_cast<int64_t>(a) * l,
             static_cast<int>(to * l), col.data(), static_cast<int>(cols),
             1.0f, gw, kdim);
      }
    }
  }

  if (gb) {
    const int64_t plane = static_cast<int64_t>(to) * ho * wo;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < co; c++) {
      double acc = 0.0;
      for (int i = 0; i < n; i++) {
        const float* p = gy + i * out_sz + c * plane;
        for (int64_t j = 0; j < plane; j++) acc += p[j];
      }
      gb[c] += static_cast<float>(acc);
    }
  }
}

void conv3d_backward(const float* x, const float* weight, int n, int ci,
                     int t, int h, int w, int co, const ConvGeom& g,
                     const float* gy, float* gx, float* gw, float* gb) {
  const int to = conv_out_dim(t, g.kt, g.st, g.pt);
  const int ho = conv_out_dim(h, g.kh, g.sh, g.ph);
  const int wo = conv_out_dim(w, g.kw, g.sw, g.pw);
  const int64_t in_sz = static_cast<int64_t>(ci) * t * h * w;
  const int64_t out_sz = static_cast<int64_t>(co) * to * ho * wo;
  const int64_t l = static_cast<int64_t>(ho) * wo;
  const int kdim = ci * g.kt * g.kh * g.kw;

  if (is_pointwise(g)) {
    // the gather/no-gather fast paths already avoid duplicate traffic
    conv3d_backward_params(x, n, ci, t, h, w, gy, co, g, gw, gb);
    if (gx) conv3d_backward_input(weight, co, ci, t, h, w, g, gy, n, gx);
    return;
  }

  if (gx)
    std::memset(gx, 0, sizeof(float) * static_cast<size_t>(n) * in_sz);
  const int group = slice_group(kdim, l, to);
  std::vector<float>& col = scratch(0, static_cast<size_t>(kdim) * group * l);
  std::vector<float>& colgrad =
      scratch(1, gx ? static_cast<size_t>(kdim) * group * l : 0);
  for (int i = 0; i < n; i++) {
    for (int a = 0; a < to; a += group) {
      const int a1 = std::min(to, a + group);
      const int64_t cols = (a1 - a) * l;
      im2col_group(x + i * in_sz, ci, t, h, w, g, a, a1, ho, wo, col.data());
      gemm(false, true, co, kdim, static_cast<int>(cols), 1.0f,
           gy + i * out_sz + static_cast<int64_t>(a) * l,
           static_cast<int>(to * l), col.data(), static_cast<int>(cols),
           1.0f, gw, kdim);
      if (gx) {
        gemm(true, false, kdim, static_cast<int>(cols), co, 1.0f, weight,
             kdim, gy + i * out_sz + static_cast<int64_t>(a) * l,
             static_cast<int>(to * l), 0.0f, colgrad.data(),
             static_cast<int>(cols));
        col2im_group(colgrad.data(), ci, t, h, w, g, a, a1, ho, wo,
                     gx + i * in_sz);
      }
    }
  }

  if (gb) {
    const int64_t plane = static_cast<int64_t>(to) * ho * wo;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < co; c++) {
      double acc = 0.0;
      for (int i = 0; i < n; i++) {
        const float* p = gy + i * out_sz + c * plane;
        for (int64_t j = 0; j < plane; j++) acc += p[j];
      }
      gb[c] += static_cast<float>(acc);
    }
  }
}

void maxpool3d_forward(const float* x, int n, int c, int t, int h, int w,
                       int k, int s, int p, float* y, int32_t* argmax) {
  const int to = conv_out_dim(t, k, s, p);
  const int ho = conv_out_dim(h, k, s, p);
  const int wo = conv_out_dim(w, k, s, p);
  const int64_t in_plane = static_cast<int64_t>(t) * h * w;
  const int64_t out_plane = static_cast<int64_t>(to) * ho * wo;
#pragma omp parallel for schedule(static)
  for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; nc++) {
    const float* src = x + nc * in_plane;
    float* dst = y + nc * out_plane;
    int32_t* arg = argmax + nc * out_plane;
    int64_t o = 0;
    for (int a = 0; a < to; a++)
      for (int b = 0; b < ho; b++)
        for (int d = 0; d < wo; d++, o++) {
          const int t0 = std::max(0, a * s - p), t1 = std::min(t, a * s - p + k);
          const int h0 = std::max(0, b * s - p), h1 = std::min(h, b * s - p + k);
          const int w0 = std::max(0, d * s - p), w1 = std::min(w, d * s - p + k);
          float best = -INFINITY;
          int32_t best_i = 0;
          for (int tt = t0; tt < t1; tt++)
            for (int hh = h0; hh < h1; hh++) {
              const int64_t base = (static_cast<int64_t>(tt) * h + hh) * w;
              for (int ww = w0; ww < w1; ww++) {
                const float v = src[base + ww];
                if (v > best) {
                  best = v;
                  best_i = static_cast<int32_t>(base + ww);
                }
              }
            }
          dst[o] = best;
          arg[o] = best_i;
        }
  }
}

void maxpool3d_backward(const float* gy, int n, int c, int to, int ho, int wo,
                        const int32_t* argmax, float* gx, int t, int h,
                        int w) {
  const int64_t in_plane = static_cast<int64_t>(t) * h * w;
  const int64_t out_plane = static_cast<int64_t>(to) * ho * wo;
  std::memset(gx, 0, sizeof(float) * static_cast<size_t>(n) * c * in_plane);
#pragma omp parallel for schedule(static)
  for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; nc++) {
    const float* g = gy + nc * out_plane;
    const int32_t* arg = argmax + nc * out_plane;
    float* dst = gx + nc * in_plane;
    for (int64_t o = 0; o < out_plane; o++) dst[arg[o]] += g[o];
  }
}

void temporal_mean_forward(const float* x, int n, int c, int t, int h, int w,
                           float* y) {
  const int64_t hw = static_cast<int64_t>(h) * w;
#pragma omp parallel for schedule(static)
  for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; nc++) {
    const float* src = x + nc * t * hw;
    float* dst = y + nc * hw;
    const float inv = 1.0f / static_cast<float>(t);
    for (int64_t j = 0; j < hw; j++) {
      float acc = 0.0f;
      for (int tt = 0; tt < t; tt++) acc += src[tt * hw + j];
      dst[j] = acc * inv;
    }
  }
}

void temporal_mean_backward(const float* gy, int n, int c, int t, int h,
                            int w, float* gx) {
  const int64_t hw = static_cast<int64_t>(h) * w;
#pragma omp parallel for schedule(static)
  for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; nc++) {
    const float* g = gy + nc * hw;
    float* dst = gx + nc * t * hw;
    const float inv = 1.0f / static_cast<float>(t);
    for (int tt = 0; tt < t; tt++)
      for (int64_t j = 0; j < hw; j++) dst[tt * hw + j] = g[j] * inv;
  }
}

namespace {

struct LerpTap {
  int i0, i1;
  float f;  // weight of i1
};

void make_taps(int in, int out, std::vector<LerpTap>& taps) {
  taps.resize(static_cast<size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; o++) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = std::min(static_cast<int>(src), in - 1);
    taps[static_cast<size_t>(o)] = {i0, std::min(i0 + 1, in - 1),
                                    static_cast<float>(src - i0)};
  }
}

}  // namespace

void bilinear2d_forward(const float* x, int n, int c, int h, int w, float* y,
                        int ho, int wo) {
  std::vector<LerpTap> ty, tx;
  make_taps(h, ho, ty);
  make_taps(w, wo, tx);
  const int64_t in_plane = static_cast<int64_t>(h) * w;
  const int64_t out_plane = static_cast<int64_t>(ho) * wo;
#pragma omp parallel for schedule(static)
  for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; nc++) {
    const float* src = x + nc * in_plane;
    float* dst = y + nc * out_plane;
    for (int oy = 0; oy < ho; oy++) {
      const LerpTap& a = ty[static_cast<size_t>(oy)];
      const float* r0 = src + static_cast<int64_t>(a.i0) * w;
      const float* r1 = src + static_cast<int64_t>(a.i1) * w;
      for (int ox = 0; ox < wo; ox++) {
        const LerpTap& b = tx[static_cast<size_t>(ox)];
        const float top = r0[b.i0] + (r0[b.i1] - r0[b.i0]) * b.f;
        const float bot = r1[b.i0] + (r1[b.i1] - r1[b.i0]) * b.f;
        dst[oy * wo + ox] = top + (bot - top) * a.f;
      }
    }
  }
}

void bilinear2d_backward(const float* gy, int n, int c, int ho, int wo,
                         float* gx, int h, int w) {
  std::vector<LerpTap> ty, tx;
  make_taps(h, ho, ty);
  make_taps(w, wo, tx);
  const int64_t in_plane = static_cast<int64_t>(h) * w;
  const int64_t out_plane = static_cast<int64_t>(ho) * wo;
  std::memset(gx, 0, sizeof(float) * static_cast<size_t>(n) * c * in_plane);
#pragma omp parallel for schedule(static)
  for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; nc++) {
    const float* g = gy + nc * out_plane;
    float* dst = gx + nc * in_plane;
    for (int oy = 0; oy < ho; oy++) {
      const LerpTap& a = ty[static_cast<size_t>(oy)];
      for (int ox = 0; ox < wo; ox++) {
        const LerpTap& b = tx[static_cast<size_t>(ox)];
        const float v = g[oy * wo + ox];
        dst[a.i0 * w + b.i0] += v * (1 - a.f) * (1 - b.f);
        dst[a.i0 * w + b.i1] += v * (1 - a.f) * b.f;
        dst[a.i1 * w + b.i0] += v * a.f * (1 - b.f);
        dst[a.i1 * w + b.i1] += v * a.f * b.f;
      }
    }
  }
}

void convtranspose2d_forward(const float* x, int n, int ci, int h, int w,
                             const float* weight, int co, int k,
                             const float* bias, float* y) {
  const int ho = h * k, wo = w * k;
  const int64_t out_plane = static_cast<int64_t>(ho) * wo;
  const int64_t in_plane = static_cast<int64_t>(h) * w;
#pragma omp parallel for schedule(static) collapse(2)
  for (int i = 0; i < n; i++)
    for (int oc = 0; oc < co; oc++) {
      float* dst = y + (static_cast<int64_t>(i) * co + oc) * out_plane;
      const float b = bias ? bias[oc] : 0.0f;
      for (int64_t j = 0; j < out_plane; j++) dst[j] = b;
      for (int c = 0; c < ci; c++) {
        const float* src = x + (static_cast<int64_t>(i) * ci + c) * in_plane;
        const float* wk =
            weight + (static_cast<int64_t>(c) * co + oc) * k * k;
        for (int iy = 0; iy < h; iy++)
          for (int ix = 0; ix < w; ix++) {
            const float v = src[iy * w + ix];
            float* base = dst + static_cast<int64_t>(iy) * k * wo + ix * k;
            for (int dy = 0; dy < k; dy++)
              for (int dx = 0; dx < k; dx++)
                base[dy * wo + dx] += v * wk[dy * k + dx];
          }
      }
    }
}

void convtranspose2d_backward(const float* x, int n, int ci, int h, int w,
                              const float* weight, int co, int k,
                              const float* gy, float* gx, float* gw,
                              float* gb) {
  const int ho = h * k, wo = w * k;
  const int64_t out_plane = static_cast<int64_t>(ho) * wo;
  const int64_t in_plane = static_cast<int64_t>(h) * w;
  if (gx) {
#pragma omp parallel for schedule(static) collapse(2)
    for (int i = 0; i < n; i++)
      for (int c = 0; c < ci; c++) {
        float* dst = gx + (static_cast<int64_t>(i) * ci + c) * in_plane;
        for (int iy = 0; iy < h; iy++)
          for (int ix = 0; ix < w; ix++) {
            float acc = 0.0f;
            for (int oc = 0; oc < co; oc++) {
              const float* g =
                  gy + (static_cast<int64_t>(i) * co + oc) * out_plane +
                  static_cast<int64_t>(iy) * k * wo + ix * k;
              const float* wk =
                  weight + (static_cast<int64_t>(c) * co + oc) * k * k;
              for (int dy = 0; dy < k; dy++)
                for (int dx = 0; dx < k; dx++)
                  acc += g[dy * wo + dx] * wk[dy * k + dx];
            }
            dst[iy * w + ix] = acc;
          }
      }
  }
  if (gw) {
#pragma omp parallel for schedule(static) collapse(2)
    for (int c = 0; c < ci; c++)
      for (int oc = 0; oc < co; oc++) {
        float* wk = gw + (static_cast<int64_t>(c) * co + oc) * k * k;
        for (int dy = 0; dy < k; dy++)
          for (int dx = 0; dx < k; dx++) {
            double acc = 0.0;
            for (int i = 0; i < n; i++) {
              const float* src =
                  x + (static_cast<int64_t>(i) * ci + c) * in_plane;
              const float* g =
                  gy + (static_cast<int64_t>(i) * co + oc) * out_plane;
              for (int iy = 0; iy < h; iy++)
                for (int ix = 0; ix < w; ix++)
                  acc += src[iy * w + ix] *
                         g[(static_cast<int64_t>(iy) * k + dy) * wo + ix * k +
                           dx];
            }
            wk[dy * k + dx] += static_cast<float>(acc);
          }
      }
  }
  if (gb) {
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < co; oc++) {
      double acc = 0.0;
      for (int i = 0; i < n; i++) {
        const float* g = gy + (static_cast<int64_t>(i) * co + oc) * out_plane;
        for (int64_t j = 0; j < out_plane; j++) acc += g[j];
      }
      gb[oc] += static_cast<float>(acc);
    }
  }
}

void softmax_forward(const float* x, int n, int hw, float* y) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; i++) {
    const float* src = x + static_cast<int64_t>(i) * hw;
    float* dst = y + static_cast<int64_t>(i) * hw;
    float mx = src[0];
    for (int j = 1; j < hw; j++) mx = std::max(mx, src[j]);
    double sum = 0.0;
    for (int j = 0; j < hw; j++) {
      const float e = std::exp(src[j] - mx);
      dst[j] = e;
      sum += e;
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (int j = 0; j < hw; j++) dst[j] *= inv;
  }
}

void softmax_backward(const float* y, const float* gy, int n, int hw,
                      float* gx) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; i++) {
    const float* yv = y + static_cast<int64_t>(i) * hw;
    const float* g = gy + static_cast<int64_t>(i) * hw;
    float* dst = gx + static_cast<int64_t>(i) * hw;
    double dot = 0.0;
    for (int j = 0; j < hw; j++) dot += static_cast<double>(g[j]) * yv[j];
    const float d = static_cast<float>(dot);
    for (int j = 0; j < hw; j++) dst[j] = yv[j] * (g[j] - d);
  }
}

void relu_forward(const float* x, int64_t count, float* y) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < count; i++) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(const float* y, const float* gy, int64_t count,
                   float* gx) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < count; i++) gx[i] = y[i] > 0.0f ? gy[i] : 0.0f;
}

void sigmoid_forward(const float* x, int64_t count, float* y) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < count; i++)
    y[i] = 1.0f / (1.0f + std::exp(-x[i]));
}

void sigmoid_backward(const float* y, const float* gy, int64_t count,
                      float* gx) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < count; i++) gx[i] = gy[i] * y[i] * (1.0f - y[i]);
}

void add_inplace(float* acc, const float* x, int64_t count) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < count; i++) acc[i] += x[i];
}

void modulate_forward(const float* x, int n, int c, int t, int h, int w,
                      const float* m, float* y) {
  const int64_t hw = static_cast<int64_t>(h) * w;
#pragma omp parallel for schedule(static) collapse(2)
  for (int i = 0; i < n; i++)
    for (int cc = 0; cc < c; cc++) {
      const float* mp = m + static_cast<int64_t>(i) * hw;
      for (int tt = 0; tt < t; tt++) {
        const int64_t off =
            ((static_cast<int64_t>(i) * c + cc) * t + tt) * hw;
        for (int64_t j = 0; j < hw; j++)
          y[off + j] = x[off + j] * (1.0f + mp[j]);
      }
    }
}

void modulate_backward(const float* x, const float* m, const float* gy, int n,
                       int c, int t, int h, int w, float* gx, float* gm) {
  const int64_t hw = static_cast<int64_t>(h) * w;
  if (gx) {
#pragma omp parallel for schedule(static) collapse(2)
    for (int i = 0; i < n; i++)
      for (int cc = 0; cc < c; cc++) {
        const float* mp = m + static_cast<int64_t>(i) * hw;
        for (int tt = 0; tt < t; tt++) {
          const int64_t off =
              ((static_cast<int64_t>(i) * c + cc) * t + tt) * hw;
          for (int64_t j = 0; j < hw; j++)
            gx[off + j] = gy[off + j] * (1.0f + mp[j]);
        }
      }
  }
  if (gm) {
#pragma omp parallel for schedule(static) collapse(2)
    for (int i = 0; i < n; i++)
      for (int64_t j = 0; j < hw; j++) {
        double acc = 0.0;
        const int64_t base = static_cast<int64_t>(i) * c * t * hw + j;
        for (int64_t ct = 0; ct < static_cast<int64_t>(c) * t; ct++)
          acc += static_cast<double>(gy[base + ct * hw]) * x[base + ct * hw];
        gm[static_cast<int64_t>(i) * hw + j] = static_cast<float>(acc);
      }
  }
}

void batchnorm_forward(const float* x, int n, int c, int64_t sp,
                       const float* gamma, const float* beta, bool train,
                       float momentum, float eps, float* running_mean,
                       float* running_var, float* y, float* save_mean,
                       float* save_invstd) {
#pragma omp parallel for schedule(static)
  for (int cc = 0; cc < c; cc++) {
    double mean, var;
    if (train) {
      double s = 0.0, s2 = 0.0;
      for (int i = 0; i < n; i++) {
        const float* p = x + (static_cast<int64_t>(i) * c + cc) * sp;
        for (int64_t j = 0; j < sp; j++) {
          s += p[j];
          s2 += static_cast<double>(p[j]) * p[j];
        }
      }
      const double count = static_cast<double>(n) * static_cast<double>(sp);
      mean = s / count;
      var = std::max(0.0, s2 / count - mean * mean);
      running_mean[cc] = static_cast<float>(
          (1.0 - momentum) * running_mean[cc] + momentum * mean);
      running_var[cc] = static_cast<float>((1.0 - momentum) * running_var[cc] +
                                           momentum * var);
    } else {
      mean = running_mean[cc];
      var = running_var[cc];
    }
    const double invstd = 1.0 / std::sqrt(var + eps);
    save_mean[cc] = static_cast<float>(mean);
    save_invstd[cc] = static_cast<float>(invstd);
    const float a = static_cast<float>(gamma[cc] * invstd);
    const float b = static_cast<float>(beta[cc] - gamma[cc] * invstd * mean);
    for (int i = 0; i < n; i++) {
      const float* p = x + (static_cast<int64_t>(i) * c + cc) * sp;
      float* q = y + (static_cast<int64_t>(i) * c + cc) * sp;
      for (int64_t j = 0; j < sp; j++) q[j] = a * p[j] + b;
    }
  }
}

void batchnorm_backward(const float* x, int n, int c, int64_t sp,
                        const float* gamma, const float* save_mean,
                        const float* save_invstd, const float* gy,
                        bool stats_fixed, float* gx, float* ggamma,
                        float* gbeta) {
#pragma omp parallel for schedule(static)
  for (int cc = 0; cc < c; cc++) {
    const double mean = save_mean[cc];
    const double invstd = save_invstd[cc];
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; i++) {
      const float* px = x + (static_cast<int64_t>(i) * c + cc) * sp;
      const float* pg = gy + (static_cast<int64_t>(i) * c + cc) * sp;
      for (int64_t j = 0; j < sp; j++) {
        s1 += pg[j];
        s2 += pg[j] * ((px[j] - mean) * invstd);
      }
    }
    ggamma[cc] += static_cast<float>(s2);
    gbeta[cc] += static_cast<float>(s1);
    if (!gx) continue;
    const double g = gamma[cc];
    if (stats_fixed) {
      const float a = static_cast<float>(g * invstd);
      for (int i = 0; i < n; i++) {
        const float* pg = gy + (static_cast<int64_t>(i) * c + cc) * sp;
        float* pd = gx + (static_cast<int64_t>(i) * c + cc) * sp;
        for (int64_t j = 0; j < sp; j++) pd[j] = a * pg[j];
      }
    } else {
      const double count = static_cast<double>(n) * static_cast<double>(sp);
      const double k1 = g * invstd;
      const double m1 = s1 / count;
      const double m2 = s2 / count;
      for (int i = 0; i < n; i++) {
        const float* px = x + (static_cast<int64_t>(i) * c + cc) * sp;
        const float* pg = gy + (static_cast<int64_t>(i) * c + cc) * sp;
        float* pd = gx + (static_cast<int64_t>(i) * c + cc) * sp;
        for (int64_t j = 0; j < sp; j++) {
          const double xhat = (px[j] - mean) * invstd;
          pd[j] = static_cast<float>(k1 * (pg[j] - m1 - xhat * m2));
        }
      }
    }
  }
}

bool has_nonfinite(const float* x, int64_t count) {
  int bad = 0;
#pragma omp parallel for schedule(static) reduction(| : bad)
  for (int64_t i = 0; i < count; i++)
    bad |= std::isfinite(x[i]) ? 0 : 1;
  return bad != 0;
}

}  // namespace dsal::kernels
