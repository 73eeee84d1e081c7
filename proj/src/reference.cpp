#include "dsal/reference.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace dsal::refk {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc) {
  for (int i = 0; i < m; i++)
    for (int j = 0; j < n; j++) {
      double acc = 0.0;
      for (int p = 0; p < k; p++) {
        const float av = trans_a ? a[static_cast<int64_t>(p) * lda + i]
                                 : a[static_cast<int64_t>(i) * lda + p];
        const float bv = trans_b ? b[static_cast<int64_t>(j) * ldb + p]
                                 : b[static_cast<int64_t>(p) * ldb + j];
        acc += static_cast<double>(av) * bv;
      }
      float* dst = c + static_cast<int64_t>(i) * ldc + j;
      *dst = alpha * static_cast<float>(acc) + (beta == 0.0f ? 0.0f : beta * *dst);
    }
}

void conv3d_forward(const float* x, int n, int ci, int t, int h, int w,
                    const float* weight, int co, const float* bias,
                    const ConvGeom& g, float* y) {
  const int to = kernels::conv_out_dim(t, g.kt, g.st, g.pt);
  const int ho = kernels::conv_out_dim(h, g.kh, g.sh, g.ph);
  const int wo = kernels::conv_out_dim(w, g.kw, g.sw, g.pw);
  for (int i = 0; i < n; i++)
    for (int oc = 0; oc < co; oc++)
      for (int a = 0; a < to; a++)
        for (int b = 0; b < ho; b++)
          for (int d = 0; d < wo; d++) {
            double acc = bias ? bias[oc] : 0.0;
            for (int c = 0; c < ci; c++)
              for (int dt = 0; dt < g.kt; dt++)
                for (int dh = 0; dh < g.kh; dh++)
                  for (int dw = 0; dw < g.kw; dw++) {
                    const int tt = a * g.st - g.pt + dt;
                    const int hh = b * g.sh - g.ph + dh;
                    const int ww = d * g.sw - g.pw + dw;
                    if (tt < 0 || tt >= t || hh < 0 || hh >= h || ww < 0 ||
                        ww >= w)
                      continue;
                    const float xv =
                        x[(((static_cast<int64_t>(i) * ci + c) * t + tt) * h +
                           hh) *
                              w +
                          ww];
                    const float wv =
                        weight[((((static_cast<int64_t>(oc) * ci + c) * g.kt +
                                  dt) *
                                     g.kh +
                                 dh) *
                                    g.kw +
                                dw)];
                    acc += static_cast<double>(xv) * wv;
                  }
            y[(((static_cast<int64_t>(i) * co + oc) * to + a) * ho + b) * wo +
              d] = static_cast<float>(acc);
          }
}

void conv3d_backward_input(const float* weight, int co, int ci, int t, int h,
                           int w, const ConvGeom& g, const float* gy, int n,
                           float* gx) {
  const int to = kernels::conv_out_dim(t, g.kt, g.st, g.pt);
  const int ho = kernels::conv_out_dim(h, g.kh, g.sh, g.ph);
  const int wo = kernels::conv_out_dim(w, g.kw, g.sw, g.pw);
  std::memset(gx, 0,
              sizeof(float) * static_cast<size_t>(n) * ci * t * h * w);
  for (int i = 0; i < n; i++)
    for (int oc = 0; oc < co; oc++)
      for (int a = 0; a < to; a++)
        for (int b = 0; b < ho; b++)
          for (int d = 0; d < wo; d++) {
            const float gv = gy[(((static_cast<int64_t>(i) * co + oc) * to +
                                  a) *
                                     ho +
                                 b) *
                                    wo +
                                d];
            for (int c = 0; c < ci; c++)
              for (int dt = 0; dt < g.kt; dt++)
                for (int dh = 0; dh < g.kh; dh++)
                  for (int dw = 0; dw < g.kw; dw++) {
                    const int tt = a * g.st - g.pt + dt;
                    const int hh = b * g.sh - g.ph + dh;
                    const int ww = d * g.sw - g.pw + dw;
                    if (tt < 0 || tt >= t || hh < 0 || hh >= h || ww < 0 ||
                        ww >= w)
                      continue;
                    gx[(((static_cast<int64_t>(i) * ci + c) * t + tt) * h +
                        hh) *
                           w +
                       ww] +=
                        gv *
                        weight[((((static_cast<int64_t>(oc) * ci + c) * g.kt +
                                  dt) *
                                     g.kh +
                                 dh) *
                                    g.kw +
                                dw)];
                  }
          }
}

void conv3d_backward_params(const float* x, int n, int ci, int t, int h,
                            int w, const float* gy, int co, const ConvGeom& g,
                            float* gw, float* gb) {
  const int to = kernels::conv_out_dim(t, g.kt, g.st, g.pt);
  const int ho = kernels::conv_out_dim(h, g.kh, g.sh, g.ph);
  const int wo = kernels::conv_out_dim(w, g.kw, g.sw, g.pw);
  for (int i = 0; i < n; i++)
    for (int oc = 0; oc < co; oc++)
      for (int a = 0; a < to; a++)
        for (int b = 0; b < ho; b++)
          for (int d = 0; d < wo; d++) {
            const float gv = gy[(((static_cast<int64_t>(i) * co + oc) * to +
                                  a) *
                                     ho +
                                 b) *
                                    wo +
                                d];
            if (gb) gb[oc] += gv;
            for (int c = 0; c < ci; c++)
              for (int dt = 0; dt < g.kt; dt++)
                for (int dh = 0; dh < g.kh; dh++)
                  for (int dw = 0; dw < g.kw; dw++) {
                    const int tt = a * g.st - g.pt + dt;
                    const int hh = b * g.sh - g.ph + dh;
                    const int ww = d * g.sw - g.pw + dw;
                    if (tt < 0 || tt >= t || hh < 0 || hh >= h || ww < 0 ||
                        ww >= w)
                      continue;
                    gw[((((static_cast<int64_t>(oc) * ci + c) * g.kt + dt) *
                             g.kh +
                         dh) *
                            g.kw +
                        dw)] +=
                        gv * x[(((static_cast<int64_t>(i) * ci + c) * t + tt) *
                                    h +
                                hh) *
                                   w +
                               ww];
                  }
          }
}

void maxpool3d_forward(const float* x, int n, int c, int t, int h, int w,
                       int k, int s, int p, float* y, int32_t* argmax) {
  const int to = kernels::conv_out_dim(t, k, s, p);
  const int ho = kernels::conv_out_dim(h, k, s, p);
  const int wo = kernels::conv_out_dim(w, k, s, p);
  for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; nc++) {
    const float* src = x + nc * t * h * w;
    int64_t o = nc * to * ho * wo;
    for (int a = 0; a < to; a++)
      for (int b = 0; b < ho; b++)
        for (int d = 0; d < wo; d++, o++) {
          float best = -INFINITY;
          int32_t best_i = 0;
          for (int dt = 0; dt < k; dt++)
            for (int dh = 0; dh < k; dh++)
              for (int dw = 0; dw < k; dw++) {
                const int tt = a * s - p + dt;
                const int hh = b * s - p + dh;
                const int ww = d * s - p + dw;
                if (tt < 0 || tt >= t || hh < 0 || hh >= h || ww < 0 ||
                    ww >= w)
                  continue;
                const int64_t fi = (static_cast<int64_t>(tt) * h + hh) * w + ww;
                if (src[fi] > best) {
                  best = src[fi];
                  best_i = static_cast<int32_t>(fi);
                }
              }
          y[o] = best;
          argmax[o] = best_i;
        }
  }
}

void bilinear2d_forward(const float* x, int n, int c, int h, int w, float* y,
                        int ho, int wo) {
  const double sy = static_cast<double>(h) / ho;
  const double sx = static_cast<double>(w) / wo;
  for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; nc++) {
    const float* src = x + nc * h * w;
    float* dst = y + nc * ho * wo;
    for (int oy = 0; oy < ho; oy++)
      for (int ox = 0; ox < wo; ox++) {
        double fy = (oy + 0.5) * sy - 0.5;
        double fx = (ox + 0.5) * sx - 0.5;
        if (fy < 0) fy = 0;
        if (fx < 0) fx = 0;
        const int y0 = std::min(static_cast<int>(fy), h - 1);
        const int x0 = std::min(static_cast<int>(fx), w - 1);
        const int y1 = std::min(y0 + 1, h - 1);
        const int x1 = std::min(x0 + 1, w - 1);
        const double wy = fy - y0, wx = fx - x0;
        const double top = src[y0 * w + x0] * (1 - wx) + src[y0 * w + x1] * wx;
        const double bot = src[y1 * w + x0] * (1 - wx) + src[y1 * w + x1] * wx;
        dst[oy * wo + ox] = static_cast<float>(top * (1 - wy) + bot * wy);
      }
  }
}

void convtranspose2d_forward(const float* x, int n, int ci, int h, int w,
                             const float* weight, int co, int k,
                             const float* bias, float* y) {
  const int ho = h * k, wo = w * k;
  for (int i = 0; i < n; i++)
    for (int oc = 0; oc < co; oc++) {
      float* dst = y + (static_cast<int64_t>(i) * co + oc) * ho * wo;
      for (int64_t j = 0; j < static_cast<int64_t>(ho) * wo; j++)
        dst[j] = bias ? bias[oc] : 0.0f;
      for (int c = 0; c < ci; c++)
        for (int iy = 0; iy < h; iy++)
          for (int ix = 0; ix < w; ix++)
            for (int dy = 0; dy < k; dy++)
              for (int dx = 0; dx < k; dx++)
                dst[(iy * k + dy) * wo + ix * k + dx] +=
                    x[(static_cast<int64_t>(i) * ci + c) * h * w + iy * w +
                      ix] *
                    weight[(static_cast<int64_t>(c) * co + oc) * k * k +
                           dy * k + dx];
    }
}

void batchnorm_forward(const float* x, int n, int c, int64_t sp,
                       const float* gamma, const float* beta, bool train,
                       float momentum, float eps, float* running_mean,
                       float* running_var, float* y, float* save_mean,
                       float* save_invstd) {
  for (int cc = 0; cc < c; cc++) {
    double mean, var;
    if (train) {
      double s = 0.0;
      const double count = static_cast<double>(n) * static_cast<double>(sp);
      for (int i = 0; i < n; i++) {
        const float* p = x + (static_cast<int64_t>(i) * c + cc) * sp;
        for (int64_t j = 0; j < sp; j++) s += p[j];
      }
      mean = s / count;
      double v = 0.0;
      for (int i = 0; i < n; i++) {
        const float* p = x + (static_cast<int64_t>(i) * c + cc) * sp;
        for (int64_t j = 0; j < sp; j++) v += (p[j] - mean) * (p[j] - mean);
      }
      var = v / count;
      running_mean[cc] = static_cast<float>((1.0 - momentum) * running_mean[cc] +
                                            momentum * mean);
      running_var[cc] =
          static_cast<float>((1.0 - momentum) * running_var[cc] + momentum * var);
    } else {
      mean = running_mean[cc];
      var = running_var[cc];
    }
    const double invstd = 1.0 / std::sqrt(var + eps);
    save_mean[cc] = static_cast<float>(mean);
    save_invstd[cc] = static_cast<float>(invstd);
    for (int i = 0; i < n; i++) {
      const float* p = x + (static_cast<int64_t>(i) * c + cc) * sp;
      float* q = y + (static_cast<int64_t>(i) * c + cc) * sp;
      for (int64_t j = 0; j < sp; j++)
        q[j] = static_cast<float>(gamma[cc] * (p[j] - mean) * invstd +
                                  beta[cc]);
    }
  }
}

}  // namespace dsal::refk
