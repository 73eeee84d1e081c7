#pragma once

#include <cstdint>

// OpenMP-parallel compute kernels. All parallel loops use static schedules
// and per-chunk serial arithmetic, so for a fixed thread count the results
// are bitwise reproducible run to run. Serial reference versions of the
// nontrivial kernels live in reference.hpp and are compared against these in
// the tests and the benchmark.
namespace dsal::kernels {

// 3-d convolution geometry. 2-d ops use kt=st=1, pt=0 with t=1.
struct ConvGeom {
  int kt = 1, kh = 1, kw = 1;
  int st = 1, sh = 1, sw = 1;
  int pt = 0, ph = 0, pw = 0;
};

inline int conv_out_dim(int in, int k, int s, int p) {
  return (in + 2 * p - k) / s + 1;
}

// C[m,n] = alpha*op(A)*op(B) + beta*C, row-major. Parallelized by chunking
// rows of C; each chunk is one serial BLAS call.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc);

// x: [n,ci,t,h,w], weight: [co,ci,kt,kh,kw], bias: [co] or nullptr,
// y: [n,co,to,ho,wo]
void conv3d_forward(const float* x, int n, int ci, int t, int h, int w,
                    const float* weight, int co, const float* bias,
                    const ConvGeom& g, float* y);
// gx is zeroed and filled; pass nullptr to skip the input gradient.
void conv3d_backward_input(const float* weight, int co, int ci, int t, int h,
                           int w, const ConvGeom& g, const float* gy, int n,
                           float* gx);
// gw/gb accumulate (+=).
void conv3d_backward_params(const float* x, int n, int ci, int t, int h,
                            int w, const float* gy, int co, const ConvGeom& g,
                            float* gw, float* gb);
// Fused backward sharing one im2col pass between the weight and input
// gradients. gx (zero-filled) and gb may be null.
void conv3d_backward(const float* x, const float* weight, int n, int ci,
                     int t, int h, int w, int co, const ConvGeom& g,
                     const float* gy, float* gx, float* gw, float* gb);

// kernel k, stride s, padding p on every axis; argmax: flat index within the
// (t,h,w) volume of each (n,c) plane.
void maxpool3d_forward(const float* x, int n, int c, int t, int h, int w,
                       int k, int s, int p, float* y, int32_t* argmax);
void maxpool3d_backward(const float* gy, int n, int c, int to, int ho, int wo,
                        const int32_t* argmax, float* gx, int t, int h, int w);

void temporal_mean_forward(const float* x, int n, int c, int t, int h, int w,
                           float* y);
void temporal_mean_backward(const float* gy, int n, int c, int t, int h,
                            int w, float* gx);

// align_corners=false convention: src = (dst + 0.5) * in/out - 0.5, clamped.
void bilinear2d_forward(const float* x, int n, int c, int h, int w, float* y,
                        int ho, int wo);
void bilinear2d_backward(const float* gy, int n, int c, int ho, int wo,
                         float* gx, int h, int w);

// Transposed 2-d convolution with kernel == stride == k (exact integer
// upsampling). weight: [ci,co,k,k]; output is [n,co,h*k,w*k].
void convtranspose2d_forward(const float* x, int n, int ci, int h, int w,
                             const float* weight, int co, int k,
                             const float* bias, float* y);
void convtranspose2d_backward(const float* x, int n, int ci, int h, int w,
                              const float* weight, int co, int k,
                              const float* gy, float* gx, float* gw,
                              float* gb);

// Softmax over the trailing hw positions of each of the n rows.
void softmax_forward(const float* x, int n, int hw, float* y);
void softmax_backward(const float* y, const float* gy, int n, int hw,
                      float* gx);

void relu_forward(const float* x, int64_t count, float* y);
void relu_backward(const float* y, const float* gy, int64_t count, float* gx);
void sigmoid_forward(const float* x, int64_t count, float* y);
void sigmoid_backward(const float* y, const float* gy, int64_t count,
                      float* gx);
void add_inplace(float* acc, const float* x, int64_t count);

// y = (1 + m) * x with m: [n,1,h,w] broadcast over (c,t).
void modulate_forward(const float* x, int n, int c, int t, int h, int w,
                      const float* m, float* y);
void modulate_backward(const float* x, const float* m, const float* gy, int n,
                       int c, int t, int h, int w, float* gx, float* gm);

// Batch normalization over (n, sp) per channel; x layout [n,c,sp].
// Training mode computes batch statistics, updates running stats with
// `momentum`, and stores save_mean/save_invstd; eval mode reads the running
// stats into the save arrays so backward is uniform.
void batchnorm_forward(const float* x, int n, int c, int64_t sp,
                       const float* gamma, const float* beta, bool train,
                       float momentum, float eps, float* running_mean,
                       float* running_var, float* y, float* save_mean,
                       float* save_invstd);
// stats_fixed=true corresponds to an eval-mode forward (no gradient through
// the statistics).
void batchnorm_backward(const float* x, int n, int c, int64_t sp,
                        const float* gamma, const float* save_mean,
                        const float* save_invstd, const float* gy,
                        bool stats_fixed, float* gx, float* ggamma,
                        float* gbeta);

bool has_nonfinite(const float* x, int64_t count);

}  // namespace dsal::kernels
