#pragma once

#include <cstdint>

#include "dsal/kernels.hpp"

// Plain serial implementations of the nontrivial kernels. These are the
// ground truth the OpenMP versions are tested against; they are also the
// baseline in bench/.
namespace dsal::refk {

using kernels::ConvGeom;

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc);

void conv3d_forward(const float* x, int n, int ci, int t, int h, int w,
                    const float* weight, int co, const float* bias,
                    const ConvGeom& g, float* y);
void conv3d_backward_input(const float* weight, int co, int ci, int t, int h,
                           int w, const ConvGeom& g, const float* gy, int n,
                           float* gx);
void conv3d_backward_params(const float* x, int n, int ci, int t, int h,
                            int w, const float* gy, int co, const ConvGeom& g,
                            float* gw, float* gb);

void maxpool3d_forward(const float* x, int n, int c, int t, int h, int w,
                       int k, int s, int p, float* y, int32_t* argmax);

void bilinear2d_forward(const float* x, int n, int c, int h, int w, float* y,
                        int ho, int wo);

void convtranspose2d_forward(const float* x, int n, int ci, int h, int w,
                             const float* weight, int co, int k,
                             const float* bias, float* y);

void batchnorm_forward(const float* x, int n, int c, int64_t sp,
                       const float* gamma, const float* beta, bool train,
                       float momentum, float eps, float* running_mean,
                       float* running_var, float* y, float* save_mean,
                       float* save_invstd);

}  // namespace dsal::refk
