// Timing comparison between the OpenMP kernels and the serial reference
// implementations on backbone-sized workloads.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "dsal/kernels.hpp"
#include "dsal/reference.hpp"
#include "dsal/rng.hpp"

using dsal::Rng;
using dsal::kernels::ConvGeom;

namespace {

double time_it(const std::function<void()>& fn, int iters) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < iters; i++) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / iters;
}

void fill(std::vector<float>& v, Rng& rng) {
  for (float& x : v) x = static_cast<float>(rng.normal());
}

struct ConvCase {
  const char* name;
  int ci, t, h, w, co;
  ConvGeom g;
};

}  // namespace

int main() {
  Rng rng(7);
  const std::vector<ConvCase> cases = {
      {"stem 7x7x7 s(1,2,2) 3->64 @16x112x112", 3, 16, 112, 112, 64,
       {7, 7, 7, 1, 2, 2, 3, 3, 3}},
      {"block1 3x3x3 64->64 @8x28x28", 64, 8, 28, 28, 64,
       {3, 3, 3, 1, 1, 1, 1, 1, 1}},
      {"block2 1x1x1 256->128 @8x28x28", 256, 8, 28, 28, 128,
       {1, 1, 1, 1, 1, 1, 0, 0, 0}},
      {"block3 3x3x3 256->256 s2 @4x14x14", 256, 4, 14, 14, 256,
       {3, 3, 3, 2, 2, 2, 1, 1, 1}},
  };

  std::printf("%-42s %12s %12s %8s\n", "conv3d forward", "omp (ms)",
              "serial (ms)", "speedup");
  for (const ConvCase& c : cases) {
    const int to = dsal::kernels::conv_out_dim(c.t, c.g.kt, c.g.st, c.g.pt);
    const int ho = dsal::kernels::conv_out_dim(c.h, c.g.kh, c.g.sh, c.g.ph);
    const int wo = dsal::kernels::conv_out_dim(c.w, c.g.kw, c.g.sw, c.g.pw);
    std::vector<float> x(static_cast<size_t>(c.ci) * c.t * c.h * c.w);
    std::vector<float> wgt(static_cast<size_t>(c.co) * c.ci * c.g.kt *
                           c.g.kh * c.g.kw);
    std::vector<float> y(static_cast<size_t>(c.co) * to * ho * wo);
    fill(x, rng);
    fill(wgt, rng);
    const double flops = 2.0 * y.size() * c.ci * c.g.kt * c.g.kh * c.g.kw;
    const double t_omp = time_it(
        [&] {
          dsal::kernels::conv3d_forward(x.data(), 1, c.ci, c.t, c.h, c.w,
                                        wgt.data(), c.co, nullptr, c.g,
                                        y.data());
        },
        3);
    const double t_ref = time_it(
        [&] {
          dsal::refk::conv3d_forward(x.data(), 1, c.ci, c.t, c.h, c.w,
                                     wgt.data(), c.co, nullptr, c.g,
                                     y.data());
        },
        1);
    std::printf("%-42s %9.2f ms %9.2f ms %7.1fx  (%.1f GFLOP/s omp)\n",
                c.name, t_omp * 1e3, t_ref * 1e3, t_ref / t_omp,
                flops / t_omp / 1e9);
  }

  {
    const int m = 256, k = 1728, n = 6272;
    std::vector<float> a(static_cast<size_t>(m) * k),
        b(static_cast<size_t>(k) * n), c(static_cast<size_t>(m) * n);
    fill(a, rng);
    fill(b, rng);
    const double t_omp = time_it(
        [&] {
          dsal::kernels::gemm(false, false, m, n, k, 1.0f, a.data(), k,
                              b.data(), n, 0.0f, c.data(), n);
        },
        3);
    const double t_ref = time_it(
        [&] {
          dsal::refk::gemm(false, false, m, n, k, 1.0f, a.data(), k, b.data(),
                           n, 0.0f, c.data(), n);
        },
        1);
    std::printf("%-42s %9.2f ms %9.2f ms %7.1fx  (%.1f GFLOP/s omp)\n",
                "gemm 256x1728x6272", t_omp * 1e3, t_ref * 1e3, t_ref / t_omp,
                2.0 * m * k * n / t_omp / 1e9);
  }
  return 0;
}
