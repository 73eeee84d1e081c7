#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dsal/losses.hpp"
#include "dsal/rng.hpp"

using namespace dsal;

namespace {

constexpr int kH = 8, kW = 8;
constexpr int64_t kN = kH * kW;

std::vector<double> random_map(Rng& rng, double lo = 0.05, double hi = 0.95) {
  std::vector<double> m(kN);
  for (double& v : m) v = rng.uniform(lo, hi);
  return m;
}

GroundTruth random_gt(Rng& rng, int n_fix) {
  GroundTruth gt;
  gt.height = kH;
  gt.width = kW;
  gt.binary.assign(kN, 0);
  gt.continuous = random_map(rng, 0.0, 1.0);
  // force a proper maximum of one
  gt.continuous[static_cast<size_t>(rng.uniform_int(kN))] = 1.0;
  while (gt.fixation_count < n_fix) {
    const int32_t cell = static_cast<int32_t>(rng.uniform_int(kN));
    if (!gt.binary[static_cast<size_t>(cell)]) {
      gt.binary[static_cast<size_t>(cell)] = 1;
      gt.fixation_cells.push_back(cell);
      gt.fixation_count++;
    }
  }
  std::sort(gt.fixation_cells.begin(), gt.fixation_cells.end());
  return gt;
}

// Plain per-pixel summation oracles, written independently of the
// implementation path.
double ce_oracle(const std::vector<double>& m, const std::vector<double>& y) {
  double acc = 0;
  for (size_t i = 0; i < m.size(); i++)
    acc += -(y[i] * std::log(m[i]) + (1 - y[i]) * std::log(1 - m[i]));
  return acc / static_cast<double>(m.size());
}

double cc_oracle(const std::vector<double>& m, const std::vector<double>& y) {
  const auto n = static_cast<double>(m.size());
  double mm = 0, my = 0;
  for (size_t i = 0; i < m.size(); i++) {
    mm += m[i];
    my += y[i];
  }
  mm /= n;
  my /= n;
  double cov = 0, vm = 0, vy = 0;
  for (size_t i = 0; i < m.size(); i++) {
    cov += (m[i] - mm) * (y[i] - my);
    vm += (m[i] - mm) * (m[i] - mm);
    vy += (y[i] - my) * (y[i] - my);
  }
  return -(cov / n) / (std::sqrt(vm / n) * std::sqrt(vy / n));
}

double nss_oracle(const std::vector<double>& m,
                  const std::vector<int32_t>& cells) {
  const auto n = static_cast<double>(m.size());
  double mean = 0;
  for (double v : m) mean += v;
  mean /= n;
  double var = 0;
  for (double v : m) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  double acc = 0;
  for (int32_t c : cells) acc += (m[static_cast<size_t>(c)] - mean) / sd;
  return -acc / static_cast<double>(cells.size());
}

// Central finite differences against the analytic gradient, relative error.
template <typename LossFn>
double max_grad_rel_err(const LossFn& loss, std::vector<double> m,
                        const std::vector<double>& grad) {
  const double h = 1e-6;
  double worst = 0;
  for (size_t i = 0; i < m.size(); i++) {
    const double keep = m[i];
    m[i] = keep + h;
    const double lp = loss(m);
    m[i] = keep - h;
    const double lm = loss(m);
    m[i] = keep;
    const double fd = (lp - lm) / (2 * h);
    const double denom = std::max({1e-6, std::abs(fd), std::abs(grad[i])});
    worst = std::max(worst, std::abs(fd - grad[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("cross entropy values") {
  std::vector<double> m(kN, 0.5), y(kN, 0.5);
  CHECK(ce_loss(m.data(), y.data(), kN) == doctest::Approx(std::log(2.0)));

  std::vector<double> ones(kN, 1.0);
  std::vector<double> m1(kN, 1.0 - 1e-3), m2(kN, 1.0 - 1e-2);
  const double l1 = ce_loss(m1.data(), ones.data(), kN);
  const double l2 = ce_loss(m2.data(), ones.data(), kN);
  CHECK(l1 == doctest::Approx(-std::log(1.0 - 1e-3)));
  CHECK(l2 > l1);  // monotone in the gap

  Rng rng(4);
  for (int trial = 0; trial < 10; trial++) {
    auto mm = random_map(rng);
    auto yy = random_map(rng, 0.0, 1.0);
    CHECK(std::abs(ce_loss(mm.data(), yy.data(), kN) - ce_oracle(mm, yy)) <
          1e-10);
  }
}

TEST_CASE("correlation loss values") {
  Rng rng(5);
  auto y = random_map(rng);
  CHECK(cc_loss(y.data(), y.data(), kN) == doctest::Approx(-1.0));
  std::vector<double> inv(kN);
  for (int64_t i = 0; i < kN; i++) inv[static_cast<size_t>(i)] = 1.0 - y[static_cast<size_t>(i)];
  CHECK(cc_loss(inv.data(), y.data(), kN) == doctest::Approx(1.0));

  for (int trial = 0; trial < 10; trial++) {
    auto m = random_map(rng);
    auto yy = random_map(rng);
    CHECK(std::abs(cc_loss(m.data(), yy.data(), kN) - cc_oracle(m, yy)) <
          1e-10);
  }

  std::vector<double> flat(kN, 0.3);
  CHECK(cc_loss(flat.data(), y.data(), kN) == 0.0);  // guarded degenerate
}

TEST_CASE("scanpath loss values") {
  std::vector<double> flat(kN, 0.4);
  std::vector<int32_t> one_cell = {17};
  CHECK(nss_loss(flat.data(), one_cell.data(), 1, kN) == 0.0);

  // one-hot spike exactly at the single fixation on an 8x8 grid
  std::vector<double> spike(kN, 0.0);
  spike[17] = 1.0;
  CHECK(nss_loss(spike.data(), one_cell.data(), 1, kN) ==
        doctest::Approx(-63.0 / std::sqrt(63.0)).epsilon(1e-9));

  // fixations covering every cell: mean of a standardized map is zero
  Rng rng(6);
  auto m = random_map(rng);
  std::vector<int32_t> all(kN);
  for (int64_t i = 0; i < kN; i++) all[static_cast<size_t>(i)] = static_cast<int32_t>(i);
  CHECK(std::abs(nss_loss(m.data(), all.data(), kN, kN)) < 1e-12);

  for (int trial = 0; trial < 10; trial++) {
    auto mm = random_map(rng);
    GroundTruth gt = random_gt(rng, 5);
    CHECK(std::abs(nss_loss(mm.data(), gt.fixation_cells.data(),
                            gt.fixation_count, kN) -
                   nss_oracle(mm, gt.fixation_cells)) < 1e-10);
  }
}

TEST_CASE("composite loss composition and validation") {
  Rng rng(7);
  auto m = random_map(rng);
  GroundTruth gt = random_gt(rng, 4);

  LossWeights ce_only{1.0, 0.0, 0.0};
  CHECK(composite_loss(m.data(), gt, ce_only).total ==
        doctest::Approx(ce_loss(m.data(), gt.continuous.data(), kN)));

  LossWeights std_w{0.1, 2.0, 1.0};
  const LossBreakdown b = composite_loss(m.data(), gt, std_w);
  const double expect =
      0.1 * ce_loss(m.data(), gt.continuous.data(), kN) +
      2.0 * cc_loss(m.data(), gt.continuous.data(), kN) +
      1.0 * nss_loss(m.data(), gt.fixation_cells.data(), gt.fixation_count,
                     kN);
  CHECK(b.total == doctest::Approx(expect).epsilon(1e-12));

  LossWeights zero{0.0, 0.0, 0.0};
  CHECK_THROWS(zero.validate());
  LossWeights negative{-0.1, 2.0, 1.0};
  CHECK_THROWS(negative.validate());
}

TEST_CASE("total loss wiring") {
  Rng rng(8);
  auto pred = random_map(rng);
  GroundTruth gt = random_gt(rng, 3);
  LossWeights w{0.1, 2.0, 1.0};
  std::vector<std::vector<double>> a(8);
  std::vector<const double*> a_rgb, a_d;
  for (int i = 0; i < 8; i++) {
    a[static_cast<size_t>(i)] = random_map(rng);
    (i < 4 ? a_rgb : a_d).push_back(a[static_cast<size_t>(i)].data());
  }

  SUBCASE("epsilon=1 leaves only the final-map term") {
    const EpochClock end_clock{60, 60};
    const TotalLossResult r =
        total_loss(pred.data(), a_rgb, a_d, kN, gt, end_clock, w);
    CHECK(r.deep_sup_weight == 0.0);
    CHECK(r.total == doctest::Approx(composite_loss(pred.data(), gt, w).total));
  }

  SUBCASE("epoch 30 of 60 halves the deep supervision sum") {
    const EpochClock mid{30, 60};
    const TotalLossResult r =
        total_loss(pred.data(), a_rgb, a_d, kN, gt, mid, w);
    CHECK(r.deep_sup_weight == doctest::Approx(0.5));
    double ds = 0;
    for (const double* ap : a_rgb) ds += composite_loss(ap, gt, w).total;
    for (const double* ap : a_d) ds += composite_loss(ap, gt, w).total;
    CHECK(r.total == doctest::Approx(composite_loss(pred.data(), gt, w).total +
                                     0.5 * ds));
  }

  SUBCASE("absent depth stream reduces to the two-term form") {
    const EpochClock clock{10, 60};
    const TotalLossResult r =
        total_loss(pred.data(), a_rgb, {}, kN, gt, clock, w);
    double ds = 0;
    for (const double* ap : a_rgb) ds += composite_loss(ap, gt, w).total;
    CHECK(r.total == doctest::Approx(composite_loss(pred.data(), gt, w).total +
                                     r.deep_sup_weight * ds));
  }
}

TEST_CASE("analytic gradients match finite differences") {
  Rng rng(9);
  for (int trial = 0; trial < 5; trial++) {
    auto m = random_map(rng);
    GroundTruth gt = random_gt(rng, 4);

    {
      std::vector<double> g(kN, 0.0);
      ce_loss(m.data(), gt.continuous.data(), kN, g.data());
      CHECK(max_grad_rel_err(
                [&](const std::vector<double>& x) {
                  return ce_loss(x.data(), gt.continuous.data(), kN);
                },
                m, g) < 1e-5);
    }
    {
      std::vector<double> g(kN, 0.0);
      cc_loss(m.data(), gt.continuous.data(), kN, g.data());
      CHECK(max_grad_rel_err(
                [&](const std::vector<double>& x) {
                  return cc_loss(x.data(), gt.continuous.data(), kN);
                },
                m, g) < 1e-5);
    }
    {
      std::vector<double> g(kN, 0.0);
      nss_loss(m.data(), gt.fixation_cells.data(), gt.fixation_count, kN,
               g.data());
      CHECK(max_grad_rel_err(
                [&](const std::vector<double>& x) {
                  return nss_loss(x.data(), gt.fixation_cells.data(),
                                  gt.fixation_count, kN);
                },
                m, g) < 1e-5);
    }
    {
      LossWeights w{0.1, 2.0, 1.0};
      std::vector<double> g(kN, 0.0);
      composite_loss(m.data(), gt, w, g.data());
      CHECK(max_grad_rel_err(
                [&](const std::vector<double>& x) {
                  return composite_loss(x.data(), gt, w).total;
                },
                m, g) < 1e-5);
    }
  }
}

TEST_CASE("loss invariances") {
  Rng rng(10);
  auto m = random_map(rng);
  auto y = random_map(rng);
  GroundTruth gt = random_gt(rng, 5);

  SUBCASE("pearson term is affine invariant") {
    std::vector<double> scaled(kN);
    for (int64_t i = 0; i < kN; i++)
      scaled[static_cast<size_t>(i)] = 3.7 * m[static_cast<size_t>(i)] + 0.2;
    CHECK(std::abs(cc_loss(scaled.data(), y.data(), kN) -
                   cc_loss(m.data(), y.data(), kN)) < 1e-9);
  }

  SUBCASE("scanpath term is affine invariant") {
    std::vector<double> scaled(kN);
    for (int64_t i = 0; i < kN; i++)
      scaled[static_cast<size_t>(i)] = 2.1 * m[static_cast<size_t>(i)] + 5.0;
    CHECK(std::abs(nss_loss(scaled.data(), gt.fixation_cells.data(),
                            gt.fixation_count, kN) -
                   nss_loss(m.data(), gt.fixation_cells.data(),
                            gt.fixation_count, kN)) < 1e-9);
  }

  SUBCASE("total loss is non-increasing in epsilon for nonnegative terms") {
    LossWeights w{1.0, 0.0, 0.0};  // every composite term >= 0
    std::vector<const double*> a_rgb = {y.data()};
    double prev = 1e300;
    for (int e = 0; e <= 60; e += 10) {
      const TotalLossResult r =
          total_loss(m.data(), a_rgb, {}, kN, gt, {e, 60}, w);
      CHECK(r.total <= prev + 1e-12);
      prev = r.total;
    }
  }

  SUBCASE("matching the target beats its complement") {
    LossWeights w{0.1, 2.0, 1.0};
    for (int trial = 0; trial < 10; trial++) {
      GroundTruth g = random_gt(rng, 6);
      std::vector<double> anti(kN);
      for (int64_t i = 0; i < kN; i++)
        anti[static_cast<size_t>(i)] =
            1.0 - g.continuous[static_cast<size_t>(i)];
      // clamp both into the loss domain
      auto squash = [](std::vector<double> v) {
        for (double& x : v) x = 0.02 + 0.96 * x;
        return v;
      };
      auto good = squash(g.continuous);
      auto bad = squash(anti);
      CHECK(composite_loss(good.data(), g, w).total <
            composite_loss(bad.data(), g, w).total);
    }
  }
}
