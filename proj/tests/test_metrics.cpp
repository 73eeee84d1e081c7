#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "dsal/metrics.hpp"
#include "dsal/rng.hpp"

using namespace dsal;

namespace {

constexpr int kH = 8, kW = 8;
constexpr int64_t kN = kH * kW;

std::vector<double> random_map(Rng& rng) {
  std::vector<double> m(kN);
  for (double& v : m) v = rng.uniform();
  return m;
}

std::vector<int32_t> random_cells(Rng& rng, int count) {
  std::set<int32_t> cells;
  while (static_cast<int>(cells.size()) < count)
    cells.insert(static_cast<int32_t>(rng.uniform_int(kN)));
  return {cells.begin(), cells.end()};
}

// Mann-Whitney statistic with half credit for ties: the brute-force pairwise
// oracle for every AUC in this suite.
double pairwise_auc(const std::vector<double>& pos,
                    const std::vector<double>& neg) {
  double acc = 0;
  for (double p : pos)
    for (double q : neg) {
      if (p > q)
        acc += 1.0;
      else if (p == q)
        acc += 0.5;
    }
  return acc / (static_cast<double>(pos.size()) * neg.size());
}

// Exhaustive threshold enumeration over all distinct values, written
// independently of roc_auc's merge walk.
double sweep_auc(const std::vector<double>& pos,
                 const std::vector<double>& neg) {
  std::set<double, std::greater<>> thresholds(pos.begin(), pos.end());
  thresholds.insert(neg.begin(), neg.end());
  double area = 0, prev_fpr = 0, prev_tpr = 0;
  for (double thr : thresholds) {
    double tp = 0, fp = 0;
    for (double p : pos) tp += p >= thr ? 1 : 0;
    for (double q : neg) fp += q >= thr ? 1 : 0;
    const double tpr = tp / static_cast<double>(pos.size());
    const double fpr = fp / static_cast<double>(neg.size());
    area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2;
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  area += (1 - prev_fpr) * (1 + prev_tpr) / 2;
  return area;
}

GroundTruth gt_from_cells(const std::vector<int32_t>& cells) {
  GroundTruth gt;
  gt.height = kH;
  gt.width = kW;
  gt.binary.assign(kN, 0);
  gt.continuous.assign(kN, 0.0);
  for (int32_t c : cells) {
    gt.binary[static_cast<size_t>(c)] = 1;
    gt.continuous[static_cast<size_t>(c)] = 1.0;
  }
  gt.fixation_cells = cells;
  gt.fixation_count = static_cast<int>(cells.size());
  return gt;
}

}  // namespace

TEST_CASE("correlation and similarity basics") {
  Rng rng(2);
  auto y = random_map(rng);
  CHECK(*cc_metric(y.data(), y.data(), kN) == doctest::Approx(1.0));
  std::vector<double> inv(kN);
  for (int64_t i = 0; i < kN; i++)
    inv[static_cast<size_t>(i)] = 1.0 - y[static_cast<size_t>(i)];
  CHECK(*cc_metric(inv.data(), y.data(), kN) == doctest::Approx(-1.0));
  std::vector<double> flat(kN, 0.5);
  CHECK(!cc_metric(flat.data(), y.data(), kN));

  CHECK(*sim_metric(y.data(), y.data(), kN) == doctest::Approx(1.0));
  std::vector<double> left(kN, 0.0), right(kN, 0.0);
  left[3] = 1.0;
  right[40] = 1.0;
  CHECK(*sim_metric(left.data(), right.data(), kN) == doctest::Approx(0.0));
  std::vector<double> zero(kN, 0.0);
  CHECK(!sim_metric(zero.data(), y.data(), kN));
}

TEST_CASE("scanpath metric basics") {
  std::vector<double> spike(kN, 0.0);
  spike[11] = 1.0;
  std::vector<int32_t> cell = {11};
  CHECK(*nss_metric(spike.data(), cell.data(), 1, kN) ==
        doctest::Approx(63.0 / std::sqrt(63.0)).epsilon(1e-9));

  // chance level: random map, random fixations
  Rng rng(3);
  double acc = 0;
  for (int trial = 0; trial < 1000; trial++) {
    auto m = random_map(rng);
    auto cells = random_cells(rng, 4);
    acc += *nss_metric(m.data(), cells.data(), 4, kN);
  }
  CHECK(std::abs(acc / 1000.0) < 0.1);

  std::vector<double> flat(kN, 1.0);
  CHECK(!nss_metric(flat.data(), cell.data(), 1, kN));
  CHECK(!nss_metric(spike.data(), cell.data(), 0, kN));
}

TEST_CASE("fixation AUC") {
  Rng rng(4);
  SUBCASE("prediction maximal exactly on fixations") {
    std::vector<double> pred(16 * 16);
    for (double& v : pred) v = rng.uniform(0.0, 0.5);
    std::vector<int32_t> cells = {17, 100, 200};
    for (int32_t c : cells) pred[static_cast<size_t>(c)] = 0.9 + 0.01 * c;
    CHECK(*auc_judd(pred.data(), cells.data(), 3, 256) > 0.99);
  }
  SUBCASE("constant prediction scores chance by the tie convention") {
    std::vector<double> pred(kN, 0.25);
    auto cells = random_cells(rng, 5);
    CHECK(*auc_judd(pred.data(), cells.data(), 5, kN) ==
          doctest::Approx(0.5));
  }
  SUBCASE("random instances match both oracles") {
    for (int trial = 0; trial < 50; trial++) {
      auto pred = random_map(rng);
      const int nf = 1 + static_cast<int>(rng.uniform_int(8));
      auto cells = random_cells(rng, nf);
      std::vector<double> pos;
      for (int32_t c : cells) pos.push_back(pred[static_cast<size_t>(c)]);
      const std::vector<double> neg(pred.begin(), pred.end());
      const double got = *auc_judd(pred.data(), cells.data(), nf, kN);
      CHECK(std::abs(got - pairwise_auc(pos, neg)) < 1e-9);
      CHECK(std::abs(got - sweep_auc(pos, neg)) < 1e-9);
    }
  }
}

TEST_CASE("shuffle pool construction") {
  SUBCASE("set union of the other frames") {
    std::vector<std::vector<int32_t>> cells = {{3}, {7}, {12}};
    auto pool0 = build_shuffle_pool(cells, 0);
    CHECK(pool0 == std::vector<int32_t>{7, 12});
    auto pool2 = build_shuffle_pool(cells, 2);
    CHECK(pool2 == std::vector<int32_t>{3, 7});
  }
  SUBCASE("shared cells collapse to one entry") {
    std::vector<std::vector<int32_t>> cells = {{5}, {5}, {5, 9}};
    CHECK(build_shuffle_pool(cells, 0) == std::vector<int32_t>{5, 9});
  }
  SUBCASE("an unshared current-frame fixation never enters the pool") {
    std::vector<std::vector<int32_t>> cells = {{1}, {2}, {3}};
    auto pool = build_shuffle_pool(cells, 1);
    CHECK(std::find(pool.begin(), pool.end(), 2) == pool.end());
  }
}

TEST_CASE("shuffled AUC") {
  Rng rng(5);
  SUBCASE("ties everywhere give one half") {
    std::vector<double> pred(kN, 0.4);
    std::vector<int32_t> cells = {3, 9};
    std::vector<int32_t> pool = {20, 30, 40};
    Rng r(1);
    CHECK(*sauc(pred.data(), cells.data(), 2, pool, 10, r) ==
          doctest::Approx(0.5));
  }
  SUBCASE("separated positives give one") {
    std::vector<double> pred(kN, 0.0);
    std::vector<int32_t> cells = {3, 9};
    pred[3] = pred[9] = 1.0;
    std::vector<int32_t> pool = {20, 30, 40, 50};
    for (int32_t c : pool) pred[static_cast<size_t>(c)] = 0.2;
    Rng r(1);
    CHECK(*sauc(pred.data(), cells.data(), 2, pool, 10, r) ==
          doctest::Approx(1.0));
  }
  SUBCASE("per-split area equals the pairwise oracle") {
    for (int trial = 0; trial < 50; trial++) {
      auto pred = random_map(rng);
      auto cells = random_cells(rng, 4);
      auto pool = random_cells(rng, 10);
      // replicate one split: draw 4 negatives without replacement
      std::vector<int32_t> bag = pool;
      std::vector<double> neg;
      Rng draw(trial);
      for (size_t i = 0; i < 4; i++) {
        const size_t j =
            i + static_cast<size_t>(draw.uniform_int(bag.size() - i));
        std::swap(bag[i], bag[j]);
        neg.push_back(pred[static_cast<size_t>(bag[i])]);
      }
      std::vector<double> pos;
      for (int32_t c : cells) pos.push_back(pred[static_cast<size_t>(c)]);
      CHECK(std::abs(roc_auc(pos, neg) - pairwise_auc(pos, neg)) < 1e-9);
    }
  }
  SUBCASE("empty pool or no fixations are absent") {
    auto pred = random_map(rng);
    std::vector<int32_t> cells = {1};
    Rng r(1);
    CHECK(!sauc(pred.data(), cells.data(), 1, {}, 10, r));
    std::vector<int32_t> pool = {5};
    CHECK(!sauc(pred.data(), cells.data(), 0, pool, 10, r));
  }
  SUBCASE("chance level for prediction independent of fixations") {
    double acc = 0;
    int count = 0;
    for (int trial = 0; trial < 300; trial++) {
      auto pred = random_map(rng);
      auto cells = random_cells(rng, 3);
      auto pool = random_cells(rng, 12);
      Rng r(static_cast<uint64_t>(trial) + 77);
      acc += *sauc(pred.data(), cells.data(), 3, pool, 20, r);
      count++;
    }
    CHECK(acc / count > 0.45);
    CHECK(acc / count < 0.55);
  }
}

TEST_CASE("metric invariances") {
  Rng rng(6);
  auto pred = random_map(rng);
  auto y = random_map(rng);
  auto cells = random_cells(rng, 5);
  auto pool = random_cells(rng, 9);

  std::vector<double> mono(kN), affine(kN), scaled(kN);
  for (int64_t i = 0; i < kN; i++) {
    const auto s = static_cast<size_t>(i);
    mono[s] = std::exp(2.0 * pred[s]);  // strictly increasing
    affine[s] = 4.2 * pred[s] + 1.3;
    scaled[s] = 2.5 * pred[s];
  }

  CHECK(std::abs(*auc_judd(mono.data(), cells.data(), 5, kN) -
                 *auc_judd(pred.data(), cells.data(), 5, kN)) < 1e-9);
  {
    Rng r1(9), r2(9);
    CHECK(std::abs(*sauc(mono.data(), cells.data(), 5, pool, 25, r1) -
                   *sauc(pred.data(), cells.data(), 5, pool, 25, r2)) < 1e-9);
  }
  CHECK(std::abs(*cc_metric(affine.data(), y.data(), kN) -
                 *cc_metric(pred.data(), y.data(), kN)) < 1e-9);
  CHECK(std::abs(*nss_metric(affine.data(), cells.data(), 5, kN) -
                 *nss_metric(pred.data(), cells.data(), 5, kN)) < 1e-9);
  CHECK(std::abs(*sim_metric(scaled.data(), y.data(), kN) -
                 *sim_metric(pred.data(), y.data(), kN)) < 1e-9);
}

TEST_CASE("dataset evaluation") {
  SUBCASE("single frame equals its own mean") {
    FramePrediction p;
    p.video_id = "v0";
    p.frame_index = 0;
    Rng rng(7);
    p.map = random_map(rng);
    FrameTarget t;
    t.video_id = "v0";
    t.frame_index = 0;
    t.gt = gt_from_cells(random_cells(rng, 3));
    t.shuffle_pool = random_cells(rng, 6);
    MetricsReport rep = evaluate_dataset({p}, {t}, 10, 42);
    REQUIRE(rep.frames.size() == 1);
    CHECK(*rep.overall.cc == doctest::Approx(*rep.frames[0].cc));
    CHECK(*rep.overall.sauc == doctest::Approx(*rep.frames[0].sauc));
  }

  SUBCASE("two frames average arithmetically") {
    Rng rng(8);
    std::vector<FramePrediction> preds(2);
    std::vector<FrameTarget> targets(2);
    for (int i = 0; i < 2; i++) {
      preds[static_cast<size_t>(i)] = {"v0", i, random_map(rng)};
      targets[static_cast<size_t>(i)].video_id = "v0";
      targets[static_cast<size_t>(i)].frame_index = i;
      targets[static_cast<size_t>(i)].gt = gt_from_cells(random_cells(rng, 4));
      targets[static_cast<size_t>(i)].shuffle_pool = random_cells(rng, 8);
    }
    MetricsReport rep = evaluate_dataset(preds, targets, 10, 42);
    CHECK(*rep.overall.cc ==
          doctest::Approx((*rep.frames[0].cc + *rep.frames[1].cc) / 2));
    CHECK(*rep.overall.nss ==
          doctest::Approx((*rep.frames[0].nss + *rep.frames[1].nss) / 2));
  }

  SUBCASE("a perfect predictor saturates the scores") {
    Rng rng(9);
    auto cells = random_cells(rng, 4);
    GroundTruth gt = gt_from_cells(cells);
    // blur-like continuous target with its peak at the fixations
    for (int64_t i = 0; i < kN; i++)
      if (!gt.binary[static_cast<size_t>(i)])
        gt.continuous[static_cast<size_t>(i)] = 0.3 * rng.uniform();
    FramePrediction p{"v0", 0, gt.continuous};
    FrameTarget t;
    t.video_id = "v0";
    t.frame_index = 0;
    t.gt = gt;
    t.shuffle_pool = random_cells(rng, 10);
    MetricsReport rep = evaluate_dataset({p}, {t}, 10, 42);
    CHECK(*rep.overall.cc == doctest::Approx(1.0));
    CHECK(*rep.overall.sim == doctest::Approx(1.0));
    // with fixated cells part of the all-pixel reference, ties cap the area
    // at (N - nf/2) / N
    CHECK(*rep.overall.auc_j == doctest::Approx((64.0 - 2.0) / 64.0));
  }

  SUBCASE("missing keys are reported") {
    Rng rng(10);
    FramePrediction p{"v0", 3, random_map(rng)};
    FrameTarget t;
    t.video_id = "v0";
    t.frame_index = 0;
    t.gt = gt_from_cells({5});
    CHECK_THROWS_WITH_AS(evaluate_dataset({p}, {t}, 10, 42),
                         doctest::Contains("v0:3"), Error);
  }

  SUBCASE("reports are deterministic in the seed") {
    Rng rng(11);
    FramePrediction p{"v0", 0, random_map(rng)};
    FrameTarget t;
    t.video_id = "v0";
    t.frame_index = 0;
    t.gt = gt_from_cells(random_cells(rng, 3));
    t.shuffle_pool = random_cells(rng, 9);
    MetricsReport a = evaluate_dataset({p}, {t}, 25, 1234);
    MetricsReport b = evaluate_dataset({p}, {t}, 25, 1234);
    CHECK(a.serialize() == b.serialize());
    MetricsReport c = evaluate_dataset({p}, {t}, 25, 999);
    CHECK(*a.frames[0].sauc != *c.frames[0].sauc);
  }
}
