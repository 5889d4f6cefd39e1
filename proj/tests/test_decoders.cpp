#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "lsds/decoders.hpp"
#include "lsds/metrics.hpp"

using namespace lsds;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

std::vector<int> random_labels(std::size_t n, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  std::vector<int> y(n);
  for (int& v : y) v = coin(rng) ? 1 : 0;
  y[0] = 1;
  y[1] = 0;
  return y;
}

double pair_count_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double hits = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      hits += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return hits / pairs;
}

}  // namespace

TEST(Scorer, ZeroStatesGiveBias) {
  ParameterStore store;
  auto s = InteractionScorer::create(store, 3);
  Tensor b = s.b;
  b.mutable_data()[0] = 0.42;
  Tensor z = Tensor::zeros({2, 3});
  const std::vector<std::size_t> rel = {0, 3};
  EXPECT_EQ(s.score(z, z, rel).to_vector(), (std::vector<double>{0.42, 0.42}));
}

TEST(Scorer, StartsAtZero) {
  ParameterStore store;
  auto s = InteractionScorer::create(store, 4);
  EXPECT_EQ(store.scalar_count(), 4u * 4 + 8 + 1);
  for (auto [name, t] : store.items())
    for (double v : t.data()) EXPECT_EQ(v, 0.0) << name;
}

TEST(Scorer, HandArithmetic) {
  ParameterStore store;
  auto s = InteractionScorer::create(store, 2);
  Tensor w_r = s.w_r, w_v = s.w_v, b = s.b;
  w_r.mutable_data()[0] = 2.0;
  w_r.mutable_data()[1] = 3.0;
  for (double& v : w_v.mutable_data()) v = 0.5;
  b.mutable_data()[0] = 0.0;
  Tensor z = Tensor::row({1.0, 0.0});
  const std::vector<std::size_t> rel = {0};
  EXPECT_DOUBLE_EQ(s.score(z, z, rel).item(), 3.0);
}

TEST(Scorer, MatchesLoopOracle) {
  std::mt19937_64 gen(3);
  ParameterStore store;
  const std::size_t d = 5, e = 7;
  auto s = InteractionScorer::create(store, d);
  for (auto [name, t] : store.items()) {
    auto v = random_vec(t.size(), gen);
    std::copy(v.begin(), v.end(), t.mutable_data().begin());
  }
  Tensor zi = Tensor::matrix(e, d, random_vec(e * d, gen)), zj = Tensor::matrix(e, d, random_vec(e * d, gen));
  std::vector<std::size_t> rel(e);
  for (std::size_t k = 0; k < e; ++k) rel[k] = k % kNumRelations;
  Tensor got = s.score(zi, zj, rel);
  for (std::size_t k = 0; k < e; ++k) {
    double expect = s.b.item();
    for (std::size_t c = 0; c < d; ++c) {
      expect += s.w_r.at(rel[k], c) * zi.at(k, c) * zj.at(k, c);
      expect += s.w_v.at(c, 0) * zi.at(k, c) + s.w_v.at(d + c, 0) * zj.at(k, c);
    }
    EXPECT_NEAR(got.at(k, 0), expect, 1e-12);
  }
  EXPECT_THROW(s.score(zi, Tensor::zeros({e, d + 1}), rel), DimensionError);
}

TEST(Bce, ExamplesAndOracle) {
  const std::vector<double> y = {1, 0};
  EXPECT_NEAR(bce_with_logits(Tensor::column({1e3, -1e3}), y).item(), std::log1p(std::exp(-30.0)), 1e-15);
  EXPECT_NEAR(bce_with_logits(Tensor::column({0, 0}), y).item(), std::log(2.0), 1e-15);

  std::mt19937_64 gen(4);
  auto logits = random_vec(10, gen, -4, 4);
  std::vector<double> labels(10);
  for (std::size_t k = 0; k < 10; ++k) labels[k] = k % 3 == 0 ? 1.0 : 0.0;
  double expect = 0.0;
  for (std::size_t k = 0; k < 10; ++k) {
    const double p = 1.0 / (1.0 + std::exp(-logits[k]));
    expect -= labels[k] * std::log(p) + (1 - labels[k]) * std::log(1 - p);
  }
  EXPECT_NEAR(bce_with_logits(Tensor::column(logits), labels).item(), expect / 10.0, 1e-12);
}

TEST(GaussianNll, ExamplesAndOracle) {
  EXPECT_NEAR(gaussian_nll(Tensor::column({2.0}), Tensor::column({2.0})).item(), kHalfLog2Pi, 1e-15);
  EXPECT_NEAR(gaussian_nll(Tensor::column({3.0}), Tensor::column({2.0})).item(), 0.5 + kHalfLog2Pi, 1e-15);
  std::mt19937_64 gen(5);
  auto p = random_vec(12, gen), t = random_vec(12, gen);
  double expect = 0.0;
  for (std::size_t k = 0; k < 12; ++k) expect += 0.5 * (p[k] - t[k]) * (p[k] - t[k]) + kHalfLog2Pi;
  EXPECT_NEAR(gaussian_nll(Tensor::matrix(3, 4, p), Tensor::matrix(3, 4, t)).item(), expect / 12.0, 1e-12);
}

TEST(CrossEntropy, ExamplesAndOracle) {
  const std::vector<std::size_t> zero = {0};
  EXPECT_NEAR(cross_entropy(Tensor::matrix(1, 2, {-30, 30}), std::vector<std::size_t>{1}).item(), 0.0, 1e-20);
  EXPECT_NEAR(cross_entropy(Tensor::matrix(1, 2, {30, -30}), zero).item(), 0.0, 1e-20);
  EXPECT_NEAR(cross_entropy(Tensor::matrix(1, 2, {0.7, 0.7}), zero).item(), std::log(2.0), 1e-15);
  std::mt19937_64 gen(6);
  auto logits = random_vec(8, gen, -3, 3);
  const std::vector<std::size_t> labels = {0, 1, 1, 0};
  double expect = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double a = logits[2 * k], b = logits[2 * k + 1];
    expect -= (labels[k] == 0 ? a : b) - std::log(std::exp(a) + std::exp(b));
  }
  EXPECT_NEAR(cross_entropy(Tensor::matrix(4, 2, logits), labels).item(), expect / 4.0, 1e-12);
}

TEST(Losses, MinimumAtPerfectPrediction) {
  std::mt19937_64 gen(7);
  auto t = random_vec(6, gen);
  Tensor target = Tensor::column(t);
  const double at_target = gaussian_nll(target, target).item() - kHalfLog2Pi;
  EXPECT_NEAR(at_target, 0.0, 1e-15);
  for (int k = 0; k < 5; ++k) {
    Tensor other = Tensor::column(random_vec(6, gen));
    EXPECT_GE(gaussian_nll(other, target).item() - kHalfLog2Pi, 0.0);
    EXPECT_GE(bce_with_logits(Tensor::column(random_vec(6, gen, -5, 5)), std::vector<double>(6, 1.0)).item(), 0.0);
  }
}

TEST(Metrics, TrivialExamples) {
  const std::vector<double> s = {0.9, 0.1};
  const std::vector<int> y = {1, 0};
  EXPECT_DOUBLE_EQ(roc_auc(s, y), 1.0);
  EXPECT_DOUBLE_EQ(average_precision(s, y), 1.0);
  const std::vector<double> v = {1.5, -2.0, 3.0};
  EXPECT_DOUBLE_EQ(mse(v, v), 0.0);
  EXPECT_DOUBLE_EQ(mape(v, v), 0.0);
  EXPECT_DOUBLE_EQ(r2_score(v, v), 1.0);
  const std::vector<int> c = {1, 0, 1};
  EXPECT_DOUBLE_EQ(accuracy(c, c), 1.0);
  EXPECT_DOUBLE_EQ(macro_f1(c, c), 1.0);
}

TEST(Metrics, RocAucEqualsPairCounting) {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 20;
    auto s = random_vec(n, gen);
    for (std::size_t k = 0; k + 1 < n; k += 4) s[k + 1] = s[k];  // ties
    auto y = random_labels(n, gen);
    EXPECT_NEAR(roc_auc(s, y), pair_count_auc(s, y), 1e-12);
  }
}

TEST(Metrics, RegressionAndClassificationMatchLoops) {
  std::mt19937_64 gen(9);
  auto p = random_vec(15, gen), t = random_vec(15, gen);
  t[3] = 0.0;
  double se = 0.0, ape = 0.0, mean_t = 0.0, tot = 0.0;
  std::size_t kept = 0;
  for (double v : t) mean_t += v / 15.0;
  for (std::size_t k = 0; k < 15; ++k) {
    se += (p[k] - t[k]) * (p[k] - t[k]);
    tot += (t[k] - mean_t) * (t[k] - mean_t);
    if (std::fabs(t[k]) > 1e-8) {
      ape += std::fabs(p[k] - t[k]) / std::fabs(t[k]);
      ++kept;
    }
  }
  EXPECT_NEAR(mse(p, t), se / 15.0, 1e-12);
  EXPECT_NEAR(mape(p, t), ape / static_cast<double>(kept), 1e-12);
  EXPECT_NEAR(r2_score(p, t), 1.0 - se / tot, 1e-12);

  auto pc = random_labels(30, gen), tc = random_labels(30, gen);
  double correct = 0.0, f1 = 0.0;
  for (int cls : {0, 1}) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < 30; ++k) {
      tp += pc[k] == cls && tc[k] == cls;
      fp += pc[k] == cls && tc[k] != cls;
      fn += pc[k] != cls && tc[k] == cls;
    }
    f1 += 2 * tp / (2 * tp + fp + fn) / 2.0;
  }
  for (std::size_t k = 0; k < 30; ++k) correct += pc[k] == tc[k];
  EXPECT_NEAR(accuracy(pc, tc), correct / 30.0, 1e-12);
  EXPECT_NEAR(macro_f1(pc, tc), f1, 1e-12);
}

TEST(Metrics, AveragePrecisionStepIntegration) {
  // Ranked labels 1, 0, 1, 0: precision at the two hits is 1 and 2/3.
  const std::vector<double> s = {0.9, 0.8, 0.7, 0.6};
  const std::vector<int> y = {1, 0, 1, 0};
  EXPECT_NEAR(average_precision(s, y), 0.5 * (1.0 + 2.0 / 3.0), 1e-15);
}

TEST(MetricProperties, RocAucMonotoneInvariant) {
  std::mt19937_64 gen(10);
  auto s = random_vec(40, gen);
  auto y = random_labels(40, gen);
  std::vector<double> t(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) t[k] = std::exp(3.0 * s[k]) + 7.0;
  EXPECT_DOUBLE_EQ(roc_auc(s, y), roc_auc(t, y));
}

TEST(MetricProperties, PermutationInvariant) {
  std::mt19937_64 gen(11);
  Predictions p;
  p.task = Task::kInteraction;
  auto s = random_vec(30, gen);
  auto y = random_labels(30, gen);
  for (std::size_t k = 0; k < 30; ++k) p.append(s[k], y[k], 1.0);
  Predictions q = p;
  std::vector<std::size_t> order(30);
  for (std::size_t k = 0; k < 30; ++k) order[k] = k;
  std::shuffle(order.begin(), order.end(), gen);
  for (std::size_t k = 0; k < 30; ++k) {
    q.score[k] = p.score[order[k]];
    q.truth[k] = p.truth[order[k]];
  }
  auto a = compute_metrics(p), b = compute_metrics(q);
  for (const auto& [k, v] : a) EXPECT_NEAR(v, b.at(k), 1e-12) << k;
}

TEST(HorizonSweep, SingleBucketEqualsGlobal) {
  std::mt19937_64 gen(12);
  Predictions p;
  p.task = Task::kPolarityReg;
  for (int k = 0; k < 10; ++k) p.append(random_vec(1, gen)[0], random_vec(1, gen)[0], 0.5);
  auto sweep = horizon_sweep(p);
  ASSERT_EQ(sweep.size(), 1u);
  EXPECT_EQ(sweep.at(1), compute_metrics(p));
}

TEST(HorizonSweep, BucketsPartitionEvents) {
  std::mt19937_64 gen(13);
  Predictions p;
  p.task = Task::kInteraction;
  std::vector<double> times = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
  for (std::size_t k = 0; k < 24; ++k) p.append(random_vec(1, gen)[0], k % 2, times[k % times.size()]);
  auto sweep = horizon_sweep(p);
  ASSERT_EQ(sweep.size(), 3u);
  for (long w = 1; w <= 3; ++w) {
    Predictions sub;
    sub.task = p.task;
    for (std::size_t k = 0; k < p.size(); ++k)
      if (horizon_week(p.time[k], 1.0) == w) sub.append(p.score[k], p.truth[k], p.time[k]);
    EXPECT_EQ(sub.size(), 8u);
    EXPECT_EQ(sweep.at(w), compute_metrics(sub)) << w;
  }
  EXPECT_EQ(horizon_week(1.0, 1.0), 1);
  EXPECT_EQ(horizon_week(1.0001, 1.0), 2);
}

TEST(HorizonSweep, AggregateAcrossRuns) {
  std::vector<std::map<long, MetricMap>> runs = {{{1, {{"mse", 1.0}}}}, {{1, {{"mse", 3.0}}}, {2, {{"mse", 5.0}}}}};
  auto rows = aggregate_sweeps(runs);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].week, 1);
  EXPECT_DOUBLE_EQ(rows[0].mean, 2.0);
  EXPECT_DOUBLE_EQ(rows[0].std, 1.0);
  EXPECT_DOUBLE_EQ(rows[1].mean, 5.0);
  EXPECT_DOUBLE_EQ(rows[1].std, 0.0);
}

TEST(TrajectoryRow, SnapsToGrid) {
  LatentTrajectory traj;
  traj.times = {0, 1, 2};
  EXPECT_EQ(trajectory_row(traj, 5, 3, 1.2), 8u);
  EXPECT_THROW(trajectory_row(traj, 5, 3, 4.0), ContractError);
}
