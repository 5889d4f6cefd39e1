#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "lsds/encoder.hpp"

using namespace lsds;

namespace {

struct Obs {
  std::size_t account;
  double time;
  std::vector<double> embedding;
};

SequenceSample make_sample(std::size_t n, std::size_t dim, const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                           const std::vector<Obs>& obs) {
  SequenceSample s;
  s.id = "toy";
  s.graph = SocialGraph(n);
  for (auto [a, b] : edges) s.graph.add_edge(a, b);
  s.embed_dim = dim;
  s.observations.resize(n);
  for (std::size_t a = 0; a < n; ++a) s.observations[a].node = a;
  for (const Obs& o : obs) {
    s.observations[o.account].times.push_back(o.time);
    s.observations[o.account].embeddings.push_back(o.embedding);
  }
  s.horizon = 2.0;
  return s;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Row vector times an in x out weight stored row-major.
std::vector<double> affine(const std::vector<double>& x, const Linear& l) {
  const std::size_t out = l.out_features();
  std::vector<double> y(out, 0.0);
  for (std::size_t c = 0; c < out; ++c) {
    for (std::size_t r = 0; r < x.size(); ++r) y[c] += x[r] * l.weight.data()[r * out + c];
    if (l.bias.defined()) y[c] += l.bias.data()[c];
  }
  return y;
}

std::vector<double> row_of(const Tensor& t, std::size_t r) {
  return {t.data().begin() + r * t.cols(), t.data().begin() + (r + 1) * t.cols()};
}

double relu_d(double x) { return x > 0 ? x : 0.0; }
double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Chain of five accounts, two pre-boundary observations each.
SequenceSample chain_sample(std::size_t dim, std::mt19937_64& rng) {
  std::vector<Obs> obs;
  for (std::size_t a = 0; a < 5; ++a) {
    obs.push_back({a, -3.0, random_vec(dim, rng)});
    obs.push_back({a, -1.0, random_vec(dim, rng)});
    obs.push_back({a, 1.0, random_vec(dim, rng)});
  }
  return make_sample(5, dim, {{0, 1}, {2, 1}, {2, 3}, {4, 3}}, obs);
}

void zero(const Linear& l) {
  Tensor w = l.weight;
  std::fill(w.mutable_data().begin(), w.mutable_data().end(), 0.0);
  if (l.bias.defined()) {
    Tensor b = l.bias;
    std::fill(b.mutable_data().begin(), b.mutable_data().end(), 0.0);
  }
}

}  // namespace

TEST(TemporalEncoding, ZeroGap) {
  EXPECT_EQ(temporal_encoding(0.0, 4), (std::vector<double>{0, 1, 0, 1}));
}

TEST(TemporalEncoding, PiGap) {
  auto te = temporal_encoding(std::numbers::pi, 2);
  EXPECT_NEAR(te[0], 0.0, 1e-15);
  EXPECT_NEAR(te[1], -1.0, 1e-15);
}

TEST(TemporalEncoding, MatchesScalarFormula) {
  auto te = temporal_encoding(1.5, 8);
  for (int i = 0; i < 4; ++i) {
    const double denom = std::pow(10000.0, 2.0 * i / 8.0);
    EXPECT_NEAR(te[2 * i], std::sin(1.5 / denom), 1e-12);
    EXPECT_NEAR(te[2 * i + 1], std::cos(1.5 / denom), 1e-12);
  }
  EXPECT_THROW(temporal_encoding(1.0, 3), ConfigError);
}

TEST(Dnrl, IsolatedObservationUnchanged) {
  ParameterStore store;
  Rng rng(1);
  auto layer = DnrlLayer::create(store, "l", 2, rng);
  SequenceSample s = make_sample(1, 2, {}, {{0, -1.0, {0.3, -0.2}}});
  EncoderInputs in = prepare_encoder_inputs(s, 2);
  Tensor h = Tensor::matrix(1, 2, {0.7, -0.4});
  EXPECT_EQ(layer.forward(h, in).to_vector(), h.to_vector());
}

TEST(Dnrl, ZeroKeyAndQueryLeaveTargetUnchanged) {
  ParameterStore store;
  Rng rng(2);
  auto layer = DnrlLayer::create(store, "l", 2, rng);
  zero(layer.w_key);
  zero(layer.w_que);
  SequenceSample s = make_sample(2, 2, {{0, 1}}, {{0, -2.0, {1, 0}}, {1, -1.0, {0, 1}}});
  EncoderInputs in = prepare_encoder_inputs(s, 2);
  ASSERT_EQ(in.edge_src.size(), 2u);
  Tensor h = Tensor::matrix(2, 2, {0.5, 1.5, -1.0, 2.0});
  EXPECT_EQ(layer.forward(h, in).to_vector(), h.to_vector());
}

static void dnrl_oracle_check(Aggregation aggregation) {
  std::mt19937_64 gen(3);
  const std::size_t d = 4;
  ParameterStore store;
  Rng rng(3);
  auto layer = DnrlLayer::create(store, "l", d, rng, aggregation);
  // Larger queries than the default so attention is far from zero.
  Tensor q = layer.w_que.weight;
  for (double& w : q.mutable_data()) w *= 20.0;
  SequenceSample s = make_sample(2, 3, {{0, 1}},
                                 {{0, -3.0, {1, 2, 3}}, {0, -1.0, {0, 1, 0}}, {1, -2.0, {2, 0, 1}}});
  EncoderInputs in = prepare_encoder_inputs(s, d);
  ASSERT_EQ(in.n_obs, 3u);
  Tensor h = Tensor::matrix(3, d, random_vec(3 * d, gen));
  Tensor out = layer.forward(h, in);

  std::vector<std::vector<double>> agg(3, std::vector<double>(d, 0.0));
  std::vector<double> in_degree(3, 0.0);
  for (std::size_t v : in.edge_tgt) in_degree[v] += 1.0;
  for (std::size_t e = 0; e < in.edge_src.size(); ++e) {
    const std::size_t u = in.edge_src[e], v = in.edge_tgt[e];
    const double dt = in.edge_dt.data()[e];
    std::vector<double> x = row_of(h, u);
    x.push_back(dt);
    std::vector<double> hh = affine(x, layer.w_temp);
    auto te = temporal_encoding(dt, d);
    for (std::size_t c = 0; c < d; ++c) hh[c] = relu_d(hh[c]) + te[c];
    auto msg = affine(hh, layer.w_val);
    auto key = affine(hh, layer.w_key);
    auto query = affine(row_of(h, v), layer.w_que);
    double att = 0.0;
    for (std::size_t c = 0; c < d; ++c) att += key[c] * query[c];
    att /= std::sqrt(static_cast<double>(d));
    const double norm = aggregation == Aggregation::kMean ? 1.0 / in_degree[v] : 1.0;
    for (std::size_t c = 0; c < d; ++c) agg[v][c] += norm * att * msg[c];
  }
  for (std::size_t v = 0; v < 3; ++v) {
    for (std::size_t c = 0; c < d; ++c) EXPECT_NEAR(out.at(v, c), h.at(v, c) + relu_d(agg[v][c]), 1e-10);
  }
}

TEST(Dnrl, SumMatchesLoopOracle) { dnrl_oracle_check(Aggregation::kSum); }

TEST(Dnrl, MeanMatchesLoopOracle) { dnrl_oracle_check(Aggregation::kMean); }

TEST(Dnrl, AggregationNames) {
  EXPECT_EQ(parse_aggregation("mean"), Aggregation::kMean);
  EXPECT_EQ(aggregation_name(*parse_aggregation("sum")), "sum");
  EXPECT_FALSE(parse_aggregation("max"));
}

TEST(Tsa, SingleObservation) {
  ParameterStore store;
  Rng rng(4);
  auto tsa = TsaReadout::create(store, "t", 2, rng);
  SequenceSample s = make_sample(1, 2, {}, {{0, -1.0, {0, 0}}});
  EncoderInputs in = prepare_encoder_inputs(s, 2);
  Tensor h = Tensor::matrix(1, 2, {0.4, -0.9});
  Tensor u = tsa.forward(h, in);
  std::vector<double> x = {0.4, -0.9, 0.0};
  auto hh = affine(x, tsa.w_temp);
  for (std::size_t c = 0; c < 2; ++c) hh[c] = relu_d(hh[c]) + temporal_encoding(0.0, 2)[c];
  auto a = affine(hh, tsa.w_a);
  double dot = 0.0;
  for (std::size_t c = 0; c < 2; ++c) dot += std::tanh(a[c]) * hh[c];
  for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(u.at(0, c), sigmoid_d(dot) * hh[c], 1e-14);
}

TEST(Tsa, ZeroAttentionWeightGivesHalfMean) {
  std::mt19937_64 gen(5);
  ParameterStore store;
  Rng rng(5);
  auto tsa = TsaReadout::create(store, "t", 4, rng);
  zero(tsa.w_a);
  zero(tsa.w_temp);
  SequenceSample s = make_sample(1, 1, {}, {{0, -3.0, {0}}, {0, -1.0, {0}}});
  EncoderInputs in = prepare_encoder_inputs(s, 4);
  Tensor u = tsa.forward(Tensor::matrix(2, 4, random_vec(8, gen)), in);
  auto te0 = temporal_encoding(0.0, 4), te2 = temporal_encoding(2.0, 4);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(u.at(0, c), 0.25 * (te0[c] + te2[c]), 1e-15);
}

TEST(Tsa, MatchesLoopOracle) {
  std::mt19937_64 gen(6);
  const std::size_t d = 4;
  ParameterStore store;
  Rng rng(6);
  auto tsa = TsaReadout::create(store, "t", d, rng);
  std::vector<Obs> obs;
  for (double t : {-4.0, -3.0, -1.5, -0.5}) obs.push_back({0, t, {0}});
  SequenceSample s = make_sample(1, 1, {}, obs);
  EncoderInputs in = prepare_encoder_inputs(s, d);
  Tensor h = Tensor::matrix(4, d, random_vec(4 * d, gen));
  Tensor u = tsa.forward(h, in);

  std::vector<std::vector<double>> hh(4);
  std::vector<double> mean(d, 0.0);
  for (std::size_t k = 0; k < 4; ++k) {
    const double dt = obs[k].time - obs[0].time;
    std::vector<double> x = row_of(h, k);
    x.push_back(dt);
    hh[k] = affine(x, tsa.w_temp);
    auto te = temporal_encoding(dt, d);
    for (std::size_t c = 0; c < d; ++c) {
      hh[k][c] = relu_d(hh[k][c]) + te[c];
      mean[c] += hh[k][c] / 4.0;
    }
  }
  auto a = affine(mean, tsa.w_a);
  std::vector<double> expect(d, 0.0);
  for (std::size_t k = 0; k < 4; ++k) {
    double dot = 0.0;
    for (std::size_t c = 0; c < d; ++c) dot += std::tanh(a[c]) * hh[k][c];
    for (std::size_t c = 0; c < d; ++c) expect[c] += sigmoid_d(dot) * hh[k][c] / 4.0;
  }
  for (std::size_t c = 0; c < d; ++c) EXPECT_NEAR(u.at(0, c), expect[c], 1e-12);
}

TEST(Posterior, ZeroHeadGivesStandardNormal) {
  ParameterStore store;
  Rng rng(7);
  auto head = PosteriorHead::create(store, "p", 3, rng);
  zero(head.affine);
  auto q = head.forward(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}), Tensor::column({1, 1}));
  for (double m : q.mu.data()) EXPECT_EQ(m, 0.0);
  for (double s : q.sigma.data()) EXPECT_EQ(s, 1.0);
  EXPECT_EQ(head.affine.out_features(), 6u);
}

TEST(Posterior, LogSigmaClampedAtFloor) {
  ParameterStore store;
  Rng rng(8);
  auto head = PosteriorHead::create(store, "p", 1, rng);
  zero(head.affine);
  Tensor b = head.affine.bias;
  b.mutable_data()[1] = -25.0;
  auto q = head.forward(Tensor::matrix(1, 1, {0.0}), Tensor::column({1}));
  EXPECT_DOUBLE_EQ(q.sigma.item(), std::exp(-10.0));
}

TEST(Posterior, MaskedRowsArePrior) {
  ParameterStore store;
  Rng rng(9);
  auto head = PosteriorHead::create(store, "p", 2, rng);
  auto q = head.forward(Tensor::matrix(2, 2, {1, 2, 3, 4}), Tensor::column({1, 0}));
  EXPECT_EQ(q.mu.at(1, 0), 0.0);
  EXPECT_EQ(q.mu.at(1, 1), 0.0);
  EXPECT_EQ(q.sigma.at(1, 0), 1.0);
  EXPECT_EQ(q.sigma.at(1, 1), 1.0);
  EXPECT_NE(q.mu.at(0, 0), 0.0);
}

TEST(Sampling, ZeroSigmaReturnsMean) {
  GaussianPosterior q{Tensor::matrix(1, 2, {0.5, -2.0}), Tensor::zeros({1, 2})};
  EXPECT_EQ(sample_initial_state(q, 1).to_vector(), q.mu.to_vector());
}

TEST(Sampling, MonteCarloMean) {
  const std::size_t n = 100000;
  GaussianPosterior q{Tensor::full({n, 1}, 0.3), Tensor::full({n, 1}, 1.0)};
  const auto z = sample_initial_state(q, 42).to_vector();
  double mean = 0.0;
  for (double v : z) mean += v / static_cast<double>(n);
  EXPECT_NEAR(mean, 0.3, 0.02);
}

TEST(Sampling, DeterministicPerSeed) {
  GaussianPosterior q{Tensor::full({3, 2}, 0.0), Tensor::full({3, 2}, 1.0)};
  EXPECT_EQ(sample_initial_state(q, 9).to_vector(), sample_initial_state(q, 9).to_vector());
  EXPECT_NE(sample_initial_state(q, 9).to_vector(), sample_initial_state(q, 10).to_vector());
}

TEST(Gcn, GeometricHistoryWeights) {
  EXPECT_EQ(gcn_history_weights(2), (std::vector<double>{0.25, 0.5}));
  SequenceSample s = make_sample(1, 1, {}, {{0, -2.0, {1}}, {0, -1.0, {2}}, {0, 1.0, {100}}});
  EXPECT_DOUBLE_EQ(prepare_encoder_inputs(s, 2).weighted_features.item(), 1.25);
}

TEST(Gcn, IsolatedNodeUsesSelfEdgeOnly) {
  ParameterStore store;
  Rng rng(10);
  GcnEncoder enc(store, 1, 2, rng);
  SequenceSample s = make_sample(1, 1, {}, {{0, -1.0, {0.8}}});
  EncoderInputs in = prepare_encoder_inputs(s, 2);
  EXPECT_EQ(in.gcn_weight.to_vector(), (std::vector<double>{1.0}));
  std::vector<double> h = affine({0.5 * 0.8}, enc.input_projection());
  for (const Linear& l : enc.layers()) {
    h = affine(h, l);
    for (double& v : h) v = relu_d(v);
  }
  Tensor got = enc.propagate(in);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(got.at(0, c), h[c], 1e-15);
}

TEST(Gcn, PathGraphMatchesDenseNormalizedAdjacency) {
  std::mt19937_64 gen(11);
  ParameterStore store;
  Rng rng(11);
  const std::size_t n = 4, d = 4;
  GcnEncoder enc(store, 2, d, rng);
  std::vector<Obs> obs;
  for (std::size_t a = 0; a < n; ++a) obs.push_back({a, -1.0, random_vec(2, gen)});
  SequenceSample s = make_sample(n, 2, {{0, 1}, {2, 1}, {2, 3}}, obs);
  EncoderInputs in = prepare_encoder_inputs(s, d);

  const double deg[n] = {2, 3, 3, 2};  // neighbors plus self
  std::vector<double> adj(n * n, 0.0);
  auto link = [&](std::size_t i, std::size_t j) { adj[i * n + j] = 1.0 / std::sqrt(deg[i] * deg[j]); };
  for (std::size_t i = 0; i < n; ++i) link(i, i);
  for (auto [i, j] : std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}, {1, 2}, {2, 3}}) {
    link(i, j);
    link(j, i);
  }
  std::vector<std::vector<double>> h(n);
  for (std::size_t i = 0; i < n; ++i) h[i] = affine(row_of(in.weighted_features, i), enc.input_projection());
  for (const Linear& l : enc.layers()) {
    std::vector<std::vector<double>> hw(n), next(n, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < n; ++i) hw[i] = affine(h[i], l);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < d; ++c) next[i][c] += adj[i * n + j] * hw[j][c];
    for (auto& r : next)
      for (double& v : r) v = relu_d(v);
    h = next;
  }
  Tensor got = enc.propagate(in);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) EXPECT_NEAR(got.at(i, c), h[i][c], 1e-10);
}

TEST(NoHidden, IdentityProjectionReturnsLastObservation) {
  ParameterStore store;
  Rng rng(12);
  NoHiddenEncoder enc(store, 2, 2, rng);
  zero(enc.projection());
  Tensor w = enc.projection().weight;
  w.mutable_data()[0] = 1.0;
  w.mutable_data()[3] = 1.0;
  SequenceSample s = make_sample(2, 2, {}, {{0, -2.0, {1, 2}}, {0, -1.0, {3, 4}}, {0, 1.0, {9, 9}}, {1, 1.0, {7, 7}}});
  auto q = enc.encode(prepare_encoder_inputs(s, 2));
  EXPECT_EQ(q.mu.to_vector(), (std::vector<double>{3, 4, 0, 0}));
  EXPECT_EQ(q.sigma.to_vector(), (std::vector<double>{1, 1, 1, 1}));
}

TEST(NoHidden, LastFeaturesMatchScan) {
  SynthConfig cfg;
  cfg.n_sequences = 1;
  const SequenceSample s = generate_synthetic(cfg, 3).front();
  EncoderInputs in = prepare_encoder_inputs(s, 2);
  for (std::size_t a = 0; a < s.n_nodes(); ++a) {
    std::vector<double> expect(s.embed_dim, 0.0);
    double best = -1e300;
    const auto& series = s.observations[a];
    for (std::size_t k = 0; k < series.size(); ++k) {
      if (series.times[k] < 0.0 && series.times[k] > best) {
        best = series.times[k];
        expect = series.embeddings[k];
      }
    }
    EXPECT_EQ(row_of(in.last_features, a), expect) << a;
  }
}

TEST(EncoderProperties, SigmaPositiveEvenForExtremeInputs) {
  ParameterStore store;
  Rng rng(13);
  auto head = PosteriorHead::create(store, "p", 2, rng);
  auto q = head.forward(Tensor::matrix(2, 2, {1e6, -1e6, -1e6, 1e6}), Tensor::column({1, 1}));
  for (double s : q.sigma.data()) {
    EXPECT_GT(s, 0.0);
    EXPECT_TRUE(std::isfinite(s));
  }
}

TEST(EncoderProperties, ZeroEncoderWeightsCollapseToPosteriorBias) {
  std::mt19937_64 gen(14);
  ParameterStore store;
  Rng rng(14);
  TemporalGraphEncoder enc(store, 3, 4, rng);
  for (auto [name, t] : store.items()) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
  Tensor bias = enc.posterior().affine.bias;
  auto b = random_vec(8, gen);
  std::copy(b.begin(), b.end(), bias.mutable_data().begin());
  SequenceSample s = chain_sample(3, gen);
  auto q = enc.encode(prepare_encoder_inputs(s, 4));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_DOUBLE_EQ(q.mu.at(i, c), b[c]);
      EXPECT_DOUBLE_EQ(q.sigma.at(i, c), std::exp(b[4 + c]));
    }
}

TEST(EncoderProperties, AccountPermutationCommutes) {
  std::mt19937_64 gen(15);
  ParameterStore store;
  Rng rng(15);
  TemporalGraphEncoder enc(store, 3, 4, rng);
  SequenceSample s = chain_sample(3, gen);
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};  // old id -> new id
  SequenceSample p = s;
  p.graph = SocialGraph(5);
  for (auto [a, b] : s.graph.edges()) p.graph.add_edge(perm[a], perm[b]);
  for (std::size_t a = 0; a < 5; ++a) {
    p.observations[perm[a]] = s.observations[a];
    p.observations[perm[a]].node = perm[a];
  }
  auto q = enc.encode(prepare_encoder_inputs(s, 4));
  auto qp = enc.encode(prepare_encoder_inputs(p, 4));
  for (std::size_t a = 0; a < 5; ++a)
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_NEAR(qp.mu.at(perm[a], c), q.mu.at(a, c), 1e-12);
      EXPECT_NEAR(qp.sigma.at(perm[a], c), q.sigma.at(a, c), 1e-12);
    }
}

TEST(EncoderProperties, DnrlLocality) {
  std::mt19937_64 gen(16);
  ParameterStore store;
  Rng rng(16);
  TemporalGraphEncoder enc(store, 3, 4, rng);
  SequenceSample s = chain_sample(3, gen);
  SequenceSample changed = s;
  changed.observations[0].embeddings[0] = {5.0, -5.0, 5.0};
  EncoderInputs in = prepare_encoder_inputs(s, 4);
  EncoderInputs in2 = prepare_encoder_inputs(changed, 4);

  auto differs = [&](const Tensor& a, const Tensor& b, std::size_t account) {
    bool any = false;
    for (std::size_t k = 0; k < in.n_obs; ++k) {
      if (in.obs_account[k] != account) continue;
      for (std::size_t c = 0; c < a.cols(); ++c) any = any || a.at(k, c) != b.at(k, c);
    }
    return any;
  };
  const DnrlLayer& first = enc.layers()[0];
  Tensor h = enc.input_projection().forward(in.obs_features);
  Tensor h2 = enc.input_projection().forward(in2.obs_features);
  Tensor one = first.forward(h, in), one2 = first.forward(h2, in2);
  EXPECT_TRUE(differs(one, one2, 0));
  for (std::size_t a : {2, 3, 4}) EXPECT_FALSE(differs(one, one2, a)) << a;

  Tensor two = enc.embed_observations(in), two2 = enc.embed_observations(in2);
  EXPECT_TRUE(differs(two, two2, 0));
  for (std::size_t a : {3, 4}) EXPECT_FALSE(differs(two, two2, a)) << a;
}
