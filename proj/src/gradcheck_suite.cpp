#include <algorithm>
#include <random>

#include "lsds/commands.hpp"
#include "lsds/gradcheck.hpp"

namespace lsds {

namespace {

constexpr double kPrimitiveTol = 1e-4;
constexpr double kComposedTol = 1e-3;
constexpr int kPrimitivePoints = 10;

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : rng_(seed) {}

  Tensor random(Shape shape, double lo = -2.0, double hi = 2.0, bool requires_grad = true) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(shape_size(shape));
    for (double& x : v) x = u(rng_);
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
  }

  // sum(W * y) with a fixed random weight so no output coordinate has a
  // trivially symmetric gradient.
  Tensor weighted(const Tensor& y) {
    auto it = weights_.find(y.shape());
    if (it == weights_.end()) it = weights_.emplace(y.shape(), random(y.shape(), -1.0, 1.0, false)).first;
    return sum_all(y * it->second);
  }

  // Worst error over kPrimitivePoints fresh draws of the inputs.
  void primitive(const std::string& name, std::vector<Shape> shapes,
                 const std::function<Tensor(const std::vector<Tensor>&)>& op, double lo = -2.0, double hi = 2.0) {
    weights_.clear();
    double worst = 0.0;
    for (int k = 0; k < kPrimitivePoints; ++k) {
      std::vector<Tensor> inputs;
      for (const Shape& s : shapes) inputs.push_back(random(s, lo, hi));
      worst = std::max(worst, grad_check_params([&] { return weighted(op(inputs)); }, inputs));
    }
    results_.push_back({name, worst, kPrimitiveTol});
  }

  void composed(const std::string& name, const std::function<Tensor()>& loss, std::vector<Tensor> params) {
    results_.push_back({name, grad_check_params(loss, std::move(params)), kComposedTol});
  }

  Rng& rng() { return rng_; }
  std::vector<GradcheckResult> take() { return std::move(results_); }

 private:
  Rng rng_;
  std::map<Shape, Tensor> weights_;
  std::vector<GradcheckResult> results_;
};

std::vector<Tensor> all_params(const ParameterStore& store) {
  std::vector<Tensor> out;
  for (const auto& [_, t] : store.items()) out.push_back(t);
  return out;
}

void check_primitives(Suite& s) {
  using V = std::vector<Tensor>;
  const std::vector<std::size_t> idx = {2, 0, 2, 1};
  s.primitive("matmul", {{3, 4}, {4, 2}}, [](const V& x) { return matmul(x[0], x[1]); });
  s.primitive("add", {{3, 2}, {3, 2}}, [](const V& x) { return x[0] + x[1]; });
  s.primitive("sub", {{3, 2}, {3, 2}}, [](const V& x) { return x[0] - x[1]; });
  s.primitive("mul", {{3, 2}, {3, 2}}, [](const V& x) { return x[0] * x[1]; });
  s.primitive("scale", {{3, 2}}, [](const V& x) { return scale(x[0], -1.7); });
  s.primitive("add_scalar", {{3, 2}}, [](const V& x) { return add_scalar(x[0], 0.3); });
  s.primitive("broadcast_rows", {{1, 3}}, [](const V& x) { return broadcast_rows(x[0], 4); });
  s.primitive("broadcast_cols", {{4, 1}}, [](const V& x) { return broadcast_cols(x[0], 3); });
  s.primitive("concat_cols", {{3, 2}, {3, 1}}, [](const V& x) { return concat_cols({x[0], x[1]}); });
  s.primitive("concat_rows", {{2, 3}, {1, 3}}, [](const V& x) { return concat_rows({x[0], x[1]}); });
  s.primitive("slice_cols", {{3, 5}}, [](const V& x) { return slice_cols(x[0], 1, 4); });
  s.primitive("sum_axis0", {{3, 4}}, [](const V& x) { return sum(x[0], 0); });
  s.primitive("sum_axis1", {{3, 4}}, [](const V& x) { return sum(x[0], 1); });
  s.primitive("mean_axis0", {{3, 4}}, [](const V& x) { return mean(x[0], 0); });
  s.primitive("mean_axis1", {{3, 4}}, [](const V& x) { return mean(x[0], 1); });
  s.primitive("sum_all", {{3, 4}}, [](const V& x) { return sum_all(x[0]); });
  s.primitive("mean_all", {{3, 4}}, [](const V& x) { return mean_all(x[0]); });
  s.primitive("gather_rows", {{3, 2}}, [&](const V& x) { return gather_rows(x[0], idx); });
  s.primitive("scatter_add_rows", {{4, 2}}, [&](const V& x) { return scatter_add_rows(x[0], idx, 3); });
  s.primitive("tanh", {{3, 3}}, [](const V& x) { return tanh(x[0]); });
  s.primitive("sigmoid", {{3, 3}}, [](const V& x) { return sigmoid(x[0]); });
  s.primitive("relu", {{3, 3}}, [](const V& x) { return relu(x[0]); });
  s.primitive("exp", {{3, 3}}, [](const V& x) { return exp(x[0]); });
  s.primitive("log", {{3, 3}}, [](const V& x) { return log(x[0]); }, 0.1, 2.0);
  s.primitive("abs", {{3, 3}}, [](const V& x) { return abs(x[0]); });
  s.primitive("softmax", {{3, 4}}, [](const V& x) { return softmax(x[0]); });
  s.primitive("clamp", {{3, 3}}, [](const V& x) { return clamp(x[0], -1.0, 1.0); });
}

SequenceSample tiny_sample(std::uint64_t seed) {
  SynthConfig c;
  c.n_sequences = 1;
  c.n_core = 3;
  c.n_extra = 1;
  c.embed_dim = 3;
  c.weeks = 4;
  c.p_within = 0.6;
  c.p_across = 0.3;
  c.post_probability = 0.7;
  return generate_synthetic(c, seed).front();
}

void check_encoders(Suite& s, const SequenceSample& sample) {
  constexpr std::size_t d = 4;
  const EncoderInputs in = prepare_encoder_inputs(sample, d);
  for (Aggregation agg : {Aggregation::kSum, Aggregation::kMean}) {
    ParameterStore store;
    DnrlLayer layer = DnrlLayer::create(store, "dnrl", d, s.rng(), agg);
    // Queries start small; widen them so attention is exercised.
    for (double& w : layer.w_que.weight.mutable_data()) w = std::uniform_real_distribution<double>(-0.5, 0.5)(s.rng());
    Tensor h = s.random({in.n_obs, d}, -1.0, 1.0);
    auto params = all_params(store);
    params.push_back(h);
    s.composed("encoder.dnrl_layer." + std::string(aggregation_name(agg)), [&] { return s.weighted(layer.forward(h, in)); }, params);
  }
  {
    ParameterStore store;
    TsaReadout readout = TsaReadout::create(store, "tsa", d, s.rng());
    Tensor h = s.random({in.n_obs, d}, -1.0, 1.0);
    auto params = all_params(store);
    params.push_back(h);
    s.composed("encoder.tsa_readout", [&] { return s.weighted(readout.forward(h, in)); }, params);
  }
  {
    ParameterStore store;
    PosteriorHead head = PosteriorHead::create(store, "posterior", d, s.rng());
    Tensor u = s.random({in.n_accounts, d}, -1.0, 1.0);
    auto params = all_params(store);
    params.push_back(u);
    s.composed("encoder.posterior", [&] {
      GaussianPosterior q = head.forward(u, in.prior_mask);
      return s.weighted(concat_cols({q.mu, q.sigma}));
    }, params);
  }
  for (EncoderKind kind : {EncoderKind::kTemporalGraph, EncoderKind::kGcn, EncoderKind::kNoHidden}) {
    ParameterStore store;
    auto enc = make_encoder(kind, store, sample.embed_dim, d, s.rng());
    for (auto [name, t] : store.items()) {
      if (name.find("w_que") != std::string::npos) {
        for (double& w : t.mutable_data()) w = std::uniform_real_distribution<double>(-0.5, 0.5)(s.rng());
      }
    }
    s.composed("encoder." + std::string(encoder_name(kind)), [&] {
      GaussianPosterior q = enc->encode(in);
      return s.weighted(concat_cols({q.mu, q.sigma}));
    }, all_params(store));
  }
}

OdeGraph three_node_graph() {
  SocialGraph g(3);
  g.add_edge(0, 1);
  g.add_edge(1, 2);
  g.add_edge(2, 1);
  return OdeGraph::from(g);
}

void check_ode(Suite& s) {
  constexpr std::size_t d = 3;
  const OdeGraph g = three_node_graph();
  for (OdeKind kind : {OdeKind::kNri, OdeKind::kDeGroot, OdeKind::kFj, OdeKind::kHkBcm, OdeKind::kNoUpdate}) {
    ParameterStore store;
    OdeOptions o;
    o.kind = kind;
    o.degroot_rank = 2;
    o.edge_hidden = 4;
    o.layers = 2;
    auto f = make_ode(o, store, g.n_nodes, d, s.rng());
    Tensor z = s.random({g.n_nodes, d}, -1.0, 1.0);
    Tensor z0 = s.random({g.n_nodes, d}, -1.0, 1.0);
    auto params = all_params(store);
    params.push_back(z);
    params.push_back(z0);
    s.composed("ode." + std::string(ode_name(kind)), [&] { return s.weighted(f->derivative(z, z0, g)); }, params);
  }
  for (SolverMethod method : {SolverMethod::kEuler, SolverMethod::kRk4}) {
    ParameterStore store;
    OdeOptions o;
    o.edge_hidden = 4;
    auto f = make_ode(o, store, g.n_nodes, d, s.rng());
    Tensor z0 = s.random({g.n_nodes, d}, -1.0, 1.0);
    const std::vector<double> grid = {0.0, 0.5, 1.0};
    auto params = all_params(store);
    params.push_back(z0);
    s.composed("solve." + std::string(solver_name(method)), [&] {
      return s.weighted(solve(*f, g, z0, grid, method, 0.25).stacked());
    }, params);
  }
}

void check_model(Suite& s, const SequenceSample& sample) {
  for (Task task : {Task::kInteraction, Task::kPolarityReg, Task::kPolarityCls, Task::kReconstruction}) {
    ModelConfig mc;
    mc.latent_dim = 4;
    mc.ode.edge_hidden = 4;
    mc.step = 0.5;
    mc.task = task;
    LsdsModel model(mc, sample.n_nodes(), sample.embed_dim, s.rng()());
    for (auto [name, t] : model.params().items()) {
      if (name.find("w_que") != std::string::npos || name.rfind("decoder.interaction", 0) == 0) {
        for (double& w : t.mutable_data()) w = std::uniform_real_distribution<double>(-0.5, 0.5)(s.rng());
      }
    }
    const PreparedSequence seq = prepare_sequence(sample, mc.latent_dim);
    const auto negatives = negative_sample(seq.positives, sample.n_nodes(), 1, 11);
    s.composed("model." + std::string(task_name(task)), [&] {
      auto fwd = model.forward(seq, 5);
      return total_loss(model.decoder_loss(seq, fwd, negatives), kl_gaussian(fwd.posterior), 0.5);
    }, all_params(model.params()));
  }
}

}  // namespace

std::vector<GradcheckResult> gradcheck_suite(std::uint64_t seed) {
  Suite s(seed);
  check_primitives(s);
  const SequenceSample sample = tiny_sample(seed);
  check_encoders(s, sample);
  check_ode(s);
  check_model(s, sample);
  return s.take();
}

}  // namespace lsds
