#include "lsds/encoder.hpp"

#include <cmath>

namespace lsds {

std::string_view encoder_name(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::kTemporalGraph:
      return "temporal_graph";
    case EncoderKind::kGcn:
      return "gcn";
    case EncoderKind::kNoHidden:
      return "no_hidden";
  }
  return "?";
}

std::optional<EncoderKind> parse_encoder(std::string_view name) {
  for (EncoderKind k : {EncoderKind::kTemporalGraph, EncoderKind::kGcn, EncoderKind::kNoHidden}) {
    if (encoder_name(k) == name) return k;
  }
  return std::nullopt;
}

std::string_view aggregation_name(Aggregation a) { return a == Aggregation::kSum ? "sum" : "mean"; }

std::optional<Aggregation> parse_aggregation(std::string_view name) {
  if (name == "sum") return Aggregation::kSum;
  if (name == "mean") return Aggregation::kMean;
  return std::nullopt;
}

std::vector<double> temporal_encoding(double delta_t, std::size_t d) {
  if (d == 0 || d % 2 != 0) throw ConfigError("temporal encoding needs an even dimension, got " + std::to_string(d));
  std::vector<double> te(d);
  for (std::size_t i = 0; 2 * i < d; ++i) {
    const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d));
    te[2 * i] = std::sin(delta_t / freq);
    te[2 * i + 1] = std::cos(delta_t / freq);
  }
  return te;
}

Tensor temporal_encoding_rows(std::span<const double> delta_t, std::size_t d) {
  std::vector<double> data;
  data.reserve(delta_t.size() * d);
  for (double dt : delta_t) {
    auto te = temporal_encoding(dt, d);
    data.insert(data.end(), te.begin(), te.end());
  }
  return Tensor::matrix(delta_t.size(), d, std::move(data));
}

std::vector<double> gcn_history_weights(std::size_t count) {
  std::vector<double> w(count);
  for (std::size_t k = 0; k < count; ++k) w[k] = std::ldexp(1.0, -static_cast<int>(count - k));
  return w;
}

EncoderInputs prepare_encoder_inputs(const SequenceSample& sample, std::size_t latent_dim) {
  const std::size_t n = sample.n_nodes();
  const std::size_t dim = sample.embed_dim;
  const std::size_t d = latent_dim;
  EncoderInputs in;
  in.n_accounts = n;

  TemporalGraph tg = build_temporal_graph(sample);
  std::vector<double> mask(n, 1.0);
  for (std::size_t a : tg.accounts_without_observations) mask[a] = 0.0;
  in.prior_mask = Tensor::column(mask);

  in.n_obs = tg.nodes.size();
  std::vector<double> inv_count(n, 0.0);
  if (in.n_obs > 0) {
    std::vector<double> feats;
    feats.reserve(in.n_obs * dim);
    std::vector<double> first_time(n, 0.0);
    std::vector<bool> seen(n, false);
    std::vector<double> dt_start;
    for (const ObservationNode& o : tg.nodes) {
      const auto& e = sample.observations[o.account].embeddings[o.series_index];
      feats.insert(feats.end(), e.begin(), e.end());
      if (!seen[o.account]) {
        seen[o.account] = true;
        first_time[o.account] = o.time;
      }
      in.obs_account.push_back(o.account);
      dt_start.push_back(o.time - first_time[o.account]);
      inv_count[o.account] += 1.0;
    }
    in.obs_features = Tensor::matrix(in.n_obs, dim, std::move(feats));
    in.obs_te_start = temporal_encoding_rows(dt_start, d);
    in.obs_dt_start = Tensor::column(std::move(dt_start));
  }
  for (double& c : inv_count) c = c > 0 ? 1.0 / c : 0.0;
  in.inv_obs_count = Tensor::column(inv_count);

  if (tg.n_edges() > 0) {
    in.edge_src = tg.src;
    in.edge_tgt = tg.tgt;
    in.edge_te = temporal_encoding_rows(tg.delta_t, d);
    in.edge_dt = Tensor::column(tg.delta_t);
  }
  std::vector<double> inv_in(in.n_obs, 0.0);
  for (std::size_t t : in.edge_tgt) inv_in[t] += 1.0;
  for (double& c : inv_in) c = c > 0 ? 1.0 / c : 0.0;
  in.inv_in_degree = Tensor::column(std::move(inv_in));

  // GCN inputs.
  std::vector<double> weighted(n * dim, 0.0), last(n * dim, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    const ObservationSeries& s = sample.observations[a];
    const std::size_t count = s.count_before_boundary();
    const auto w = gcn_history_weights(count);
    std::size_t k = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s.times[j] >= 0.0) continue;
      for (std::size_t c = 0; c < dim; ++c) {
        weighted[a * dim + c] += w[k] * s.embeddings[j][c];
        last[a * dim + c] = s.embeddings[j][c];
      }
      ++k;
    }
  }
  in.weighted_features = Tensor::matrix(n, dim, std::move(weighted));
  in.last_features = Tensor::matrix(n, dim, std::move(last));

  const auto hoods = sample.graph.neighborhoods();
  std::vector<double> gw;
  for (std::size_t i = 0; i < n; ++i) {
    const double ni = static_cast<double>(hoods[i].size() + 1);
    auto push = [&](std::size_t j) {
      const double nj = static_cast<double>(hoods[j].size() + 1);
      in.gcn_src.push_back(j);
      in.gcn_dst.push_back(i);
      gw.push_back(1.0 / std::sqrt(ni * nj));
    };
    push(i);
    for (std::size_t j : hoods[i]) push(j);
  }
  in.gcn_weight = Tensor::column(std::move(gw));
  return in;
}

// ---------------------------------------------------------------------------

DnrlLayer DnrlLayer::create(ParameterStore& store, const std::string& name, std::size_t d, Rng& rng,
                            Aggregation aggregation) {
  DnrlLayer l;
  l.aggregation = aggregation;
  l.w_temp = Linear::create(store, name + ".w_temp", d + 1, d, rng, false);
  l.w_val = Linear::create(store, name + ".w_val", d, d, rng, false);
  l.w_key = Linear::create(store, name + ".w_key", d, d, rng, false);
  l.w_que = Linear::create(store, name + ".w_que", d, d, rng, false);
  // Small queries keep the unnormalized sum over all sources near zero at
  // the start, so each layer begins close to the identity.
  for (double& w : l.w_que.weight.mutable_data()) w *= kQueryInitScale;
  return l;
}

Tensor DnrlLayer::forward(const Tensor& h, const EncoderInputs& in) const {
  if (in.edge_src.empty()) return h;
  const std::size_t d = h.cols();
  Tensor h_src = gather_rows(h, in.edge_src);
  Tensor h_hat = relu(w_temp.forward(concat_cols({h_src, in.edge_dt}))) + in.edge_te;
  Tensor message = w_val.forward(h_hat);
  Tensor key = w_key.forward(h_hat);
  Tensor query = gather_rows(w_que.forward(h), in.edge_tgt);
  Tensor attention = scale(sum(key * query, 1), 1.0 / std::sqrt(static_cast<double>(d)));
  Tensor aggregate = scatter_add_rows(broadcast_cols(attention, d) * message, in.edge_tgt, h.rows());
  if (aggregation == Aggregation::kMean) aggregate = aggregate * broadcast_cols(in.inv_in_degree, d);
  return h + relu(aggregate);
}

TsaReadout TsaReadout::create(ParameterStore& store, const std::string& name, std::size_t d, Rng& rng) {
  TsaReadout r;
  r.w_temp = Linear::create(store, name + ".w_temp", d + 1, d, rng, false);
  r.w_a = Linear::create(store, name + ".w_a", d, d, rng, false);
  return r;
}

Tensor TsaReadout::forward(const Tensor& h, const EncoderInputs& in) const {
  const std::size_t d = h.cols();
  const std::size_t n = in.n_accounts;
  if (in.n_obs == 0) return Tensor::zeros({n, d});
  Tensor inv = broadcast_cols(in.inv_obs_count, d);
  Tensor h_hat = relu(w_temp.forward(concat_cols({h, in.obs_dt_start}))) + in.obs_te_start;
  Tensor seq_mean = scatter_add_rows(h_hat, in.obs_account, n) * inv;
  Tensor a = tanh(w_a.forward(seq_mean));
  Tensor gate = sigmoid(sum(gather_rows(a, in.obs_account) * h_hat, 1));
  return scatter_add_rows(broadcast_cols(gate, d) * h_hat, in.obs_account, n) * inv;
}

PosteriorHead PosteriorHead::create(ParameterStore& store, const std::string& name, std::size_t d, Rng& rng) {
  PosteriorHead p;
  p.affine = Linear::create(store, name, d, 2 * d, rng);
  std::span<double> bias = p.affine.bias.mutable_data();
  for (std::size_t k = d; k < 2 * d; ++k) bias[k] = kInitialLogSigma;
  return p;
}

GaussianPosterior PosteriorHead::forward(const Tensor& u, const Tensor& prior_mask) const {
  const std::size_t d = affine.out_features() / 2;
  Tensor raw = affine.forward(u);
  Tensor mask = broadcast_cols(prior_mask, d);
  GaussianPosterior q;
  q.mu = slice_cols(raw, 0, d) * mask;
  q.sigma = exp(clamp(slice_cols(raw, d, 2 * d) * mask, -kLogSigmaBound, kLogSigmaBound));
  return q;
}

// ---------------------------------------------------------------------------

TemporalGraphEncoder::TemporalGraphEncoder(ParameterStore& store, std::size_t embed_dim,
                                           std::size_t latent_dim, Rng& rng, Aggregation aggregation) {
  if (latent_dim % 2 != 0) throw ConfigError("temporal_graph encoder needs an even latent_dim");
  input_ = Linear::create(store, "encoder.input", embed_dim, latent_dim, rng);
  for (std::size_t l = 0; l < kLayers; ++l) {
    layers_.push_back(DnrlLayer::create(store, "encoder.dnrl" + std::to_string(l), latent_dim, rng, aggregation));
  }
  readout_ = TsaReadout::create(store, "encoder.tsa", latent_dim, rng);
  posterior_ = PosteriorHead::create(store, "encoder.posterior", latent_dim, rng);
}

Tensor TemporalGraphEncoder::embed_observations(const EncoderInputs& in) const {
  Tensor h = input_.forward(in.obs_features);
  for (const DnrlLayer& layer : layers_) h = layer.forward(h, in);
  return h;
}

GaussianPosterior TemporalGraphEncoder::encode(const EncoderInputs& in) const {
  const std::size_t d = input_.out_features();
  Tensor u = in.n_obs == 0 ? Tensor::zeros({in.n_accounts, d})
                           : readout_.forward(embed_observations(in), in);
  return posterior_.forward(u, in.prior_mask);
}

GcnEncoder::GcnEncoder(ParameterStore& store, std::size_t embed_dim, std::size_t latent_dim, Rng& rng) {
  input_ = Linear::create(store, "encoder.input", embed_dim, latent_dim, rng);
  for (std::size_t l = 0; l < kLayers; ++l) {
    layers_.push_back(Linear::create(store, "encoder.gcn" + std::to_string(l), latent_dim, latent_dim, rng, false));
  }
  posterior_ = PosteriorHead::create(store, "encoder.posterior", latent_dim, rng);
}

Tensor GcnEncoder::propagate(const EncoderInputs& in) const {
  const std::size_t d = input_.out_features();
  Tensor h = input_.forward(in.weighted_features);
  Tensor w = broadcast_cols(in.gcn_weight, d);
  for (const Linear& layer : layers_) {
    Tensor hw = layer.forward(h);
    h = relu(scatter_add_rows(gather_rows(hw, in.gcn_src) * w, in.gcn_dst, in.n_accounts));
  }
  return h;
}

GaussianPosterior GcnEncoder::encode(const EncoderInputs& in) const {
  return posterior_.forward(propagate(in), in.prior_mask);
}

NoHiddenEncoder::NoHiddenEncoder(ParameterStore& store, std::size_t embed_dim, std::size_t latent_dim,
                                 Rng& rng) {
  projection_ = Linear::create(store, "encoder.input", embed_dim, latent_dim, rng);
}

GaussianPosterior NoHiddenEncoder::encode(const EncoderInputs& in) const {
  const std::size_t d = projection_.out_features();
  GaussianPosterior q;
  q.mu = projection_.forward(in.last_features) * broadcast_cols(in.prior_mask, d);
  q.sigma = Tensor::full({in.n_accounts, d}, 1.0);
  return q;
}

std::unique_ptr<Encoder> make_encoder(EncoderKind kind, ParameterStore& store, std::size_t embed_dim,
                                      std::size_t latent_dim, Rng& rng, Aggregation aggregation) {
  switch (kind) {
    case EncoderKind::kTemporalGraph:
      return std::make_unique<TemporalGraphEncoder>(store, embed_dim, latent_dim, rng, aggregation);
    case EncoderKind::kGcn:
      return std::make_unique<GcnEncoder>(store, embed_dim, latent_dim, rng);
    case EncoderKind::kNoHidden:
      return std::make_unique<NoHiddenEncoder>(store, embed_dim, latent_dim, rng);
  }
  throw ConfigError("unknown encoder kind");
}

Tensor sample_initial_state(const GaussianPosterior& posterior, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> eps(posterior.mu.size());
  for (double& e : eps) e = normal(rng);
  Tensor noise = Tensor::from(posterior.mu.shape(), std::move(eps));
  return posterior.mu + posterior.sigma * noise;
}

}  // namespace lsds
