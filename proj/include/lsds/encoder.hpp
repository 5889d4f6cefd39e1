#pragma once

// Encoders map the pre-boundary observations of a sequence to a factorized
// Gaussian posterior over initial latent states, one row per account.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lsds/graph_data.hpp"
#include "lsds/nn.hpp"
#include "lsds/tensor.hpp"

namespace lsds {

enum class EncoderKind { kTemporalGraph, kGcn, kNoHidden };

std::string_view encoder_name(EncoderKind kind);
std::optional<EncoderKind> parse_encoder(std::string_view name);

// How a DNRL layer combines the attention-weighted messages arriving at an
// observation: plain sum, or sum divided by the number of incoming edges.
enum class Aggregation { kSum, kMean };

std::string_view aggregation_name(Aggregation a);
std::optional<Aggregation> parse_aggregation(std::string_view name);

struct GaussianPosterior {
  Tensor mu;     // N x d
  Tensor sigma;  // N x d, strictly positive
};

// Sinusoidal encoding of a time gap: entry 2i is sin(dt / 10000^(2i/d)) and
// entry 2i+1 the matching cosine. d must be even.
std::vector<double> temporal_encoding(double delta_t, std::size_t d);
// Stacks temporal_encoding(dt, d) for every dt (constant, len x d).
Tensor temporal_encoding_rows(std::span<const double> delta_t, std::size_t d);

// Constant per-sequence inputs, built once and reused every step.
struct EncoderInputs {
  std::size_t n_accounts = 0;
  Tensor prior_mask;  // N x 1; 0 for accounts with no pre-boundary observation

  // Temporal-graph encoder.
  std::size_t n_obs = 0;
  Tensor obs_features;  // n_obs x D
  std::vector<std::size_t> edge_src, edge_tgt;
  Tensor edge_dt;  // E x 1
  Tensor edge_te;  // E x d
  std::vector<std::size_t> obs_account;
  Tensor obs_dt_start;    // n_obs x 1, t - earliest t of the same account
  Tensor obs_te_start;    // n_obs x d
  Tensor inv_obs_count;   // N x 1, 1/|obs| (0 if none)
  Tensor inv_in_degree;   // n_obs x 1, 1/(incoming temporal edges) (0 if none)

  // GCN encoder.
  Tensor weighted_features;  // N x D, geometric weights 1/2^k over history
  std::vector<std::size_t> gcn_src, gcn_dst;  // includes self edges
  Tensor gcn_weight;                          // E x 1, 1/c_ij

  // No-hidden encoder.
  Tensor last_features;  // N x D, zeros where absent
};

EncoderInputs prepare_encoder_inputs(const SequenceSample& sample, std::size_t latent_dim);

// Geometric weights of the GCN input for a history of `count` observations,
// earliest first: 1/2^count, ..., 1/4, 1/2.
std::vector<double> gcn_history_weights(std::size_t count);

// One attended message-passing layer over the temporal graph.
struct DnrlLayer {
  Linear w_temp;  // (d+1) -> d
  Linear w_val, w_key, w_que;
  Aggregation aggregation = Aggregation::kSum;
  static constexpr double kQueryInitScale = 0.05;

  static DnrlLayer create(ParameterStore& store, const std::string& name, std::size_t d, Rng& rng,
                          Aggregation aggregation = Aggregation::kSum);
  Tensor forward(const Tensor& h, const EncoderInputs& in) const;
};

// Temporal self-attention readout of each account's observation embeddings.
struct TsaReadout {
  Linear w_temp;  // (d+1) -> d
  Linear w_a;     // d -> d

  static TsaReadout create(ParameterStore& store, const std::string& name, std::size_t d, Rng& rng);
  // Returns N x d; rows of accounts without observations are zero.
  Tensor forward(const Tensor& h, const EncoderInputs& in) const;
};

// Affine d -> 2d; first half is mu, second half s with sigma = exp(clamp(s)).
struct PosteriorHead {
  Linear affine;
  static constexpr double kLogSigmaBound = 10.0;
  // Starting value of the log-sigma bias; a unit-variance start drowns the
  // untrained mean in sampling noise.
  static constexpr double kInitialLogSigma = -3.0;

  static PosteriorHead create(ParameterStore& store, const std::string& name, std::size_t d, Rng& rng);
  // Masked rows (mask 0) become the prior N(0, I).
  GaussianPosterior forward(const Tensor& u, const Tensor& prior_mask) const;
};

class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual GaussianPosterior encode(const EncoderInputs& in) const = 0;
  virtual EncoderKind kind() const = 0;
};

class TemporalGraphEncoder : public Encoder {
 public:
  static constexpr std::size_t kLayers = 2;

  TemporalGraphEncoder(ParameterStore& store, std::size_t embed_dim, std::size_t latent_dim, Rng& rng,
                       Aggregation aggregation = Aggregation::kSum);
  GaussianPosterior encode(const EncoderInputs& in) const override;
  EncoderKind kind() const override { return EncoderKind::kTemporalGraph; }

  // Per-observation embeddings after the message-passing layers.
  Tensor embed_observations(const EncoderInputs& in) const;

  const Linear& input_projection() const { return input_; }
  const std::vector<DnrlLayer>& layers() const { return layers_; }
  const TsaReadout& readout() const { return readout_; }
  const PosteriorHead& posterior() const { return posterior_; }

 private:
  Linear input_;
  std::vector<DnrlLayer> layers_;
  TsaReadout readout_;
  PosteriorHead posterior_;
};

class GcnEncoder : public Encoder {
 public:
  static constexpr std::size_t kLayers = 2;

  GcnEncoder(ParameterStore& store, std::size_t embed_dim, std::size_t latent_dim, Rng& rng);
  GaussianPosterior encode(const EncoderInputs& in) const override;
  EncoderKind kind() const override { return EncoderKind::kGcn; }

  // Node representations after the graph-convolution layers (N x d).
  Tensor propagate(const EncoderInputs& in) const;

  const Linear& input_projection() const { return input_; }
  const std::vector<Linear>& layers() const { return layers_; }

 private:
  Linear input_;
  std::vector<Linear> layers_;  // d -> d, no bias
  PosteriorHead posterior_;
};

// Uses the projected latest pre-boundary observation directly; sigma is 1.
class NoHiddenEncoder : public Encoder {
 public:
  NoHiddenEncoder(ParameterStore& store, std::size_t embed_dim, std::size_t latent_dim, Rng& rng);
  GaussianPosterior encode(const EncoderInputs& in) const override;
  EncoderKind kind() const override { return EncoderKind::kNoHidden; }

  const Linear& projection() const { return projection_; }

 private:
  Linear projection_;
};

std::unique_ptr<Encoder> make_encoder(EncoderKind kind, ParameterStore& store, std::size_t embed_dim,
                                      std::size_t latent_dim, Rng& rng,
                                      Aggregation aggregation = Aggregation::kSum);

// z = mu + sigma * eps with eps ~ N(0, I) drawn from `seed`. Differentiable
// in mu and sigma.
Tensor sample_initial_state(const GaussianPosterior& posterior, std::uint64_t seed);

}  // namespace lsds
