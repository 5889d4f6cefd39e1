#pragma once

// Variational training: encoder -> graph ODE -> task decoder, optimized on
// decoder loss plus an annealed KL term.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lsds/decoders.hpp"
#include "lsds/encoder.hpp"
#include "lsds/graph_data.hpp"
#include "lsds/metrics.hpp"
#include "lsds/nn.hpp"
#include "lsds/ode.hpp"

namespace lsds {

struct ModelConfig {
  EncoderKind encoder = EncoderKind::kTemporalGraph;
  std::size_t latent_dim = 16;
  Aggregation aggregation = Aggregation::kSum;  // DNRL message combination
  OdeOptions ode;
  SolverMethod solver = SolverMethod::kRk4;
  double step = 0.5;               // solver step in weeks; must divide one week
  double time_scale = 0.1;         // ODE time units per week: dz/dt = time_scale * f(z)
  std::size_t decoder_hidden = 0;  // 0 means latent_dim
  Task task = Task::kInteraction;

  void validate() const;
};

struct TrainConfig {
  double lambda0 = 0.005;
  std::size_t epochs = 30;
  double learning_rate = 1e-3;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  std::array<double, 3> split = {0.8, 0.1, 0.1};
  std::size_t k_neg = 1;
  double clip_norm = 10.0;
  std::size_t workers = 1;   // threads for evaluation
  double sweep_bucket = 1.0;  // weeks per horizon-sweep bucket

  void validate() const;
};

// Sum over nodes and dims of 0.5 (mu^2 + sigma^2 - ln sigma^2 - 1).
Tensor kl_gaussian(const GaussianPosterior& q);
// 0 if epoch <= 10 or iter <= 10, else lambda0 (1 - 0.99^(epoch - 10)).
double kl_coefficient(std::size_t epoch, std::size_t iter, double lambda0);
Tensor total_loss(const Tensor& dec_loss, const Tensor& kl, double lambda);

// Mixes a base seed with a path of integers into an independent seed.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path);

// For every positive <i, j, t, r>, k_neg events <i, j', t, r> with j' uniform
// over nodes other than i and other than the partners of i at (t, r).
std::vector<InteractionEvent> negative_sample(const std::vector<InteractionEvent>& positives,
                                              std::size_t n_nodes, std::size_t k_neg, std::uint64_t seed);

struct Split {
  std::vector<std::size_t> train, val, test;  // indices into the sample list
};
// Shuffled partition by sequence; sizes round(f * n) for val and test, the
// rest train. Throws ConfigError if any part is empty.
Split split_sequences(std::size_t n_samples, const std::array<double, 3>& fractions, std::uint64_t seed);

// Per-sequence constants: encoder inputs, ODE graph, time grid and the
// supervision targets inside (0, horizon].
struct PreparedSequence {
  const SequenceSample* sample = nullptr;
  EncoderInputs encoder;
  OdeGraph graph;
  std::vector<double> grid;  // integer weeks 0 .. ceil(horizon)
  std::vector<InteractionEvent> positives;
  std::vector<PolarityLabel> labels;
  std::vector<std::size_t> obs_rows;  // trajectory rows of future observations
  std::vector<double> obs_times;
  Tensor obs_targets;                 // n x D
};

PreparedSequence prepare_sequence(const SequenceSample& sample, std::size_t latent_dim);

class LsdsModel {
 public:
  LsdsModel(const ModelConfig& config, std::size_t n_nodes, std::size_t embed_dim, std::uint64_t seed);

  struct Forward {
    GaussianPosterior posterior;
    LatentTrajectory trajectory;
    Tensor states;  // trajectory.stacked()
  };
  // With a sample seed z0 is drawn from the posterior; without one z0 = mu.
  Forward forward(const PreparedSequence& seq, std::optional<std::uint64_t> sample_seed) const;
  Tensor decoder_loss(const PreparedSequence& seq, const Forward& fwd,
                      const std::vector<InteractionEvent>& negatives) const;
  Predictions predict(const PreparedSequence& seq, const Forward& fwd,
                      const std::vector<InteractionEvent>& negatives) const;

  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const ModelConfig& config() const { return config_; }
  std::size_t n_nodes() const { return n_nodes_; }
  const Encoder& encoder() const { return *encoder_; }
  const OdeFunction& ode() const { return *ode_; }

 private:
  ModelConfig config_;
  std::size_t n_nodes_;
  std::size_t embed_dim_;
  ParameterStore store_;
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<OdeFunction> ode_;
  std::optional<InteractionScorer> scorer_;
  std::optional<PolarityHead> polarity_;
  std::optional<ReconstructionHead> reconstruction_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean over non-skipped steps
  double val_metric = 0.0;
  double test_metric = 0.0;
  double best_val = 0.0;    // best validation metric so far
  std::size_t skipped_steps = 0;
};

struct RunRecord {
  std::string metric;  // selection metric name
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  MetricMap test_metrics;  // from the best checkpoint
  std::map<long, MetricMap> test_sweep;
  std::vector<std::filesystem::path> checkpoints;
};

struct TrainOptions {
  std::optional<std::filesystem::path> run_dir;  // no files written when unset
  bool resume = false;                           // continue from run_dir/checkpoints/last.bin
  std::function<void(const std::string&)> log;   // receives "epoch=.. iter=.. loss=.. lambda=.." lines
};

// Evaluates with z0 = mu and deterministic negatives.
Predictions evaluate(const LsdsModel& model, const std::vector<PreparedSequence>& seqs,
                     std::span<const std::size_t> indices, std::uint64_t seed, std::size_t k_neg,
                     std::size_t workers = 1);

// Result of a training run, including the model restored to its best
// checkpoint and the split that was used.
struct TrainResult {
  RunRecord record;
  std::unique_ptr<LsdsModel> model;
  Split split;
};

// Throws NumericError after 3 consecutive non-finite steps.
TrainResult train(const ModelConfig& model_config, const TrainConfig& config,
                  const std::vector<SequenceSample>& samples, const TrainOptions& options = {});

// Number of nodes a model must cover for these samples.
std::size_t max_nodes(const std::vector<SequenceSample>& samples);
std::size_t common_embed_dim(const std::vector<SequenceSample>& samples);

// Checkpoint contents beyond the parameters.
NamedTensors model_state(const LsdsModel& model);

void write_metrics_json(const std::filesystem::path& path, const RunRecord& record);

}  // namespace lsds
