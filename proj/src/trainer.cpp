#include "lsds/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "json.hpp"

namespace lsds {

void ModelConfig::validate() const {
  if (latent_dim == 0) throw ConfigError("latent_dim must be positive");
  if (encoder == EncoderKind::kTemporalGraph && latent_dim % 2 != 0) {
    throw ConfigError("latent_dim must be even for the temporal_graph encoder");
  }
  if (ode.layers == 0) throw ConfigError("ode_layers must be >= 1");
  if (ode.degroot_rank == 0) throw ConfigError("degroot_rank must be >= 1");
  if (ode.edge_hidden == 0) throw ConfigError("edge_hidden must be >= 1");
  if (!(time_scale > 0.0)) throw ConfigError("time_scale must be positive");
  if (!(step > 0.0) || step > 1.0) throw ConfigError("step must lie in (0, 1]");
  const double per_week = 1.0 / step;
  if (std::fabs(per_week - std::round(per_week)) > 1e-9) {
    throw ConfigError("step must divide one week evenly (got " + std::to_string(step) + ")");
  }
}

void TrainConfig::validate() const {
  if (!(lambda0 >= 0.0)) throw ConfigError("lambda0 must be >= 0");
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (k_neg == 0) throw ConfigError("k_neg must be >= 1");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (workers == 0) throw ConfigError("workers must be >= 1");
  if (!(sweep_bucket > 0.0)) throw ConfigError("sweep_bucket must be positive");
  double total = 0.0;
  for (double f : split) {
    if (!(f >= 0.0)) throw ConfigError("split fractions must be non-negative");
    total += f;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

// ---------------------------------------------------------------------------

Tensor kl_gaussian(const GaussianPosterior& q) {
  Tensor var = q.sigma * q.sigma;
  Tensor terms = q.mu * q.mu + var - log(var);
  return scale(add_scalar(sum_all(terms), -static_cast<double>(q.mu.size())), 0.5);
}

double kl_coefficient(std::size_t epoch, std::size_t iter, double lambda0) {
  if (epoch <= 10 || iter <= 10) return 0.0;
  return lambda0 * (1.0 - std::pow(0.99, static_cast<double>(epoch - 10)));
}

Tensor total_loss(const Tensor& dec_loss, const Tensor& kl, double lambda) {
  if (lambda == 0.0) return dec_loss;
  return dec_loss + scale(kl, lambda);
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(base);
  for (std::uint64_t p : path) h = mix(h ^ mix(p));
  return h;
}

std::vector<InteractionEvent> negative_sample(const std::vector<InteractionEvent>& positives,
                                              std::size_t n_nodes, std::size_t k_neg, std::uint64_t seed) {
  if (k_neg == 0) throw ContractError("k_neg must be >= 1");
  using Key = std::tuple<std::size_t, double, std::size_t>;
  std::map<Key, std::set<std::size_t>> partners;
  for (const InteractionEvent& e : positives) {
    partners[{e.src, e.time, relation_index(e.relation)}].insert(e.dst);
  }
  Rng rng(seed);
  std::vector<InteractionEvent> out;
  out.reserve(positives.size() * k_neg);
  std::vector<std::size_t> candidates;
  for (const InteractionEvent& e : positives) {
    const auto& taken = partners[{e.src, e.time, relation_index(e.relation)}];
    candidates.clear();
    for (std::size_t j = 0; j < n_nodes; ++j) {
      if (j != e.src && !taken.contains(j)) candidates.push_back(j);
    }
    if (candidates.empty()) {
      throw ContractError("negative_sample: no candidate partner for node " + std::to_string(e.src) + " at t=" +
                          std::to_string(e.time));
    }
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    for (std::size_t k = 0; k < k_neg; ++k) {
      InteractionEvent neg = e;
      neg.dst = candidates[pick(rng)];
      out.push_back(neg);
    }
  }
  return out;
}

Split split_sequences(std::size_t n_samples, const std::array<double, 3>& fractions, std::uint64_t seed) {
  std::vector<std::size_t> order(n_samples);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(n_samples);
  const auto n_val = static_cast<std::size_t>(std::lround(fractions[1] * n));
  const auto n_test = static_cast<std::size_t>(std::lround(fractions[2] * n));
  if (n_val + n_test >= n_samples || n_val == 0 || n_test == 0) {
    throw ConfigError("split of " + std::to_string(n_samples) + " sequences leaves an empty part");
  }
  Split s;
  const std::size_t n_train = n_samples - n_val - n_test;
  s.train.assign(order.begin(), order.begin() + static_cast<long>(n_train));
  s.val.assign(order.begin() + static_cast<long>(n_train), order.begin() + static_cast<long>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<long>(n_train + n_val), order.end());
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

// ---------------------------------------------------------------------------

PreparedSequence prepare_sequence(const SequenceSample& sample, std::size_t latent_dim) {
  PreparedSequence p;
  p.sample = &sample;
  p.encoder = prepare_encoder_inputs(sample, latent_dim);
  p.graph = OdeGraph::from(sample.graph);
  const auto weeks = static_cast<std::size_t>(std::max(1.0, std::ceil(sample.horizon - 1e-9)));
  for (std::size_t w = 0; w <= weeks; ++w) p.grid.push_back(static_cast<double>(w));

  const double horizon = p.grid.back();
  auto in_window = [&](double t) { return t > 0.0 && t <= horizon + 1e-9; };
  for (const InteractionEvent& e : sample.interactions) {
    if (in_window(e.time)) p.positives.push_back(e);
  }
  for (const PolarityLabel& l : sample.polarity) {
    if (in_window(l.time)) p.labels.push_back(l);
  }
  LatentTrajectory grid_only;
  grid_only.times = p.grid;
  std::vector<double> targets;
  for (const ObservationSeries& s : sample.observations) {
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (!in_window(s.times[k])) continue;
      p.obs_rows.push_back(trajectory_row(grid_only, sample.n_nodes(), s.node, s.times[k]));
      p.obs_times.push_back(s.times[k]);
      targets.insert(targets.end(), s.embeddings[k].begin(), s.embeddings[k].end());
    }
  }
  p.obs_targets = Tensor::from({p.obs_rows.size(), sample.embed_dim}, std::move(targets));
  return p;
}

LsdsModel::LsdsModel(const ModelConfig& config, std::size_t n_nodes, std::size_t embed_dim, std::uint64_t seed)
    : config_(config), n_nodes_(n_nodes), embed_dim_(embed_dim) {
  config_.validate();
  Rng rng(seed);
  const std::size_t d = config_.latent_dim;
  encoder_ = make_encoder(config_.encoder, store_, embed_dim, d, rng, config_.aggregation);
  ode_ = make_ode(config_.ode, store_, n_nodes, d, rng);
  const std::size_t hidden = config_.decoder_hidden == 0 ? d : config_.decoder_hidden;
  switch (config_.task) {
    case Task::kInteraction:
      scorer_ = InteractionScorer::create(store_, d);
      break;
    case Task::kPolarityReg:
    case Task::kPolarityCls:
      polarity_ = PolarityHead::create(store_, d, hidden, rng);
      break;
    case Task::kReconstruction:
      reconstruction_ = ReconstructionHead::create(store_, d, embed_dim, rng);
      break;
  }
}

LsdsModel::Forward LsdsModel::forward(const PreparedSequence& seq, std::optional<std::uint64_t> sample_seed) const {
  if (seq.sample->n_nodes() > n_nodes_) throw DimensionError("sequence has more nodes than the model covers");
  if (seq.sample->embed_dim != embed_dim_) throw DimensionError("sequence embedding width differs from the model");
  Forward f;
  f.posterior = encoder_->encode(seq.encoder);
  Tensor z0 = sample_seed ? sample_initial_state(f.posterior, *sample_seed) : f.posterior.mu;
  if (ode_->kind() == OdeKind::kNoUpdate) {
    f.trajectory = solve(*ode_, seq.graph, z0, seq.grid, config_.solver, config_.step);
  } else {
    const double c = config_.time_scale;
    auto rhs = [&](const Tensor& z) { return scale(ode_->derivative(z, z0, seq.graph), c); };
    f.trajectory = solve(rhs, z0, seq.grid, config_.solver, config_.step);
  }
  f.states = f.trajectory.stacked();
  return f;
}

namespace {

struct EventBatch {
  std::vector<std::size_t> src_rows, dst_rows, relations;
  std::vector<double> labels, times;
};

EventBatch event_batch(const PreparedSequence& seq, const LatentTrajectory& traj,
                       const std::vector<InteractionEvent>& negatives) {
  EventBatch b;
  const std::size_t n = seq.sample->n_nodes();
  auto add = [&](const InteractionEvent& e, double y) {
    b.src_rows.push_back(trajectory_row(traj, n, e.src, e.time));
    b.dst_rows.push_back(trajectory_row(traj, n, e.dst, e.time));
    b.relations.push_back(relation_index(e.relation));
    b.labels.push_back(y);
    b.times.push_back(e.time);
  };
  for (const InteractionEvent& e : seq.positives) add(e, 1.0);
  for (const InteractionEvent& e : negatives) add(e, 0.0);
  return b;
}

std::vector<std::size_t> label_rows(const PreparedSequence& seq, const LatentTrajectory& traj) {
  std::vector<std::size_t> rows;
  for (const PolarityLabel& l : seq.labels) rows.push_back(trajectory_row(traj, seq.sample->n_nodes(), l.node, l.time));
  return rows;
}

}  // namespace

Tensor LsdsModel::decoder_loss(const PreparedSequence& seq, const Forward& fwd,
                               const std::vector<InteractionEvent>& negatives) const {
  switch (config_.task) {
    case Task::kInteraction: {
      const EventBatch b = event_batch(seq, fwd.trajectory, negatives);
      if (b.labels.empty()) return Tensor::scalar(0.0);
      Tensor logits = scorer_->score(gather_rows(fwd.states, b.src_rows), gather_rows(fwd.states, b.dst_rows),
                                     b.relations);
      return bce_with_logits(logits, b.labels);
    }
    case Task::kPolarityReg: {
      if (seq.labels.empty()) return Tensor::scalar(0.0);
      Tensor pred = polarity_->regression.forward(gather_rows(fwd.states, label_rows(seq, fwd.trajectory)));
      std::vector<double> y;
      for (const PolarityLabel& l : seq.labels) y.push_back(l.score);
      return gaussian_nll(pred, Tensor::column(std::move(y)));
    }
    case Task::kPolarityCls: {
      if (seq.labels.empty()) return Tensor::scalar(0.0);
      Tensor logits = polarity_->classification.forward(gather_rows(fwd.states, label_rows(seq, fwd.trajectory)));
      std::vector<std::size_t> y;
      for (const PolarityLabel& l : seq.labels) y.push_back(polarity_class(l.score));
      return cross_entropy(logits, y);
    }
    case Task::kReconstruction: {
      if (seq.obs_rows.empty()) return Tensor::scalar(0.0);
      Tensor pred = reconstruction_->affine.forward(gather_rows(fwd.states, seq.obs_rows));
      return gaussian_nll(pred, seq.obs_targets);
    }
  }
  throw ContractError("unknown task");
}

Predictions LsdsModel::predict(const PreparedSequence& seq, const Forward& fwd,
                               const std::vector<InteractionEvent>& negatives) const {
  Predictions p;
  p.task = config_.task;
  switch (config_.task) {
    case Task::kInteraction: {
      const EventBatch b = event_batch(seq, fwd.trajectory, negatives);
      if (b.labels.empty()) break;
      Tensor logits = scorer_->score(gather_rows(fwd.states, b.src_rows), gather_rows(fwd.states, b.dst_rows),
                                     b.relations);
      for (std::size_t k = 0; k < b.labels.size(); ++k) p.append(logits.data()[k], b.labels[k], b.times[k]);
      break;
    }
    case Task::kPolarityReg:
    case Task::kPolarityCls: {
      if (seq.labels.empty()) break;
      Tensor z = gather_rows(fwd.states, label_rows(seq, fwd.trajectory));
      if (config_.task == Task::kPolarityReg) {
        Tensor pred = polarity_->regression.forward(z);
        for (std::size_t k = 0; k < seq.labels.size(); ++k) {
          p.append(pred.data()[k], seq.labels[k].score, seq.labels[k].time);
        }
      } else {
        Tensor prob = softmax(clamp(polarity_->classification.forward(z), -kLogitClip, kLogitClip));
        for (std::size_t k = 0; k < seq.labels.size(); ++k) {
          p.append(prob.at(k, 1), static_cast<double>(polarity_class(seq.labels[k].score)), seq.labels[k].time);
        }
      }
      break;
    }
    case Task::kReconstruction: {
      if (seq.obs_rows.empty()) break;
      Tensor pred = reconstruction_->affine.forward(gather_rows(fwd.states, seq.obs_rows));
      const std::size_t dim = pred.cols();
      for (std::size_t k = 0; k < seq.obs_rows.size(); ++k) {
        for (std::size_t c = 0; c < dim; ++c) p.append(pred.at(k, c), seq.obs_targets.at(k, c), seq.obs_times[k]);
      }
      break;
    }
  }
  return p;
}

// ---------------------------------------------------------------------------

namespace {

void append(Predictions& into, const Predictions& part) {
  into.score.insert(into.score.end(), part.score.begin(), part.score.end());
  into.truth.insert(into.truth.end(), part.truth.begin(), part.truth.end());
  into.time.insert(into.time.end(), part.time.begin(), part.time.end());
}

Predictions evaluate_one(const LsdsModel& model, const PreparedSequence& seq, std::size_t index, std::uint64_t seed,
                         std::size_t k_neg) {
  NoGradGuard no_grad;
  std::vector<InteractionEvent> negatives;
  if (model.config().task == Task::kInteraction) {
    negatives = negative_sample(seq.positives, seq.sample->n_nodes(), k_neg, derive_seed(seed, {6, index}));
  }
  return model.predict(seq, model.forward(seq, std::nullopt), negatives);
}

}  // namespace

Predictions evaluate(const LsdsModel& model, const std::vector<PreparedSequence>& seqs,
                     std::span<const std::size_t> indices, std::uint64_t seed, std::size_t k_neg,
                     std::size_t workers) {
  std::vector<Predictions> parts(indices.size());
  const std::size_t n_threads = std::min(std::max<std::size_t>(workers, 1), std::max<std::size_t>(indices.size(), 1));
  if (n_threads <= 1) {
    for (std::size_t k = 0; k < indices.size(); ++k) {
      parts[k] = evaluate_one(model, seqs[indices[k]], indices[k], seed, k_neg);
    }
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(n_threads);
    for (std::size_t w = 0; w < n_threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t k = w; k < indices.size(); k += n_threads) {
            parts[k] = evaluate_one(model, seqs[indices[k]], indices[k], seed, k_neg);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  Predictions all;
  all.task = model.config().task;
  for (const Predictions& p : parts) append(all, p);
  return all;
}

std::size_t max_nodes(const std::vector<SequenceSample>& samples) {
  std::size_t n = 0;
  for (const auto& s : samples) n = std::max(n, s.n_nodes());
  return n;
}

std::size_t common_embed_dim(const std::vector<SequenceSample>& samples) {
  if (samples.empty()) throw ConfigError("data set is empty");
  const std::size_t d = samples.front().embed_dim;
  for (const auto& s : samples) {
    if (s.embed_dim != d) throw ConfigError("sequences disagree on embedding width: " + s.id);
  }
  return d;
}

NamedTensors model_state(const LsdsModel& model) {
  NamedTensors out;
  for (const auto& [name, t] : model.params().items()) out.emplace_back(name, t);
  return out;
}

namespace {

constexpr std::size_t kHistoryCols = 6;

NamedTensors snapshot(const LsdsModel& model, const Adam& adam) {
  NamedTensors out;
  for (const auto& [name, t] : model.params().items()) out.emplace_back(name, t.detach());
  for (auto& entry : adam.state()) out.push_back(std::move(entry));
  return out;
}

NamedTensors last_state(const LsdsModel& model, const Adam& adam, const RunRecord& record, std::size_t epoch,
                        std::size_t consecutive_skips) {
  NamedTensors out = snapshot(model, adam);
  out.emplace_back("meta.epoch", Tensor::scalar(static_cast<double>(epoch)));
  out.emplace_back("meta.best_epoch", Tensor::scalar(static_cast<double>(record.best_epoch)));
  out.emplace_back("meta.consecutive_skips", Tensor::scalar(static_cast<double>(consecutive_skips)));
  std::vector<double> hist;
  for (const EpochRecord& e : record.epochs) {
    hist.insert(hist.end(), {static_cast<double>(e.epoch), e.train_loss, e.val_metric, e.test_metric, e.best_val,
                             static_cast<double>(e.skipped_steps)});
  }
  out.emplace_back("meta.history", Tensor::from({record.epochs.size(), kHistoryCols}, hist));
  return out;
}

const Tensor& find(const NamedTensors& named, const std::string& name, const std::filesystem::path& path) {
  for (const auto& [n, t] : named) {
    if (n == name) return t;
  }
  throw CheckpointError(path.string() + ": missing entry " + name);
}

double metric_value(const Predictions& p, const std::string& metric, const char* split) {
  const MetricMap m = compute_metrics(p);
  auto it = m.find(metric);
  if (it == m.end()) {
    throw ConfigError(std::string(split) + " split has no examples on which " + metric + " is defined");
  }
  return it->second;
}

bool better(double candidate, double best, const std::string& metric) {
  return higher_is_better(metric) ? candidate > best : candidate < best;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

TrainResult train(const ModelConfig& model_config, const TrainConfig& config,
                  const std::vector<SequenceSample>& samples, const TrainOptions& options) {
  model_config.validate();
  config.validate();
  const std::size_t n_nodes = max_nodes(samples);
  const std::size_t embed_dim = common_embed_dim(samples);

  std::vector<PreparedSequence> prepared;
  prepared.reserve(samples.size());
  for (const SequenceSample& s : samples) prepared.push_back(prepare_sequence(s, model_config.latent_dim));

  TrainResult result;
  result.split = split_sequences(samples.size(), config.split, derive_seed(config.seed, {1}));
  result.model = std::make_unique<LsdsModel>(model_config, n_nodes, embed_dim, derive_seed(config.seed, {2}));
  LsdsModel& model = *result.model;
  const Split& split = result.split;
  Adam adam(config.learning_rate);
  RunRecord& record = result.record;
  record.metric = selection_metric(model_config.task);
  const bool interaction = model_config.task == Task::kInteraction;

  std::optional<std::filesystem::path> ckpt_dir;
  if (options.run_dir) {
    ckpt_dir = *options.run_dir / "checkpoints";
    std::filesystem::create_directories(*ckpt_dir);
  }
  auto log = [&](const std::string& line) {
    if (options.log) options.log(line);
  };

  std::size_t start_epoch = 1;
  std::size_t consecutive_skips = 0;
  NamedTensors best_params;
  if (options.resume) {
    if (!ckpt_dir) throw ConfigError("resume requires a run directory");
    const auto last_path = *ckpt_dir / "last.bin";
    const NamedTensors last = load_checkpoint(last_path);
    restore_parameters(model.params(), last);
    NamedTensors adam_state;
    for (const auto& [n, t] : last) {
      if (n.rfind("adam.", 0) == 0) adam_state.emplace_back(n, t);
    }
    adam.load_state(adam_state);
    start_epoch = static_cast<std::size_t>(find(last, "meta.epoch", last_path).item()) + 1;
    record.best_epoch = static_cast<std::size_t>(find(last, "meta.best_epoch", last_path).item());
    consecutive_skips = static_cast<std::size_t>(find(last, "meta.consecutive_skips", last_path).item());
    const Tensor& hist = find(last, "meta.history", last_path);
    for (std::size_t r = 0; r < hist.rows(); ++r) {
      EpochRecord e;
      e.epoch = static_cast<std::size_t>(hist.at(r, 0));
      e.train_loss = hist.at(r, 1);
      e.val_metric = hist.at(r, 2);
      e.test_metric = hist.at(r, 3);
      e.best_val = hist.at(r, 4);
      e.skipped_steps = static_cast<std::size_t>(hist.at(r, 5));
      record.epochs.push_back(e);
    }
    for (std::size_t k = 1; k < start_epoch; ++k) {
      const auto p = *ckpt_dir / ("epoch_" + std::to_string(k) + ".bin");
      if (std::filesystem::exists(p)) record.checkpoints.push_back(p);
    }
    if (record.best_epoch > 0) {
      best_params = load_checkpoint(*ckpt_dir / ("epoch_" + std::to_string(record.best_epoch) + ".bin"));
    }
  }

  for (std::size_t epoch = start_epoch; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order = split.train;
    Rng shuffle_rng(derive_seed(config.seed, {3, epoch}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord er;
    er.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    std::size_t iter = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size) {
      ++iter;
      const double lambda = kl_coefficient(epoch, iter, config.lambda0);
      const std::size_t b1 = std::min(order.size(), b0 + config.batch_size);
      model.params().zero_grad();
      double value = std::numeric_limits<double>::quiet_NaN();
      try {
        std::vector<Tensor> parts;
        for (std::size_t k = b0; k < b1; ++k) {
          const std::size_t idx = order[k];
          const PreparedSequence& seq = prepared[idx];
          std::vector<InteractionEvent> negatives;
          if (interaction) {
            negatives = negative_sample(seq.positives, seq.sample->n_nodes(), config.k_neg,
                                        derive_seed(config.seed, {4, epoch, iter, idx}));
          }
          const auto fwd = model.forward(seq, derive_seed(config.seed, {5, epoch, iter, idx}));
          parts.push_back(total_loss(model.decoder_loss(seq, fwd, negatives), kl_gaussian(fwd.posterior), lambda));
        }
        Tensor loss = parts.size() == 1 ? parts[0] : scale(sum(concat_rows(parts), 0), 1.0 / double(parts.size()));
        value = loss.item();
        if (!std::isfinite(value)) throw NumericError("non-finite loss");
        backward(loss);
        if (!model.params().grads_finite()) throw NumericError("non-finite gradient");
      } catch (const NumericError& err) {
        ++er.skipped_steps;
        ++consecutive_skips;
        log("epoch=" + std::to_string(epoch) + " iter=" + std::to_string(iter) + " loss=nan lambda=" +
            format_double(lambda) + " skipped: " + err.what());
        if (consecutive_skips >= 3) throw NumericError("training aborted after 3 consecutive non-finite steps");
        continue;
      }
      consecutive_skips = 0;
      model.params().clip_grad_norm(config.clip_norm);
      adam.step(model.params());
      loss_sum += value;
      ++loss_count;
      log("epoch=" + std::to_string(epoch) + " iter=" + std::to_string(iter) + " loss=" + format_double(value) +
          " lambda=" + format_double(lambda));
    }
    er.train_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count)
                                   : std::numeric_limits<double>::quiet_NaN();

    er.val_metric = metric_value(evaluate(model, prepared, split.val, config.seed, config.k_neg, config.workers),
                                 record.metric, "validation");
    er.test_metric = metric_value(evaluate(model, prepared, split.test, config.seed, config.k_neg, config.workers),
                                  record.metric, "test");
    const bool improved =
        record.best_epoch == 0 || better(er.val_metric, record.epochs.empty() ? 0.0 : record.epochs.back().best_val,
                                         record.metric);
    if (improved) {
      record.best_epoch = epoch;
      best_params = snapshot(model, adam);
      if (ckpt_dir) {
        const auto p = *ckpt_dir / ("epoch_" + std::to_string(epoch) + ".bin");
        save_checkpoint(p, best_params);
        record.checkpoints.push_back(p);
      }
    }
    er.best_val = improved ? er.val_metric : record.epochs.back().best_val;
    record.epochs.push_back(er);
    log("epoch=" + std::to_string(epoch) + " train_loss=" + format_double(er.train_loss) + " val_" + record.metric +
        "=" + format_double(er.val_metric) + " best_epoch=" + std::to_string(record.best_epoch));
    if (ckpt_dir) save_checkpoint(*ckpt_dir / "last.bin", last_state(model, adam, record, epoch, consecutive_skips));
  }

  if (!best_params.empty()) restore_parameters(model.params(), best_params);
  const Predictions test = evaluate(model, prepared, split.test, config.seed, config.k_neg, config.workers);
  record.test_metrics = compute_metrics(test);
  record.test_sweep = horizon_sweep(test, config.sweep_bucket);
  if (options.run_dir) {
    write_metrics_json(*options.run_dir / "metrics.json", record);
    write_sweep_csv(*options.run_dir / "sweep.csv", aggregate_sweeps({record.test_sweep}));
  }
  return result;
}

void write_metrics_json(const std::filesystem::path& path, const RunRecord& record) {
  nlohmann::ordered_json j;
  j["selection_metric"] = record.metric;
  j["best_epoch"] = record.best_epoch;
  nlohmann::ordered_json test = nlohmann::ordered_json::object();
  for (const auto& [k, v] : record.test_metrics) test[k] = v;
  j["test"] = test;
  nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
  for (const EpochRecord& e : record.epochs) {
    nlohmann::ordered_json row;
    row["epoch"] = e.epoch;
    row["train_loss"] = std::isfinite(e.train_loss) ? nlohmann::ordered_json(e.train_loss) : nullptr;
    row["val"] = e.val_metric;
    row["test"] = e.test_metric;
    row["best_val"] = e.best_val;
    row["skipped_steps"] = e.skipped_steps;
    epochs.push_back(row);
  }
  j["epochs"] = epochs;
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

}  // namespace lsds
