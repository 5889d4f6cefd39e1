#include "lsds/decoders.hpp"

#include <cmath>
#include <numbers>

namespace lsds {

namespace {
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
}

std::string_view task_name(Task task) {
  switch (task) {
    case Task::kInteraction:
      return "interaction";
    case Task::kPolarityReg:
      return "polarity_reg";
    case Task::kPolarityCls:
      return "polarity_cls";
    case Task::kReconstruction:
      return "reconstruction";
  }
  return "?";
}

std::optional<Task> parse_task(std::string_view name) {
  for (Task t : {Task::kInteraction, Task::kPolarityReg, Task::kPolarityCls, Task::kReconstruction}) {
    if (task_name(t) == name) return t;
  }
  return std::nullopt;
}

InteractionScorer InteractionScorer::create(ParameterStore& store, std::size_t d) {
  InteractionScorer s;
  s.w_r = store.create_constant("decoder.interaction.w_r", {kNumRelations, d}, 0.0);
  s.w_v = store.create_constant("decoder.interaction.w_v", {2 * d, 1}, 0.0);
  s.b = store.create_constant("decoder.interaction.b", {1, 1}, 0.0);
  return s;
}

Tensor InteractionScorer::score(const Tensor& zi, const Tensor& zj, std::span<const std::size_t> relations) const {
  if (zi.shape() != zj.shape()) {
    throw DimensionError("score: endpoint shapes " + shape_string(zi.shape()) + " and " + shape_string(zj.shape()));
  }
  if (relations.size() != zi.rows()) throw DimensionError("score: one relation per pair required");
  const std::size_t e = zi.rows();
  Tensor bilinear = sum(zi * gather_rows(w_r, relations) * zj, 1);
  Tensor linear = matmul(concat_cols({zi, zj}), w_v);
  return bilinear + linear + broadcast_rows(b, e);
}

PolarityHead PolarityHead::create(ParameterStore& store, std::size_t d, std::size_t hidden, Rng& rng) {
  PolarityHead h;
  h.regression = Mlp::create(store, "decoder.polarity_reg", d, hidden, 1, rng, Activation::kRelu);
  h.classification = Mlp::create(store, "decoder.polarity_cls", d, hidden, 2, rng, Activation::kRelu);
  return h;
}

ReconstructionHead ReconstructionHead::create(ParameterStore& store, std::size_t d, std::size_t embed_dim,
                                              Rng& rng) {
  return {Linear::create(store, "decoder.reconstruction", d, embed_dim, rng)};
}

Tensor bce_with_logits(const Tensor& logits, std::span<const double> labels) {
  if (logits.cols() != 1 || logits.rows() != labels.size()) {
    throw DimensionError("bce: logits " + shape_string(logits.shape()) + " vs " + std::to_string(labels.size()) +
                         " labels");
  }
  Tensor s = clamp(logits, -kLogitClip, kLogitClip);
  Tensor y = Tensor::column(std::vector<double>(labels.begin(), labels.end()));
  // softplus(s) - y s
  Tensor softplus = log(add_scalar(exp(s), 1.0));
  return mean_all(softplus - y * s);
}

Tensor gaussian_nll(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("gaussian_nll: " + shape_string(pred.shape()) + " vs " + shape_string(target.shape()));
  }
  Tensor diff = pred - target;
  return add_scalar(scale(mean_all(diff * diff), 0.5), kHalfLog2Pi);
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.rows() != labels.size()) throw DimensionError("cross_entropy: one label per row required");
  const std::size_t c = logits.cols();
  std::vector<double> onehot(logits.size(), 0.0);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] >= c) throw ContractError("cross_entropy: label out of range");
    onehot[k * c + labels[k]] = 1.0;
  }
  Tensor picked = sum(softmax(clamp(logits, -kLogitClip, kLogitClip)) * Tensor::from(logits.shape(), onehot), 1);
  return scale(mean_all(log(picked)), -1.0);
}

std::size_t trajectory_row(const LatentTrajectory& traj, std::size_t n_nodes, std::size_t node, double t) {
  if (node >= n_nodes) throw ContractError("trajectory_row: node out of range");
  constexpr double kTol = 1e-9;
  if (traj.times.empty() || t < traj.times.front() - kTol || t > traj.times.back() + kTol) {
    throw ContractError("event time " + std::to_string(t) + " outside the prediction window");
  }
  return traj.nearest_index(t) * n_nodes + node;
}

}  // namespace lsds
