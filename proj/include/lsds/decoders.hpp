#pragma once

// Task heads over latent states and their training losses.

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "lsds/graph_data.hpp"
#include "lsds/nn.hpp"
#include "lsds/ode.hpp"
#include "lsds/tensor.hpp"

namespace lsds {

enum class Task { kInteraction, kPolarityReg, kPolarityCls, kReconstruction };

std::string_view task_name(Task task);
std::optional<Task> parse_task(std::string_view name);

constexpr double kLogitClip = 30.0;

// score = z_i^T diag(W_r) z_j + W_v^T [z_i || z_j] + b, with W_v and b shared
// by all relations.
struct InteractionScorer {
  Tensor w_r;  // 4 x d, row r is the diagonal of W_r
  Tensor w_v;  // 2d x 1
  Tensor b;    // 1 x 1

  // All weights start at zero, so every pair scores 0 until training moves
  // them; random bilinear scores at the start push the encoder toward a
  // constant output.
  static InteractionScorer create(ParameterStore& store, std::size_t d);
  // zi, zj: E x d; relations[k] indexes w_r. Returns E x 1 logits.
  Tensor score(const Tensor& zi, const Tensor& zj, std::span<const std::size_t> relations) const;
};

struct PolarityHead {
  Mlp regression;      // d -> d_h -> 1
  Mlp classification;  // d -> d_h -> 2

  static PolarityHead create(ParameterStore& store, std::size_t d, std::size_t hidden, Rng& rng);
};

struct ReconstructionHead {
  Linear affine;  // d -> D

  static ReconstructionHead create(ParameterStore& store, std::size_t d, std::size_t embed_dim, Rng& rng);
};

// Mean binary cross-entropy of sigmoid(logits) against 0/1 labels; logits are
// clipped to [-30, 30].
Tensor bce_with_logits(const Tensor& logits, std::span<const double> labels);
// Mean over all entries of 0.5 (pred - target)^2 + 0.5 ln(2 pi).
Tensor gaussian_nll(const Tensor& pred, const Tensor& target);
// Mean softmax cross-entropy of E x C logits (clipped to [-30, 30]).
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

// Class rule for polarity: 1 iff score > 0.
inline std::size_t polarity_class(double score) { return score > 0.0 ? 1 : 0; }

// Row of (node, t) in LatentTrajectory::stacked(), with t snapped to the
// nearest grid time. Throws ContractError when t lies outside the grid span.
std::size_t trajectory_row(const LatentTrajectory& traj, std::size_t n_nodes, std::size_t node, double t);

}  // namespace lsds
