#pragma once

// Graph ODE right-hand sides and fixed-step explicit integrators.
//
// Every right-hand side is a message-passing network over the follow graph
// with direction ignored: node j aggregates messages from every i in N(j).
// Integration runs entirely on the autodiff tape, so gradients flow back
// through every solver step.

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "lsds/graph_data.hpp"
#include "lsds/nn.hpp"
#include "lsds/tensor.hpp"

namespace lsds {

enum class OdeKind { kNri, kDeGroot, kFj, kHkBcm, kNoUpdate };
enum class SolverMethod { kEuler, kRk4 };

std::string_view ode_name(OdeKind kind);
std::optional<OdeKind> parse_ode(std::string_view name);
std::string_view solver_name(SolverMethod m);
std::optional<SolverMethod> parse_solver(std::string_view name);

// Directed message edges: src[k] is a neighbor of dst[k]. Each undirected
// adjacency appears once per direction.
struct OdeGraph {
  std::size_t n_nodes = 0;
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;

  static OdeGraph from(const SocialGraph& graph);
  std::size_t n_edges() const { return src.size(); }
};

// Message-passing rules with explicit parameters. All return N x d.

// sum over i in N(j) of (m_i . q_j) v_i; m, q are N x K.
Tensor degroot_step(const Tensor& v, const OdeGraph& g, const Tensor& m, const Tensor& q);
// s_j * sum over i in N(j) of v_i + (1 - s_j) * anchor_j; s is N x d in [0, 1].
Tensor fj_step(const Tensor& v, const Tensor& anchor, const OdeGraph& g, const Tensor& s);
// sum over i in N(j) of gamma * softmax(xi * (delta - |v_i - v_j|)) * (v_i - v_j);
// xi, delta, gamma are 1 x d.
Tensor hk_bcm_step(const Tensor& v, const OdeGraph& g, const Tensor& xi, const Tensor& delta,
                   const Tensor& gamma);
// Per-edge HK message e_(i,j) for every edge (E x d), exposed for tests.
Tensor hk_bcm_messages(const Tensor& v, const OdeGraph& g, const Tensor& xi, const Tensor& delta,
                       const Tensor& gamma);
// e_(i,j) = f_e([v_i || v_j]); v_j <- f_v(sum over i of [v_i || e_(i,j)]) + v_j.
Tensor nri_step(const Tensor& v, const OdeGraph& g, const Mlp& f_e, const Mlp& f_v);

struct OdeOptions {
  OdeKind kind = OdeKind::kNri;
  std::size_t layers = 1;
  std::size_t degroot_rank = 8;
  std::size_t edge_hidden = 16;  // NRI edge embedding width
};

class OdeFunction {
 public:
  virtual ~OdeFunction() = default;
  // dZ/dt at state z. `z0` is the trajectory's initial state.
  virtual Tensor derivative(const Tensor& z, const Tensor& z0, const OdeGraph& g) const = 0;
  virtual OdeKind kind() const = 0;
};

class NriOde : public OdeFunction {
 public:
  NriOde(ParameterStore& store, std::size_t d, std::size_t edge_hidden, std::size_t layers, Rng& rng);
  Tensor derivative(const Tensor& z, const Tensor& z0, const OdeGraph& g) const override;
  OdeKind kind() const override { return OdeKind::kNri; }

  const std::vector<Mlp>& edge_mlps() const { return f_e_; }
  const std::vector<Mlp>& node_mlps() const { return f_v_; }

 private:
  std::vector<Mlp> f_e_, f_v_;
};

class DeGrootOde : public OdeFunction {
 public:
  DeGrootOde(ParameterStore& store, std::size_t n_nodes, std::size_t rank, std::size_t layers, Rng& rng);
  Tensor derivative(const Tensor& z, const Tensor& z0, const OdeGraph& g) const override;
  OdeKind kind() const override { return OdeKind::kDeGroot; }

  const std::vector<Tensor>& m() const { return m_; }
  const std::vector<Tensor>& q() const { return q_; }

 private:
  std::vector<Tensor> m_, q_;
};

class FjOde : public OdeFunction {
 public:
  FjOde(ParameterStore& store, std::size_t n_nodes, std::size_t d, std::size_t layers, Rng& rng);
  Tensor derivative(const Tensor& z, const Tensor& z0, const OdeGraph& g) const override;
  OdeKind kind() const override { return OdeKind::kFj; }

  // Unconstrained parameters; susceptibility is sigmoid(raw).
  const std::vector<Tensor>& raw_susceptibility() const { return s_raw_; }

 private:
  std::vector<Tensor> s_raw_;
};

class HkBcmOde : public OdeFunction {
 public:
  HkBcmOde(ParameterStore& store, std::size_t d, std::size_t layers, Rng& rng);
  Tensor derivative(const Tensor& z, const Tensor& z0, const OdeGraph& g) const override;
  OdeKind kind() const override { return OdeKind::kHkBcm; }

 private:
  std::vector<Tensor> xi_, delta_, gamma_;
};

// Zero derivative: opinions stay at their initial value.
class NoUpdateOde : public OdeFunction {
 public:
  Tensor derivative(const Tensor& z, const Tensor& z0, const OdeGraph& g) const override;
  OdeKind kind() const override { return OdeKind::kNoUpdate; }
};

std::unique_ptr<OdeFunction> make_ode(const OdeOptions& options, ParameterStore& store,
                                      std::size_t n_nodes, std::size_t d, Rng& rng);

struct LatentTrajectory {
  std::vector<double> times;
  std::vector<Tensor> states;  // one N x d state per time

  // Index of the grid time nearest to t; throws ContractError if t lies
  // outside [times.front(), times.back()] by more than half a grid spacing.
  std::size_t nearest_index(double t) const;
  // All states stacked row-wise: row k * N + i is node i at times[k].
  Tensor stacked() const;
};

using Rhs = std::function<Tensor(const Tensor&)>;

// Integrates dz/dt = f(z) from grid.front() and records the state at every
// grid time. Each grid gap must be a whole multiple of h. Throws
// IntegrationDiverged on a non-finite state.
LatentTrajectory solve(const Rhs& f, const Tensor& z0, std::span<const double> grid,
                       SolverMethod method, double h);
LatentTrajectory solve(const OdeFunction& f, const OdeGraph& graph, const Tensor& z0,
                       std::span<const double> grid, SolverMethod method, double h);

}  // namespace lsds
