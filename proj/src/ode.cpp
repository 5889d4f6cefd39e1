#include "lsds/ode.hpp"

#include <cmath>

namespace lsds {

std::string_view ode_name(OdeKind kind) {
  switch (kind) {
    case OdeKind::kNri:
      return "nri";
    case OdeKind::kDeGroot:
      return "degroot";
    case OdeKind::kFj:
      return "fj";
    case OdeKind::kHkBcm:
      return "hk_bcm";
    case OdeKind::kNoUpdate:
      return "no_update";
  }
  return "?";
}

std::optional<OdeKind> parse_ode(std::string_view name) {
  for (OdeKind k : {OdeKind::kNri, OdeKind::kDeGroot, OdeKind::kFj, OdeKind::kHkBcm, OdeKind::kNoUpdate}) {
    if (ode_name(k) == name) return k;
  }
  return std::nullopt;
}

std::string_view solver_name(SolverMethod m) { return m == SolverMethod::kEuler ? "euler" : "rk4"; }

std::optional<SolverMethod> parse_solver(std::string_view name) {
  if (name == "euler") return SolverMethod::kEuler;
  if (name == "rk4") return SolverMethod::kRk4;
  return std::nullopt;
}

OdeGraph OdeGraph::from(const SocialGraph& graph) {
  OdeGraph g;
  g.n_nodes = graph.n_nodes();
  const auto hoods = graph.neighborhoods();
  for (std::size_t j = 0; j < g.n_nodes; ++j) {
    for (std::size_t i : hoods[j]) {
      g.src.push_back(i);
      g.dst.push_back(j);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

Tensor degroot_step(const Tensor& v, const OdeGraph& g, const Tensor& m, const Tensor& q) {
  const std::size_t d = v.cols();
  if (g.n_edges() == 0) return Tensor::zeros({v.rows(), d});
  Tensor coef = sum(gather_rows(m, g.src) * gather_rows(q, g.dst), 1);
  return scatter_add_rows(broadcast_cols(coef, d) * gather_rows(v, g.src), g.dst, v.rows());
}

Tensor fj_step(const Tensor& v, const Tensor& anchor, const OdeGraph& g, const Tensor& s) {
  Tensor stubborn = add_scalar(scale(s, -1.0), 1.0) * anchor;
  if (g.n_edges() == 0) return stubborn;
  Tensor neighbor_sum = scatter_add_rows(gather_rows(v, g.src), g.dst, v.rows());
  return s * neighbor_sum + stubborn;
}

Tensor hk_bcm_messages(const Tensor& v, const OdeGraph& g, const Tensor& xi, const Tensor& delta,
                       const Tensor& gamma) {
  const std::size_t e = g.n_edges();
  Tensor diff = gather_rows(v, g.src) - gather_rows(v, g.dst);
  Tensor weight = softmax(broadcast_rows(xi, e) * (broadcast_rows(delta, e) - abs(diff)));
  return broadcast_rows(gamma, e) * weight * diff;
}

Tensor hk_bcm_step(const Tensor& v, const OdeGraph& g, const Tensor& xi, const Tensor& delta,
                   const Tensor& gamma) {
  if (g.n_edges() == 0) return Tensor::zeros({v.rows(), v.cols()});
  return scatter_add_rows(hk_bcm_messages(v, g, xi, delta, gamma), g.dst, v.rows());
}

Tensor nri_step(const Tensor& v, const OdeGraph& g, const Mlp& f_e, const Mlp& f_v) {
  const std::size_t n = v.rows();
  Tensor aggregate;
  if (g.n_edges() == 0) {
    aggregate = Tensor::zeros({n, f_v.first.in_features()});
  } else {
    Tensor v_src = gather_rows(v, g.src);
    Tensor edge = f_e.forward(concat_cols({v_src, gather_rows(v, g.dst)}));
    aggregate = scatter_add_rows(concat_cols({v_src, edge}), g.dst, n);
  }
  return f_v.forward(aggregate) + v;
}

// ---------------------------------------------------------------------------

NriOde::NriOde(ParameterStore& store, std::size_t d, std::size_t edge_hidden, std::size_t layers, Rng& rng) {
  if (layers == 0) throw ConfigError("ode_layers must be >= 1");
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = "ode.nri" + std::to_string(l);
    f_e_.push_back(Mlp::create(store, p + ".f_e", 2 * d, edge_hidden, edge_hidden, rng, Activation::kTanh));
    f_v_.push_back(Mlp::create(store, p + ".f_v", d + edge_hidden, d, d, rng, Activation::kTanh));
  }
}

Tensor NriOde::derivative(const Tensor& z, const Tensor&, const OdeGraph& g) const {
  Tensor v = z;
  for (std::size_t l = 0; l < f_e_.size(); ++l) v = nri_step(v, g, f_e_[l], f_v_[l]);
  return v;
}

DeGrootOde::DeGrootOde(ParameterStore& store, std::size_t n_nodes, std::size_t rank, std::size_t layers,
                       Rng& rng) {
  if (layers == 0) throw ConfigError("ode_layers must be >= 1");
  if (rank == 0) throw ConfigError("degroot_rank must be >= 1");
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = "ode.degroot" + std::to_string(l);
    m_.push_back(store.create(p + ".m", {n_nodes, rank}, rank, rng));
    q_.push_back(store.create(p + ".q", {n_nodes, rank}, rank, rng));
  }
}

Tensor DeGrootOde::derivative(const Tensor& z, const Tensor&, const OdeGraph& g) const {
  if (g.n_nodes > m_[0].rows()) {
    throw DimensionError("degroot: graph has " + std::to_string(g.n_nodes) + " nodes, parameters cover " +
                         std::to_string(m_[0].rows()));
  }
  Tensor v = z;
  for (std::size_t l = 0; l < m_.size(); ++l) v = degroot_step(v, g, m_[l], q_[l]);
  return v;
}

FjOde::FjOde(ParameterStore& store, std::size_t n_nodes, std::size_t d, std::size_t layers, Rng& rng) {
  if (layers == 0) throw ConfigError("ode_layers must be >= 1");
  for (std::size_t l = 0; l < layers; ++l) {
    s_raw_.push_back(store.create("ode.fj" + std::to_string(l) + ".s", {n_nodes, d}, d, rng));
  }
}

Tensor FjOde::derivative(const Tensor& z, const Tensor& z0, const OdeGraph& g) const {
  const std::size_t n = z.rows();
  if (n > s_raw_[0].rows()) throw DimensionError("fj: graph larger than parameter table");
  std::vector<std::size_t> rows(n);
  for (std::size_t k = 0; k < n; ++k) rows[k] = k;
  Tensor v = z;
  for (const Tensor& raw : s_raw_) {
    Tensor s = sigmoid(n == raw.rows() ? raw : gather_rows(raw, rows));
    v = fj_step(v, z0, g, s);
  }
  return v;
}

HkBcmOde::HkBcmOde(ParameterStore& store, std::size_t d, std::size_t layers, Rng& rng) {
  if (layers == 0) throw ConfigError("ode_layers must be >= 1");
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = "ode.hk" + std::to_string(l);
    xi_.push_back(store.create(p + ".xi", {1, d}, d, rng));
    delta_.push_back(store.create(p + ".delta", {1, d}, d, rng));
    gamma_.push_back(store.create(p + ".gamma", {1, d}, d, rng));
  }
}

Tensor HkBcmOde::derivative(const Tensor& z, const Tensor&, const OdeGraph& g) const {
  Tensor v = z;
  for (std::size_t l = 0; l < xi_.size(); ++l) v = hk_bcm_step(v, g, xi_[l], delta_[l], gamma_[l]);
  return v;
}

Tensor NoUpdateOde::derivative(const Tensor& z, const Tensor&, const OdeGraph&) const {
  return Tensor::zeros(z.shape());
}

std::unique_ptr<OdeFunction> make_ode(const OdeOptions& o, ParameterStore& store, std::size_t n_nodes,
                                      std::size_t d, Rng& rng) {
  switch (o.kind) {
    case OdeKind::kNri:
      return std::make_unique<NriOde>(store, d, o.edge_hidden, o.layers, rng);
    case OdeKind::kDeGroot:
      return std::make_unique<DeGrootOde>(store, n_nodes, o.degroot_rank, o.layers, rng);
    case OdeKind::kFj:
      return std::make_unique<FjOde>(store, n_nodes, d, o.layers, rng);
    case OdeKind::kHkBcm:
      return std::make_unique<HkBcmOde>(store, d, o.layers, rng);
    case OdeKind::kNoUpdate:
      return std::make_unique<NoUpdateOde>();
  }
  throw ConfigError("unknown ODE kind");
}

// ---------------------------------------------------------------------------

std::size_t LatentTrajectory::nearest_index(double t) const {
  if (times.empty()) throw ContractError("empty trajectory");
  const double half_gap = times.size() > 1 ? 0.5 * (times[1] - times[0]) : 0.5;
  if (t < times.front() - half_gap || t > times.back() + half_gap) {
    throw ContractError("time " + std::to_string(t) + " outside trajectory window [" +
                        std::to_string(times.front()) + ", " + std::to_string(times.back()) + "]");
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (std::fabs(times[k] - t) < std::fabs(times[best] - t)) best = k;
  }
  return best;
}

Tensor LatentTrajectory::stacked() const { return concat_rows(states); }

namespace {

Tensor step(const Rhs& f, const Tensor& z, SolverMethod method, double h) {
  if (method == SolverMethod::kEuler) return z + scale(f(z), h);
  Tensor k1 = f(z);
  Tensor k2 = f(z + scale(k1, 0.5 * h));
  Tensor k3 = f(z + scale(k2, 0.5 * h));
  Tensor k4 = f(z + scale(k3, h));
  return z + scale(k1 + scale(k2, 2.0) + scale(k3, 2.0) + k4, h / 6.0);
}

}  // namespace

LatentTrajectory solve(const Rhs& f, const Tensor& z0, std::span<const double> grid, SolverMethod method,
                       double h) {
  if (!(h > 0.0)) throw ContractError("solve: step must be positive");
  if (grid.empty()) throw ContractError("solve: empty time grid");
  LatentTrajectory traj;
  traj.times.assign(grid.begin(), grid.end());
  traj.states.push_back(z0);
  Tensor z = z0;
  double t = grid[0];
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double gap = grid[k] - grid[k - 1];
    const double steps_real = gap / h;
    const long steps = std::lround(steps_real);
    if (steps < 1 || std::fabs(steps_real - static_cast<double>(steps)) > 1e-9 * std::max(1.0, steps_real)) {
      throw ContractError("solve: grid gap " + std::to_string(gap) + " is not a positive multiple of step " +
                          std::to_string(h));
    }
    for (long s = 0; s < steps; ++s) {
      try {
        z = step(f, z, method, h);
      } catch (const NumericError&) {
        throw IntegrationDiverged(t + h);
      }
      t = grid[k - 1] + static_cast<double>(s + 1) * h;
      for (double v : z.data()) {
        if (!std::isfinite(v)) throw IntegrationDiverged(t);
      }
    }
    t = grid[k];
    traj.states.push_back(z);
  }
  return traj;
}

LatentTrajectory solve(const OdeFunction& f, const OdeGraph& graph, const Tensor& z0,
                       std::span<const double> grid, SolverMethod method, double h) {
  if (f.kind() == OdeKind::kNoUpdate) {
    // z + h * 0 == z exactly, so the trajectory is the initial state itself.
    LatentTrajectory traj;
    traj.times.assign(grid.begin(), grid.end());
    traj.states.assign(grid.size(), z0);
    return traj;
  }
  return solve([&](const Tensor& z) { return f.derivative(z, z0, graph); }, z0, grid, method, h);
}

}  // namespace lsds
