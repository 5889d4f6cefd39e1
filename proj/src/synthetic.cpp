#include <cmath>
#include <iomanip>
#include <sstream>

#include "lsds/graph_data.hpp"

namespace lsds {

void SynthConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
  };
  prob(p_within, "p_within");
  prob(p_across, "p_across");
  prob(post_probability, "post_probability");
  prob(influence, "influence");
  if (n_sequences == 0) throw ConfigError("n_sequences must be positive");
  if (n_core + n_extra < 2) throw ConfigError("need at least two nodes");
  if (d_true == 0 || embed_dim == 0) throw ConfigError("dimensions must be positive");
  if (weeks < 2 || weeks % 2 != 0) throw ConfigError("weeks must be even and >= 2");
  if (posts_per_week == 0) throw ConfigError("posts_per_week must be positive");
  if (!(sigma_dyn >= 0.0) || !(sigma_obs >= 0.0)) throw ConfigError("noise levels must be non-negative");
  if (!std::isfinite(alpha) || !std::isfinite(beta)) throw ConfigError("alpha/beta must be finite");
}

namespace {

struct NodeSpec {
  int community = 0;
  std::vector<double> latent;  // initial latent state
};

NodeSpec draw_node(int community, const SynthConfig& c, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  NodeSpec n;
  n.community = community;
  n.latent.resize(c.d_true);
  const double sign = community == 0 ? 1.0 : -1.0;
  n.latent[0] = sign * c.community_separation + 0.25 * normal(rng);
  for (std::size_t k = 1; k < c.d_true; ++k) n.latent[k] = 0.5 * normal(rng);
  return n;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::vector<SequenceSample> generate_synthetic(const SynthConfig& c, std::uint64_t seed) {
  c.validate();
  const std::size_t n = c.n_core + c.n_extra;
  const long half = static_cast<long>(c.weeks / 2);

  // Shared across sequences: core nodes, their mutual follow edges, and the
  // latent-to-embedding map.
  std::mt19937_64 shared(seed);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<NodeSpec> core;
  for (std::size_t k = 0; k < c.n_core; ++k) core.push_back(draw_node(k % 2 == 0 ? 0 : 1, c, shared));
  std::vector<std::pair<std::size_t, std::size_t>> core_edges;
  for (std::size_t i = 0; i < c.n_core; ++i) {
    for (std::size_t j = 0; j < c.n_core; ++j) {
      if (i == j) continue;
      const double p = core[i].community == core[j].community ? c.p_within : c.p_across;
      if (unif(shared) < p) core_edges.emplace_back(i, j);
    }
  }
  std::vector<double> obs_map(c.embed_dim * c.d_true);
  for (double& v : obs_map) v = normal(shared);

  std::vector<SequenceSample> out;
  for (std::size_t s = 0; s < c.n_sequences; ++s) {
    std::seed_seq seq_seed{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                           static_cast<std::uint32_t>(s), 0x5eedu};
    std::mt19937_64 rng(seq_seed);

    std::vector<NodeSpec> nodes = core;
    for (std::size_t k = 0; k < c.n_extra; ++k) nodes.push_back(draw_node(coin(rng) ? 0 : 1, c, rng));

    SequenceSample sample;
    std::ostringstream id;
    id << "seq_" << std::setw(3) << std::setfill('0') << s;
    sample.id = id.str();
    sample.graph = SocialGraph(n);
    sample.embed_dim = c.embed_dim;
    sample.horizon = static_cast<double>(half);
    for (const auto& [i, j] : core_edges) sample.graph.add_edge(i, j);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j || (i < c.n_core && j < c.n_core)) continue;
        const double p = nodes[i].community == nodes[j].community ? c.p_within : c.p_across;
        if (unif(rng) < p) sample.graph.add_edge(i, j);
      }
    }
    const auto hoods = sample.graph.neighborhoods();

    // Latent trajectory at integer weeks -half .. half.
    std::vector<std::vector<std::vector<double>>> latent;  // [step][node][dim]
    std::vector<std::vector<double>> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = nodes[i].latent;
    latent.push_back(x);
    for (long step = -half; step < half; ++step) {
      std::vector<std::vector<double>> next = x;
      for (std::size_t i = 0; i < n; ++i) {
        if (!hoods[i].empty()) {
          for (std::size_t d = 0; d < c.d_true; ++d) {
            double avg = 0.0;
            for (std::size_t j : hoods[i]) avg += x[j][d];
            avg /= static_cast<double>(hoods[i].size());
            next[i][d] = (1.0 - c.influence) * x[i][d] + c.influence * avg;
          }
        }
        if (c.sigma_dyn > 0.0) {
          for (double& v : next[i]) v += c.sigma_dyn * normal(rng);
        }
      }
      x = std::move(next);
      latent.push_back(x);
    }
    auto state_at = [&](long week) -> const std::vector<std::vector<double>>& {
      return latent[static_cast<std::size_t>(week + half)];
    };

    std::vector<long> weeks;
    for (long w = -half; w <= half; ++w) {
      if (w != 0) weeks.push_back(w);
    }

    // Observations: a few noisy posts per active week, averaged weekly.
    sample.observations.resize(n);
    std::vector<WeekBucket> buckets;
    for (long w : weeks) buckets.push_back({double(w), double(w) + 1.0, double(w)});
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<RawObservation> raw;
      bool any_before = false;
      for (long w : weeks) {
        bool posts = unif(rng) < c.post_probability;
        if (!posts && w == -1 && !any_before) posts = true;
        if (!posts) continue;
        if (w < 0) any_before = true;
        const auto& xi = state_at(w)[i];
        for (std::size_t p = 0; p < c.posts_per_week; ++p) {
          RawObservation r;
          r.time = double(w) + (double(p) + 0.5) / double(c.posts_per_week);
          r.embedding.resize(c.embed_dim);
          for (std::size_t d = 0; d < c.embed_dim; ++d) {
            double v = 0.0;
            for (std::size_t k = 0; k < c.d_true; ++k) v += obs_map[d * c.d_true + k] * xi[k];
            if (c.sigma_obs > 0.0) v += c.sigma_obs * normal(rng);
            r.embedding[d] = v;
          }
          raw.push_back(std::move(r));
        }
      }
      sample.observations[i] = weekly_average(i, raw, buckets);
      for (double t : sample.observations[i].times) {
        sample.polarity.push_back({i, t, state_at(static_cast<long>(t))[i][0]});
      }
    }

    // Interactions along follow edges, driven by latent proximity.
    for (long w : weeks) {
      const auto& xs = state_at(w);
      for (Relation r : kAllRelations) {
        for (const auto& [i, j] : sample.graph.edges()) {
          double dist = 0.0;
          for (std::size_t d = 0; d < c.d_true; ++d) dist += (xs[i][d] - xs[j][d]) * (xs[i][d] - xs[j][d]);
          const double p = sigmoid(c.alpha - c.beta * std::sqrt(dist));
          if (unif(rng) < p) sample.interactions.push_back({i, j, double(w), r});
        }
      }
    }
    sample.validate();
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace lsds
