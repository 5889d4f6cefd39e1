#pragma once

// Data model for dynamic social graphs: static follow graph, per-account
// observation series, typed interaction events and polarity labels, plus the
// TSV formats they are stored in.
//
// Time is measured in weeks. t = 0 is the boundary between the encoding
// window (t < 0) and the prediction window (0, horizon].

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "lsds/errors.hpp"

namespace lsds {

enum class Relation { kReply = 0, kMention = 1, kRetweet = 2, kLike = 3 };

constexpr std::size_t kNumRelations = 4;
constexpr std::array<Relation, kNumRelations> kAllRelations = {
    Relation::kReply, Relation::kMention, Relation::kRetweet, Relation::kLike};

std::string_view relation_name(Relation r);
std::optional<Relation> parse_relation(std::string_view name);
inline std::size_t relation_index(Relation r) { return static_cast<std::size_t>(r); }

// Directed follow graph: edge (i, j) means account i follows account j.
class SocialGraph {
 public:
  SocialGraph() = default;
  explicit SocialGraph(std::size_t n_nodes) : n_nodes_(n_nodes) {}

  std::size_t n_nodes() const { return n_nodes_; }
  // Sorted, unique, no self-loops.
  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }

  // Throws ContractError on self-loops or out-of-range ids; duplicates ignored.
  void add_edge(std::size_t follower, std::size_t followee);
  bool has_edge(std::size_t follower, std::size_t followee) const;
  // True when either account follows the other.
  bool adjacent(std::size_t a, std::size_t b) const;

  // Influence neighborhoods with follow direction ignored: result[j] lists
  // every i that follows j or is followed by j, ascending.
  std::vector<std::vector<std::size_t>> neighborhoods() const;

 private:
  std::size_t n_nodes_ = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
};

struct ObservationSeries {
  std::size_t node = 0;
  std::vector<double> times;                   // strictly increasing
  std::vector<std::vector<double>> embeddings;  // one D-vector per time

  std::size_t size() const { return times.size(); }
  // Number of observations strictly before the boundary t = 0.
  std::size_t count_before_boundary() const;
};

struct InteractionEvent {
  std::size_t src = 0;
  std::size_t dst = 0;
  double time = 0.0;
  Relation relation = Relation::kReply;

  friend bool operator==(const InteractionEvent&, const InteractionEvent&) = default;
};

struct PolarityLabel {
  std::size_t node = 0;
  double time = 0.0;
  double score = 0.0;

  friend bool operator==(const PolarityLabel&, const PolarityLabel&) = default;
};

struct SequenceSample {
  std::string id;
  SocialGraph graph;
  std::size_t embed_dim = 0;
  std::vector<ObservationSeries> observations;  // indexed by node id
  std::vector<InteractionEvent> interactions;
  std::vector<PolarityLabel> polarity;
  double horizon = 0.0;  // prediction window is (0, horizon]

  std::size_t n_nodes() const { return graph.n_nodes(); }
  // Throws ContractError naming the violated invariant.
  void validate() const;
};

// ---------------------------------------------------------------------------
// File formats

// Writes graph.tsv, observations.tsv, interactions.tsv, polarity.tsv.
void save_sample(const std::filesystem::path& dir, const SequenceSample& sample);
SequenceSample load_sample(const std::filesystem::path& dir);
// `root` is either a single sequence directory or a directory whose
// subdirectories (sorted by name) are sequence directories.
std::vector<SequenceSample> load_dataset(const std::filesystem::path& root);
void save_dataset(const std::filesystem::path& root, const std::vector<SequenceSample>& samples);

// ---------------------------------------------------------------------------
// Temporal graph over individual pre-boundary observations.

struct ObservationNode {
  std::size_t account = 0;
  double time = 0.0;
  std::size_t series_index = 0;  // position in the account's series
};

struct TemporalGraph {
  std::vector<ObservationNode> nodes;
  // Directed edges src -> tgt with signed gap t_src - t_tgt.
  std::vector<std::size_t> src;
  std::vector<std::size_t> tgt;
  std::vector<double> delta_t;
  // Accounts with no observation before the boundary; the encoder gives them
  // the prior.
  std::vector<std::size_t> accounts_without_observations;

  std::size_t n_edges() const { return src.size(); }
};

TemporalGraph build_temporal_graph(const SequenceSample& sample);

// ---------------------------------------------------------------------------
// Weekly averaging

struct RawObservation {
  double time = 0.0;
  std::vector<double> embedding;
};

// Half-open interval [start, end) whose mean is reported at `time`.
struct WeekBucket {
  double start = 0.0;
  double end = 0.0;
  double time = 0.0;
};

// One observation per non-empty bucket (arithmetic mean of its raw
// embeddings), in bucket order. Raw entries outside every bucket are dropped.
ObservationSeries weekly_average(std::size_t node, const std::vector<RawObservation>& raw,
                                 const std::vector<WeekBucket>& buckets);

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthConfig {
  std::size_t n_sequences = 10;
  std::size_t n_core = 40;   // shared by every sequence
  std::size_t n_extra = 20;  // resampled per sequence
  std::size_t d_true = 2;
  std::size_t embed_dim = 16;
  std::size_t weeks = 20;    // even; half before the boundary, half after
  double p_within = 0.15;    // edge probability inside a community
  double p_across = 0.02;    // edge probability across communities
  double community_separation = 2.0;
  double influence = 0.1;    // DeGroot mixing weight per week
  double sigma_dyn = 0.05;
  double sigma_obs = 0.1;
  double post_probability = 0.8;
  std::size_t posts_per_week = 3;  // raw posts averaged into one observation
  double alpha = 1.0;        // interaction logit offset
  double beta = 8.0;         // interaction logit slope on latent distance

  void validate() const;
};

std::vector<SequenceSample> generate_synthetic(const SynthConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Diagnostics

struct FuzzyEntropyParams {
  std::size_t m = 2;
  double n = 2.0;
  double r_factor = 0.2;            // r = r_factor * population std
  std::optional<double> r_absolute;  // overrides r_factor when set
};

double fuzzy_entropy(const std::vector<double>& series, const FuzzyEntropyParams& params = {});

struct WeekCountRow {
  std::string sequence;
  long week = 0;  // time rounded to the nearest integer week
  std::size_t tweets = 0;
  std::array<std::size_t, kNumRelations> interactions{};
};

struct EntropyRow {
  std::string sequence;
  std::size_t node = 0;
  std::string series;  // "dim<k>" or "polarity"
  double value = 0.0;
};

struct DatasetReport {
  std::vector<WeekCountRow> weeks;
  std::vector<EntropyRow> entropy;
};

// Series shorter than m + 2 points are skipped in the entropy table.
DatasetReport dataset_report(const std::vector<SequenceSample>& samples,
                             const FuzzyEntropyParams& params = {});
void write_week_counts_csv(const std::filesystem::path& path, const DatasetReport& report);
void write_entropy_csv(const std::filesystem::path& path, const DatasetReport& report);

}  // namespace lsds
