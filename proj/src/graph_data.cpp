#include "lsds/graph_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace lsds {

std::string_view relation_name(Relation r) {
  switch (r) {
    case Relation::kReply:
      return "reply";
    case Relation::kMention:
      return "mention";
    case Relation::kRetweet:
      return "retweet";
    case Relation::kLike:
      return "like";
  }
  return "?";
}

std::optional<Relation> parse_relation(std::string_view name) {
  for (Relation r : kAllRelations) {
    if (relation_name(r) == name) return r;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// SocialGraph

void SocialGraph::add_edge(std::size_t follower, std::size_t followee) {
  if (follower >= n_nodes_ || followee >= n_nodes_) {
    throw ContractError("edge (" + std::to_string(follower) + ", " + std::to_string(followee) +
                        ") out of range for " + std::to_string(n_nodes_) + " nodes");
  }
  if (follower == followee) {
    throw ContractError("self-loop on node " + std::to_string(follower));
  }
  const std::pair<std::size_t, std::size_t> e{follower, followee};
  auto it = std::lower_bound(edges_.begin(), edges_.end(), e);
  if (it == edges_.end() || *it != e) edges_.insert(it, e);
}

bool SocialGraph::has_edge(std::size_t follower, std::size_t followee) const {
  return std::binary_search(edges_.begin(), edges_.end(), std::make_pair(follower, followee));
}

bool SocialGraph::adjacent(std::size_t a, std::size_t b) const {
  return has_edge(a, b) || has_edge(b, a);
}

std::vector<std::vector<std::size_t>> SocialGraph::neighborhoods() const {
  std::vector<std::set<std::size_t>> sets(n_nodes_);
  for (const auto& [i, j] : edges_) {
    sets[j].insert(i);
    sets[i].insert(j);
  }
  std::vector<std::vector<std::size_t>> out(n_nodes_);
  for (std::size_t k = 0; k < n_nodes_; ++k) out[k].assign(sets[k].begin(), sets[k].end());
  return out;
}

std::size_t ObservationSeries::count_before_boundary() const {
  return static_cast<std::size_t>(
      std::count_if(times.begin(), times.end(), [](double t) { return t < 0.0; }));
}

void SequenceSample::validate() const {
  const std::size_t n = n_nodes();
  if (n == 0) throw ContractError("sample " + id + ": graph has no nodes");
  if (observations.size() != n) {
    throw ContractError("sample " + id + ": observation series count " +
                        std::to_string(observations.size()) + " != " + std::to_string(n));
  }
  for (std::size_t k = 0; k < n; ++k) {
    const ObservationSeries& s = observations[k];
    if (s.node != k) throw ContractError("sample " + id + ": series " + std::to_string(k) + " has node id " + std::to_string(s.node));
    if (s.times.size() != s.embeddings.size()) {
      throw ContractError("sample " + id + ": node " + std::to_string(k) + " times/embeddings length mismatch");
    }
    for (std::size_t j = 0; j < s.times.size(); ++j) {
      if (!std::isfinite(s.times[j])) throw ContractError("sample " + id + ": non-finite time");
      if (j > 0 && !(s.times[j] > s.times[j - 1])) {
        throw ContractError("sample " + id + ": node " + std::to_string(k) + " times not strictly increasing");
      }
      if (s.embeddings[j].size() != embed_dim) {
        throw ContractError("sample " + id + ": node " + std::to_string(k) + " embedding length " +
                            std::to_string(s.embeddings[j].size()) + " != " + std::to_string(embed_dim));
      }
      if (s.times[j] > horizon) throw ContractError("sample " + id + ": observation after horizon");
    }
  }
  for (const InteractionEvent& e : interactions) {
    if (e.src >= n || e.dst >= n) throw ContractError("sample " + id + ": interaction node out of range");
    if (e.src == e.dst) throw ContractError("sample " + id + ": interaction with src == dst");
    if (!std::isfinite(e.time) || e.time > horizon) {
      throw ContractError("sample " + id + ": interaction time outside window");
    }
  }
  for (const PolarityLabel& p : polarity) {
    if (p.node >= n) throw ContractError("sample " + id + ": polarity node out of range");
    if (!std::isfinite(p.time) || p.time > horizon || !std::isfinite(p.score)) {
      throw ContractError("sample " + id + ": invalid polarity label");
    }
  }
}

// ---------------------------------------------------------------------------
// IO

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path) : path_(path.string()), is_(path) {
    if (!is_) throw LoadError(path_, 0, "cannot open file");
  }

  // Next non-empty line; false at end of file.
  bool next(std::string& line) {
    while (std::getline(is_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const { throw LoadError(path_, line_no_, what); }

  std::size_t parse_index(std::string_view s) const {
    std::size_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail("invalid node index '" + std::string(s) + "'");
    return v;
  }

  double parse_real(std::string_view s) const {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
      fail("invalid number '" + std::string(s) + "'");
    }
    return v;
  }

  // Parses "# key=value" headers.
  std::size_t parse_header(const std::string& line, std::string_view key) const {
    const std::string prefix = "# " + std::string(key) + "=";
    if (line.rfind(prefix, 0) != 0) fail("expected header '" + prefix + "<n>'");
    const std::size_t v = parse_index(std::string_view(line).substr(prefix.size()));
    if (v == 0) fail("header " + std::string(key) + " must be positive");
    return v;
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream is_;
  std::size_t line_no_ = 0;
};

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

}  // namespace

void save_sample(const std::filesystem::path& dir, const SequenceSample& sample) {
  std::filesystem::create_directories(dir);
  {
    auto os = open_out(dir / "graph.tsv");
    os << "# nodes=" << sample.n_nodes() << '\n';
    for (const auto& [i, j] : sample.graph.edges()) os << i << '\t' << j << '\n';
  }
  {
    auto os = open_out(dir / "observations.tsv");
    os << "# dim=" << sample.embed_dim << '\n';
    for (const ObservationSeries& s : sample.observations) {
      for (std::size_t k = 0; k < s.size(); ++k) {
        os << s.node << '\t' << format_double(s.times[k]) << '\t';
        for (std::size_t d = 0; d < s.embeddings[k].size(); ++d) {
          if (d) os << ',';
          os << format_double(s.embeddings[k][d]);
        }
        os << '\n';
      }
    }
  }
  {
    auto os = open_out(dir / "interactions.tsv");
    for (const InteractionEvent& e : sample.interactions) {
      os << e.src << '\t' << e.dst << '\t' << format_double(e.time) << '\t'
         << relation_name(e.relation) << '\n';
    }
  }
  {
    auto os = open_out(dir / "polarity.tsv");
    for (const PolarityLabel& p : sample.polarity) {
      os << p.node << '\t' << format_double(p.time) << '\t' << format_double(p.score) << '\n';
    }
  }
}

SequenceSample load_sample(const std::filesystem::path& dir) {
  SequenceSample sample;
  sample.id = dir.filename().string();
  if (sample.id.empty()) sample.id = dir.parent_path().filename().string();
  std::string line;
  double max_time = 0.0;

  {
    LineReader in(dir / "graph.tsv");
    if (!in.next(line)) in.fail("empty graph file");
    const std::size_t n = in.parse_header(line, "nodes");
    sample.graph = SocialGraph(n);
    while (in.next(line)) {
      if (line[0] == '#') continue;
      auto f = split(line, '\t');
      if (f.size() != 2) in.fail("expected 'follower<TAB>followee'");
      const std::size_t i = in.parse_index(f[0]), j = in.parse_index(f[1]);
      if (i >= n || j >= n) in.fail("node index out of range (nodes=" + std::to_string(n) + ")");
      if (i == j) in.fail("self-loop on node " + std::to_string(i));
      sample.graph.add_edge(i, j);
    }
  }
  const std::size_t n = sample.n_nodes();
  sample.observations.resize(n);
  for (std::size_t k = 0; k < n; ++k) sample.observations[k].node = k;

  {
    LineReader in(dir / "observations.tsv");
    if (!in.next(line)) in.fail("empty observations file");
    sample.embed_dim = in.parse_header(line, "dim");
    while (in.next(line)) {
      if (line[0] == '#') continue;
      auto f = split(line, '\t');
      if (f.size() != 3) in.fail("expected 'node<TAB>time<TAB>values'");
      const std::size_t node = in.parse_index(f[0]);
      if (node >= n) in.fail("node index out of range (nodes=" + std::to_string(n) + ")");
      const double t = in.parse_real(f[1]);
      auto vals = split(f[2], ',');
      if (vals.size() != sample.embed_dim) {
        in.fail("embedding length " + std::to_string(vals.size()) + " != dim " +
                std::to_string(sample.embed_dim));
      }
      std::vector<double> emb;
      emb.reserve(vals.size());
      for (auto v : vals) emb.push_back(in.parse_real(v));
      ObservationSeries& s = sample.observations[node];
      if (!s.times.empty() && !(t > s.times.back())) {
        in.fail("non-increasing time for node " + std::to_string(node));
      }
      s.times.push_back(t);
      s.embeddings.push_back(std::move(emb));
      max_time = std::max(max_time, t);
    }
  }
  {
    LineReader in(dir / "interactions.tsv");
    while (in.next(line)) {
      if (line[0] == '#') continue;
      auto f = split(line, '\t');
      if (f.size() != 4) in.fail("expected 'src<TAB>dst<TAB>time<TAB>relation'");
      InteractionEvent e;
      e.src = in.parse_index(f[0]);
      e.dst = in.parse_index(f[1]);
      if (e.src >= n || e.dst >= n) in.fail("node index out of range (nodes=" + std::to_string(n) + ")");
      if (e.src == e.dst) in.fail("interaction with src == dst");
      e.time = in.parse_real(f[2]);
      auto rel = parse_relation(f[3]);
      if (!rel) in.fail("unknown relation tag '" + std::string(f[3]) + "'");
      e.relation = *rel;
      sample.interactions.push_back(e);
      max_time = std::max(max_time, e.time);
    }
  }
  if (std::filesystem::exists(dir / "polarity.tsv")) {
    LineReader in(dir / "polarity.tsv");
    while (in.next(line)) {
      if (line[0] == '#') continue;
      auto f = split(line, '\t');
      if (f.size() != 3) in.fail("expected 'node<TAB>time<TAB>score'");
      PolarityLabel p;
      p.node = in.parse_index(f[0]);
      if (p.node >= n) in.fail("node index out of range (nodes=" + std::to_string(n) + ")");
      p.time = in.parse_real(f[1]);
      p.score = in.parse_real(f[2]);
      sample.polarity.push_back(p);
      max_time = std::max(max_time, p.time);
    }
  }
  sample.horizon = std::max(1.0, std::ceil(max_time));
  try {
    sample.validate();
  } catch (const ContractError& e) {
    throw LoadError(dir.string(), 0, e.what());
  }
  return sample;
}

std::vector<SequenceSample> load_dataset(const std::filesystem::path& root) {
  if (std::filesystem::exists(root / "graph.tsv")) return {load_sample(root)};
  if (!std::filesystem::is_directory(root)) throw LoadError(root.string(), 0, "not a dataset directory");
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "graph.tsv")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw LoadError(root.string(), 0, "no sequence directories found");
  std::vector<SequenceSample> out;
  for (const auto& d : dirs) out.push_back(load_sample(d));
  return out;
}

void save_dataset(const std::filesystem::path& root, const std::vector<SequenceSample>& samples) {
  std::filesystem::create_directories(root);
  for (const SequenceSample& s : samples) save_sample(root / s.id, s);
}

// ---------------------------------------------------------------------------
// Temporal graph

TemporalGraph build_temporal_graph(const SequenceSample& sample) {
  TemporalGraph tg;
  const std::size_t n = sample.n_nodes();
  std::vector<std::vector<std::size_t>> by_account(n);
  for (std::size_t a = 0; a < n; ++a) {
    const ObservationSeries& s = sample.observations[a];
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (s.times[k] >= 0.0) continue;
      by_account[a].push_back(tg.nodes.size());
      tg.nodes.push_back({a, s.times[k], k});
    }
    if (by_account[a].empty()) tg.accounts_without_observations.push_back(a);
  }
  auto connect = [&](std::size_t from_account, std::size_t to_account) {
    for (std::size_t u : by_account[from_account]) {
      for (std::size_t v : by_account[to_account]) {
        if (u == v) continue;
        tg.src.push_back(u);
        tg.tgt.push_back(v);
        tg.delta_t.push_back(tg.nodes[u].time - tg.nodes[v].time);
      }
    }
  };
  const auto hoods = sample.graph.neighborhoods();
  for (std::size_t b = 0; b < n; ++b) {
    // Incoming edges of account b's observations: neighbors first, then itself.
    for (std::size_t a : hoods[b]) connect(a, b);
    connect(b, b);
  }
  return tg;
}

// ---------------------------------------------------------------------------
// Weekly averaging

ObservationSeries weekly_average(std::size_t node, const std::vector<RawObservation>& raw,
                                 const std::vector<WeekBucket>& buckets) {
  ObservationSeries out;
  out.node = node;
  for (const WeekBucket& b : buckets) {
    std::vector<double> acc;
    std::size_t count = 0;
    for (const RawObservation& r : raw) {
      if (r.time < b.start || r.time >= b.end) continue;
      if (acc.empty()) acc.assign(r.embedding.size(), 0.0);
      if (r.embedding.size() != acc.size()) throw ContractError("weekly_average: embedding length mismatch");
      for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += r.embedding[d];
      ++count;
    }
    if (count == 0) continue;
    for (double& v : acc) v /= static_cast<double>(count);
    out.times.push_back(b.time);
    out.embeddings.push_back(std::move(acc));
  }
  return out;
}

}  // namespace lsds
