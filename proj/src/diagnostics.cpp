#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "lsds/graph_data.hpp"

namespace lsds {

namespace {

// Mean of exp(-d^n / r) over ordered pairs i != j of the first `count`
// windows of length `len`, each window mean-centered; d is the Chebyshev
// distance.
double membership_average(const std::vector<double>& x, std::size_t len, std::size_t count,
                          double n, double r) {
  std::vector<std::vector<double>> windows(count, std::vector<double>(len));
  for (std::size_t i = 0; i < count; ++i) {
    double mu = 0.0;
    for (std::size_t k = 0; k < len; ++k) mu += x[i + k];
    mu /= static_cast<double>(len);
    for (std::size_t k = 0; k < len; ++k) windows[i][k] = x[i + k] - mu;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < count; ++j) {
      if (i == j) continue;
      double d = 0.0;
      for (std::size_t k = 0; k < len; ++k) d = std::max(d, std::fabs(windows[i][k] - windows[j][k]));
      row += std::exp(-std::pow(d, n) / r);
    }
    total += row / static_cast<double>(count - 1);
  }
  return total / static_cast<double>(count);
}

}  // namespace

double fuzzy_entropy(const std::vector<double>& series, const FuzzyEntropyParams& params) {
  const std::size_t m = params.m;
  if (m == 0) throw ContractError("fuzzy_entropy: m must be positive");
  if (series.size() <= m + 1) {
    throw ContractError("fuzzy_entropy: series of length " + std::to_string(series.size()) +
                        " too short for m=" + std::to_string(m));
  }
  double r = 0.0;
  if (params.r_absolute) {
    r = *params.r_absolute;
  } else {
    double mu = 0.0;
    for (double v : series) mu += v;
    mu /= static_cast<double>(series.size());
    double var = 0.0;
    for (double v : series) var += (v - mu) * (v - mu);
    const double sd = std::sqrt(var / static_cast<double>(series.size()));
    r = sd > 0.0 ? params.r_factor * sd : 0.2;
  }
  if (!(r > 0.0)) throw ContractError("fuzzy_entropy: tolerance must be positive");
  const std::size_t count = series.size() - m;
  const double phi_m = membership_average(series, m, count, params.n, r);
  const double phi_m1 = membership_average(series, m + 1, count, params.n, r);
  return std::log(phi_m) - std::log(phi_m1);
}

DatasetReport dataset_report(const std::vector<SequenceSample>& samples,
                             const FuzzyEntropyParams& params) {
  DatasetReport report;
  for (const SequenceSample& s : samples) {
    std::map<long, WeekCountRow> weeks;
    auto row = [&](double t) -> WeekCountRow& {
      const long w = std::lround(t);
      WeekCountRow& r = weeks[w];
      r.sequence = s.id;
      r.week = w;
      return r;
    };
    for (const ObservationSeries& series : s.observations) {
      for (double t : series.times) ++row(t).tweets;
    }
    for (const InteractionEvent& e : s.interactions) ++row(e.time).interactions[relation_index(e.relation)];
    for (auto& [_, r] : weeks) report.weeks.push_back(r);

    for (const ObservationSeries& series : s.observations) {
      if (series.size() < params.m + 2) continue;
      for (std::size_t d = 0; d < s.embed_dim; ++d) {
        std::vector<double> values;
        for (const auto& e : series.embeddings) values.push_back(e[d]);
        report.entropy.push_back({s.id, series.node, "dim" + std::to_string(d), fuzzy_entropy(values, params)});
      }
    }
    std::map<std::size_t, std::vector<std::pair<double, double>>> pol;
    for (const PolarityLabel& p : s.polarity) pol[p.node].emplace_back(p.time, p.score);
    for (auto& [node, pts] : pol) {
      if (pts.size() < params.m + 2) continue;
      std::sort(pts.begin(), pts.end());
      std::vector<double> values;
      for (const auto& [_, v] : pts) values.push_back(v);
      report.entropy.push_back({s.id, node, "polarity", fuzzy_entropy(values, params)});
    }
  }
  return report;
}

void write_week_counts_csv(const std::filesystem::path& path, const DatasetReport& report) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "sequence,week,tweets";
  for (Relation r : kAllRelations) os << ',' << relation_name(r);
  os << '\n';
  for (const WeekCountRow& r : report.weeks) {
    os << r.sequence << ',' << r.week << ',' << r.tweets;
    for (std::size_t c : r.interactions) os << ',' << c;
    os << '\n';
  }
}

void write_entropy_csv(const std::filesystem::path& path, const DatasetReport& report) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.precision(12);
  os << "sequence,node,series,fuzzy_entropy\n";
  for (const EntropyRow& r : report.entropy) {
    os << r.sequence << ',' << r.node << ',' << r.series << ',' << r.value << '\n';
  }
}

}  // namespace lsds
