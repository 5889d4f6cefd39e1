#include "lsds/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace lsds {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw DimensionError(std::string(what) + ": length mismatch");
  if (a == 0) throw UndefinedMetric(std::string(what) + ": no examples");
}

void count_classes(std::span<const int> labels, std::size_t& pos, std::size_t& neg) {
  pos = neg = 0;
  for (int y : labels) {
    if (y == 1) {
      ++pos;
    } else if (y == 0) {
      ++neg;
    } else {
      throw ContractError("binary labels must be 0 or 1");
    }
  }
}

// Indices sorted by descending score.
std::vector<std::size_t> order_desc(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  require_same_size(scores.size(), labels.size(), "roc_auc");
  std::size_t pos = 0, neg = 0;
  count_classes(labels, pos, neg);
  if (pos == 0 || neg == 0) throw UndefinedMetric("roc_auc: both classes must be present");

  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) rank_sum += midrank;
    }
    i = j;
  }
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  require_same_size(scores.size(), labels.size(), "average_precision");
  std::size_t pos = 0, neg = 0;
  count_classes(labels, pos, neg);
  if (pos == 0 || neg == 0) throw UndefinedMetric("average_precision: both classes must be present");

  const auto idx = order_desc(scores);
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      tp += static_cast<std::size_t>(labels[idx[j]]);
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

double mse(std::span<const double> pred, std::span<const double> truth) {
  require_same_size(pred.size(), truth.size(), "mse");
  double s = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) s += (pred[k] - truth[k]) * (pred[k] - truth[k]);
  return s / static_cast<double>(pred.size());
}

double mape(std::span<const double> pred, std::span<const double> truth) {
  require_same_size(pred.size(), truth.size(), "mape");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (std::fabs(truth[k]) <= 1e-8) continue;
    s += std::fabs(pred[k] - truth[k]) / std::fabs(truth[k]);
    ++n;
  }
  if (n == 0) throw UndefinedMetric("mape: every label is within 1e-8 of zero");
  return s / static_cast<double>(n);
}

double accuracy(std::span<const int> pred, std::span<const int> truth) {
  require_same_size(pred.size(), truth.size(), "accuracy");
  std::size_t hit = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) hit += pred[k] == truth[k] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double macro_f1(std::span<const int> pred, std::span<const int> truth) {
  require_same_size(pred.size(), truth.size(), "macro_f1");
  double total = 0.0;
  int classes = 0;
  for (int c : {0, 1}) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
      if (pred[k] == c && truth[k] == c) ++tp;
      if (pred[k] == c && truth[k] != c) ++fp;
      if (pred[k] != c && truth[k] == c) ++fn;
    }
    if (tp + fp + fn == 0) continue;
    total += 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    ++classes;
  }
  return total / static_cast<double>(classes);
}

double r2_score(std::span<const double> pred, std::span<const double> truth) {
  require_same_size(pred.size(), truth.size(), "r2");
  const double mu = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    ss_res += (truth[k] - pred[k]) * (truth[k] - pred[k]);
    ss_tot += (truth[k] - mu) * (truth[k] - mu);
  }
  if (ss_tot == 0.0) throw UndefinedMetric("r2: labels have zero variance");
  return 1.0 - ss_res / ss_tot;
}

MetricMap compute_metrics(const Predictions& p) {
  MetricMap out;
  auto put = [&](const char* key, auto&& fn) {
    try {
      out[key] = fn();
    } catch (const UndefinedMetric&) {
    }
  };
  switch (p.task) {
    case Task::kInteraction: {
      std::vector<int> y(p.truth.begin(), p.truth.end());
      put("roc_auc", [&] { return roc_auc(p.score, y); });
      put("pr_auc", [&] { return average_precision(p.score, y); });
      break;
    }
    case Task::kPolarityReg:
      put("mse", [&] { return mse(p.score, p.truth); });
      put("mape", [&] { return mape(p.score, p.truth); });
      put("r2", [&] { return r2_score(p.score, p.truth); });
      break;
    case Task::kPolarityCls: {
      std::vector<int> y(p.truth.begin(), p.truth.end());
      std::vector<int> yhat;
      for (double s : p.score) yhat.push_back(s > 0.5 ? 1 : 0);
      put("accuracy", [&] { return accuracy(yhat, y); });
      put("f1", [&] { return macro_f1(yhat, y); });
      break;
    }
    case Task::kReconstruction:
      put("mse", [&] { return mse(p.score, p.truth); });
      put("r2", [&] { return r2_score(p.score, p.truth); });
      break;
  }
  return out;
}

bool higher_is_better(const std::string& metric) { return metric != "mse" && metric != "mape"; }

std::string selection_metric(Task task) {
  switch (task) {
    case Task::kInteraction:
      return "roc_auc";
    case Task::kPolarityCls:
      return "accuracy";
    default:
      return "mse";
  }
}

long horizon_week(double t, double bucket) {
  if (!(bucket > 0.0)) throw ContractError("horizon bucket must be positive");
  return std::max(1L, static_cast<long>(std::ceil(t / bucket - 1e-9)));
}

std::map<long, MetricMap> horizon_sweep(const Predictions& p, double bucket) {
  std::map<long, Predictions> parts;
  for (std::size_t k = 0; k < p.size(); ++k) {
    Predictions& part = parts[horizon_week(p.time[k], bucket)];
    part.task = p.task;
    part.append(p.score[k], p.truth[k], p.time[k]);
  }
  std::map<long, MetricMap> out;
  for (const auto& [week, part] : parts) {
    MetricMap m = compute_metrics(part);
    if (!m.empty()) out[week] = std::move(m);
  }
  return out;
}

std::map<std::string, MeanStd> aggregate_metrics(const std::vector<MetricMap>& runs) {
  std::map<std::string, std::vector<double>> values;
  for (const MetricMap& run : runs) {
    for (const auto& [k, v] : run) values[k].push_back(v);
  }
  std::map<std::string, MeanStd> out;
  for (const auto& [k, vs] : values) {
    const double n = static_cast<double>(vs.size());
    const double mu = std::accumulate(vs.begin(), vs.end(), 0.0) / n;
    double var = 0.0;
    for (double v : vs) var += (v - mu) * (v - mu);
    out[k] = {mu, std::sqrt(var / n)};
  }
  return out;
}

std::vector<SweepRow> aggregate_sweeps(const std::vector<std::map<long, MetricMap>>& runs) {
  std::map<long, std::vector<MetricMap>> by_week;
  for (const auto& run : runs) {
    for (const auto& [week, m] : run) by_week[week].push_back(m);
  }
  std::vector<SweepRow> rows;
  for (const auto& [week, ms] : by_week) {
    for (const auto& [metric, stat] : aggregate_metrics(ms)) rows.push_back({week, metric, stat.mean, stat.std});
  }
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.precision(12);
  os << "week,metric,mean,std\n";
  for (const SweepRow& r : rows) os << r.week << ',' << r.metric << ',' << r.mean << ',' << r.std << '\n';
}

}  // namespace lsds
