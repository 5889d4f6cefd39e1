#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lsds/decoders.hpp"

namespace lsds {

// Rank statistic with midranks for ties. Labels are 0/1.
double roc_auc(std::span<const double> scores, std::span<const int> labels);
// Average precision: sum over thresholds of (R_k - R_{k-1}) P_k, tied scores
// forming one threshold.
double average_precision(std::span<const double> scores, std::span<const int> labels);
double mse(std::span<const double> pred, std::span<const double> truth);
// Mean of |pred - truth| / |truth| over entries with |truth| > 1e-8.
double mape(std::span<const double> pred, std::span<const double> truth);
double accuracy(std::span<const int> pred, std::span<const int> truth);
// Mean F1 over the classes {0, 1} that occur in pred or truth.
double macro_f1(std::span<const int> pred, std::span<const int> truth);
double r2_score(std::span<const double> pred, std::span<const double> truth);

using MetricMap = std::map<std::string, double>;

// Flat per-example predictions of one task. For interaction, `score` is the
// logit and `truth` the 0/1 label; for classification `score` is P(class 1)
// and `truth` the class; otherwise both are real values.
struct Predictions {
  Task task = Task::kInteraction;
  std::vector<double> score;
  std::vector<double> truth;
  std::vector<double> time;

  void append(double s, double y, double t) {
    score.push_back(s);
    truth.push_back(y);
    time.push_back(t);
  }
  std::size_t size() const { return score.size(); }
};

// Task metrics under the keys roc_auc, pr_auc (interaction); mse, mape, r2
// (polarity_reg); accuracy, f1 (polarity_cls); mse, r2 (reconstruction).
// Metrics that are undefined for the given data are left out.
MetricMap compute_metrics(const Predictions& p);

// Whether larger values of `metric` are better.
bool higher_is_better(const std::string& metric);
// The metric used for model selection on each task.
std::string selection_metric(Task task);

// Week index of a prediction time in (0, T]: ceil(t / bucket).
long horizon_week(double t, double bucket);
// Metrics per future week; weeks without examples are omitted.
std::map<long, MetricMap> horizon_sweep(const Predictions& p, double bucket = 1.0);

struct SweepRow {
  long week = 0;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation across runs
};

// Aggregates per-run sweeps into mean and std per (week, metric). A row only
// averages the runs in which that metric was defined.
std::vector<SweepRow> aggregate_sweeps(const std::vector<std::map<long, MetricMap>>& runs);
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};
std::map<std::string, MeanStd> aggregate_metrics(const std::vector<MetricMap>& runs);

}  // namespace lsds
