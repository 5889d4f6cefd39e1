#include "lsds/commands.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "json.hpp"

namespace lsds {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

struct LoadedModel {
  std::vector<SequenceSample> samples;
  std::vector<PreparedSequence> prepared;
  std::unique_ptr<LsdsModel> model;
  Split split;
};

LoadedModel load_model(const RunConfig& config, const std::filesystem::path& checkpoint) {
  LoadedModel m;
  m.samples = load_or_generate(config);
  const std::size_t embed_dim = common_embed_dim(m.samples);
  for (const auto& s : m.samples) m.prepared.push_back(prepare_sequence(s, config.model.latent_dim));
  m.split = split_sequences(m.samples.size(), config.train.split, derive_seed(config.train.seed, {1}));
  m.model = std::make_unique<LsdsModel>(config.model, max_nodes(m.samples), embed_dim,
                                        derive_seed(config.train.seed, {2}));
  restore_parameters(m.model->params(), load_checkpoint(checkpoint));
  return m;
}

std::vector<std::size_t> split_indices(const LoadedModel& m, const std::string& split) {
  if (split == "train") return m.split.train;
  if (split == "val") return m.split.val;
  if (split == "test") return m.split.test;
  if (split == "all") {
    std::vector<std::size_t> all(m.samples.size());
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
    return all;
  }
  throw ConfigError("unknown split '" + split + "' (expected train, val, test or all)");
}

nlohmann::ordered_json to_json(const MetricMap& m) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

}  // namespace

std::vector<SequenceSample> load_or_generate(const RunConfig& config) {
  if (config.dataset.empty()) return generate_synthetic(config.synth, config.train.seed);
  return load_dataset(config.dataset);
}

int cmd_synth(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& out) {
  const auto samples = generate_synthetic(config.synth, config.train.seed);
  save_dataset(out_dir, samples);
  const DatasetReport report = dataset_report(samples);
  std::size_t tweets = 0;
  std::array<std::size_t, kNumRelations> inter{};
  for (const WeekCountRow& r : report.weeks) {
    tweets += r.tweets;
    for (std::size_t k = 0; k < kNumRelations; ++k) inter[k] += r.interactions[k];
  }
  out << "wrote " << samples.size() << " sequences to " << out_dir.string() << '\n';
  out << "observations=" << tweets;
  for (Relation r : kAllRelations) out << ' ' << relation_name(r) << '=' << inter[relation_index(r)];
  out << '\n';
  return kExitOk;
}

int cmd_train(const RunConfig& config, const std::filesystem::path& run_dir, bool resume, std::ostream& out) {
  const auto samples = load_or_generate(config);
  std::filesystem::create_directories(run_dir);
  write_text(run_dir / "config.ini", to_ini(config));
  std::ofstream log_file(run_dir / "train.log", resume ? std::ios::app : std::ios::trunc);
  TrainOptions options;
  options.run_dir = run_dir;
  options.resume = resume;
  options.log = [&](const std::string& line) {
    out << line << '\n';
    log_file << line << '\n';
  };
  const TrainResult result = train(config.model, config.train, samples, options);
  out << "best epoch " << result.record.best_epoch << "; test";
  for (const auto& [k, v] : result.record.test_metrics) out << ' ' << k << '=' << v;
  out << '\n';
  return kExitOk;
}

int cmd_eval(const RunConfig& config, const EvalOptions& options, std::ostream& out) {
  if (options.seeds == 0) throw ConfigError("--seeds must be >= 1");
  const LoadedModel m = load_model(config, options.checkpoint);
  const auto indices = split_indices(m, options.split);
  std::vector<MetricMap> runs;
  for (std::size_t k = 0; k < options.seeds; ++k) {
    const Predictions p = evaluate(*m.model, m.prepared, indices, config.train.seed + k, config.train.k_neg,
                                   config.train.workers);
    runs.push_back(compute_metrics(p));
  }
  nlohmann::ordered_json j;
  j["split"] = options.split;
  j["seeds"] = options.seeds;
  nlohmann::ordered_json mean = nlohmann::ordered_json::object(), std = nlohmann::ordered_json::object();
  for (const auto& [k, s] : aggregate_metrics(runs)) {
    mean[k] = s.mean;
    std[k] = s.std;
  }
  j["mean"] = mean;
  j["std"] = std;
  nlohmann::ordered_json all = nlohmann::ordered_json::array();
  for (const MetricMap& r : runs) all.push_back(to_json(r));
  j["runs"] = all;
  const std::string text = j.dump(2) + "\n";
  if (!options.output.empty()) write_text(options.output, text);
  out << text;
  return kExitOk;
}

int cmd_predict(const RunConfig& config, const PredictOptions& options, std::ostream& out) {
  if (options.seeds == 0) throw ConfigError("--seeds must be >= 1");
  const LoadedModel m = load_model(config, options.checkpoint);
  const auto indices = split_indices(m, options.split);
  double window = 0.0;
  for (std::size_t i : indices) window = std::max(window, m.prepared[i].grid.back());
  const double horizon = options.horizon == 0 ? window : static_cast<double>(options.horizon);
  if (horizon > window + 1e-9) {
    throw ConfigError("horizon " + std::to_string(options.horizon) + " exceeds the prediction window of " +
                      std::to_string(window) + " weeks");
  }
  std::vector<std::map<long, MetricMap>> runs;
  for (std::size_t k = 0; k < options.seeds; ++k) {
    const Predictions all = evaluate(*m.model, m.prepared, indices, config.train.seed + k, config.train.k_neg,
                                     config.train.workers);
    Predictions within;
    within.task = all.task;
    for (std::size_t e = 0; e < all.size(); ++e) {
      if (all.time[e] <= horizon + 1e-9) within.append(all.score[e], all.truth[e], all.time[e]);
    }
    runs.push_back(horizon_sweep(within, config.train.sweep_bucket));
  }
  const auto rows = aggregate_sweeps(runs);
  if (!options.output.empty()) write_sweep_csv(options.output, rows);
  out << "week,metric,mean,std\n";
  for (const SweepRow& r : rows) out << r.week << ',' << r.metric << ',' << r.mean << ',' << r.std << '\n';
  return kExitOk;
}

int cmd_diagnose(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& out) {
  const auto samples = load_or_generate(config);
  const DatasetReport report = dataset_report(samples);
  std::filesystem::create_directories(out_dir);
  write_week_counts_csv(out_dir / "week_counts.csv", report);
  write_entropy_csv(out_dir / "fuzzy_entropy.csv", report);
  double dims = 0.0, pol = 0.0;
  std::size_t n_dims = 0, n_pol = 0;
  for (const EntropyRow& r : report.entropy) {
    if (r.series == "polarity") {
      pol += r.value;
      ++n_pol;
    } else {
      dims += r.value;
      ++n_dims;
    }
  }
  out << "sequences=" << samples.size() << " week_rows=" << report.weeks.size()
      << " entropy_rows=" << report.entropy.size() << '\n';
  if (n_dims > 0) out << "mean fuzzy entropy (embedding dims) " << dims / double(n_dims) << '\n';
  if (n_pol > 0) out << "mean fuzzy entropy (polarity) " << pol / double(n_pol) << '\n';
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const auto results = gradcheck_suite(seed);
  bool ok = true;
  out << std::left << std::setw(28) << "check" << std::setw(14) << "max_rel_err" << std::setw(12) << "tolerance"
      << "status\n";
  for (const GradcheckResult& r : results) {
    ok = ok && r.passed();
    out << std::left << std::setw(28) << r.name << std::setw(14) << std::scientific << std::setprecision(3)
        << r.error << std::setw(12) << r.tolerance << std::defaultfloat << (r.passed() ? "pass" : "FAIL") << '\n';
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out << results.size() << " checks, " << (ok ? "all passed" : "FAILURES") << " in " << std::fixed
      << std::setprecision(2) << secs << " s\n" << std::defaultfloat;
  return ok ? kExitOk : kExitFailure;
}

}  // namespace lsds
