#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "lsds/commands.hpp"

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("-c,--config", common.config_file, "INI configuration file");
  cmd->add_option("-s,--set", common.overrides, "override a key, e.g. --set train.epochs=5");
  cmd->add_option("--seed", common.seed, "seed (overrides the file and LSDS_SEED)");
}

lsds::RunConfig resolve(const Common& common) {
  std::optional<std::filesystem::path> file;
  if (!common.config_file.empty()) file = common.config_file;
  return lsds::resolve_config(file, common.overrides, common.seed, std::getenv("LSDS_SEED"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lsds: latent social dynamical systems on graphs"};
  app.require_subcommand(1);

  Common common;
  std::string out_dir = "data";
  auto* synth = app.add_subcommand("synth", "generate a synthetic data set");
  add_common(synth, common);
  synth->add_option("-o,--out", out_dir, "output directory");

  std::string run_dir = "run";
  bool resume = false;
  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, common);
  train->add_option("-r,--run-dir", run_dir, "run directory");
  train->add_flag("--resume", resume, "continue from run-dir/checkpoints/last.bin");

  lsds::EvalOptions eval_opts;
  std::string eval_ckpt, eval_out;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, common);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--split", eval_opts.split, "train | val | test | all");
  eval->add_option("--seeds", eval_opts.seeds, "number of evaluation seeds");
  eval->add_option("-o,--out", eval_out, "metrics JSON path");

  lsds::PredictOptions pred_opts;
  std::string pred_ckpt, pred_out;
  auto* predict = app.add_subcommand("predict", "per-week horizon sweep of a checkpoint");
  add_common(predict, common);
  predict->add_option("--checkpoint", pred_ckpt, "checkpoint file")->required();
  predict->add_option("--horizon", pred_opts.horizon, "weeks after the boundary (0: whole window)");
  predict->add_option("--split", pred_opts.split, "train | val | test | all");
  predict->add_option("--seeds", pred_opts.seeds, "number of evaluation seeds");
  predict->add_option("-o,--out", pred_out, "sweep CSV path");

  std::string report_dir = "report";
  auto* diagnose = app.add_subcommand("diagnose", "interaction counts and fuzzy entropy of a data set");
  add_common(diagnose, common);
  diagnose->add_option("-o,--out", report_dir, "output directory");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  add_common(gradcheck, common);

  auto* keys = app.add_subcommand("config", "print every configuration key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? lsds::kExitOk : lsds::kExitUsage;
  }

  try {
    if (keys->parsed()) {
      for (const auto& k : lsds::config_keys()) std::cout << k.key << " = " << k.default_value << "  # " << k.doc << '\n';
      return lsds::kExitOk;
    }
    const lsds::RunConfig config = resolve(common);
    if (synth->parsed()) return lsds::cmd_synth(config, out_dir, std::cout);
    if (train->parsed()) return lsds::cmd_train(config, run_dir, resume, std::cout);
    if (eval->parsed()) {
      eval_opts.checkpoint = eval_ckpt;
      eval_opts.output = eval_out;
      return lsds::cmd_eval(config, eval_opts, std::cout);
    }
    if (predict->parsed()) {
      pred_opts.checkpoint = pred_ckpt;
      pred_opts.output = pred_out;
      return lsds::cmd_predict(config, pred_opts, std::cout);
    }
    if (diagnose->parsed()) return lsds::cmd_diagnose(config, report_dir, std::cout);
    if (gradcheck->parsed()) return lsds::cmd_gradcheck(config.train.seed, std::cout);
  } catch (const lsds::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return lsds::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return lsds::kExitFailure;
  }
  return lsds::kExitUsage;
}
