// anogen: command-line front end for the anomaly generation experiments.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "anogen/errors.hpp"
#include "anogen/experiment.hpp"

namespace fs = std::filesystem;
using namespace anogen;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool select_on_test = false;
  bool quiet = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON configuration file (defaults apply when omitted)")
      ->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Global seed, overriding the config");
  sub->add_option("--out", c.out, "Output directory, overriding the config");
  sub->add_flag("--select-on-test", c.select_on_test,
                "Choose the checkpoint by test AUC instead of a validation subsplit (leaks test data)");
  sub->add_flag("-q,--quiet", c.quiet, "No progress messages");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? parse_config("{}") : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.select_on_test) cfg.select_on_test = true;
  cfg.validate();
  set_progress_stream(c.quiet ? nullptr : &std::cerr);
  return cfg;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cycle-GAN anomaly generation for system-call trace classification"};
  app.require_subcommand(1);
  Common common;

  auto* experiment = app.add_subcommand("experiment", "Full pipeline: three approaches, sweep and reports");
  add_common(experiment, common);

  auto* sweep = app.add_subcommand("sweep", "Test AUC of every saved checkpoint");
  add_common(sweep, common);
  std::string sweep_dir;
  sweep->add_option("--checkpoints", sweep_dir, "Checkpoint directory (default <out>/checkpoints)");

  auto* train_gan = app.add_subcommand("train-gan", "Train the Cycle-GAN and save checkpoints");
  add_common(train_gan, common);
  std::string resume;
  train_gan->add_option("--resume", resume, "Continue from this checkpoint")->check(CLI::ExistingFile);

  auto* gen = app.add_subcommand("generate", "Turn the template traces into anomalies with one checkpoint");
  add_common(gen, common);
  std::string checkpoint, images_dir;
  gen->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  gen->add_option("--images", images_dir, "Where to write the images (default <out>/generated)");

  auto* train_clf = app.add_subcommand("train-clf", "Train the classifier for one approach");
  add_common(train_clf, common);
  std::string approach_name = "imbalanced", generated_dir, model_file;
  train_clf->add_option("--approach", approach_name, "imbalanced, smote or cyclegan")
      ->check(CLI::IsMember({"imbalanced", "smote", "cyclegan"}));
  train_clf->add_option("--generated", generated_dir, "Images written by generate (cyclegan only)");
  train_clf->add_option("--model", model_file, "Output file (default <out>/mlp_<approach>.agck)");

  auto* eval = app.add_subcommand("evaluate", "Score the test split with a saved classifier");
  add_common(eval, common);
  eval->add_option("--approach", approach_name, "Row label in the report")
      ->check(CLI::IsMember({"imbalanced", "smote", "cyclegan"}));
  eval->add_option("--model", model_file, "Classifier file (default <out>/mlp_<approach>.agck)");

  auto* synth = app.add_subcommand("synth-data", "Write the synthetic corpus as trace directories");
  add_common(synth, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    const ExperimentConfig cfg = resolve(common);
    auto default_model = [&] { return model_file.empty() ? cfg.output_dir / ("mlp_" + approach_name + ".agck")
                                                         : fs::path(model_file); };
    if (experiment->parsed()) {
      const auto res = cmd_experiment(cfg);
      print_warnings(res.warnings);
      std::cout << reports_to_csv(res.reports);
      std::cout << "selected checkpoint: " << res.selected_step << "\n";
    } else if (sweep->parsed()) {
      std::vector<std::string> warnings;
      const auto rows =
          cmd_sweep(cfg, sweep_dir.empty() ? cfg.output_dir / "checkpoints" : fs::path(sweep_dir), &warnings);
      std::cout << sweep_to_csv(rows);
    } else if (train_gan->parsed()) {
      cmd_train_gan(cfg, resume.empty() ? std::nullopt : std::optional<fs::path>(resume));
    } else if (gen->parsed()) {
      cmd_generate(cfg, checkpoint, images_dir.empty() ? cfg.output_dir / "generated" : fs::path(images_dir));
    } else if (train_clf->parsed()) {
      const Approach a = parse_approach(approach_name);
      std::optional<fs::path> g;
      if (!generated_dir.empty()) g = generated_dir;
      else if (a == Approach::CycleGan) g = cfg.output_dir / "generated";
      cmd_train_clf(cfg, a, g, default_model());
    } else if (eval->parsed()) {
      const auto report = cmd_evaluate(cfg, default_model(), parse_approach(approach_name));
      const std::vector<EvaluationReport> rows{report};
      std::cout << reports_to_csv(rows);
    } else if (synth->parsed()) {
      cmd_synth_data(cfg, cfg.output_dir);
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
