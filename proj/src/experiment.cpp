#include "anogen/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "anogen/errors.hpp"
#include "anogen/imaging.hpp"
#include "anogen/oversampling.hpp"

namespace anogen {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ostream* g_progress = nullptr;

void progress(const std::string& msg) {
  if (g_progress) *g_progress << "[anogen] " << msg << std::endl;
}

std::string fmt(const char* spec, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  out << text;
  out.close();
  if (!out) throw DataError("cannot write '" + file.string() + "'");
}

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot read '" + file.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- config parsing -------------------------------------------------------

[[noreturn]] void bad(const std::string& field, const std::string& why) {
  throw std::invalid_argument("config: " + field + ": " + why);
}

void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) bad(where.empty() ? "<root>" : where, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      bad(where.empty() ? key : where + "." + key, "unknown key");
    }
  }
}

template <typename Int>
void read_uint(const json& obj, const char* key, const std::string& where, Int& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number_unsigned()) bad(where + key, "expected a non-negative integer");
  out = v.get<Int>();
}

void read_double(const json& obj, const char* key, const std::string& where, double& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number()) bad(where + key, "expected a number");
  out = v.get<double>();
}

void read_bool(const json& obj, const char* key, const std::string& where, bool& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_boolean()) bad(where + key, "expected true or false");
  out = v.get<bool>();
}

void read_string(const json& obj, const char* key, const std::string& where, std::string& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_string()) bad(where + key, "expected a string");
  out = v.get<std::string>();
}

void read_gan(const json& j, GanConfig& g) {
  only_keys(j, "gan",
            {"residual_blocks", "base_channels", "lambda_cycle", "identity_weight", "image_pool_size", "total_steps",
             "lr_plateau_steps", "lr_decay_steps", "lr_initial", "lr_final", "checkpoint_interval", "log_interval"});
  const std::string w = "gan.";
  read_uint(j, "residual_blocks", w, g.residual_blocks);
  read_uint(j, "base_channels", w, g.base_channels);
  read_double(j, "lambda_cycle", w, g.lambda_cycle);
  read_double(j, "identity_weight", w, g.identity_weight);
  read_uint(j, "image_pool_size", w, g.image_pool_size);
  read_uint(j, "total_steps", w, g.total_steps);
  read_uint(j, "lr_plateau_steps", w, g.lr_plateau_steps);
  read_uint(j, "lr_decay_steps", w, g.lr_decay_steps);
  read_double(j, "lr_initial", w, g.lr_initial);
  read_double(j, "lr_final", w, g.lr_final);
  read_uint(j, "checkpoint_interval", w, g.checkpoint_interval);
  read_uint(j, "log_interval", w, g.log_interval);
}

void read_mlp(const json& j, MlpConfig& m) {
  only_keys(j, "mlp", {"hidden_sizes", "epochs", "batch_size", "lr", "threshold"});
  const std::string w = "mlp.";
  if (j.contains("hidden_sizes")) {
    const auto& h = j.at("hidden_sizes");
    if (!h.is_array()) bad("mlp.hidden_sizes", "expected an array of positive integers");
    m.hidden_sizes.clear();
    for (const auto& v : h) {
      if (!v.is_number_unsigned()) bad("mlp.hidden_sizes", "expected an array of positive integers");
      m.hidden_sizes.push_back(v.get<std::size_t>());
    }
  }
  read_uint(j, "epochs", w, m.epochs);
  read_uint(j, "batch_size", w, m.batch_size);
  read_double(j, "lr", w, m.lr);
  read_double(j, "threshold", w, m.threshold);
}

json gan_json(const GanConfig& g) {
  return {{"residual_blocks", g.residual_blocks},
          {"base_channels", g.base_channels},
          {"lambda_cycle", g.lambda_cycle},
          {"identity_weight", g.identity_weight},
          {"image_pool_size", g.image_pool_size},
          {"total_steps", g.total_steps},
          {"lr_plateau_steps", g.lr_plateau_steps},
          {"lr_decay_steps", g.lr_decay_steps},
          {"lr_initial", g.lr_initial},
          {"lr_final", g.lr_final},
          {"checkpoint_interval", g.checkpoint_interval},
          {"log_interval", g.log_interval}};
}

// ---- pipeline helpers -----------------------------------------------------

std::vector<TraceImage> to_images(std::span<const TraceSequence> traces) {
  std::vector<TraceImage> out;
  out.reserve(traces.size());
  for (const auto& t : traces) out.push_back(sequence_to_image(t));
  return out;
}

std::vector<Label> labels_of(std::span<const TraceImage> images) {
  std::vector<Label> out;
  out.reserve(images.size());
  for (const auto& i : images) out.push_back(i.label);
  return out;
}

GanConfig effective_gan(const ExperimentConfig& cfg) {
  GanConfig g = cfg.gan;
  g.seed = derived_seed(cfg, "gan");
  return g;
}

MlpConfig effective_mlp(const ExperimentConfig& cfg) {
  MlpConfig m = cfg.mlp;
  m.seed = derived_seed(cfg, "mlp");
  return m;
}

fs::path checkpoint_path(const fs::path& dir, std::uint64_t step) {
  return dir / ("ckpt_" + std::to_string(step) + ".agck");
}

// Balances `train` with G(templates), trains a fresh classifier and scores
// `eval`.
std::vector<double> scores_with_generator(const CycleGanModel& model, std::span<const TraceImage> templates,
                                          std::span<const TraceImage> train, std::span<const TraceImage> eval,
                                          const MlpConfig& mlp, std::vector<std::string>* warnings) {
  const auto generated = generate(model, templates);
  const auto balanced = balance_with_gan(train, generated);
  if (warnings) warnings->insert(warnings->end(), balanced.warnings.begin(), balanced.warnings.end());
  return predict_scores(train_mlp(balanced, mlp), eval);
}

std::string losses_header() { return "step,loss_G,loss_F,loss_Dx,loss_Dy,cycle_loss\n"; }

std::string loss_row(const LossRecord& r) {
  return std::to_string(r.step) + "," + fmt("%.9g", r.loss_G) + "," + fmt("%.9g", r.loss_F) + "," +
         fmt("%.9g", r.loss_Dx) + "," + fmt("%.9g", r.loss_Dy) + "," + fmt("%.9g", r.cycle_loss) + "\n";
}

// Trains the GAN on data.fit, saving every checkpoint and logging losses.
// `on_checkpoint` runs after each save.
void run_gan(const ExperimentConfig& cfg, const PreparedData& data, CycleGanModel& model, bool append_losses,
             const std::function<void(const CycleGanModel&)>& on_checkpoint) {
  const fs::path ckpt_dir = cfg.output_dir / "checkpoints";
  fs::create_directories(ckpt_dir);
  const fs::path losses_file = cfg.output_dir / "losses.csv";
  std::ofstream losses(losses_file, append_losses ? std::ios::app : std::ios::trunc);
  if (!losses) throw DataError("cannot write '" + losses_file.string() + "'");
  if (!append_losses) losses << losses_header();

  TrainingSink sink;
  sink.on_loss = [&](const LossRecord& r) {
    losses << loss_row(r) << std::flush;
    progress("step " + std::to_string(r.step) + " cycle_loss " + fmt("%.4f", r.cycle_loss));
  };
  sink.on_checkpoint = [&](const CycleGanModel& m) {
    save_checkpoint(m, checkpoint_path(ckpt_dir, m.step));
    if (on_checkpoint) on_checkpoint(m);
  };
  progress("training Cycle-GAN for " + std::to_string(cfg.gan.total_steps) + " steps on " +
           std::to_string(data.fit.normal_count()) + " normal / " + std::to_string(data.fit.anomaly_count()) +
           " anomalous traces");
  train(model, data.fit, sink);
}

void write_reports(const fs::path& dir, std::span<const EvaluationReport> reports) {
  write_text(dir / "report.csv", reports_to_csv(reports));
  write_text(dir / "report.json", reports_to_json(reports));
}

}  // namespace

// ---- config ---------------------------------------------------------------

void ExperimentConfig::validate() const {
  const bool dirs = normal_dir.has_value() || anomaly_dir.has_value();
  if (dirs && synth) bad("data", "set either trace directories or a synth spec, not both");
  if (!dirs && !synth) bad("data", "no data source: set trace directories or a synth spec");
  if (dirs && !(normal_dir && anomaly_dir)) bad("data", "both normal_dir and anomaly_dir are required");
  if (synth) {
    if (synth->normal == 0 || synth->anomaly == 0) bad("synth", "both class counts must be positive");
    if (synth->min_length < 1 || synth->min_length > synth->max_length || synth->max_length > kMaxTraceLength) {
      bad("synth", "length range must satisfy 1 <= min_length <= max_length <= 1024");
    }
  }
  if (max_length < 1 || max_length > kMaxTraceLength) bad("data.max_length", "must be in [1, 1024]");
  if (split.mode == SplitSpec::Mode::Fraction && !(split.test_fraction > 0 && split.test_fraction < 1)) {
    bad("split.test_fraction", "must be in (0, 1)");
  }
  if (!select_on_test && !(validation_fraction > 0 && validation_fraction < 1)) {
    bad("validation_fraction", "must be in (0, 1)");
  }
  if (smote_k == 0) bad("smote_k", "must be positive");
  try {
    gan.validate();
    mlp.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
}

std::uint64_t derived_seed(const ExperimentConfig& cfg, std::string_view tag) { return derive_seed(cfg.seed, tag); }

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
  }
  only_keys(j, "",
            {"seed", "data", "synth", "split", "validation_fraction", "select_on_test", "gan", "mlp", "smote_k",
             "output_dir"});
  ExperimentConfig c;
  read_uint(j, "seed", "", c.seed);
  if (j.contains("data")) {
    const auto& d = j.at("data");
    only_keys(d, "data", {"normal_dir", "anomaly_dir", "max_length", "clamp"});
    std::string normal, anomaly, clamp = "clamp";
    read_string(d, "normal_dir", "data.", normal);
    read_string(d, "anomaly_dir", "data.", anomaly);
    read_uint(d, "max_length", "data.", c.max_length);
    read_string(d, "clamp", "data.", clamp);
    if (!normal.empty()) c.normal_dir = normal;
    if (!anomaly.empty()) c.anomaly_dir = anomaly;
    if (clamp == "clamp") c.clamp = ClampPolicy::Clamp;
    else if (clamp == "reject") c.clamp = ClampPolicy::Reject;
    else bad("data.clamp", "expected \"clamp\" or \"reject\"");
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    only_keys(s, "synth", {"normal", "anomaly", "min_length", "max_length"});
    SynthSpec spec;
    read_uint(s, "normal", "synth.", spec.normal);
    read_uint(s, "anomaly", "synth.", spec.anomaly);
    read_uint(s, "min_length", "synth.", spec.min_length);
    read_uint(s, "max_length", "synth.", spec.max_length);
    c.synth = spec;
  }
  if (!c.synth && !c.normal_dir && !c.anomaly_dir) c.synth = SynthSpec{};
  if (j.contains("split")) {
    const auto& s = j.at("split");
    only_keys(s, "split", {"test_fraction", "test_normal", "test_anomaly"});
    const bool counts = s.contains("test_normal") || s.contains("test_anomaly");
    if (counts && s.contains("test_fraction")) bad("split", "set test_fraction or test counts, not both");
    if (counts) {
      if (!(s.contains("test_normal") && s.contains("test_anomaly"))) {
        bad("split", "test_normal and test_anomaly go together");
      }
      c.split.mode = SplitSpec::Mode::Counts;
      read_uint(s, "test_normal", "split.", c.split.test_normal);
      read_uint(s, "test_anomaly", "split.", c.split.test_anomaly);
    } else {
      read_double(s, "test_fraction", "split.", c.split.test_fraction);
    }
  }
  read_double(j, "validation_fraction", "", c.validation_fraction);
  read_bool(j, "select_on_test", "", c.select_on_test);
  if (j.contains("gan")) read_gan(j.at("gan"), c.gan);
  if (j.contains("mlp")) read_mlp(j.at("mlp"), c.mlp);
  read_uint(j, "smote_k", "", c.smote_k);
  if (j.contains("output_dir")) {
    std::string out;
    read_string(j, "output_dir", "", out);
    c.output_dir = out;
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::invalid_argument("config: cannot read '" + file.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  if (cfg.synth) {
    j["synth"] = {{"normal", cfg.synth->normal},
                  {"anomaly", cfg.synth->anomaly},
                  {"min_length", cfg.synth->min_length},
                  {"max_length", cfg.synth->max_length}};
  } else {
    j["data"] = {{"normal_dir", cfg.normal_dir->generic_string()},
                 {"anomaly_dir", cfg.anomaly_dir->generic_string()},
                 {"max_length", cfg.max_length},
                 {"clamp", cfg.clamp == ClampPolicy::Clamp ? "clamp" : "reject"}};
  }
  if (cfg.split.mode == SplitSpec::Mode::Counts) {
    j["split"] = {{"test_normal", cfg.split.test_normal}, {"test_anomaly", cfg.split.test_anomaly}};
  } else {
    j["split"] = {{"test_fraction", cfg.split.test_fraction}};
  }
  j["validation_fraction"] = cfg.validation_fraction;
  j["select_on_test"] = cfg.select_on_test;
  j["gan"] = gan_json(cfg.gan);
  j["mlp"] = {{"hidden_sizes", cfg.mlp.hidden_sizes},
              {"epochs", cfg.mlp.epochs},
              {"batch_size", cfg.mlp.batch_size},
              {"lr", cfg.mlp.lr},
              {"threshold", cfg.mlp.threshold}};
  j["smote_k"] = cfg.smote_k;
  j["output_dir"] = cfg.output_dir.generic_string();
  json seeds;
  for (const char* tag : {"synth", "split", "validation", "templates", "gan", "smote", "mlp"}) {
    seeds[tag] = derived_seed(cfg, tag);
  }
  j["derived_seeds"] = seeds;
  return j.dump(2) + "\n";
}

ExperimentConfig desk_config() {
  ExperimentConfig c;
  c.synth = SynthSpec{};
  c.gan.base_channels = 16;
  c.gan.residual_blocks = 2;
  c.gan.total_steps = 3000;
  c.gan.lr_initial = c.gan.lr_final = 2e-4;
  c.gan.lr_plateau_steps = 3000;
  c.gan.checkpoint_interval = 500;
  c.gan.log_interval = 100;
  c.mlp.epochs = 10;
  return c;
}

// ---- data -----------------------------------------------------------------

PreparedData prepare_data(const ExperimentConfig& cfg) {
  cfg.validate();
  PreparedData d;
  if (cfg.synth) {
    const auto& s = *cfg.synth;
    d.all = synth_dataset(s.normal, s.anomaly, {s.min_length, s.max_length}, derived_seed(cfg, "synth"));
  } else {
    d.all = load_traces(*cfg.normal_dir, *cfg.anomaly_dir, cfg.max_length, cfg.clamp);
  }
  SplitSpec spec = cfg.split;
  spec.seed = derived_seed(cfg, "split");
  d.split = split_dataset(d.all, spec);
  if (d.split.train.normal_count() == 0 || d.split.train.anomaly_count() == 0) {
    throw DataError("training split needs both classes");
  }
  if (d.split.test.normal_count() == 0 || d.split.test.anomaly_count() == 0) {
    throw DataError("test split needs both classes");
  }
  const std::uint64_t template_seed = derived_seed(cfg, "templates");
  d.templates = select_template(d.split.train, required_generation_count(d.split.train), template_seed);
  if (cfg.select_on_test) {
    d.fit = d.split.train;
    d.selection = d.split.test;
    d.fit_templates = d.templates;
  } else {
    auto v = split_dataset(d.split.train, SplitSpec::fraction(cfg.validation_fraction, derived_seed(cfg, "validation")));
    d.fit = std::move(v.train);
    d.selection = std::move(v.test);
    if (d.selection.normal_count() == 0 || d.selection.anomaly_count() == 0) {
      throw DataError("validation subsplit needs both classes; raise validation_fraction");
    }
    if (d.fit.normal_count() == 0 || d.fit.anomaly_count() == 0) {
      throw DataError("training set without the validation subsplit needs both classes");
    }
    d.fit_templates =
        select_template(d.fit, required_generation_count(d.fit), derive_seed(template_seed, "fit"));
  }
  std::set<std::string> test_ids;
  for (const auto& t : d.split.test.traces) test_ids.insert(t.source_id);
  for (const auto& t : d.split.train.traces) {
    if (test_ids.count(t.source_id)) throw DataError("source id '" + t.source_id + "' is in both train and test");
  }
  return d;
}

std::string sweep_to_csv(const SweepResult& rows) {
  std::string out = "checkpoint_step,auc\n";
  for (const auto& r : rows) out += std::to_string(r.checkpoint_step) + "," + fmt("%.6f", r.auc) + "\n";
  return out;
}

std::string split_manifest_json(const PreparedData& data) {
  json sources = json::object();
  for (const auto& t : data.split.train.traces) sources[t.source_id] = "train";
  for (const auto& t : data.split.test.traces) sources[t.source_id] = "test";
  json j;
  j["sources"] = sources;
  json validation = json::array();
  std::set<std::string> test_ids;
  for (const auto& t : data.split.test.traces) test_ids.insert(t.source_id);
  for (const auto& t : data.selection.traces) {
    if (!test_ids.count(t.source_id)) validation.push_back(t.source_id);
  }
  j["validation"] = validation;
  json templates = json::array();
  for (const auto& t : data.templates) templates.push_back(t.source_id);
  j["templates"] = templates;
  return j.dump(2) + "\n";
}

void set_progress_stream(std::ostream* out) { g_progress = out; }

Approach parse_approach(const std::string& name) {
  for (const auto a : {Approach::Imbalanced, Approach::Smote, Approach::CycleGan}) {
    if (name == to_string(a)) return a;
  }
  throw std::invalid_argument("unknown approach '" + name + "' (expected imbalanced, smote or cyclegan)");
}

// ---- commands -------------------------------------------------------------

ExperimentResult cmd_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.output_dir);
  fs::remove(cfg.output_dir / "FAILED");
  try {
    ExperimentResult res;
    write_text(cfg.output_dir / "config.json", config_to_json(cfg));
    const PreparedData data = prepare_data(cfg);
    write_text(cfg.output_dir / "split_manifest.json", split_manifest_json(data));
    res.warnings = data.all.warnings;

    const auto train = to_images(data.split.train.traces);
    const auto test = to_images(data.split.test.traces);
    const auto truth = labels_of(test);
    const MlpConfig mlp = effective_mlp(cfg);
    progress("data: " + std::to_string(data.split.train.size()) + " train / " +
             std::to_string(data.split.test.size()) + " test traces");

    progress("approach imbalanced");
    res.reports.push_back(evaluate(Approach::Imbalanced, truth,
                                   predict_scores(train_mlp(as_unbalanced(train), mlp), test), mlp.threshold));

    progress("approach smote");
    const auto smote_set = balance_with_smote(train, cfg.smote_k, derived_seed(cfg, "smote"));
    res.reports.push_back(
        evaluate(Approach::Smote, truth, predict_scores(train_mlp(smote_set, mlp), test), mlp.threshold));

    // Every checkpoint is scored as soon as it is saved: on the test set for
    // the sweep, and on the selection set to pick the model.
    const auto templates = to_images(data.templates);
    const auto fit = to_images(data.fit.traces);
    const auto fit_templates = to_images(data.fit_templates);
    const auto selection = to_images(data.selection.traces);
    const auto selection_truth = labels_of(selection);
    std::map<std::uint64_t, std::vector<double>> test_scores;
    auto on_checkpoint = [&](const CycleGanModel& m) {
      auto scores = scores_with_generator(m, templates, train, test, mlp, nullptr);
      const double test_auc = roc_auc(truth, scores);
      res.sweep.push_back({m.step, test_auc});
      const double sel_auc =
          cfg.select_on_test
              ? test_auc
              : roc_auc(selection_truth, scores_with_generator(m, fit_templates, fit, selection, mlp, nullptr));
      res.selection.push_back({m.step, sel_auc});
      test_scores[m.step] = std::move(scores);
      progress("checkpoint " + std::to_string(m.step) + ": test AUC " + fmt("%.4f", test_auc) + ", selection AUC " +
               fmt("%.4f", sel_auc));
    };
    const GanConfig gan = effective_gan(cfg);
    CycleGanModel model = build_model(gan, gan.seed);
    run_gan(cfg, data, model, false, on_checkpoint);

    // Highest selection AUC, earliest step on ties.
    const auto best = std::max_element(res.selection.begin(), res.selection.end(),
                                       [](const SweepRow& a, const SweepRow& b) { return a.auc < b.auc; });
    res.selected_step = best->checkpoint_step;
    if (cfg.select_on_test) {
      res.warnings.push_back("checkpoint chosen on the test set (--select-on-test): the Cycle-GAN row is optimistic");
    }
    res.reports.push_back(evaluate(Approach::CycleGan, truth, test_scores.at(res.selected_step), mlp.threshold));
    progress("selected checkpoint " + std::to_string(res.selected_step));

    write_reports(cfg.output_dir, res.reports);
    write_text(cfg.output_dir / "sweep.csv", sweep_to_csv(res.sweep));
    std::string sel = "checkpoint_step,auc,selected\n";
    for (const auto& r : res.selection) {
      sel += std::to_string(r.checkpoint_step) + "," + fmt("%.6f", r.auc) + "," +
             (r.checkpoint_step == res.selected_step ? "1" : "0") + "\n";
    }
    write_text(cfg.output_dir / "selection.csv", sel);
    return res;
  } catch (const std::exception& e) {
    std::ofstream(cfg.output_dir / "FAILED") << e.what() << "\n";
    throw;
  }
}

SweepResult cmd_sweep(const ExperimentConfig& cfg, const fs::path& checkpoint_dir, std::vector<std::string>* warnings) {
  cfg.validate();
  if (!fs::is_directory(checkpoint_dir)) {
    throw DataError("checkpoint directory '" + checkpoint_dir.string() + "' does not exist");
  }
  static const std::regex pattern(R"(ckpt_(\d+)\.agck)");
  std::vector<std::pair<std::uint64_t, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(checkpoint_dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && std::regex_match(name, m, pattern)) {
      found.emplace_back(std::stoull(m[1].str()), entry.path());
    }
  }
  std::sort(found.begin(), found.end());

  const PreparedData data = prepare_data(cfg);
  const auto train = to_images(data.split.train.traces);
  const auto test = to_images(data.split.test.traces);
  const auto truth = labels_of(test);
  const auto templates = to_images(data.templates);
  const MlpConfig mlp = effective_mlp(cfg);
  auto warn = [&](const std::string& w) {
    progress("warning: " + w);
    if (warnings) warnings->push_back(w);
  };

  SweepResult rows;
  for (const auto& [step, path] : found) {
    if (!rows.empty() && rows.back().checkpoint_step == step) {
      warn("skipping '" + path.string() + "': step " + std::to_string(step) + " already swept");
      continue;
    }
    CycleGanModel model;
    try {
      model = load_checkpoint(path, read_checkpoint_config(path));
    } catch (const std::exception& e) {
      warn("skipping unreadable checkpoint '" + path.string() + "': " + e.what());
      continue;
    }
    const double auc = roc_auc(truth, scores_with_generator(model, templates, train, test, mlp, nullptr));
    rows.push_back({model.step, auc});
    progress("checkpoint " + std::to_string(model.step) + ": AUC " + fmt("%.4f", auc));
  }
  write_text(cfg.output_dir / "sweep.csv", sweep_to_csv(rows));
  return rows;
}

void cmd_train_gan(const ExperimentConfig& cfg, const std::optional<fs::path>& resume) {
  const PreparedData data = prepare_data(cfg);
  const GanConfig gan = effective_gan(cfg);
  CycleGanModel model;
  if (resume) {
    if (!fs::exists(*resume)) throw DataError("checkpoint '" + resume->string() + "' does not exist");
    model = load_checkpoint(*resume, gan);
    model.cfg = gan;
    progress("resuming from step " + std::to_string(model.step));
  } else {
    model = build_model(gan, gan.seed);
  }
  write_text(cfg.output_dir / "config.json", config_to_json(cfg));
  run_gan(cfg, data, model, resume.has_value() && fs::exists(cfg.output_dir / "losses.csv"), nullptr);
}

std::size_t cmd_generate(const ExperimentConfig& cfg, const fs::path& checkpoint, const fs::path& out_dir) {
  if (!fs::exists(checkpoint)) throw DataError("checkpoint '" + checkpoint.string() + "' does not exist");
  const PreparedData data = prepare_data(cfg);
  const CycleGanModel model = load_checkpoint(checkpoint, read_checkpoint_config(checkpoint));
  const auto generated = generate(model, to_images(data.templates));
  fs::create_directories(out_dir);
  json images = json::array();
  char name[32];
  for (std::size_t i = 0; i < generated.size(); ++i) {
    std::snprintf(name, sizeof name, "%06zu.pgm", i);
    write_pgm(generated[i], out_dir / name);
    images.push_back({{"file", name}, {"source_id", generated[i].source_id}});
  }
  json manifest;
  manifest["checkpoint_step"] = model.step;
  manifest["images"] = images;
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  progress("wrote " + std::to_string(generated.size()) + " images to " + out_dir.string());
  return generated.size();
}

void cmd_train_clf(const ExperimentConfig& cfg, Approach approach, const std::optional<fs::path>& generated_dir,
                   const fs::path& model_out) {
  const PreparedData data = prepare_data(cfg);
  const auto train = to_images(data.split.train.traces);
  BalancedSet set;
  switch (approach) {
    case Approach::Imbalanced:
      set = as_unbalanced(train);
      break;
    case Approach::Smote:
      set = balance_with_smote(train, cfg.smote_k, derived_seed(cfg, "smote"));
      break;
    case Approach::CycleGan: {
      if (!generated_dir) throw std::invalid_argument("cyclegan needs the directory written by generate");
      const fs::path manifest_file = *generated_dir / "manifest.json";
      if (!fs::exists(manifest_file)) throw DataError("missing '" + manifest_file.string() + "'");
      json manifest;
      try {
        manifest = json::parse(read_text(manifest_file));
      } catch (const json::exception& e) {
        throw DataError("'" + manifest_file.string() + "': " + e.what());
      }
      std::vector<TraceImage> generated;
      for (const auto& entry : manifest.at("images")) {
        auto img = read_pgm(*generated_dir / entry.at("file").get<std::string>(), Label::Anomaly);
        img.source_id = entry.at("source_id").get<std::string>();
        generated.push_back(std::move(img));
      }
      set = balance_with_gan(train, generated);
      break;
    }
  }
  for (const auto& w : set.warnings) progress("warning: " + w);
  const auto model = train_mlp(set, effective_mlp(cfg));
  if (model_out.has_parent_path()) fs::create_directories(model_out.parent_path());
  save_mlp(model, model_out);
}

EvaluationReport cmd_evaluate(const ExperimentConfig& cfg, const fs::path& model_file, Approach approach) {
  if (!fs::exists(model_file)) throw DataError("classifier '" + model_file.string() + "' does not exist");
  const PreparedData data = prepare_data(cfg);
  const auto test = to_images(data.split.test.traces);
  const auto model = load_mlp(model_file);
  const auto report = evaluate(approach, labels_of(test), predict_scores(model, test), cfg.mlp.threshold);
  const std::vector<EvaluationReport> reports{report};
  write_reports(cfg.output_dir, reports);
  return report;
}

void cmd_synth_data(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const SynthSpec s = cfg.synth.value_or(SynthSpec{});
  const auto ds = synth_dataset(s.normal, s.anomaly, {s.min_length, s.max_length}, derived_seed(cfg, "synth"));
  write_traces(ds, out_dir / "normal", out_dir / "anomaly");
  progress("wrote " + std::to_string(ds.normal_count()) + " normal and " + std::to_string(ds.anomaly_count()) +
           " anomalous traces under " + out_dir.string());
}

}  // namespace anogen
