#include "cavq/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cavq/binary_io.hpp"
#include "cavq/checkpoint.hpp"
#include "cavq/config.hpp"
#include "cavq/curriculum.hpp"
#include "cavq/errors.hpp"
#include "cavq/log.hpp"
#include "cavq/metrics.hpp"

namespace cavq::cli {

namespace fs = std::filesystem;

SweepKind parse_sweep_kind(const std::string& name) {
  if (name == "fixed-threshold") return SweepKind::FixedThreshold;
  if (name == "n-paraphrases") return SweepKind::NParaphrases;
  if (name == "schedule") return SweepKind::Schedule;
  throw ConfigError("unknown sweep '" + name + "' (expected fixed-threshold, n-paraphrases or schedule)");
}

std::string to_string(SweepKind kind) {
  switch (kind) {
    case SweepKind::FixedThreshold: return "fixed-threshold";
    case SweepKind::NParaphrases: return "n-paraphrases";
    case SweepKind::Schedule: return "schedule";
  }
  return "schedule";
}

namespace {

std::string one_decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

}  // namespace

std::vector<SweepPoint> sweep_points(SweepKind kind, const TrainConfig& base) {
  std::vector<SweepPoint> points;
  switch (kind) {
    case SweepKind::FixedThreshold:
      for (int i = 0; i <= 5; ++i) {
        const double t = 0.2 * i;
        TrainConfig c = base;
        c.schedule = Schedule::fixed(t, 0);
        points.push_back({i == 0 ? "0.0 (baseline)" : one_decimal(t), c});
      }
      break;
    case SweepKind::NParaphrases:
      for (std::size_t n = 0; n <= 3; ++n) {
        TrainConfig c = base;
        c.n_paraphrases = n;
        if (n == 0) c.schedule = Schedule::fixed(0.0, 0);
        points.push_back({n == 0 ? "0 (baseline)" : std::to_string(n), c});
      }
      break;
    case SweepKind::Schedule: {
      const std::pair<double, double> linear[] = {{1.0, 0.8}, {1.0, 0.6}, {1.0, 0.4}, {1.0, 0.2}, {1.0, 0.0},
                                                  {0.8, 0.6}, {0.8, 0.4}, {0.8, 0.2}, {0.8, 0.0}};
      for (auto [hi, lo] : linear) {
        TrainConfig c = base;
        c.schedule = Schedule::linear(hi, lo, 0);
        points.push_back({"linear " + one_decimal(hi) + "/" + one_decimal(lo), c});
      }
      for (double lo : {0.8, 0.6, 0.4, 0.2, 0.0}) {
        TrainConfig c = base;
        c.schedule = Schedule::cosine(1.0, lo, 0);
        points.push_back({"cosine 1.0/" + one_decimal(lo), c});
      }
      break;
    }
  }
  return points;
}

namespace {

// Flags shared by train and ablate; applied over the config file values.
struct TrainFlags {
  CLI::Option* data = nullptr;
  CLI::Option* hidden = nullptr;
  CLI::Option* lr = nullptr;
  CLI::Option* batch = nullptr;
  CLI::Option* epochs = nullptr;
  CLI::Option* patience = nullptr;
  CLI::Option* n_para = nullptr;
  CLI::Option* kind = nullptr;
  CLI::Option* t_max = nullptr;
  CLI::Option* t_min = nullptr;
  CLI::Option* horizon = nullptr;
  CLI::Option* metric = nullptr;
  CLI::Option* weight_decay = nullptr;
  CLI::Option* num_seeds = nullptr;

  std::string data_dir = "data";
  std::size_t hidden_size = 512;
  TrainConfig train;
  std::string kind_name = "linear";
  std::string metric_name = "accuracy";
  std::size_t seed_count = 5;

  void add_to(CLI::App& app) {
    data = app.add_option("--data", data_dir, "Dataset directory")->capture_default_str();
    hidden = app.add_option("--d", hidden_size, "Hidden size d")->capture_default_str();
    lr = app.add_option("--lr", train.optimizer.learning_rate, "AdamW learning rate")->capture_default_str();
    batch = app.add_option("--batch-size", train.batch_size, "Batch size")->capture_default_str();
    epochs = app.add_option("--epochs", train.max_epochs, "Maximum epochs")->capture_default_str();
    patience = app.add_option("--patience", train.patience, "Early-stopping patience")->capture_default_str();
    n_para = app.add_option("--n-paraphrases", train.n_paraphrases, "Paraphrases per augmented sample")
                 ->capture_default_str();
    kind = app.add_option("--schedule", kind_name, "Threshold schedule: fixed, linear or cosine")
               ->capture_default_str();
    t_max = app.add_option("--t-max", train.schedule.t_max, "Initial threshold")->capture_default_str();
    t_min = app.add_option("--t-min", train.schedule.t_min, "Final threshold")->capture_default_str();
    horizon = app.add_option("--horizon", train.schedule.horizon,
                             "Schedule horizon (0 = whole run: epochs, or steps for cosine)")
                  ->capture_default_str();
    metric = app.add_option("--metric", metric_name, "Dev/test metric: accuracy or cider")->capture_default_str();
    weight_decay = app.add_option("--weight-decay", train.optimizer.weight_decay, "AdamW decoupled weight decay")
                       ->capture_default_str();
    num_seeds = app.add_option("--num-seeds", seed_count, "Number of seeds when --seed is given")
                    ->capture_default_str();
  }

  void apply(ExperimentConfig& cfg, CLI::Option* seed_opt, std::uint64_t seed) const {
    auto set = [](CLI::Option* o) { return o != nullptr && o->count() > 0; };
    if (set(data)) cfg.data_dir = data_dir;
    if (set(hidden)) cfg.hidden = hidden_size;
    TrainConfig& t = cfg.train;
    if (set(lr)) t.optimizer.learning_rate = train.optimizer.learning_rate;
    if (set(weight_decay)) t.optimizer.weight_decay = train.optimizer.weight_decay;
    if (set(batch)) t.batch_size = train.batch_size;
    if (set(epochs)) t.max_epochs = train.max_epochs;
    if (set(patience)) t.patience = train.patience;
    if (set(n_para)) t.n_paraphrases = train.n_paraphrases;
    if (set(metric)) t.metric = parse_metric_kind(metric_name);
    if (set(kind)) t.schedule.kind = parse_schedule_kind(kind_name);
    if (set(t_max)) t.schedule.t_max = train.schedule.t_max;
    if (set(t_min)) t.schedule.t_min = train.schedule.t_min;
    if (t.schedule.kind == ScheduleKind::Fixed) {
      if (set(t_min) && !set(t_max)) t.schedule.t_max = t.schedule.t_min;
      t.schedule.t_min = t.schedule.t_max;
    }
    if (set(horizon)) t.schedule.horizon = train.schedule.horizon;
    if (set(seed_opt) || set(num_seeds)) {
      const std::uint64_t base = set(seed_opt) ? seed : (t.seeds.empty() ? 1 : t.seeds.front());
      t.seeds.clear();
      for (std::size_t i = 0; i < seed_count; ++i) t.seeds.push_back(base + i);
    }
  }
};

nlohmann::ordered_json epoch_json(const EpochLog& e) {
  nlohmann::ordered_json j;
  j["epoch"] = e.epoch;
  j["t_thresh"] = e.t_thresh;
  j["train_loss"] = e.train_loss;
  j["dev_metric"] = e.dev_metric;
  j["augmented_count"] = e.augmented_count;
  j["wall_ms"] = e.wall_ms;
  return j;
}

ExperimentConfig base_config(const std::string& config_path) {
  return config_path.empty() ? ExperimentConfig{} : load_config(config_path);
}

DatasetSplits load_training_data(const ExperimentConfig& cfg) {
  if (!fs::exists(cfg.data_dir / "header.json")) {
    throw ConfigError("dataset not found: " + (cfg.data_dir / "header.json").string());
  }
  return load_all_splits(cfg.data_dir);
}

void check_pools(const DatasetSplits& data, const TrainConfig& config) {
  if (!config.may_augment()) return;
  for (const SampleRecord& r : data.train) {
    if (r.paraphrase_pool.size() < config.n_paraphrases) {
      throw PoolExhaustedError("record " + r.id + " has " + std::to_string(r.paraphrase_pool.size()) +
                               " paraphrases, " + std::to_string(config.n_paraphrases) + " requested");
    }
  }
}

// Writes per-seed logs and checkpoints under `dir`.
SeedCallback seed_writer(const fs::path& dir, const ModelDims& dims, const TrainConfig& config) {
  return [dir, dims, config](const TrainOutput& trained) {
    const fs::path seed_dir = dir / ("seed_" + std::to_string(trained.result.seed));
    fs::create_directories(seed_dir);
    std::string jsonl;
    for (const EpochLog& e : trained.result.epochs) jsonl += epoch_json(e).dump() + "\n";
    io::write_file_atomic(seed_dir / "run.jsonl", jsonl);
    nlohmann::json meta;
    meta["seed"] = trained.result.seed;
    meta["best_epoch"] = trained.result.best_epoch;
    meta["best_dev_metric"] = trained.result.best_dev_metric;
    meta["label"] = run_label(config);
    meta["schedule"] = to_string(config.schedule.kind);
    meta["t_max"] = config.schedule.t_max;
    meta["t_min"] = config.schedule.t_min;
    meta["n_paraphrases"] = config.n_paraphrases;
    save_checkpoint(seed_dir / "best.ckpt", trained.best_params, dims, meta);
  };
}

int cmd_gen(const ExperimentConfig& cfg, std::ostream& out) {
  const DatasetSplits splits = generate_synthetic(cfg.synthetic, cfg.generation_seed);
  save_dataset(cfg.data_dir, splits);
  out << "train=" << splits.train.size() << " dev=" << splits.dev.size() << " test=" << splits.test.size() << "\n";
  return kExitOk;
}

int cmd_train(const ExperimentConfig& cfg, std::size_t jobs, std::ostream& out) {
  cfg.train.validate();
  const DatasetSplits data = load_training_data(cfg);
  const ModelDims dims = cfg.dims_for(data.header);
  check_pools(data, cfg.train);
  fs::create_directories(cfg.out_dir);

  const RunResult run = run_experiment(data, dims, cfg.train, jobs, seed_writer(cfg.out_dir, dims, cfg.train));
  const std::string label = run_label(cfg.train);
  const std::string line = label + " " + to_string(cfg.train.metric) + ": " + run.summary();

  nlohmann::ordered_json summary;
  summary["label"] = label;
  summary["metric"] = to_string(cfg.train.metric);
  summary["mean"] = run.mean;
  summary["std"] = run.stddev;
  summary["summary"] = run.summary();
  for (const SeedResult& s : run.seeds) {
    nlohmann::ordered_json js;
    js["seed"] = s.seed;
    js["ok"] = s.ok;
    if (s.ok) {
      js["best_epoch"] = s.best_epoch;
      js["best_dev_metric"] = s.best_dev_metric;
      js["test_metric"] = s.test_metric;
    } else {
      js["error"] = s.error;
    }
    summary["seeds"].push_back(js);
  }
  io::write_file_atomic(cfg.out_dir / "summary.json", summary.dump(2) + "\n");
  io::write_file_atomic(cfg.out_dir / "summary.txt", line + "\n");
  out << line << "\n";
  if (run.failures > 0) {
    for (const SeedResult& s : run.seeds) {
      if (!s.ok) log::error("seed " + std::to_string(s.seed) + ": " + s.error);
    }
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint, const std::string& split_name,
             MetricKind metric, std::ostream& out, std::ostream& err) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  if (!fs::exists(cfg.data_dir / "header.json")) {
    throw ConfigError("dataset not found: " + (cfg.data_dir / "header.json").string());
  }
  const DatasetHeader header = load_header(cfg.data_dir / "header.json");
  if (ck.dims.d_img != header.d_img || ck.dims.d_text != header.d_text || ck.dims.num_classes != header.num_classes) {
    err << "dims mismatch: checkpoint (d_img=" << ck.dims.d_img << ", d_text=" << ck.dims.d_text
        << ", C=" << ck.dims.num_classes << ") vs dataset (d_img=" << header.d_img << ", d_text=" << header.d_text
        << ", C=" << header.num_classes << ")\n";
    return kExitConfig;
  }
  const Dataset ds = load_dataset(cfg.data_dir, parse_split(split_name));
  const double score = evaluate(ck.params, ds.records, ck.dims, metric, ds.header.answer_vocab);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", score);
  out << buf << "\n";
  return kExitOk;
}

int cmd_ablate(const ExperimentConfig& cfg, SweepKind kind, std::size_t jobs, std::ostream& out) {
  cfg.train.validate();
  const DatasetSplits data = load_training_data(cfg);
  const ModelDims dims = cfg.dims_for(data.header);
  const auto points = sweep_points(kind, cfg.train);
  for (const SweepPoint& p : points) check_pools(data, p.config);
  fs::create_directories(cfg.out_dir);

  std::ostringstream csv;
  csv << "sweep,setting,mean,std,result\n";
  bool failed = false;
  for (const SweepPoint& p : points) {
    log::info("ablate " + to_string(kind) + ": " + p.setting);
    const RunResult run = run_experiment(data, dims, p.config, jobs);
    failed = failed || run.failures > 0;
    char nums[64];
    std::snprintf(nums, sizeof nums, "%.6f,%.6f", run.mean, run.stddev);
    csv << to_string(kind) << "," << p.setting << "," << nums << "," << run.summary() << "\n";
  }
  io::write_file_atomic(cfg.out_dir / ("ablate_" + to_string(kind) + ".csv"), csv.str());
  out << csv.str();
  return failed ? kExitRuntime : kExitOk;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

int cmd_score(const std::string& candidates_path, const std::string& references_path, const std::string& weighting,
              std::ostream& out) {
  const auto candidates = read_lines(candidates_path);
  std::vector<std::vector<std::string>> references;
  for (const auto& line : read_lines(references_path)) references.push_back(split_references(line));
  CiderConfig config;
  if (weighting == "tfidf") {
    config.weighting = NgramWeighting::TfIdf;
  } else if (weighting != "raw") {
    throw ConfigError("unknown weighting '" + weighting + "' (expected raw or tfidf)");
  }
  if (candidates.size() != references.size()) {
    throw ConfigError("score: " + std::to_string(candidates.size()) + " candidates vs " +
                      std::to_string(references.size()) + " reference lines");
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", cider(candidates, references, config));
  out << buf << "\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Curriculum paraphrase-augmentation training engine"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string out_dir = "runs";
  app.add_option("--config", config_path, "TOML experiment config");
  CLI::Option* seed_opt = app.add_option("--seed", seed, "Seed (generation seed for gen, first run seed otherwise)")
                              ->capture_default_str();
  app.add_option("--jobs", jobs, "Seeds trained in parallel")->capture_default_str()->check(CLI::PositiveNumber);
  CLI::Option* out_opt = app.add_option("--out", out_dir, "Output directory")->capture_default_str();

  // gen
  CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic paraphrase-clustered dataset");
  SyntheticSpec spec;
  std::string gen_data = "data";
  CLI::Option* g_classes = gen->add_option("--classes", spec.num_classes, "Answer classes C")->capture_default_str();
  CLI::Option* g_per = gen->add_option("--per-class", spec.samples_per_class, "Samples per class")->capture_default_str();
  CLI::Option* g_dimg = gen->add_option("--d-img", spec.d_img, "Image embedding size")->capture_default_str();
  CLI::Option* g_dtext = gen->add_option("--d-text", spec.d_text, "Question embedding size")->capture_default_str();
  CLI::Option* g_pool = gen->add_option("--pool-size", spec.pool_size, "Paraphrases per question")->capture_default_str();
  CLI::Option* g_sp = gen->add_option("--paraphrase-noise", spec.paraphrase_noise, "Paraphrase noise scale")
                          ->capture_default_str();
  CLI::Option* g_sq = gen->add_option("--question-noise", spec.question_noise, "Question noise scale")
                          ->capture_default_str();
  CLI::Option* g_sep = gen->add_option("--separation", spec.separation, "Minimum centroid distance")
                           ->capture_default_str();
  CLI::Option* g_rho = gen->add_option("--correlation", spec.label_image_correlation, "Label-image correlation")
                           ->capture_default_str();
  CLI::Option* g_data = gen->add_option("--data", gen_data, "Dataset directory to write")->capture_default_str();

  // train
  CLI::App* train = app.add_subcommand("train", "Train over all seeds and report mean ± std");
  TrainFlags train_flags;
  train_flags.add_to(*train);

  // eval
  CLI::App* eval = app.add_subcommand("eval", "Score a checkpoint on a dataset split (raw branch only)");
  std::string eval_ckpt, eval_split = "test", eval_metric = "accuracy", eval_data = "data";
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  CLI::Option* e_data = eval->add_option("--data", eval_data, "Dataset directory")->capture_default_str();
  eval->add_option("--split", eval_split, "train, dev or test")->capture_default_str();
  eval->add_option("--metric", eval_metric, "accuracy or cider")->capture_default_str();

  // ablate
  CLI::App* ablate = app.add_subcommand("ablate", "Run an ablation sweep and write a CSV");
  std::string sweep_name;
  ablate->add_option("--sweep", sweep_name, "fixed-threshold, n-paraphrases or schedule")->required();
  TrainFlags ablate_flags;
  ablate_flags.add_to(*ablate);

  // schedule
  CLI::App* sched = app.add_subcommand("schedule", "Print the threshold trace of a schedule as CSV");
  std::string s_kind = "linear";
  double s_tmax = 0.8, s_tmin = 0.4;
  std::size_t s_epochs = 40, s_steps = 1;
  double s_samples = 0.0;
  sched->add_option("--kind", s_kind, "fixed, linear or cosine")->capture_default_str();
  sched->add_option("--t-max", s_tmax, "Initial threshold")->capture_default_str();
  sched->add_option("--t-min", s_tmin, "Final threshold")->capture_default_str();
  sched->add_option("--epochs", s_epochs, "Training epochs")->capture_default_str();
  sched->add_option("--steps-per-epoch", s_steps, "Optimization steps per epoch")->capture_default_str();
  sched->add_option("--samples-per-epoch", s_samples, "Training samples per epoch (0 = 16 per step)")
      ->capture_default_str();

  // score
  CLI::App* score = app.add_subcommand("score", "Corpus CIDEr of candidate lines against reference lines");
  std::string cand_path, ref_path, weighting = "raw";
  score->add_option("--candidates", cand_path, "One candidate per line")->required();
  score->add_option("--references", ref_path, "Tab-separated references per line")->required();
  score->add_option("--weighting", weighting, "raw or tfidf")->capture_default_str();

  for (CLI::App* sub : {gen, train, eval, ablate, sched, score}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    ExperimentConfig cfg = base_config(config_path);
    if (out_opt->count() > 0) cfg.out_dir = out_dir;

    if (gen->parsed()) {
      auto set = [](CLI::Option* o) { return o->count() > 0; };
      SyntheticSpec& s = cfg.synthetic;
      if (set(g_classes)) s.num_classes = spec.num_classes;
      if (set(g_per)) s.samples_per_class = spec.samples_per_class;
      if (set(g_dimg)) s.d_img = spec.d_img;
      if (set(g_dtext)) s.d_text = spec.d_text;
      if (set(g_pool)) s.pool_size = spec.pool_size;
      if (set(g_sp)) s.paraphrase_noise = spec.paraphrase_noise;
      if (set(g_sq)) s.question_noise = spec.question_noise;
      if (set(g_sep)) s.separation = spec.separation;
      if (set(g_rho)) s.label_image_correlation = spec.label_image_correlation;
      if (set(g_data)) cfg.data_dir = gen_data;
      if (set(seed_opt)) cfg.generation_seed = seed;
      return cmd_gen(cfg, out);
    }
    if (train->parsed()) {
      train_flags.apply(cfg, seed_opt, seed);
      return cmd_train(cfg, jobs, out);
    }
    if (eval->parsed()) {
      if (e_data->count() > 0) cfg.data_dir = eval_data;
      return cmd_eval(cfg, eval_ckpt, eval_split, parse_metric_kind(eval_metric), out, err);
    }
    if (ablate->parsed()) {
      ablate_flags.apply(cfg, seed_opt, seed);
      return cmd_ablate(cfg, parse_sweep_kind(sweep_name), jobs, out);
    }
    if (sched->parsed()) {
      Schedule s{parse_schedule_kind(s_kind), s_tmax, s_kind == "fixed" ? s_tmax : s_tmin, 1};
      if (s_steps == 0) throw ConfigError("--steps-per-epoch must be positive");
      s.horizon = s.updates_per_step() ? s_epochs * s_steps : s_epochs;
      const double samples = s_samples > 0.0 ? s_samples : 16.0 * static_cast<double>(s_steps);
      out << trace_to_csv(schedule_trace(s, s_steps, samples));
      return kExitOk;
    }
    if (score->parsed()) return cmd_score(cand_path, ref_path, weighting, out);
  } catch (const PoolExhaustedError& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const Error& e) {
    // Configuration, validation, parse and format problems.
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace cavq::cli
