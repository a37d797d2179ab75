#include "cavq/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "cavq/errors.hpp"

namespace cavq {

ModelDims ExperimentConfig::dims_for(const DatasetHeader& header) const {
  ModelDims dims = ModelDims::make(hidden, header.d_img, header.d_text, header.num_classes);
  dims.validate();
  return dims;
}

namespace {

class Section {
 public:
  Section(const toml::table& root, std::string name) : name_(std::move(name)) {
    if (const auto* node = root.get(name_)) {
      table_ = node->as_table();
      if (table_ == nullptr) throw ConfigError("config: [" + name_ + "] must be a table");
    }
  }

  void read(const char* key, double& out) const {
    if (const auto* n = node(key)) {
      if (auto v = n->value<double>()) {
        out = *v;
      } else {
        fail(key, "a number");
      }
    }
  }

  void read(const char* key, std::size_t& out) const {
    if (const auto* n = node(key)) {
      auto v = n->value_exact<std::int64_t>();
      if (!v || *v < 0) fail(key, "a nonnegative integer");
      out = static_cast<std::size_t>(*v);
    }
  }

  void read(const char* key, std::uint64_t& out, bool) const {
    if (const auto* n = node(key)) {
      auto v = n->value_exact<std::int64_t>();
      if (!v || *v < 0) fail(key, "a nonnegative integer");
      out = static_cast<std::uint64_t>(*v);
    }
  }

  void read(const char* key, std::string& out) const {
    if (const auto* n = node(key)) {
      auto v = n->value_exact<std::string>();
      if (!v) fail(key, "a string");
      out = *v;
    }
  }

  void read(const char* key, std::vector<std::uint64_t>& out) const {
    if (const auto* n = node(key)) {
      const auto* arr = n->as_array();
      if (arr == nullptr) fail(key, "an array of integers");
      out.clear();
      for (const auto& item : *arr) {
        auto v = item.value_exact<std::int64_t>();
        if (!v || *v < 0) fail(key, "an array of nonnegative integers");
        out.push_back(static_cast<std::uint64_t>(*v));
      }
    }
  }

  /// Rejects keys that no read() asked for, which are almost always typos.
  void finish() const {
    if (table_ == nullptr) return;
    for (const auto& [key, value] : *table_) {
      if (!seen_.contains(key.str())) {
        throw ConfigError("config: unknown key [" + name_ + "]." + std::string(key.str()));
      }
    }
  }

 private:
  const toml::node* node(const char* key) const {
    seen_.insert(key);
    return table_ ? table_->get(key) : nullptr;
  }
  [[noreturn]] void fail(const char* key, const char* expected) const {
    throw ConfigError("config: [" + name_ + "]." + key + " must be " + expected);
  }

  std::string name_;
  const toml::table* table_ = nullptr;
  mutable std::set<std::string, std::less<>> seen_;
};

}  // namespace

ExperimentConfig parse_config(std::string_view toml_text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config: " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(msg.str());
  }

  for (const auto& [key, value] : root) {
    static const std::set<std::string, std::less<>> kSections = {"synthetic", "dims", "train", "schedule", "paths"};
    if (!kSections.contains(key.str())) throw ConfigError("config: unknown section [" + std::string(key.str()) + "]");
  }

  ExperimentConfig cfg;
  {
    Section s(root, "synthetic");
    SyntheticSpec& sp = cfg.synthetic;
    s.read("num_classes", sp.num_classes);
    s.read("samples_per_class", sp.samples_per_class);
    s.read("d_img", sp.d_img);
    s.read("d_text", sp.d_text);
    s.read("pool_size", sp.pool_size);
    s.read("paraphrase_noise", sp.paraphrase_noise);
    s.read("separation", sp.separation);
    s.read("question_noise", sp.question_noise);
    s.read("label_image_correlation", sp.label_image_correlation);
    s.read("seed", cfg.generation_seed, true);
    s.finish();
  }
  {
    Section s(root, "dims");
    s.read("d", cfg.hidden);
    s.finish();
  }
  {
    Section s(root, "train");
    TrainConfig& t = cfg.train;
    s.read("learning_rate", t.optimizer.learning_rate);
    s.read("beta1", t.optimizer.beta1);
    s.read("beta2", t.optimizer.beta2);
    s.read("epsilon", t.optimizer.epsilon);
    s.read("weight_decay", t.optimizer.weight_decay);
    s.read("batch_size", t.batch_size);
    s.read("max_epochs", t.max_epochs);
    s.read("patience", t.patience);
    s.read("n_paraphrases", t.n_paraphrases);
    s.read("seeds", t.seeds);
    std::string metric = to_string(t.metric);
    s.read("metric", metric);
    t.metric = parse_metric_kind(metric);
    s.finish();
  }
  {
    Section s(root, "schedule");
    Schedule& sc = cfg.train.schedule;
    std::string kind = to_string(sc.kind);
    s.read("kind", kind);
    sc.kind = parse_schedule_kind(kind);
    s.read("t_max", sc.t_max);
    s.read("t_min", sc.t_min);
    if (sc.kind == ScheduleKind::Fixed) {
      // A fixed schedule takes "t", or whichever bound is given.
      double t = sc.t_max;
      if (root["schedule"]["t_min"] && !root["schedule"]["t_max"]) t = sc.t_min;
      s.read("t", t);
      sc.t_max = sc.t_min = t;
    }
    s.read("horizon", sc.horizon, true);
    s.finish();
  }
  {
    Section s(root, "paths");
    std::string data = cfg.data_dir.string(), out = cfg.out_dir.string();
    s.read("data", data);
    s.read("out", out);
    s.finish();
    cfg.data_dir = std::filesystem::path(data).is_absolute() ? std::filesystem::path(data) : base_dir / data;
    cfg.out_dir = std::filesystem::path(out).is_absolute() ? std::filesystem::path(out) : base_dir / out;
  }
  if (cfg.hidden == 0) throw ConfigError("config: [dims].d must be positive");
  cfg.synthetic.validate();
  cfg.train.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.parent_path());
}

}  // namespace cavq
