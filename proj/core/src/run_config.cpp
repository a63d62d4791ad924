#include "lfr/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "lfr/errors.hpp"

namespace lfr {

namespace {

using nlohmann::json;

/// Strict object reader: typed lookups with defaults, unknown-key detection,
/// and error accumulation so a bad config reports everything at once.
class JsonReader {
 public:
  JsonReader(const json& j, std::string path, std::vector<std::string>& errors)
      : j_(&j), path_(std::move(path)), errors_(&errors) {
    if (!j_->is_object()) {
      errors_->push_back(path_ + ": expected a JSON object");
      ok_ = false;
    }
  }

  bool has(const std::string& key) {
    known_.insert(key);
    return ok_ && j_->contains(key);
  }

  template <typename T>
  T get(const std::string& key, T fallback, const char* type_name) {
    known_.insert(key);
    if (!ok_ || !j_->contains(key)) return fallback;
    try {
      return j_->at(key).get<T>();
    } catch (const json::exception&) {
      errors_->push_back(path_ + "." + key + ": expected " + type_name);
      return fallback;
    }
  }

  double number(const std::string& key, double fallback) {
    return get<double>(key, fallback, "a number");
  }
  std::int64_t integer(const std::string& key, std::int64_t fallback) {
    return get<std::int64_t>(key, fallback, "an integer");
  }
  std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
    return get<std::uint64_t>(key, fallback, "a non-negative integer");
  }
  bool boolean(const std::string& key, bool fallback) {
    return get<bool>(key, fallback, "a boolean");
  }
  std::string str(const std::string& key, std::string fallback) {
    return get<std::string>(key, std::move(fallback), "a string");
  }

  json object(const std::string& key) {
    known_.insert(key);
    if (!ok_ || !j_->contains(key)) return json::object();
    if (!j_->at(key).is_object()) {
      errors_->push_back(path_ + "." + key + ": expected an object");
      return json::object();
    }
    return j_->at(key);
  }

  /// Call after all lookups: flags any key the schema does not know.
  void finalize() {
    if (!ok_) return;
    for (const auto& [key, value] : j_->items()) {
      if (!known_.contains(key)) {
        errors_->push_back(path_ + ": unknown key '" + key + "'");
      }
    }
  }

 private:
  const json* j_;
  std::string path_;
  std::vector<std::string>* errors_;
  std::set<std::string> known_;
  bool ok_ = true;
};

void merge_overrides(json& base, const json& overrides) {
  if (!overrides.is_object() || !base.is_object()) {
    base = overrides;
    return;
  }
  for (const auto& [key, value] : overrides.items()) {
    if (value.is_object() && base.contains(key) && base[key].is_object()) {
      merge_overrides(base[key], value);
    } else {
      base[key] = value;
    }
  }
}

OptimizerConfig parse_optimizer(const json& j, std::vector<std::string>& errors) {
  JsonReader r(j, "train.optimizer", errors);
  OptimizerConfig cfg;
  const std::string kind = r.str("kind", "adam");
  if (kind == "adam") {
    cfg.kind = OptimizerKind::adam;
  } else if (kind == "sgd") {
    cfg.kind = OptimizerKind::sgd;
  } else {
    errors.push_back("train.optimizer.kind: must be 'adam' or 'sgd', got '" + kind + "'");
  }
  cfg.lr = r.number("lr", cfg.lr);
  if (r.has("betas")) {
    auto betas = r.get<std::vector<double>>("betas", {cfg.beta1, cfg.beta2}, "an array of 2 numbers");
    if (betas.size() == 2) {
      cfg.beta1 = betas[0];
      cfg.beta2 = betas[1];
    } else {
      errors.push_back("train.optimizer.betas: expected exactly 2 entries");
    }
  }
  cfg.eps = r.number("eps", cfg.eps);
  cfg.weight_decay = r.number("weight_decay", cfg.weight_decay);
  cfg.momentum = r.number("momentum", cfg.momentum);
  r.finalize();
  return cfg;
}

BBTConfig parse_bbt(const json& j, std::vector<std::string>& errors) {
  JsonReader r(j, "train.bbt", errors);
  BBTConfig cfg;
  cfg.lambda_offdiag = static_cast<float>(r.number("lambda", cfg.lambda_offdiag));
  cfg.eps = static_cast<float>(r.number("eps", cfg.eps));
  cfg.mean_reduction = r.boolean("mean_reduction", cfg.mean_reduction);
  r.finalize();
  return cfg;
}

InitSpec parse_init(const json& j, std::vector<std::string>& errors) {
  JsonReader r(j, "train.init", errors);
  InitSpec spec;
  const std::string scheme = r.str("scheme", "default_uniform");
  try {
    spec.scheme = init_scheme_from_string(scheme);
  } catch (const ConfigError& e) {
    errors.push_back(std::string("train.init.scheme: ") + e.what());
  }
  spec.dropout_rate = static_cast<float>(r.number("dropout_rate", spec.dropout_rate));
  r.finalize();
  return spec;
}

TrainConfig parse_train(const json& j, std::vector<std::string>& errors) {
  JsonReader r(j, "train", errors);
  TrainConfig cfg;
  cfg.seed = r.u64("seed", cfg.seed);
  cfg.k = static_cast<int>(r.integer("k", cfg.k));
  cfg.n_candidates = static_cast<int>(r.integer("n_candidates", cfg.n_candidates));
  cfg.latent_dim = r.integer("latent_dim", cfg.latent_dim);
  cfg.encoder_hidden = r.integer("encoder_hidden", cfg.encoder_hidden);
  cfg.encoder_layers = static_cast<int>(r.integer("encoder_layers", cfg.encoder_layers));
  cfg.projector_hidden = r.integer("projector_hidden", cfg.projector_hidden);
  cfg.projector_layers = static_cast<int>(r.integer("projector_layers", cfg.projector_layers));
  if (r.has("projector_dims")) {
    cfg.projector_dims =
        r.get<std::vector<std::int64_t>>("projector_dims", {}, "an array of integers");
  }
  cfg.predictor_hidden = r.integer("predictor_hidden", cfg.predictor_hidden);
  cfg.batch_size = r.integer("batch_size", cfg.batch_size);
  cfg.train_epochs = static_cast<int>(r.integer("train_epochs", cfg.train_epochs));
  cfg.predictor_epochs = static_cast<int>(r.integer("predictor_epochs", cfg.predictor_epochs));
  cfg.eval_every = static_cast<int>(r.integer("eval_every", cfg.eval_every));
  cfg.max_steps = r.integer("max_steps", cfg.max_steps);
  cfg.joint_updates = r.boolean("joint_updates", cfg.joint_updates);
  cfg.per_batch_alternation = r.boolean("per_batch_alternation", cfg.per_batch_alternation);
  cfg.optimizer = parse_optimizer(r.object("optimizer"), errors);
  cfg.bbt = parse_bbt(r.object("bbt"), errors);
  cfg.init = parse_init(r.object("init"), errors);
  r.finalize();
  return cfg;
}

DatasetSpec parse_dataset(const json& j, std::vector<std::string>& errors) {
  JsonReader r(j, "dataset", errors);
  DatasetSpec spec;
  const std::string kind = r.str("kind", "synthetic");
  if (kind == "csv") {
    spec.kind = DatasetSpec::Kind::csv;
    spec.train_path = r.str("train_path", "");
    spec.test_path = r.str("test_path", "");
    spec.schema_path = r.str("schema_path", "");
    if (spec.train_path.empty()) errors.push_back("dataset.train_path: required for kind 'csv'");
    if (spec.test_path.empty()) errors.push_back("dataset.test_path: required for kind 'csv'");
    if (spec.schema_path.empty()) errors.push_back("dataset.schema_path: required for kind 'csv'");
  } else if (kind == "synthetic") {
    spec.kind = DatasetSpec::Kind::synthetic;
    spec.n = r.integer("n", spec.n);
    spec.d_signal = r.integer("d_signal", spec.d_signal);
    spec.d_noise = r.integer("d_noise", spec.d_noise);
    spec.classes = static_cast<int>(r.integer("classes", spec.classes));
    spec.sep = r.number("sep", spec.sep);
    spec.seed = r.u64("seed", spec.seed);
  } else {
    errors.push_back("dataset.kind: must be 'csv' or 'synthetic', got '" + kind + "'");
  }
  r.finalize();
  return spec;
}

ProbeConfig parse_probe(const json& j, std::vector<std::string>& errors, int& seeds) {
  JsonReader r(j, "probe", errors);
  ProbeConfig cfg;
  cfg.l2 = r.number("l2", cfg.l2);
  cfg.max_iters = static_cast<int>(r.integer("max_iters", cfg.max_iters));
  cfg.tol = r.number("tol", cfg.tol);
  seeds = static_cast<int>(r.integer("seeds", seeds));
  if (cfg.l2 < 0.0) errors.push_back("probe.l2: must be >= 0");
  if (cfg.max_iters < 1) errors.push_back("probe.max_iters: must be >= 1");
  if (seeds < 1) errors.push_back("probe.seeds: must be >= 1");
  r.finalize();
  return cfg;
}

}  // namespace

RunConfig parse_run_config(const json& file_json, const json& overrides) {
  json j = file_json;
  merge_overrides(j, overrides);

  std::vector<std::string> errors;
  RunConfig cfg;
  JsonReader r(j, "config", errors);
  cfg.out_dir = r.str("out_dir", cfg.out_dir);
  cfg.dataset = parse_dataset(r.object("dataset"), errors);
  cfg.train = parse_train(r.object("train"), errors);
  cfg.probe = parse_probe(r.object("probe"), errors, cfg.probe_seeds);
  r.finalize();

  try {
    cfg.train.validate();
  } catch (const ConfigError& e) {
    errors.push_back(e.what());
  }
  if (!errors.empty()) {
    std::ostringstream os;
    os << "configuration errors:";
    for (const auto& e : errors) os << "\n  - " << e;
    throw ConfigError(os.str());
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path, const json& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config JSON parse error in " + path + ": " + e.what());
  }
  return parse_run_config(j, overrides);
}

json train_config_to_json(const TrainConfig& cfg) {
  json opt{{"kind", cfg.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd"},
           {"lr", cfg.optimizer.lr},
           {"betas", {cfg.optimizer.beta1, cfg.optimizer.beta2}},
           {"eps", cfg.optimizer.eps},
           {"weight_decay", cfg.optimizer.weight_decay},
           {"momentum", cfg.optimizer.momentum}};
  json bbt{{"lambda", cfg.bbt.lambda_offdiag},
           {"eps", cfg.bbt.eps},
           {"mean_reduction", cfg.bbt.mean_reduction}};
  json init{{"scheme", to_string(cfg.init.scheme)}, {"dropout_rate", cfg.init.dropout_rate}};
  return json{{"seed", cfg.seed},
              {"k", cfg.k},
              {"n_candidates", cfg.n_candidates},
              {"latent_dim", cfg.latent_dim},
              {"encoder_hidden", cfg.encoder_hidden},
              {"encoder_layers", cfg.encoder_layers},
              {"projector_hidden", cfg.projector_hidden},
              {"projector_layers", cfg.projector_layers},
              {"projector_dims", cfg.projector_dims},
              {"predictor_hidden", cfg.predictor_hidden},
              {"batch_size", cfg.batch_size},
              {"train_epochs", cfg.train_epochs},
              {"predictor_epochs", cfg.predictor_epochs},
              {"eval_every", cfg.eval_every},
              {"max_steps", cfg.max_steps},
              {"joint_updates", cfg.joint_updates},
              {"per_batch_alternation", cfg.per_batch_alternation},
              {"optimizer", opt},
              {"bbt", bbt},
              {"init", init}};
}

TrainConfig train_config_from_json(const json& j) {
  std::vector<std::string> errors;
  TrainConfig cfg = parse_train(j, errors);
  if (!errors.empty()) {
    std::ostringstream os;
    os << "train config errors:";
    for (const auto& e : errors) os << "\n  - " << e;
    throw ConfigError(os.str());
  }
  return cfg;
}

json effective_config_json(const RunConfig& cfg) {
  json dataset;
  if (cfg.dataset.kind == DatasetSpec::Kind::csv) {
    dataset = json{{"kind", "csv"},
                   {"train_path", cfg.dataset.train_path},
                   {"test_path", cfg.dataset.test_path},
                   {"schema_path", cfg.dataset.schema_path}};
  } else {
    dataset = json{{"kind", "synthetic"}, {"n", cfg.dataset.n},
                   {"d_signal", cfg.dataset.d_signal}, {"d_noise", cfg.dataset.d_noise},
                   {"classes", cfg.dataset.classes},   {"sep", cfg.dataset.sep},
                   {"seed", cfg.dataset.seed}};
  }
  json probe{{"l2", cfg.probe.l2},
             {"max_iters", cfg.probe.max_iters},
             {"tol", cfg.probe.tol},
             {"seeds", cfg.probe_seeds}};
  return json{{"out_dir", cfg.out_dir},
              {"dataset", dataset},
              {"train", train_config_to_json(cfg.train)},
              {"probe", probe}};
}

LoadedData load_dataset(const DatasetSpec& spec, const FeatureMeta* reuse_meta) {
  LoadedData out;
  if (spec.kind == DatasetSpec::Kind::synthetic) {
    auto [train, test] = make_synthetic_clusters(spec.n, spec.d_signal, spec.d_noise, spec.classes,
                                                 spec.sep, spec.seed);
    out.train = std::move(train);
    out.test = std::move(test);
    return out;
  }
  CsvSchema schema = CsvSchema::load(spec.schema_path);
  if (reuse_meta != nullptr) {
    out.train = load_csv_eval(spec.train_path, schema, *reuse_meta);
    out.train.split_tag = SplitTag::train;
  } else {
    out.train = load_csv_train(spec.train_path, schema);
  }
  out.test = load_csv_eval(spec.test_path, schema, out.train.meta);
  return out;
}

json feature_meta_to_json(const FeatureMeta& meta) {
  json cols = json::array();
  for (const auto& c : meta.columns) {
    json jc{{"name", c.name},
            {"kind", c.kind == ColumnKind::numeric ? "numeric" : "categorical"}};
    if (c.kind == ColumnKind::numeric) {
      jc["mean"] = c.mean;
      jc["std"] = c.std_dev;
    } else {
      jc["categories"] = c.categories;
    }
    cols.push_back(std::move(jc));
  }
  return json{{"columns", cols},
              {"label_classes", meta.label_classes},
              {"feature_dim", meta.feature_dim}};
}

FeatureMeta feature_meta_from_json(const json& j) {
  FeatureMeta meta;
  for (const auto& jc : j.at("columns")) {
    ColumnMeta c;
    c.name = jc.at("name").get<std::string>();
    const auto kind = jc.at("kind").get<std::string>();
    if (kind == "numeric") {
      c.kind = ColumnKind::numeric;
      c.mean = jc.at("mean").get<double>();
      c.std_dev = jc.at("std").get<double>();
    } else {
      c.kind = ColumnKind::categorical;
      c.categories = jc.at("categories").get<std::vector<std::string>>();
    }
    meta.columns.push_back(std::move(c));
  }
  meta.label_classes = j.at("label_classes").get<std::vector<std::string>>();
  meta.feature_dim = j.at("feature_dim").get<std::int64_t>();
  return meta;
}

}  // namespace lfr
