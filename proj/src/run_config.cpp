#include "taskbalance/run_config.hpp"

#include "taskbalance/errors.hpp"

namespace taskbalance {

std::string ModelConfig::name() const {
  if (kind == Kind::linear) return "linear";
  return "mlp(" + std::to_string(hidden) + ")";
}

void RunConfig::check() const {
  if (strategies.empty()) throw ValidationError("config needs at least one strategy");
  if (seeds.empty()) throw ValidationError("config needs at least one seed");
  if (proportions.empty())
    throw ValidationError("config needs at least one training proportion");
  for (double p : proportions)
    if (!(p > 0.0 && p < 1.0))
      throw ValidationError("training proportions must lie in (0,1)");
  for (const auto& s : strategies) s.check();
  if (model.kind == ModelConfig::Kind::mlp && model.hidden < 1)
    throw ValidationError("mlp hidden width must be positive");
  if (dataset.source == DatasetConfig::Source::synthetic)
    dataset.synthetic.check();
  else if (dataset.csv_path.empty())
    throw ValidationError("csv dataset needs a path");
  if (output_dir.empty()) throw ValidationError("output_dir must not be empty");
}

nlohmann::json to_json(const TransformSpec& spec) {
  nlohmann::json doc;
  switch (spec.kind) {
    case TransformKind::identity:
      doc["type"] = "identity";
      break;
    case TransformKind::exponential:
      doc["type"] = "exponential";
      doc["temperature"] = spec.temperature;
      break;
    case TransformKind::polynomial:
      doc["type"] = "polynomial";
      doc["coefficients"] = spec.coefficients;
      break;
  }
  return doc;
}

TransformSpec transform_from_json(const nlohmann::json& doc) {
  const std::string type = doc.at("type").get<std::string>();
  if (type == "identity") return TransformSpec::identity();
  if (type == "exponential" || type == "exp")
    return TransformSpec::exponential(doc.value("temperature", 50.0));
  if (type == "polynomial" || type == "poly")
    return TransformSpec::polynomial(
        doc.at("coefficients").get<std::vector<double>>());
  throw ValidationError("unknown transform type: " + type);
}

nlohmann::json to_json(const StrategyKind& kind) {
  nlohmann::json doc;
  switch (kind.id) {
    case StrategyId::direct_sum:
      doc["type"] = "direct_sum";
      break;
    case StrategyId::fixed:
      doc["type"] = "fixed";
      doc["weights"] = kind.fixed_weights;
      break;
    case StrategyId::dwa:
      doc["type"] = "dwa";
      doc["temperature"] = kind.dwa_temperature;
      break;
    case StrategyId::maximum:
      doc["type"] = "maximum";
      break;
    case StrategyId::soft_maximum:
      doc["type"] = "soft_maximum";
      break;
    case StrategyId::curriculum:
      doc["type"] = "curriculum";
      doc["temperature"] = kind.curriculum_temperature;
      break;
    case StrategyId::bmtl:
      doc["type"] = "bmtl";
      doc["transform"] = to_json(kind.transform);
      break;
    case StrategyId::mgda:
      doc["type"] = "mgda";
      break;
  }
  return doc;
}

StrategyKind strategy_from_json(const nlohmann::json& doc) {
  const std::string type = doc.at("type").get<std::string>();
  if (type == "direct_sum") return StrategyKind::direct_sum();
  if (type == "fixed")
    return StrategyKind::fixed(doc.at("weights").get<std::vector<double>>());
  if (type == "dwa") return StrategyKind::dwa(doc.value("temperature", 2.0));
  if (type == "maximum") return StrategyKind::maximum();
  if (type == "soft_maximum") return StrategyKind::soft_maximum();
  if (type == "curriculum")
    return StrategyKind::curriculum(doc.value("temperature", 1.0));
  if (type == "bmtl") {
    if (doc.contains("transform"))
      return StrategyKind::bmtl(transform_from_json(doc.at("transform")));
    return StrategyKind::bmtl();
  }
  if (type == "mgda") return StrategyKind::mgda();
  throw ValidationError("unknown strategy type: " + type);
}

namespace {

nlohmann::json dataset_to_json(const DatasetConfig& dataset) {
  nlohmann::json doc;
  doc["id"] = dataset.id;
  doc["standardize"] = dataset.standardize;
  if (dataset.source == DatasetConfig::Source::synthetic) {
    doc["type"] = "synthetic";
    doc["task_count"] = dataset.synthetic.task_count;
    doc["examples_per_task"] = dataset.synthetic.examples_per_task;
    doc["feature_dim"] = dataset.synthetic.feature_dim;
    doc["noise_stddevs"] = dataset.synthetic.noise_stddevs;
    doc["task_relatedness"] = dataset.synthetic.task_relatedness;
    doc["kind"] =
        dataset.synthetic.kind == TaskKind::regression ? "regression" : "classification";
    if (dataset.synthetic.kind == TaskKind::classification)
      doc["num_classes"] = dataset.synthetic.num_classes;
  } else {
    doc["type"] = "csv";
    doc["path"] = dataset.csv_path;
    doc["n_features"] = dataset.csv_features;
    doc["n_outputs"] = dataset.csv_outputs;
    if (dataset.csv_subsample) doc["subsample"] = *dataset.csv_subsample;
  }
  return doc;
}

DatasetConfig dataset_from_json(const nlohmann::json& doc) {
  DatasetConfig dataset;
  const std::string type = doc.at("type").get<std::string>();
  dataset.id = doc.value("id", std::string("dataset"));
  if (type == "synthetic") {
    dataset.source = DatasetConfig::Source::synthetic;
    dataset.synthetic.task_count = doc.at("task_count").get<int>();
    dataset.synthetic.examples_per_task = doc.at("examples_per_task").get<int>();
    dataset.synthetic.feature_dim = doc.at("feature_dim").get<int>();
    dataset.synthetic.noise_stddevs =
        doc.at("noise_stddevs").get<std::vector<double>>();
    dataset.synthetic.task_relatedness = doc.value("task_relatedness", 1.0);
    const std::string kind = doc.value("kind", std::string("regression"));
    if (kind == "regression") {
      dataset.synthetic.kind = TaskKind::regression;
    } else if (kind == "classification") {
      dataset.synthetic.kind = TaskKind::classification;
      dataset.synthetic.num_classes = doc.value("num_classes", 2);
    } else {
      throw ValidationError("unknown dataset kind: " + kind);
    }
    dataset.standardize = doc.value("standardize", false);
  } else if (type == "csv") {
    dataset.source = DatasetConfig::Source::csv;
    dataset.csv_path = doc.at("path").get<std::string>();
    dataset.csv_features = doc.at("n_features").get<int>();
    dataset.csv_outputs = doc.at("n_outputs").get<int>();
    if (doc.contains("subsample"))
      dataset.csv_subsample = doc.at("subsample").get<int>();
    dataset.standardize = doc.value("standardize", true);
  } else {
    throw ValidationError("unknown dataset type: " + type);
  }
  return dataset;
}

}  // namespace

nlohmann::json to_json(const RunConfig& config) {
  nlohmann::json doc;
  doc["dataset"] = dataset_to_json(config.dataset);
  doc["proportions"] = config.proportions;
  doc["strategies"] = nlohmann::json::array();
  for (const auto& s : config.strategies) doc["strategies"].push_back(to_json(s));
  doc["model"]["type"] =
      config.model.kind == ModelConfig::Kind::linear ? "linear" : "mlp";
  if (config.model.kind == ModelConfig::Kind::mlp)
    doc["model"]["hidden"] = config.model.hidden;
  nlohmann::json& train = doc["train"];
  train["steps"] = config.train.steps;
  train["batch_size"] = config.train.batch_size;
  train["eta0"] = config.train.eta0;
  train["adam_beta1"] = config.train.adam_beta1;
  train["adam_beta2"] = config.train.adam_beta2;
  train["adam_eps"] = config.train.adam_eps;
  train["lambda"] = config.train.lambda;
  train["use_adam"] = config.train.use_adam;
  train["full_batch"] = config.train.full_batch;
  train["decay_per_epoch"] = config.train.decay_per_epoch;
  train["raw_history"] = config.train.raw_history;
  train["history_ema_decay"] = config.train.history_ema_decay;
  if (config.train.constant_lr) train["constant_lr"] = *config.train.constant_lr;
  doc["seeds"] = config.seeds;
  doc["output_dir"] = config.output_dir;
  return doc;
}

RunConfig run_config_from_json(const nlohmann::json& doc) {
  RunConfig config;
  config.dataset = dataset_from_json(doc.at("dataset"));
  if (doc.contains("proportions"))
    config.proportions = doc.at("proportions").get<std::vector<double>>();
  for (const auto& entry : doc.at("strategies"))
    config.strategies.push_back(strategy_from_json(entry));
  if (doc.contains("model")) {
    const std::string kind = doc.at("model").value("type", std::string("mlp"));
    if (kind == "linear") {
      config.model.kind = ModelConfig::Kind::linear;
    } else if (kind == "mlp") {
      config.model.kind = ModelConfig::Kind::mlp;
      config.model.hidden = doc.at("model").value("hidden", 64);
    } else {
      throw ValidationError("unknown model type: " + kind);
    }
  }
  if (doc.contains("train")) {
    const nlohmann::json& train = doc.at("train");
    config.train.steps = train.value("steps", config.train.steps);
    config.train.batch_size = train.value("batch_size", config.train.batch_size);
    config.train.eta0 = train.value("eta0", config.train.eta0);
    config.train.adam_beta1 = train.value("adam_beta1", config.train.adam_beta1);
    config.train.adam_beta2 = train.value("adam_beta2", config.train.adam_beta2);
    config.train.adam_eps = train.value("adam_eps", config.train.adam_eps);
    config.train.lambda = train.value("lambda", config.train.lambda);
    config.train.use_adam = train.value("use_adam", config.train.use_adam);
    config.train.full_batch = train.value("full_batch", config.train.full_batch);
    config.train.decay_per_epoch =
        train.value("decay_per_epoch", config.train.decay_per_epoch);
    config.train.raw_history = train.value("raw_history", config.train.raw_history);
    config.train.history_ema_decay =
        train.value("history_ema_decay", config.train.history_ema_decay);
    if (train.contains("constant_lr"))
      config.train.constant_lr = train.at("constant_lr").get<double>();
  }
  config.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
  config.output_dir = doc.value("output_dir", std::string("out"));
  config.check();
  return config;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ValidationError("override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ValidationError("empty key in override path: " + path);
    if (dot == std::string::npos) {
      nlohmann::json value;
      try {
        value = nlohmann::json::parse(raw);
      } catch (const nlohmann::json::parse_error&) {
        value = raw;  // plain string
      }
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace taskbalance
