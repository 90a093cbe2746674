#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "taskbalance/balancers.hpp"
#include "taskbalance/datasets.hpp"
#include "taskbalance/trainer.hpp"

namespace taskbalance {

struct DatasetConfig {
  enum class Source { synthetic, csv };

  Source source = Source::synthetic;
  std::string id = "dataset";

  SyntheticSpec synthetic;

  std::string csv_path;
  int csv_features = 0;
  int csv_outputs = 0;
  std::optional<int> csv_subsample;

  // Fit feature/target standardization on the training split and apply it to
  // both sides. Defaults on for CSV ingestion, off for synthetic data.
  bool standardize = false;
};

struct ModelConfig {
  enum class Kind { linear, mlp };
  Kind kind = Kind::mlp;
  int hidden = 64;

  std::string name() const;
};

struct RunConfig {
  DatasetConfig dataset;
  std::vector<double> proportions{0.5, 0.6, 0.7};
  std::vector<StrategyKind> strategies;
  ModelConfig model;
  TrainConfig train;  // template; seed is overridden per cell
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "out";

  void check() const;
};

// JSON (de)serialization for the run-config document and its pieces. Strategy
// and transform parameters round-trip unchanged.
nlohmann::json to_json(const TransformSpec& spec);
TransformSpec transform_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const StrategyKind& kind);
StrategyKind strategy_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& doc);

// Applies one "dotted.path=value" override to a JSON document; the value is
// parsed as JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace taskbalance
