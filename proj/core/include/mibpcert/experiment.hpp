#pragma once

#include "mibpcert/dataset.hpp"
#include "mibpcert/pipeline.hpp"
#include "mibpcert/threat.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mibpcert {

/// One threat clause as configured; lowered against the loaded dataset.
struct ThreatSpec {
  enum class Kind { linf, categorical_missing, over_reporting, sparsity, label_flip };
  Kind kind = Kind::linf;
  double eps = 0.0;                  // linf
  std::vector<std::string> columns;  // categorical clauses; empty = all groups
  int budget = 0;                    // sparsity
};

struct ExperimentConfig {
  // dataset
  std::string dataset_kind;  // "two_moons" | "csv"
  int two_moons_train = 100, two_moons_val = 200, two_moons_test = 200;
  double two_moons_noise = 0.1;
  std::string csv_path, csv_schema_path;
  bool standardize = true;

  // model
  std::vector<int> hidden;
  Activation activation = Activation::relu;
  std::optional<Loss> loss;  // defaults to binary for 2-class, one-vs-all otherwise
  double init_scale = 1.0;
  bool with_bias = true;

  // threat
  std::vector<ThreatSpec> threat;

  // training
  double lr = 0.1;
  int batch = 100;
  int epochs = 5;
  int iterations = 0;  // overrides epochs when > 0
  GradAggregation agg = GradAggregation::mean;

  // solver
  SolveConfig solver;

  std::vector<std::uint64_t> seeds;
  int max_test_points = 0;  // 0 = all
  std::string output_dir;

  static ExperimentConfig from_json_file(const std::string& path);
  std::string to_json() const;  // config echo, deterministic
};

struct SeedResult {
  std::uint64_t seed = 0;
  double clean_acc = 0.0;  // concretely trained model, same seed
  double cert_rate = 0.0;
  double cert_acc = 0.0;
  std::vector<double> per_iter_max_width;
  std::vector<long> per_iter_nodes;
  int non_proved_solves = 0;
  double train_seconds = 0.0;    // excluded from the deterministic results file
  double certify_seconds = 0.0;
};

struct ResultReport {
  std::string config_echo;
  std::vector<SeedResult> seeds;
  double mean_cert_acc = 0.0;
  double stddev_cert_acc = 0.0;
  double mean_cert_rate = 0.0;
  double mean_clean_acc = 0.0;
  bool any_non_proved = false;

  void finalize_summary();
};

ModelSpec model_spec_from_config(const ExperimentConfig& config, const DatasetBundle& data);
DatasetBundle load_dataset(const ExperimentConfig& config);
ThreatModel build_threat(const ExperimentConfig& config, const DatasetBundle& data);

/// Trains, certifies, and summarizes every seed. When output_dir is set,
/// writes results.json / results.txt / bounds-<seed>.json plus a separate
/// timing.json (kept out of results.json so reruns are byte-identical).
ResultReport run_experiment(const ExperimentConfig& config);

std::string render_report_table(const ResultReport& report);
std::string results_to_json(const ResultReport& report);
ResultReport results_from_json(const std::string& text);

/// Atomic write: temp file in the same directory, then rename.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace mibpcert
