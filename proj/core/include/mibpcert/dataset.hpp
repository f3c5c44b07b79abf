#pragma once

#include "mibpcert/nn.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mibpcert {

/// Feature layout after one-hot expansion.
struct FeatureMeta {
  struct Group {
    std::string column;
    int begin = 0;
    int size = 0;
    std::vector<std::string> categories;
  };
  int dim = 0;
  std::vector<Group> groups;             // categorical columns
  std::vector<int> continuous_features;  // expanded indices of numeric columns
  std::vector<std::string> continuous_names;

  const Group* group_for_column(const std::string& column) const;
};

struct DatasetBundle {
  std::vector<Sample> train, validation, test;
  FeatureMeta meta;
  Eigen::VectorXd mean, stddev;  // per expanded feature; identity for one-hot
  int num_classes = 2;
  bool binary_labels = true;  // labels are -1/+1; otherwise 0..k-1
  // Imputed (originally missing) categorical cells of the train split:
  // train_missing[i] lists group indices into meta.groups.
  std::vector<std::vector<int>> train_missing;
};

/// Two interleaving half circles (unit circles offset by (1, 0.5)), evenly
/// spaced angles, isotropic Gaussian noise. Balanced labels -1/+1.
std::vector<Sample> gen_two_moons(int n, double noise, std::uint64_t seed);

/// Shuffles, splits, and standardizes (train statistics only).
DatasetBundle make_bundle(std::vector<Sample> samples, int n_train, int n_val, int n_test,
                          std::uint64_t split_seed, bool standardize);

DatasetBundle two_moons_bundle(int n_train, int n_val, int n_test, double noise,
                               std::uint64_t seed, bool standardize = true);

/// Column roles for CSV ingestion.
struct CsvSchema {
  enum class ColumnType { numeric, categorical, target };
  struct Column {
    std::string name;
    ColumnType type = ColumnType::numeric;
    std::vector<std::string> categories;  // optional; otherwise sorted unique
    std::string missing_value;            // imputed + reported when non-empty
  };
  std::vector<Column> columns;
  std::vector<std::string> target_labels;  // optional explicit order
  bool binary_labels = false;              // first label -> -1, second -> +1
  double train_fraction = -1.0;            // fractions or absolute counts
  double val_fraction = -1.0;
  double test_fraction = -1.0;
  int train_count = -1, val_count = -1, test_count = -1;
  std::uint64_t split_seed = 0;
  bool standardize = true;

  static CsvSchema from_json_file(const std::string& path);
};

/// RFC-4180-style CSV (header required). Malformed rows and unknown
/// categories raise std::runtime_error with the offending line number.
DatasetBundle load_csv(const std::string& path, const CsvSchema& schema);

}  // namespace mibpcert
