#include "mibpcert/dataset.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mibpcert {

const FeatureMeta::Group* FeatureMeta::group_for_column(const std::string& column) const {
  for (const Group& g : groups)
    if (g.column == column) return &g;
  return nullptr;
}

std::vector<Sample> gen_two_moons(int n, double noise, std::uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("gen_two_moons: n must be positive");
  const int n_out = n / 2 + (n % 2);
  const int n_in = n / 2;
  std::vector<Sample> samples;
  samples.reserve(n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double pi = std::acos(-1.0);
  for (int i = 0; i < n_out; ++i) {
    const double t = n_out > 1 ? pi * i / (n_out - 1) : 0.0;
    Sample s;
    s.x = Eigen::Vector2d(std::cos(t), std::sin(t));
    s.y = -1;
    samples.push_back(std::move(s));
  }
  for (int i = 0; i < n_in; ++i) {
    const double t = n_in > 1 ? pi * i / (n_in - 1) : 0.0;
    Sample s;
    s.x = Eigen::Vector2d(1.0 - std::cos(t), 0.5 - std::sin(t));
    s.y = 1;
    samples.push_back(std::move(s));
  }
  if (noise > 0.0)
    for (Sample& s : samples) {
      s.x[0] += noise * gauss(rng);
      s.x[1] += noise * gauss(rng);
    }
  return samples;
}

namespace {

void standardize_bundle(DatasetBundle& b) {
  const int dim = b.meta.dim;
  b.mean = Eigen::VectorXd::Zero(dim);
  b.stddev = Eigen::VectorXd::Ones(dim);
  if (b.train.empty()) return;
  std::vector<bool> is_continuous(dim, false);
  for (int f : b.meta.continuous_features) is_continuous[f] = true;
  for (int f = 0; f < dim; ++f) {
    if (!is_continuous[f]) continue;
    double mean = 0.0;
    for (const Sample& s : b.train) mean += s.x[f];
    mean /= static_cast<double>(b.train.size());
    double var = 0.0;
    for (const Sample& s : b.train) var += (s.x[f] - mean) * (s.x[f] - mean);
    var /= static_cast<double>(b.train.size());
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    b.mean[f] = mean;
    b.stddev[f] = sd;
  }
  auto apply = [&](std::vector<Sample>& split) {
    for (Sample& s : split)
      for (int f = 0; f < dim; ++f)
        if (is_continuous[f]) s.x[f] = (s.x[f] - b.mean[f]) / b.stddev[f];
  };
  apply(b.train);
  apply(b.validation);
  apply(b.test);
}

}  // namespace

DatasetBundle make_bundle(std::vector<Sample> samples, int n_train, int n_val, int n_test,
                          std::uint64_t split_seed, bool standardize) {
  const int total = n_train + n_val + n_test;
  if (n_train <= 0 || n_val < 0 || n_test < 0)
    throw std::invalid_argument("make_bundle: bad split sizes");
  if (total > static_cast<int>(samples.size()))
    throw std::invalid_argument("make_bundle: splits exceed dataset size");

  std::vector<int> perm(samples.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  std::mt19937_64 rng(split_seed ^ 0x5851f42d4c957f2dULL);
  std::shuffle(perm.begin(), perm.end(), rng);

  DatasetBundle b;
  const int dim = static_cast<int>(samples.front().x.size());
  b.meta.dim = dim;
  for (int f = 0; f < dim; ++f) {
    b.meta.continuous_features.push_back(f);
    b.meta.continuous_names.push_back("f" + std::to_string(f));
  }
  for (int i = 0; i < n_train; ++i) b.train.push_back(samples[perm[i]]);
  for (int i = 0; i < n_val; ++i) b.validation.push_back(samples[perm[n_train + i]]);
  for (int i = 0; i < n_test; ++i) b.test.push_back(samples[perm[n_train + n_val + i]]);
  b.binary_labels = true;
  b.num_classes = 2;
  b.train_missing.assign(b.train.size(), {});
  if (standardize) standardize_bundle(b);
  else {
    b.mean = Eigen::VectorXd::Zero(dim);
    b.stddev = Eigen::VectorXd::Ones(dim);
  }
  return b;
}

DatasetBundle two_moons_bundle(int n_train, int n_val, int n_test, double noise,
                               std::uint64_t seed, bool standardize) {
  auto samples = gen_two_moons(n_train + n_val + n_test, noise, seed);
  return make_bundle(std::move(samples), n_train, n_val, n_test, seed + 1, standardize);
}

namespace {

// One CSV record; handles quoted fields and embedded commas.
bool read_record(std::istream& in, std::vector<std::string>& fields, int& line_no) {
  fields.clear();
  std::string line;
  if (!std::getline(in, line)) return false;
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) throw std::runtime_error("CSV line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(field);
  return true;
}

double parse_number(const std::string& s, int line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("CSV line " + std::to_string(line_no) + ": not a number: '" + s + "'");
  }
}

}  // namespace

CsvSchema CsvSchema::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open schema file: " + path);
  nlohmann::json j;
  in >> j;
  CsvSchema s;
  for (const auto& c : j.at("columns")) {
    Column col;
    col.name = c.at("name").get<std::string>();
    const std::string t = c.at("type").get<std::string>();
    if (t == "numeric") col.type = ColumnType::numeric;
    else if (t == "categorical") col.type = ColumnType::categorical;
    else if (t == "target") col.type = ColumnType::target;
    else throw std::runtime_error("schema: unknown column type '" + t + "'");
    if (c.contains("categories"))
      col.categories = c.at("categories").get<std::vector<std::string>>();
    if (c.contains("missing_value")) col.missing_value = c.at("missing_value").get<std::string>();
    s.columns.push_back(std::move(col));
  }
  if (j.contains("target_labels"))
    s.target_labels = j.at("target_labels").get<std::vector<std::string>>();
  s.binary_labels = j.value("binary_labels", false);
  if (j.contains("splits")) {
    const auto& sp = j.at("splits");
    auto read_split = [&](const char* key, double& frac, int& count) {
      if (!sp.contains(key)) return;
      const double v = sp.at(key).get<double>();
      if (v < 1.0) frac = v;
      else count = static_cast<int>(v);
    };
    read_split("train", s.train_fraction, s.train_count);
    read_split("validation", s.val_fraction, s.val_count);
    read_split("test", s.test_fraction, s.test_count);
  }
  s.split_seed = j.value("split_seed", 0ULL);
  s.standardize = j.value("standardize", true);
  return s;
}

DatasetBundle load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV file: " + path);
  int line_no = 0;
  std::vector<std::string> header;
  if (!read_record(in, header, line_no)) throw std::runtime_error("CSV: missing header row");
  if (header.size() != schema.columns.size())
    throw std::runtime_error("CSV: header has " + std::to_string(header.size()) +
                             " columns, schema expects " + std::to_string(schema.columns.size()));
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] != schema.columns[c].name)
      throw std::runtime_error("CSV: column " + std::to_string(c) + " is '" + header[c] +
                               "', schema expects '" + schema.columns[c].name + "'");

  int target_col = -1;
  for (std::size_t c = 0; c < schema.columns.size(); ++c)
    if (schema.columns[c].type == CsvSchema::ColumnType::target) {
      if (target_col >= 0) throw std::runtime_error("schema: multiple target columns");
      target_col = static_cast<int>(c);
    }
  if (target_col < 0) throw std::runtime_error("schema: no target column");

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> fields;
  while (read_record(in, fields, line_no)) {
    if (fields.size() == 1 && fields[0].empty()) continue;  // trailing blank line
    if (fields.size() != schema.columns.size())
      throw std::runtime_error("CSV line " + std::to_string(line_no) + ": expected " +
                               std::to_string(schema.columns.size()) + " fields, got " +
                               std::to_string(fields.size()));
    rows.push_back(fields);
  }
  if (rows.empty()) throw std::runtime_error("CSV: no data rows");

  // Category vocabulary per categorical column (schema-given or sorted
  // unique, excluding the missing marker).
  std::vector<std::vector<std::string>> vocab(schema.columns.size());
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto& col = schema.columns[c];
    if (col.type != CsvSchema::ColumnType::categorical) continue;
    if (!col.categories.empty()) {
      vocab[c] = col.categories;
    } else {
      std::set<std::string> uniq;
      for (const auto& r : rows)
        if (col.missing_value.empty() || r[c] != col.missing_value) uniq.insert(r[c]);
      vocab[c].assign(uniq.begin(), uniq.end());
    }
    if (vocab[c].empty())
      throw std::runtime_error("CSV: categorical column '" + col.name + "' has no categories");
  }

  // Target vocabulary.
  std::vector<std::string> labels = schema.target_labels;
  if (labels.empty()) {
    std::set<std::string> uniq;
    for (const auto& r : rows) uniq.insert(r[target_col]);
    labels.assign(uniq.begin(), uniq.end());
  }
  if (schema.binary_labels && labels.size() != 2)
    throw std::runtime_error("CSV: binary labels require exactly 2 target values, got " +
                             std::to_string(labels.size()));

  DatasetBundle b;
  b.binary_labels = schema.binary_labels;
  b.num_classes = static_cast<int>(labels.size());

  // Feature layout.
  int dim = 0;
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto& col = schema.columns[c];
    if (col.type == CsvSchema::ColumnType::numeric) {
      b.meta.continuous_features.push_back(dim);
      b.meta.continuous_names.push_back(col.name);
      ++dim;
    } else if (col.type == CsvSchema::ColumnType::categorical) {
      FeatureMeta::Group g;
      g.column = col.name;
      g.begin = dim;
      g.size = static_cast<int>(vocab[c].size());
      g.categories = vocab[c];
      b.meta.groups.push_back(std::move(g));
      dim += static_cast<int>(vocab[c].size());
    }
  }
  b.meta.dim = dim;

  std::vector<Sample> samples;
  std::vector<std::vector<int>> missing;  // group indices per sample
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int lineno = static_cast<int>(r) + 2;  // header is line 1
    Sample s;
    s.x = Eigen::VectorXd::Zero(dim);
    std::vector<int> miss;
    int f = 0;
    int group_index = 0;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const auto& col = schema.columns[c];
      const std::string& cell = rows[r][c];
      if (col.type == CsvSchema::ColumnType::numeric) {
        s.x[f++] = parse_number(cell, lineno);
      } else if (col.type == CsvSchema::ColumnType::categorical) {
        const auto& cats = vocab[c];
        int hot = -1;
        if (!col.missing_value.empty() && cell == col.missing_value) {
          hot = 0;  // deterministic imputation; the threat model frees it
          miss.push_back(group_index);
        } else {
          for (std::size_t k = 0; k < cats.size(); ++k)
            if (cats[k] == cell) hot = static_cast<int>(k);
          if (hot < 0)
            throw std::runtime_error("CSV line " + std::to_string(lineno) +
                                     ": unknown category '" + cell + "' in column '" + col.name +
                                     "'");
        }
        s.x[f + hot] = 1.0;
        f += static_cast<int>(cats.size());
        ++group_index;
      }
    }
    const std::string& t = rows[r][target_col];
    int label = -1;
    for (std::size_t k = 0; k < labels.size(); ++k)
      if (labels[k] == t) label = static_cast<int>(k);
    if (label < 0)
      throw std::runtime_error("CSV line " + std::to_string(lineno) + ": unknown target '" + t +
                               "'");
    s.y = schema.binary_labels ? (label == 0 ? -1 : 1) : label;
    samples.push_back(std::move(s));
    missing.push_back(std::move(miss));
  }

  // Resolve split sizes.
  const int n = static_cast<int>(samples.size());
  auto resolve = [&](double frac, int count) {
    if (count >= 0) return count;
    if (frac >= 0.0) return static_cast<int>(std::lround(frac * n));
    return -1;
  };
  int n_val = resolve(schema.val_fraction, schema.val_count);
  int n_test = resolve(schema.test_fraction, schema.test_count);
  int n_train = resolve(schema.train_fraction, schema.train_count);
  if (n_val < 0) n_val = 0;
  if (n_test < 0) n_test = 0;
  if (n_train < 0) n_train = n - n_val - n_test;
  if (n_train + n_val + n_test > n)
    throw std::runtime_error("CSV: split sizes exceed dataset size");

  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(schema.split_seed ^ 0x5851f42d4c957f2dULL);
  std::shuffle(perm.begin(), perm.end(), rng);

  for (int i = 0; i < n_train; ++i) {
    b.train.push_back(samples[perm[i]]);
    b.train_missing.push_back(missing[perm[i]]);
  }
  for (int i = 0; i < n_val; ++i) b.validation.push_back(samples[perm[n_train + i]]);
  for (int i = 0; i < n_test; ++i) b.test.push_back(samples[perm[n_train + n_val + i]]);

  if (schema.standardize) standardize_bundle(b);
  else {
    b.mean = Eigen::VectorXd::Zero(dim);
    b.stddev = Eigen::VectorXd::Ones(dim);
  }
  return b;
}

}  // namespace mibpcert
