#include "mibpcert/experiment.hpp"

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mibpcert {

using ordered_json = nlohmann::ordered_json;

namespace {

Activation activation_from(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "tanh") return Activation::tanh;
  throw std::runtime_error("config: unknown activation '" + s + "'");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
  }
  return "relu";
}

Loss loss_from(const std::string& s) {
  if (s == "hinge_binary") return Loss::hinge_binary;
  if (s == "hinge_one_vs_all") return Loss::hinge_one_vs_all;
  throw std::runtime_error("config: unknown loss '" + s + "'");
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("config parse error in " + path + ": " + e.what());
  }

  ExperimentConfig c;
  const auto& d = j.at("dataset");
  c.dataset_kind = d.at("kind").get<std::string>();
  if (c.dataset_kind == "two_moons") {
    c.two_moons_train = d.value("train", 100);
    c.two_moons_val = d.value("validation", 200);
    c.two_moons_test = d.value("test", 200);
    c.two_moons_noise = d.value("noise", 0.1);
  } else if (c.dataset_kind == "csv") {
    c.csv_path = d.at("path").get<std::string>();
    c.csv_schema_path = d.at("schema").get<std::string>();
  } else {
    throw std::runtime_error("config: unknown dataset kind '" + c.dataset_kind + "'");
  }
  c.standardize = d.value("standardize", true);

  const auto& m = j.at("model");
  c.hidden = m.value("hidden", std::vector<int>{20});
  c.activation = activation_from(m.value("activation", std::string("relu")));
  if (m.contains("loss")) c.loss = loss_from(m.at("loss").get<std::string>());
  c.init_scale = m.value("init_scale", 1.0);
  c.with_bias = m.value("with_bias", true);

  if (j.contains("threat")) {
    for (const auto& t : j.at("threat")) {
      ThreatSpec ts;
      const std::string kind = t.at("type").get<std::string>();
      if (kind == "linf") {
        ts.kind = ThreatSpec::Kind::linf;
        ts.eps = t.at("eps").get<double>();
      } else if (kind == "categorical_missing") {
        ts.kind = ThreatSpec::Kind::categorical_missing;
        if (t.contains("columns")) ts.columns = t.at("columns").get<std::vector<std::string>>();
      } else if (kind == "over_reporting") {
        ts.kind = ThreatSpec::Kind::over_reporting;
        ts.columns = t.at("columns").get<std::vector<std::string>>();
      } else if (kind == "sparsity") {
        ts.kind = ThreatSpec::Kind::sparsity;
        ts.budget = t.at("budget").get<int>();
      } else if (kind == "label_flip") {
        ts.kind = ThreatSpec::Kind::label_flip;
      } else {
        throw std::runtime_error("config: unknown threat type '" + kind + "'");
      }
      c.threat.push_back(std::move(ts));
    }
  }

  const auto& tr = j.at("train");
  c.lr = tr.value("lr", 0.1);
  c.batch = tr.value("batch", 100);
  c.epochs = tr.value("epochs", 5);
  c.iterations = tr.value("iterations", 0);
  c.agg = tr.value("aggregation", std::string("mean")) == "sum" ? GradAggregation::sum
                                                                : GradAggregation::mean;

  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    c.solver.gap_tol = s.value("gap_tol", 1e-6);
    c.solver.node_limit = s.value("node_limit", 0L);
    c.solver.time_limit_s = s.value("time_limit_s", 0.0);
    c.solver.threads = s.value("threads", 1);
  }

  c.seeds = j.value("seeds", std::vector<std::uint64_t>{1});
  if (c.seeds.empty()) throw std::runtime_error("config: seeds must be non-empty");
  c.max_test_points = j.value("max_test_points", 0);
  c.output_dir = j.value("output", std::string());
  return c;
}

std::string ExperimentConfig::to_json() const {
  ordered_json j;
  ordered_json d;
  d["kind"] = dataset_kind;
  if (dataset_kind == "two_moons") {
    d["train"] = two_moons_train;
    d["validation"] = two_moons_val;
    d["test"] = two_moons_test;
    d["noise"] = two_moons_noise;
  } else {
    d["path"] = csv_path;
    d["schema"] = csv_schema_path;
  }
  d["standardize"] = standardize;
  j["dataset"] = d;

  ordered_json m;
  m["hidden"] = hidden;
  m["activation"] = activation_name(activation);
  if (loss)
    m["loss"] = *loss == Loss::hinge_binary ? "hinge_binary" : "hinge_one_vs_all";
  m["init_scale"] = init_scale;
  m["with_bias"] = with_bias;
  j["model"] = m;

  ordered_json ts = ordered_json::array();
  for (const auto& t : threat) {
    ordered_json e;
    switch (t.kind) {
      case ThreatSpec::Kind::linf:
        e["type"] = "linf";
        e["eps"] = t.eps;
        break;
      case ThreatSpec::Kind::categorical_missing:
        e["type"] = "categorical_missing";
        if (!t.columns.empty()) e["columns"] = t.columns;
        break;
      case ThreatSpec::Kind::over_reporting:
        e["type"] = "over_reporting";
        e["columns"] = t.columns;
        break;
      case ThreatSpec::Kind::sparsity:
        e["type"] = "sparsity";
        e["budget"] = t.budget;
        break;
      case ThreatSpec::Kind::label_flip:
        e["type"] = "label_flip";
        break;
    }
    ts.push_back(e);
  }
  j["threat"] = ts;

  ordered_json tr;
  tr["lr"] = lr;
  tr["batch"] = batch;
  tr["epochs"] = epochs;
  tr["iterations"] = iterations;
  tr["aggregation"] = agg == GradAggregation::mean ? "mean" : "sum";
  j["train"] = tr;

  ordered_json s;
  s["gap_tol"] = solver.gap_tol;
  s["node_limit"] = solver.node_limit;
  s["time_limit_s"] = solver.time_limit_s;
  s["threads"] = solver.threads;
  j["solver"] = s;

  j["seeds"] = seeds;
  j["max_test_points"] = max_test_points;
  j["output"] = output_dir;
  return j.dump(2);
}

DatasetBundle load_dataset(const ExperimentConfig& c) {
  if (c.dataset_kind == "two_moons") {
    // Dataset content is seed-independent of the experiment seeds: the
    // generator seed is fixed so every seed trains on the same data.
    return two_moons_bundle(c.two_moons_train, c.two_moons_val, c.two_moons_test,
                            c.two_moons_noise, 20240, c.standardize);
  }
  CsvSchema schema = CsvSchema::from_json_file(c.csv_schema_path);
  schema.standardize = c.standardize;
  return load_csv(c.csv_path, schema);
}

ModelSpec model_spec_from_config(const ExperimentConfig& c, const DatasetBundle& data) {
  ModelSpec spec;
  spec.activation = c.activation;
  spec.with_bias = c.with_bias;
  spec.loss = c.loss.value_or(data.binary_labels ? Loss::hinge_binary : Loss::hinge_one_vs_all);
  spec.layer_dims.push_back(data.meta.dim);
  for (int h : c.hidden) spec.layer_dims.push_back(h);
  spec.layer_dims.push_back(spec.loss == Loss::hinge_binary ? 1 : data.num_classes);
  spec.validate();
  return spec;
}

ThreatModel build_threat(const ExperimentConfig& c, const DatasetBundle& data) {
  ThreatModel threat(data.train, data.meta.dim);
  for (const ThreatSpec& t : c.threat) {
    switch (t.kind) {
      case ThreatSpec::Kind::linf:
        threat.add_linf({{}, t.eps});
        break;
      case ThreatSpec::Kind::categorical_missing: {
        // Free the (imputed) missing groups of affected train samples.
        for (std::size_t g = 0; g < data.meta.groups.size(); ++g) {
          const auto& group = data.meta.groups[g];
          if (!t.columns.empty() &&
              std::find(t.columns.begin(), t.columns.end(), group.column) == t.columns.end())
            continue;
          std::vector<int> affected;
          for (std::size_t i = 0; i < data.train_missing.size(); ++i)
            for (int mg : data.train_missing[i])
              if (mg == static_cast<int>(g)) affected.push_back(static_cast<int>(i));
          if (!affected.empty())
            threat.add_one_hot_free({affected, group.begin, group.size});
        }
        break;
      }
      case ThreatSpec::Kind::over_reporting: {
        for (const std::string& col : t.columns) {
          const FeatureMeta::Group* g = data.meta.group_for_column(col);
          if (!g) throw std::runtime_error("threat: unknown categorical column '" + col + "'");
          threat.add_adjacent_down({{}, g->begin, g->size});
        }
        break;
      }
      case ThreatSpec::Kind::sparsity:
        threat.add_sparsity({{}, t.budget});
        break;
      case ThreatSpec::Kind::label_flip:
        threat.add_label_flip({{}});
        break;
    }
  }
  return threat;
}

void ResultReport::finalize_summary() {
  if (seeds.empty()) return;
  double sum = 0.0, sum_rate = 0.0, sum_clean = 0.0;
  for (const auto& s : seeds) {
    sum += s.cert_acc;
    sum_rate += s.cert_rate;
    sum_clean += s.clean_acc;
    if (s.non_proved_solves > 0) any_non_proved = true;
  }
  mean_cert_acc = sum / seeds.size();
  mean_cert_rate = sum_rate / seeds.size();
  mean_clean_acc = sum_clean / seeds.size();
  double var = 0.0;
  for (const auto& s : seeds) var += (s.cert_acc - mean_cert_acc) * (s.cert_acc - mean_cert_acc);
  stddev_cert_acc = std::sqrt(var / seeds.size());
}

std::string results_to_json(const ResultReport& r) {
  ordered_json j;
  j["format"] = "mibpcert-results v1";
  j["config"] = ordered_json::parse(r.config_echo);
  ordered_json seeds = ordered_json::array();
  for (const auto& s : r.seeds) {
    ordered_json e;
    e["seed"] = s.seed;
    e["clean_acc"] = s.clean_acc;
    e["cert_rate"] = s.cert_rate;
    e["cert_acc"] = s.cert_acc;
    e["per_iter_max_width"] = s.per_iter_max_width;
    e["per_iter_nodes"] = s.per_iter_nodes;
    e["non_proved_solves"] = s.non_proved_solves;
    seeds.push_back(e);
  }
  j["per_seed"] = seeds;
  ordered_json summary;
  summary["mean_cert_acc"] = r.mean_cert_acc;
  summary["stddev_cert_acc"] = r.stddev_cert_acc;
  summary["mean_cert_rate"] = r.mean_cert_rate;
  summary["mean_clean_acc"] = r.mean_clean_acc;
  summary["any_non_proved"] = r.any_non_proved;
  j["summary"] = summary;
  return j.dump(2) + "\n";
}

ResultReport results_from_json(const std::string& text) {
  const ordered_json j = ordered_json::parse(text);
  if (j.at("format").get<std::string>() != "mibpcert-results v1")
    throw std::runtime_error("results: unknown format");
  ResultReport r;
  r.config_echo = j.at("config").dump(2);
  for (const auto& e : j.at("per_seed")) {
    SeedResult s;
    s.seed = e.at("seed").get<std::uint64_t>();
    s.clean_acc = e.at("clean_acc").get<double>();
    s.cert_rate = e.at("cert_rate").get<double>();
    s.cert_acc = e.at("cert_acc").get<double>();
    s.per_iter_max_width = e.at("per_iter_max_width").get<std::vector<double>>();
    s.per_iter_nodes = e.at("per_iter_nodes").get<std::vector<long>>();
    s.non_proved_solves = e.at("non_proved_solves").get<int>();
    r.seeds.push_back(std::move(s));
  }
  r.finalize_summary();
  return r;
}

std::string render_report_table(const ResultReport& r) {
  std::ostringstream out;
  out << "seed      clean_acc  cert_rate  cert_acc  nodes(total)  non_proved\n";
  for (const auto& s : r.seeds) {
    long nodes = 0;
    for (long n : s.per_iter_nodes) nodes += n;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-9llu %-10.4f %-10.4f %-9.4f %-13ld %d\n",
                  static_cast<unsigned long long>(s.seed), s.clean_acc, s.cert_rate, s.cert_acc,
                  nodes, s.non_proved_solves);
    out << buf;
  }
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "mean cert_acc %.4f +- %.4f | mean cert_rate %.4f | mean clean_acc %.4f\n",
                r.mean_cert_acc, r.stddev_cert_acc, r.mean_cert_rate, r.mean_clean_acc);
  out << buf;
  return out.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, target);
}

namespace {

std::string bounds_to_json(const ModelSpec& spec, const CertifiedParams& cp) {
  const ParamIndexer indexer(spec);
  ordered_json j;
  j["format"] = "mibpcert-bounds v1";
  j["param_names"] = [&] {
    std::vector<std::string> names;
    for (int i = 0; i < indexer.count(); ++i) names.push_back(indexer.name(i));
    return names;
  }();
  ordered_json iters = ordered_json::array();
  for (const auto& box : cp.per_iteration) {
    ordered_json lo = ordered_json::array(), hi = ordered_json::array();
    for (int l = 0; l < spec.num_weight_layers(); ++l) {
      for (int u = 0; u < box.weights[l].rows; ++u)
        for (int v = 0; v < box.weights[l].cols; ++v) {
          lo.push_back(box.weights[l].at(u, v).lo);
          hi.push_back(box.weights[l].at(u, v).hi);
        }
      if (spec.with_bias)
        for (int u = 0; u < box.biases[l].rows; ++u) {
          lo.push_back(box.biases[l].at(u).lo);
          hi.push_back(box.biases[l].at(u).hi);
        }
    }
    ordered_json it;
    it["lo"] = lo;
    it["hi"] = hi;
    iters.push_back(it);
  }
  j["iterations"] = iters;
  return j.dump() + "\n";
}

}  // namespace

ResultReport run_experiment(const ExperimentConfig& config) {
  const DatasetBundle data = load_dataset(config);
  const ModelSpec spec = model_spec_from_config(config, data);
  const ThreatModel threat = build_threat(config, data);

  ResultReport report;
  report.config_echo = config.to_json();

  std::vector<Sample> testset = data.test;
  if (config.max_test_points > 0 &&
      static_cast<int>(testset.size()) > config.max_test_points)
    testset.resize(config.max_test_points);
  if (testset.empty()) throw std::runtime_error("run_experiment: empty test split");

  for (const std::uint64_t seed : config.seeds) {
    SeedResult sr;
    sr.seed = seed;

    const Params initial = init_params(spec, seed, config.init_scale);
    TrainConfig tc;
    tc.lr = config.lr;
    tc.batch = config.batch;
    tc.epochs = config.epochs;
    tc.iterations = config.iterations;
    tc.shuffle_seed = seed;
    tc.agg = config.agg;
    tc.solver = config.solver;

    const auto t0 = std::chrono::steady_clock::now();
    const CertifiedParams cp = train_certified(spec, initial, threat, tc);
    const auto t1 = std::chrono::steady_clock::now();
    sr.train_seconds = std::chrono::duration<double>(t1 - t0).count();

    // The concrete run with the identical schedule gives the clean accuracy.
    const BatchSchedule schedule{seed, threat.size(), std::min(config.batch, threat.size())};
    const auto concrete = run_sgd(spec, initial, data.train, config.lr,
                                  tc.resolved_iterations(threat.size()), schedule, config.agg);
    sr.clean_acc = accuracy(spec, concrete.back(), testset);

    const CertMetrics metrics =
        certified_accuracy(spec, cp.final_box(), testset, config.solver);
    const auto t2 = std::chrono::steady_clock::now();
    sr.certify_seconds = std::chrono::duration<double>(t2 - t1).count();
    sr.cert_rate = metrics.cert_rate;
    sr.cert_acc = metrics.cert_acc;
    for (const auto& st : cp.stats) {
      sr.per_iter_max_width.push_back(st.max_width);
      sr.per_iter_nodes.push_back(st.total_nodes);
      sr.non_proved_solves += st.non_proved_solves;
    }

    if (!config.output_dir.empty())
      write_file_atomic(config.output_dir + "/bounds-" + std::to_string(seed) + ".json",
                        bounds_to_json(spec, cp));
    report.seeds.push_back(std::move(sr));
  }
  report.finalize_summary();

  if (!config.output_dir.empty()) {
    write_file_atomic(config.output_dir + "/results.json", results_to_json(report));
    write_file_atomic(config.output_dir + "/results.txt", render_report_table(report));
    ordered_json timing;
    for (const auto& s : report.seeds) {
      ordered_json e;
      e["seed"] = s.seed;
      e["train_seconds"] = s.train_seconds;
      e["certify_seconds"] = s.certify_seconds;
      timing.push_back(e);
    }
    write_file_atomic(config.output_dir + "/timing.json", timing.dump(2) + "\n");
  }
  return report;
}

}  // namespace mibpcert
