#include "mibpcert/encoder.hpp"
#include "mibpcert/experiment.hpp"
#include "mibpcert/pipeline.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <fstream>
#include <iostream>

namespace {

using namespace mibpcert;

void apply_overrides(ExperimentConfig& config, const std::string& out_dir, double eps, int epochs,
                     int batch, const std::vector<std::uint64_t>& seeds, int max_test_points) {
  if (!out_dir.empty()) config.output_dir = out_dir;
  if (eps >= 0.0) {
    for (auto& t : config.threat)
      if (t.kind == ThreatSpec::Kind::linf) t.eps = eps;
  }
  if (epochs > 0) config.epochs = epochs;
  if (batch > 0) config.batch = batch;
  if (!seeds.empty()) config.seeds = seeds;
  if (max_test_points > 0) config.max_test_points = max_test_points;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, double eps, int epochs,
              int batch, const std::vector<std::uint64_t>& seeds, int max_test_points) {
  ExperimentConfig config = ExperimentConfig::from_json_file(config_path);
  apply_overrides(config, out_dir, eps, epochs, batch, seeds, max_test_points);
  const ResultReport report = run_experiment(config);
  std::cout << render_report_table(report);
  return report.any_non_proved ? 2 : 0;
}

int cmd_certify(const std::string& config_path, const std::string& bounds_path,
                const std::string& out_dir, int max_test_points) {
  ExperimentConfig config = ExperimentConfig::from_json_file(config_path);
  if (max_test_points > 0) config.max_test_points = max_test_points;
  const DatasetBundle data = load_dataset(config);
  const ModelSpec spec = model_spec_from_config(config, data);
  const ParamIndexer indexer(spec);

  std::ifstream in(bounds_path);
  if (!in) throw std::runtime_error("cannot open bounds file: " + bounds_path);
  nlohmann::json j;
  in >> j;
  if (j.at("format").get<std::string>() != "mibpcert-bounds v1")
    throw std::runtime_error("bounds: unknown format");
  const auto& last = j.at("iterations").back();
  const auto lo = last.at("lo").get<std::vector<double>>();
  const auto hi = last.at("hi").get<std::vector<double>>();
  if (static_cast<int>(lo.size()) != indexer.count())
    throw std::runtime_error("bounds: parameter count mismatch with config");

  ParamBox box;
  {
    Eigen::VectorXd l(indexer.count()), h(indexer.count());
    for (int i = 0; i < indexer.count(); ++i) {
      l[i] = lo[i];
      h[i] = hi[i];
    }
    const Params plo = indexer.unflatten(l), phi = indexer.unflatten(h);
    for (int layer = 0; layer < spec.num_weight_layers(); ++layer) {
      box.weights.push_back(
          IntervalTensor::box(plo.weights[layer], phi.weights[layer]));
      box.biases.push_back(IntervalTensor::box(Eigen::MatrixXd(plo.biases[layer]),
                                               Eigen::MatrixXd(phi.biases[layer])));
    }
  }

  std::vector<Sample> testset = data.test;
  if (config.max_test_points > 0 && static_cast<int>(testset.size()) > config.max_test_points)
    testset.resize(config.max_test_points);
  const CertMetrics metrics = certified_accuracy(spec, box, testset, config.solver);
  std::cout << "cert_rate " << metrics.cert_rate << "\ncert_acc " << metrics.cert_acc << "\n";
  if (!out_dir.empty()) {
    nlohmann::ordered_json out;
    out["cert_rate"] = metrics.cert_rate;
    out["cert_acc"] = metrics.cert_acc;
    write_file_atomic(out_dir + "/certify.json", out.dump(2) + "\n");
  }
  return 0;
}

int cmd_export_model(const std::string& config_path, std::uint64_t seed,
                     const std::string& out_path) {
  const ExperimentConfig config = ExperimentConfig::from_json_file(config_path);
  const DatasetBundle data = load_dataset(config);
  const ModelSpec spec = model_spec_from_config(config, data);
  const ThreatModel threat = build_threat(config, data);
  const Params initial = init_params(spec, seed, config.init_scale);

  const BatchSchedule schedule{seed, threat.size(), std::min(config.batch, threat.size())};
  EncodeConfig ec;
  ec.agg = config.agg;
  const IterationEncoding enc = encode_iteration(spec, ParamBox::point(spec, initial), threat,
                                                 schedule.indices(0), config.lr, ec);
  const std::string text = enc.model.export_text();
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(out_path, text);
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

int cmd_report(const std::string& results_path) {
  std::ifstream in(results_path);
  if (!in) throw std::runtime_error("cannot open results file: " + results_path);
  std::stringstream buf;
  buf << in.rdbuf();
  const ResultReport report = results_from_json(buf.str());
  std::cout << render_report_table(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certified training under data poisoning via mixed-integer bilinear programming"};
  app.require_subcommand(1);

  std::string config_path, out_dir, bounds_path, results_path, export_path;
  double eps = -1.0;
  int epochs = 0, batch = 0, max_test_points = 0;
  std::vector<std::uint64_t> seeds;
  std::uint64_t export_seed = 1;

  auto* train = app.add_subcommand("train", "Run certified training + certification per seed");
  train->add_option("--config", config_path, "experiment config (JSON)")->required();
  train->add_option("--out", out_dir, "output directory (overrides config)");
  train->add_option("--eps", eps, "override l_inf radius");
  train->add_option("--epochs", epochs, "override epoch count");
  train->add_option("--batch", batch, "override batch size");
  train->add_option("--seeds", seeds, "override seed list");
  train->add_option("--max-test-points", max_test_points, "limit certified test points");

  auto* certify = app.add_subcommand("certify", "Certify test points from a bounds file");
  certify->add_option("--config", config_path, "experiment config (JSON)")->required();
  certify->add_option("--bounds", bounds_path, "bounds-<seed>.json from train")->required();
  certify->add_option("--out", out_dir, "output directory");
  certify->add_option("--max-test-points", max_test_points, "limit certified test points");

  auto* exportm = app.add_subcommand("export-model", "Dump the first-iteration MIBP as text");
  exportm->add_option("--config", config_path, "experiment config (JSON)")->required();
  exportm->add_option("--seed", export_seed, "init/shuffle seed");
  exportm->add_option("--out", export_path, "output file (stdout if omitted)");

  auto* report = app.add_subcommand("report", "Pretty-print a results.json");
  report->add_option("--results", results_path, "results.json path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed())
      return cmd_train(config_path, out_dir, eps, epochs, batch, seeds, max_test_points);
    if (certify->parsed()) return cmd_certify(config_path, bounds_path, out_dir, max_test_points);
    if (exportm->parsed()) return cmd_export_model(config_path, export_seed, export_path);
    if (report->parsed()) return cmd_report(results_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
