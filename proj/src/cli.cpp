#include "fpcm/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fpcm/bundle.hpp"
#include "fpcm/errors.hpp"
#include "fpcm/metrics.hpp"
#include "fpcm/model.hpp"
#include "fpcm/ordering.hpp"
#include "fpcm/synth.hpp"

namespace fpcm::cli {

namespace {

namespace fs = std::filesystem;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void writeText(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(file.parent_path(), ec);
  }
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
}

void writeJson(const fs::path& file, const nlohmann::json& j) {
  writeText(file, j.dump(2) + "\n");
}

void writeResolvedConfig(CLI::App& app, const fs::path& file) {
  writeText(file, app.config_to_str(true, false));
}

struct GenDataArgs {
  std::string preset;
  std::vector<int> dims;
  int count = 1;
  int samples = 1000;
  std::uint64_t seed = 0;
  std::string out;
  bool rawUnits = false;
};

int cmdGenData(CLI::App& app, const GenDataArgs& a) {
  synth::Preset preset = synth::presetFromString(a.preset);
  fs::path outDir(a.out);
  std::error_code ec;
  fs::create_directories(outDir, ec);
  if (ec) throw IoError("cannot create " + outDir.string());

  io::Manifest manifest;
  std::uint64_t idx = 0;
  for (int d : a.dims) {
    for (const synth::ScmDistributionSpec& spec : synth::presetSpecs(preset, d)) {
      for (int i = 0; i < a.count; ++i) {
        Dataset ds = synth::generateDataset(spec, a.samples, deriveSeed(a.seed, idx),
                                            !a.rawUnits);
        ds.meta["preset"] = a.preset;
        std::string name = a.preset + "-d" + std::to_string(d) + "-" +
                           ds.meta.at("graph_family").get<std::string>() + "-" +
                           std::to_string(i);
        io::saveBundle(outDir / name, ds);
        manifest.bundles.push_back(name);
        ++idx;
      }
    }
  }
  manifest.header = {{"preset", a.preset},
                     {"dims", a.dims},
                     {"count", a.count},
                     {"samples", a.samples},
                     {"seed", a.seed}};
  io::saveManifest(outDir / "manifest.json", manifest);
  writeResolvedConfig(app, outDir / "resolved.cfg");
  std::cout << "wrote " << manifest.bundles.size() << " bundles to " << outDir.string()
            << "\n";
  return 0;
}

struct TrainToArgs {
  std::string manifest;
  std::string out;
  std::string initCkpt;
  int epochs = 10;
  double lr = 1e-3;
  double weightDecay = 5e-9;
  int dMax = -1;
  int batch = 8;
  int threads = 2;
  std::uint64_t seed = 1;
  int width = 32;
  int heads = 4;
  int mlpHidden = 64;
};

int cmdTrainTo(CLI::App& app, const TrainToArgs& a) {
  std::vector<Dataset> datasets;
  for (const fs::path& dir : io::manifestBundleDirs(a.manifest))
    datasets.push_back(io::loadBundle(dir));

  order::EncoderConfig config{a.width, a.heads, a.mlpHidden};
  order::EncoderParams params = order::EncoderParams::init(config, deriveSeed(a.seed, 0x70));
  int initialStep = 0;
  if (!a.initCkpt.empty()) {
    auto [loaded, step] = order::loadEncoder(a.initCkpt);
    params = std::move(loaded);
    initialStep = step;
  }

  order::ToTrainConfig train;
  train.epochs = a.epochs;
  train.lr = a.lr;
  train.weightDecay = a.weightDecay;
  train.dMax = a.dMax;
  train.batchDatasets = a.batch;
  train.threads = a.threads;
  train.seed = a.seed;
  train.initialStepCount = initialStep;
  order::ToTrainResult result = order::trainTo(std::move(params), datasets, train);

  order::saveEncoder(a.out, result.params, result.stepCount);
  nlohmann::json report;
  report["epoch_loss"] = result.epochLoss;
  report["best_loss"] = result.bestLoss;
  report["step_count"] = result.stepCount;
  report["datasets"] = datasets.size();
  writeJson(fs::path(a.out).string() + ".metrics.json", report);
  writeResolvedConfig(app, fs::path(a.out).string() + ".resolved.cfg");
  std::cout << "trained ordering model on " << datasets.size() << " datasets, steps="
            << result.stepCount << "\n";
  return 0;
}

struct TrainFipArgs {
  std::string data;
  std::string toSource = "true";
  std::string out;
  int epochs = 40;
  double lr = 1e-3;
  double weightDecay = 5e-9;
  int batch = 1024;
  std::uint64_t seed = 1;
  int embedDim = 128;
  int layers = 2;
  int heads = 8;
  int headDim = 32;
  int mlpHidden = 128;
  double tau = 0.1;
  int voteChunk = 200;
};

scm::Permutation resolveOrdering(const TrainFipArgs& a, const Dataset& ds) {
  if (a.toSource == "true") {
    if (!ds.order) throw DataError("bundle has no ground-truth order (field: order)");
    return *ds.order;
  }
  if (a.toSource.rfind("file:", 0) == 0) {
    std::ifstream in(a.toSource.substr(5));
    if (!in) throw IoError("cannot read ordering file " + a.toSource.substr(5));
    nlohmann::json j;
    in >> j;
    return scm::Permutation(j.get<std::vector<int>>());
  }
  if (a.toSource.rfind("ckpt:", 0) == 0) {
    auto [encoder, step] = order::loadEncoder(a.toSource.substr(5));
    (void)step;
    if (ds.rows() >= 2 * a.voteChunk)
      return order::inferToVoting(encoder, ds.x, a.voteChunk);
    return order::inferTo(encoder, ds.x);
  }
  throw UsageError("--to-source must be true, file:<path> or ckpt:<path>");
}

int cmdTrainFip(CLI::App& app, const TrainFipArgs& a) {
  Dataset ds = io::loadBundle(a.data);
  scm::Permutation perm = resolveOrdering(a, ds);

  model::ModelConfig config;
  config.d = ds.cols();
  config.embedDim = a.embedDim;
  config.layers = a.layers;
  config.heads = a.heads;
  config.headDim = a.headDim;
  config.mlpHidden = a.mlpHidden;
  config.graphThreshold = a.tau;

  model::TrainConfig train;
  train.epochs = a.epochs;
  train.lr = a.lr;
  train.weightDecay = a.weightDecay;
  train.batchCap = a.batch;
  train.seed = a.seed;
  model::TrainResult result = model::trainMse(ds, perm, config, train);
  model::saveTrainedModel(a.out, result.model);

  nlohmann::json report;
  report["train_curve"] = result.trainCurve;
  report["val_curve"] = result.valCurve;
  report["best_val_curve"] = result.bestValCurve;
  report["test_loss"] = result.testLoss;
  report["split"] = {{"train", result.trainRows},
                     {"val", result.valRows},
                     {"test", result.testRows}};
  report["ordering"] = perm.map();
  if (ds.dag) {
    report["ordering_tos"] = metrics::tos(perm, *ds.dag);
    model::GraphExtraction extraction = model::extractGraph(result.model, ds.x, a.tau);
    report["graph_f1"] = metrics::f1Directed(extraction.dag, *ds.dag);
  }
  writeJson(fs::path(a.out).string() + ".report.json", report);
  writeResolvedConfig(app, fs::path(a.out).string() + ".resolved.cfg");
  std::cout << "trained SCM model; test loss " << result.testLoss << "\n";
  return 0;
}

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::vector<std::string> tasks;
  std::string out;
  double tau = 0.1;
  std::uint64_t seed = 7;
  int interventions = 0;  // 0: one per node
  int cfSamples = 100;
  int genSamples = 4096;
};

int cmdEval(CLI::App& app, const EvalArgs& a) {
  if (a.tasks.empty()) throw UsageError("--tasks must list at least one task");
  for (const std::string& t : a.tasks)
    if (t != "graph" && t != "counterfactual" && t != "generation")
      throw UsageError("unknown task: " + t);

  model::TrainedModel trained = model::loadTrainedModel(a.ckpt);
  Dataset ds = io::loadBundle(a.data);
  if (ds.cols() != trained.perm.size())
    throw ArgumentError("dataset dimension does not match checkpoint");
  fs::path outDir(a.out);
  std::error_code ec;
  fs::create_directories(outDir, ec);
  if (ec) throw IoError("cannot create " + outDir.string());

  for (const std::string& task : a.tasks) {
    if (task == "graph") {
      if (!ds.dag) throw DataError("graph task needs ground truth (missing field: adjacency)");
      model::GraphExtraction extraction = model::extractGraph(trained, ds.x, a.tau);
      nlohmann::json j;
      j["f1"] = metrics::f1Directed(extraction.dag, *ds.dag);
      j["tau"] = a.tau;
      nlohmann::json scores = nlohmann::json::array();
      for (int i = 0; i < extraction.scores.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int k = 0; k < extraction.scores.cols(); ++k)
          row.push_back(extraction.scores(i, k));
        scores.push_back(row);
      }
      j["scores"] = scores;
      writeJson(outDir / "graph.json", j);
      metrics::ScoreReport r;
      r.entries.push_back({"f1", j["f1"].get<double>()});
      writeText(outDir / "graph.csv", r.toCsv());
    } else if (task == "counterfactual") {
      if (!ds.meta.contains("nodes"))
        throw DataError("counterfactual task needs the generator metadata (missing field: nodes)");
      if (!ds.order) throw DataError("counterfactual task needs a stored order (field: order)");
      scm::StandardScm truth = synth::rebuildScm(ds.meta);
      scm::FixedPointScm fp = scm::reparameterizeStandard(truth, *ds.order);
      metrics::CounterfactualPredictor predictor =
          model::counterfactualPredictor(trained, ds.standardization);
      int nIv = a.interventions > 0 ? a.interventions : ds.cols();
      metrics::ScoreReport report = metrics::cfEval(fp, predictor, nIv, a.cfSamples, a.seed);
      writeJson(outDir / "counterfactual.json", report.toJson());
      writeText(outDir / "counterfactual.csv", report.toCsv());
    } else {
      scm::NoiseModel noise = model::estimateNoiseQuantiles(trained, ds.x);
      auto [genX, genN] = model::generate(trained, noise, a.genSamples, a.seed);
      nlohmann::json j;
      j["samples"] = a.genSamples;
      auto colStats = [](const MatrixXd& m) {
        nlohmann::json mean = nlohmann::json::array(), stdev = nlohmann::json::array();
        for (int c = 0; c < m.cols(); ++c) {
          double mu = m.col(c).mean();
          mean.push_back(mu);
          stdev.push_back(std::sqrt((m.col(c).array() - mu).square().mean()));
        }
        return nlohmann::json{{"mean", mean}, {"std", stdev}};
      };
      j["generated"] = colStats(genX);
      j["data"] = colStats(ds.x);
      writeJson(outDir / "generation.json", j);
    }
  }
  writeResolvedConfig(app, outDir / "resolved.cfg");
  std::cout << "eval tasks done: " << a.tasks.size() << "\n";
  return 0;
}

int dispatch(CLI::App& app, CLI::App* genData, const GenDataArgs& g, CLI::App* trainTo,
             const TrainToArgs& t, CLI::App* trainFip, const TrainFipArgs& f,
             CLI::App* evalCmd, const EvalArgs& e) {
  if (genData->parsed()) return cmdGenData(app, g);
  if (trainTo->parsed()) return cmdTrainTo(app, t);
  if (trainFip->parsed()) return cmdTrainFip(app, f);
  if (evalCmd->parsed()) return cmdEval(app, e);
  throw UsageError("no subcommand given");
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Fixed-point causal model toolkit"};
  app.require_subcommand(0, 1);
  app.set_config("--config")->configurable(false);
  app.allow_config_extras(false);

  GenDataArgs g;
  CLI::App* genData = app.add_subcommand("gen-data", "Generate synthetic dataset bundles");
  genData->add_option("--preset", g.preset, "lin-in, rff-in, lin-out or rff-out")->required();
  genData->add_option("--dims", g.dims, "node counts")->delimiter(',')->required();
  genData->add_option("--count", g.count, "datasets per (dim, graph family)");
  genData->add_option("--samples", g.samples, "rows per dataset");
  genData->add_option("--seed", g.seed, "rng seed");
  genData->add_option("--out", g.out, "output directory")->required();
  genData->add_flag("--raw-units", g.rawUnits, "skip per-column standardization");

  TrainToArgs t;
  CLI::App* trainTo = app.add_subcommand("train-to", "Train the ordering model");
  trainTo->add_option("--manifest", t.manifest, "bundle manifest")->required();
  trainTo->add_option("--out", t.out, "checkpoint path")->required();
  trainTo->add_option("--init-ckpt", t.initCkpt, "resume from checkpoint");
  trainTo->add_option("--epochs", t.epochs);
  trainTo->add_option("--lr", t.lr);
  trainTo->add_option("--weight-decay", t.weightDecay);
  trainTo->add_option("--d-max", t.dMax, "loss steps per dataset (<=0: half)");
  trainTo->add_option("--batch", t.batch, "datasets per optimizer step");
  trainTo->add_option("--threads", t.threads);
  trainTo->add_option("--seed", t.seed);
  trainTo->add_option("--width", t.width);
  trainTo->add_option("--heads", t.heads);
  trainTo->add_option("--mlp-hidden", t.mlpHidden);

  TrainFipArgs f;
  CLI::App* trainFip = app.add_subcommand("train-fip", "Train the SCM model on one bundle");
  trainFip->add_option("--data", f.data, "bundle directory")->required();
  trainFip->add_option("--to-source", f.toSource, "true | file:<perm.json> | ckpt:<to.ckpt>");
  trainFip->add_option("--out", f.out, "checkpoint path")->required();
  trainFip->add_option("--epochs", f.epochs);
  trainFip->add_option("--lr", f.lr);
  trainFip->add_option("--weight-decay", f.weightDecay);
  trainFip->add_option("--batch", f.batch);
  trainFip->add_option("--seed", f.seed);
  trainFip->add_option("--embed-dim", f.embedDim);
  trainFip->add_option("--layers", f.layers);
  trainFip->add_option("--heads", f.heads);
  trainFip->add_option("--head-dim", f.headDim);
  trainFip->add_option("--mlp-hidden", f.mlpHidden);
  trainFip->add_option("--tau", f.tau, "graph extraction threshold");
  trainFip->add_option("--vote-chunk", f.voteChunk);

  EvalArgs e;
  CLI::App* evalCmd = app.add_subcommand("eval", "Evaluate a trained SCM model");
  evalCmd->add_option("--ckpt", e.ckpt, "model checkpoint")->required();
  evalCmd->add_option("--data", e.data, "bundle directory")->required();
  evalCmd->add_option("--tasks", e.tasks, "graph, counterfactual, generation")
      ->delimiter(',')
      ->required();
  evalCmd->add_option("--out", e.out, "output directory")->required();
  evalCmd->add_option("--tau", e.tau);
  evalCmd->add_option("--seed", e.seed);
  evalCmd->add_option("--interventions", e.interventions);
  evalCmd->add_option("--cf-samples", e.cfSamples);
  evalCmd->add_option("--gen-samples", e.genSamples);

  try {
    app.parse(argc, argv);
    return dispatch(app, genData, g, trainTo, t, trainFip, f, evalCmd, e);
  } catch (const CLI::CallForHelp& e2) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e2) {
    std::cerr << "error: " << e2.what() << "\n";
    return 2;
  } catch (const UsageError& e2) {
    std::cerr << "error: " << e2.what() << "\n";
    return 2;
  } catch (const ConfigError& e2) {
    std::cerr << "error: " << e2.what() << "\n";
    return 2;
  } catch (const NumericError& e2) {
    std::cerr << "error: " << e2.what() << "\n";
    return 4;
  } catch (const Error& e2) {
    std::cerr << "error: " << e2.what() << "\n";
    return 3;
  }
}

}  // namespace fpcm::cli
