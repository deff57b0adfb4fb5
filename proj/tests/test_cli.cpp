#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <string>
#include <vector>

#include "fpcm/bundle.hpp"
#include "fpcm/cli.hpp"
#include "fpcm/model.hpp"
#include "fpcm/ordering.hpp"
#include "testutil.hpp"

using namespace fpcm;

namespace {

int runCli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"fpcm"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string readFile(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("cli: gen-data round trips and is seed-deterministic") {
  testutil::TempDir tmp("cli_gen");
  std::string out1 = (tmp.path() / "a").string();
  std::string out2 = (tmp.path() / "b").string();
  for (const std::string& out : {out1, out2})
    CHECK(runCli({"gen-data", "--preset", "lin-in", "--dims", "3", "--count", "1",
                  "--samples", "50", "--seed", "9", "--out", out}) == 0);

  CHECK(readFile(out1 + "/manifest.json") == readFile(out2 + "/manifest.json"));
  auto dirs = io::manifestBundleDirs(out1 + "/manifest.json");
  CHECK(dirs.size() == 2);  // two IN graph families
  Dataset ds = io::loadBundle(dirs[0]);
  CHECK(ds.rows() == 50);
  CHECK(ds.cols() == 3);
  CHECK(ds.dag.has_value());
  CHECK(ds.order.has_value());
  // Byte-identical bundles across reruns.
  auto dirs2 = io::manifestBundleDirs(out2 + "/manifest.json");
  CHECK(readFile(dirs[0] / "x.f64") == readFile(dirs2[0] / "x.f64"));
  CHECK(readFile(dirs[0] / "meta.json") == readFile(dirs2[0] / "meta.json"));
  // Resolved config sits next to the outputs.
  CHECK(std::filesystem::exists(out1 + "/resolved.cfg"));
}

TEST_CASE("cli: invalid preset is a usage error") {
  testutil::TempDir tmp("cli_badpreset");
  CHECK(runCli({"gen-data", "--preset", "nope", "--dims", "3", "--out",
                (tmp.path() / "x").string()}) == 2);
}

TEST_CASE("cli: missing subcommand or task list is a usage error") {
  CHECK(runCli({}) == 2);
  CHECK(runCli({"eval", "--ckpt", "a", "--data", "b", "--out", "c"}) == 2);
}

TEST_CASE("cli: train-to produces a loadable checkpoint and resumes step count") {
  testutil::TempDir tmp("cli_to");
  std::string data = (tmp.path() / "data").string();
  REQUIRE(runCli({"gen-data", "--preset", "lin-in", "--dims", "3", "--count", "2",
                  "--samples", "40", "--seed", "4", "--out", data,
                  "--raw-units"}) == 0);
  std::string ckpt = (tmp.path() / "to.ckpt").string();
  CHECK(runCli({"train-to", "--manifest", data + "/manifest.json", "--out", ckpt,
                "--epochs", "1", "--batch", "4", "--width", "8", "--heads", "2",
                "--mlp-hidden", "8", "--threads", "1", "--seed", "5"}) == 0);
  auto [params, steps] = order::loadEncoder(ckpt);
  CHECK(steps == 1);  // 4 datasets / batch 4, one epoch
  CHECK(std::filesystem::exists(ckpt + ".metrics.json"));

  std::string ckpt2 = (tmp.path() / "to2.ckpt").string();
  CHECK(runCli({"train-to", "--manifest", data + "/manifest.json", "--out", ckpt2,
                "--epochs", "1", "--batch", "4", "--threads", "1", "--seed", "5",
                "--init-ckpt", ckpt}) == 0);
  CHECK(order::loadEncoder(ckpt2).second == 2);
}

TEST_CASE("cli: corrupt checkpoints are format errors") {
  testutil::TempDir tmp("cli_corrupt");
  std::string bad = (tmp.path() / "bad.ckpt").string();
  std::ofstream(bad) << "NOTMAGIC garbage";
  std::string data = (tmp.path() / "data").string();
  REQUIRE(runCli({"gen-data", "--preset", "lin-in", "--dims", "3", "--count", "1",
                  "--samples", "30", "--seed", "4", "--out", data}) == 0);
  auto bundle = io::manifestBundleDirs(data + "/manifest.json")[0].string();
  CHECK(runCli({"eval", "--ckpt", bad, "--data", bundle, "--tasks", "graph", "--out",
                (tmp.path() / "ev").string()}) == 3);
  CHECK(runCli({"train-fip", "--data", bundle, "--to-source", "ckpt:" + bad, "--out",
                (tmp.path() / "m.ckpt").string()}) == 3);
}

TEST_CASE("cli: train-fip with the true ordering, then eval") {
  testutil::TempDir tmp("cli_fip");
  std::string data = (tmp.path() / "data").string();
  REQUIRE(runCli({"gen-data", "--preset", "lin-in", "--dims", "2", "--count", "1",
                  "--samples", "600", "--seed", "12", "--out", data}) == 0);
  auto bundle = io::manifestBundleDirs(data + "/manifest.json")[0].string();

  std::string ckpt = (tmp.path() / "fip.ckpt").string();
  CHECK(runCli({"train-fip", "--data", bundle, "--to-source", "true", "--out", ckpt,
                "--epochs", "25", "--lr", "3e-3", "--embed-dim", "16", "--layers", "1",
                "--heads", "2", "--head-dim", "8", "--mlp-hidden", "16", "--batch",
                "256", "--seed", "2"}) == 0);

  nlohmann::json report;
  std::ifstream(ckpt + ".report.json") >> report;
  CHECK(report.at("ordering_tos").get<double>() == 1.0);
  CHECK(report.contains("graph_f1"));
  CHECK(report.at("split").at("train").get<int>() == 480);

  std::string ev = (tmp.path() / "ev").string();
  CHECK(runCli({"eval", "--ckpt", ckpt, "--data", bundle, "--tasks",
                "graph,generation,counterfactual", "--out", ev, "--interventions", "2",
                "--cf-samples", "8", "--gen-samples", "128"}) == 0);
  CHECK(std::filesystem::exists(ev + "/graph.json"));
  CHECK(std::filesystem::exists(ev + "/counterfactual.csv"));
  CHECK(std::filesystem::exists(ev + "/generation.json"));

  nlohmann::json graph;
  std::ifstream(ev + "/graph.json") >> graph;
  CHECK(graph.contains("f1"));
}

TEST_CASE("cli: file-sourced ordering trains a near-zero mechanism on no-edge data") {
  testutil::TempDir tmp("cli_fileperm");
  // Independent columns with an empty truth graph.
  Rng rng(71);
  Dataset ds;
  ds.x.resize(400, 2);
  for (int r = 0; r < 400; ++r)
    for (int c = 0; c < 2; ++c) ds.x(r, c) = rng.normal();
  ds.dag = scm::Dag(2);
  io::saveBundle(tmp.path() / "bundle", ds);
  std::ofstream(tmp.path() / "perm.json") << "[0, 1]";

  std::string ckpt = (tmp.path() / "m.ckpt").string();
  CHECK(runCli({"train-fip", "--data", (tmp.path() / "bundle").string(), "--to-source",
                "file:" + (tmp.path() / "perm.json").string(), "--out", ckpt, "--epochs",
                "20", "--lr", "3e-3", "--embed-dim", "16", "--layers", "1", "--heads",
                "2", "--head-dim", "8", "--mlp-hidden", "16", "--batch", "128"}) == 0);

  nlohmann::json report;
  std::ifstream(ckpt + ".report.json") >> report;
  // No structure to learn: the residual keeps the full unit variance and the
  // extracted graph stays empty (F1 = 1 against the empty truth).
  CHECK(report.at("test_loss").get<double>() == doctest::Approx(2.0).epsilon(0.2));
  CHECK(report.at("graph_f1").get<double>() == 1.0);
  CHECK(report.at("ordering").get<std::vector<int>>() == std::vector<int>{0, 1});
}

TEST_CASE("cli: counterfactual eval without generator metadata is a data error") {
  testutil::TempDir tmp("cli_nomech");
  // A bundle with observations and truth graph but no mechanism block.
  Dataset ds;
  ds.x = Eigen::MatrixXd::Random(20, 2);
  ds.dag = scm::Dag::chain(2);
  ds.order = scm::Permutation::identity(2);
  io::saveBundle(tmp.path() / "bundle", ds);

  std::string data = (tmp.path() / "data").string();
  REQUIRE(runCli({"gen-data", "--preset", "lin-in", "--dims", "2", "--count", "1",
                  "--samples", "200", "--seed", "3", "--out", data}) == 0);
  auto trainBundle = io::manifestBundleDirs(data + "/manifest.json")[0].string();
  std::string ckpt = (tmp.path() / "m.ckpt").string();
  REQUIRE(runCli({"train-fip", "--data", trainBundle, "--out", ckpt, "--epochs", "2",
                  "--embed-dim", "8", "--layers", "1", "--heads", "2", "--head-dim", "4",
                  "--mlp-hidden", "8"}) == 0);

  CHECK(runCli({"eval", "--ckpt", ckpt, "--data", (tmp.path() / "bundle").string(),
                "--tasks", "counterfactual", "--out", (tmp.path() / "ev").string()}) == 3);
  CHECK(runCli({"eval", "--ckpt", ckpt, "--data", (tmp.path() / "bundle").string(),
                "--tasks", "bogus", "--out", (tmp.path() / "ev").string()}) == 2);
}

TEST_CASE("cli: config file drives a run and rejects unknown keys") {
  testutil::TempDir tmp("cli_cfg");
  std::string cfgPath = (tmp.path() / "run.cfg").string();
  std::string out = (tmp.path() / "out").string();
  {
    std::ofstream cfg(cfgPath);
    cfg << "[gen-data]\n"
        << "preset = lin-in\n"
        << "dims = 2\n"
        << "count = 1\n"
        << "samples = 25\n"
        << "seed = 6\n"
        << "out = " << out << "\n";
  }
  CHECK(runCli({"--config", cfgPath, "gen-data"}) == 0);
  Dataset ds = io::loadBundle(io::manifestBundleDirs(out + "/manifest.json")[0]);
  CHECK(ds.rows() == 25);

  {
    std::ofstream cfg(cfgPath, std::ios::app);
    cfg << "no_such_key = 1\n";
  }
  CHECK(runCli({"--config", cfgPath, "gen-data"}) == 2);
}
