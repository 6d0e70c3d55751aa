#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "riemflow/cli.hpp"
#include "riemflow/dataset.hpp"
#include "riemflow/flow.hpp"

using namespace riemflow;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run riemflow_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// A small four-demo UQ set shared by the command tests.
fs::path small_demos(const fs::path& dir, const std::string& manifold = "uq") {
  const fs::path d = dir / ("demos_" + manifold);
  const Run r = riemflow_cli({"dataset", "--synth", "angle", "--manifold", manifold, "--length", "40", "--dt", "0.05",
                              "--out", d.string()});
  REQUIRE(r.code == 0);
  return d;
}

const std::vector<std::string> kQuickTrain{"--layers", "2", "--epochs", "1", "--batch", "64"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("version and usage errors") {
  const Run v = riemflow_cli({"--version"});
  CHECK(v.code == 0);
  CHECK(v.out.rfind("riemflow 0.1.0", 0) == 0);
  CHECK(riemflow_cli({"train", "--bogus"}).code == cli::kExitUsage);
  CHECK(riemflow_cli({"dataset", "--synth", "spiral", "--out", "x"}).code == cli::kExitUsage);
  CHECK(riemflow_cli({"--help"}).code == 0);
}

TEST_CASE("dataset command is deterministic and validates its input before writing") {
  const auto dir = testing::scratch_dir("cli_dataset");
  for (const char* sub : {"a", "b"}) {
    const Run r = riemflow_cli({"dataset", "--synth", "spiral", "--manifold", "spd", "--length", "60", "--seed", "3",
                                "--verify", "--out", (dir / sub).string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("round-trip max error") != std::string::npos);
  }
  CHECK(slurp(dir / "a" / "demos.csv") == slurp(dir / "b" / "demos.csv"));
  CHECK(slurp(dir / "a" / "manifest.json") == slurp(dir / "b" / "manifest.json"));
  CHECK(fs::exists(dir / "a" / "run.cfg"));

  const Run missing = riemflow_cli({"dataset", "--input", (dir / "missing.csv").string(), "--manifold", "uq", "--out",
                                    (dir / "never").string()});
  CHECK(missing.code == cli::kExitUsage);
  CHECK_FALSE(missing.err.empty());
  CHECK_FALSE(fs::exists(dir / "never"));

  CHECK(riemflow_cli({"dataset", "--synth", "spiral", "--input", "x.csv", "--manifold", "uq", "--out",
                      (dir / "never").string()})
            .code == cli::kExitUsage);
  CHECK_FALSE(fs::exists(dir / "never"));

  const Run lasa = riemflow_cli({"dataset", "--input", std::string(RIEMFLOW_FIXTURE_DIR) + "/lasa_fixture.csv",
                                 "--manifold", "uq", "--out", (dir / "lasa").string()});
  REQUIRE(lasa.code == 0);
  const DemoSet loaded = dataset::load_demoset((dir / "lasa").string());
  CHECK(loaded.demos.size() == 4);
  CHECK(loaded.length() == 1000);
}

TEST_CASE("train with zero epochs writes an empty history and an initial model") {
  const auto dir = testing::scratch_dir("cli_train");
  const auto demos = small_demos(dir);
  const Run r = riemflow_cli({"train", "--demos", demos.string(), "--epochs", "0", "--out", (dir / "m.json").string()});
  REQUIRE(r.code == 0);
  CHECK(lines(dir / "m_history.csv") == std::vector<std::string>{"epoch,loss,dtw"});
  const flow::FlowModel model = flow::load_model((dir / "m.json").string());
  CHECK(model.layers.size() == 11);
  CHECK(model.manifold == Manifold::Uq);
  CHECK(lines(dir / "m_run.cfg").front() == "[train]");
}

TEST_CASE("generate from the goal yields a single row; step limits exit 4 unless partial") {
  const auto dir = testing::scratch_dir("cli_generate");
  const auto demos = small_demos(dir);
  REQUIRE(riemflow_cli(concat({"train", "--demos", demos.string(), "--out", (dir / "m.json").string()}, kQuickTrain))
              .code == 0);
  const DemoSet set = dataset::load_demoset(demos.string());
  dataset::write_trajectory_csv((dir / "goal.csv").string(), {set.goal}, 0.05);
  dataset::write_trajectory_csv((dir / "start.csv").string(), {set.demos[0][0]}, 0.05);

  const Run at_goal = riemflow_cli({"generate", "--model", (dir / "m.json").string(), "--start",
                                    (dir / "goal.csv").string(), "--out", (dir / "g.csv").string()});
  CHECK(at_goal.code == 0);
  CHECK(lines(dir / "g.csv").size() == 2);

  const std::vector<std::string> base{"generate", "--model", (dir / "m.json").string(), "--start",
                                      (dir / "start.csv").string(), "--out", (dir / "t.csv").string()};
  CHECK(riemflow_cli(concat(base, {"--max-steps", "3"})).code == cli::kExitNotConverged);
  CHECK(riemflow_cli(concat(base, {"--max-steps", "3", "--allow-partial"})).code == 0);
  CHECK(lines(dir / "t.csv").size() == 5);

  const Run full = riemflow_cli(concat(base, {"--verify"}));
  CHECK(full.code == 0);
  CHECK(full.out.find("verify: ") != std::string::npos);
  const auto traj = dataset::read_trajectory_csv((dir / "t.csv").string());
  CHECK(manifold_distance(traj.back(), set.goal) < 1e-2);

  // Naive models go through the embedding chart and report repairs.
  REQUIRE(riemflow_cli(concat({"train", "--demos", demos.string(), "--method", "naive", "--out",
                               (dir / "n.json").string()},
                              kQuickTrain))
              .code == 0);
  const Run naive = riemflow_cli({"generate", "--model", (dir / "n.json").string(), "--start",
                                  (dir / "start.csv").string(), "--out", (dir / "n.csv").string(), "--allow-partial"});
  CHECK(naive.code == 0);
  CHECK(naive.out.find("repaired") != std::string::npos);
}

TEST_CASE("eval writes one benchmark row per cell") {
  const auto dir = testing::scratch_dir("cli_eval");
  const auto demos = small_demos(dir, "spd");
  const Run r = riemflow_cli(concat({"eval", "--demos", demos.string(), "--methods", "riemannian", "--seeds", "20",
                                     "--stream", "--out", (dir / "out").string()},
                                    kQuickTrain));
  REQUIRE(r.code == 0);
  const auto rows = lines(dir / "out" / "benchmark.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].rfind("angle,spd,riemannian_flow,20,", 0) == 0);
  CHECK(lines(dir / "out" / "summary.csv").size() == 2);
  CHECK(fs::exists(dir / "out" / "stream_angle_spd.svg"));
  CHECK(lines(dir / "out" / "stream_angle_spd.csv").size() == 401);
  CHECK(riemflow_cli({"eval", "--methods", "riemannian", "--out", (dir / "none").string()}).code == cli::kExitUsage);
}

TEST_CASE("search writes a ranked table") {
  const auto dir = testing::scratch_dir("cli_search");
  const auto demos = small_demos(dir);
  const Run r = riemflow_cli({"search", "--demos", demos.string(), "--trials", "1", "--min-layers", "2",
                              "--max-layers", "2", "--epochs", "1", "--save-best", (dir / "best.json").string(),
                              "--out", (dir / "out").string()});
  REQUIRE(r.code == 0);
  const auto rows = lines(dir / "out" / "ranked_configs.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == "rank,trial,layers,activation,optimizer,lr,dtw,error");
  CHECK(rows[1].rfind("1,0,2,", 0) == 0);
  CHECK(fs::exists(dir / "best.json"));
}

TEST_CASE("config files set subcommand options and the echoed config reproduces a run") {
  const auto dir = testing::scratch_dir("cli_config");
  const auto demos = small_demos(dir);
  { std::ofstream(dir / "zero.cfg") << "[train]\nepochs=0\nlayers=3\n"; }
  REQUIRE(riemflow_cli({"--config", (dir / "zero.cfg").string(), "train", "--demos", demos.string(), "--out",
                        (dir / "z.json").string()})
              .code == 0);
  CHECK(lines(dir / "z_history.csv").size() == 1);
  CHECK(flow::load_model((dir / "z.json").string()).layers.size() == 3);

  // Command-line flags override the file.
  REQUIRE(riemflow_cli({"--config", (dir / "zero.cfg").string(), "train", "--demos", demos.string(), "--layers", "2",
                        "--out", (dir / "o.json").string()})
              .code == 0);
  CHECK(flow::load_model((dir / "o.json").string()).layers.size() == 2);

  REQUIRE(riemflow_cli(concat({"train", "--demos", demos.string(), "--out", (dir / "a.json").string()}, kQuickTrain))
              .code == 0);
  std::string echoed = slurp(dir / "a_run.cfg");
  CHECK(echoed.find("epochs=1\n") != std::string::npos);
  REQUIRE(riemflow_cli({"--config", (dir / "a_run.cfg").string(), "train", "--out", (dir / "b.json").string(),
                        "--history", (dir / "b_history.csv").string()})
              .code == 0);
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
  CHECK(slurp(dir / "a_history.csv") == slurp(dir / "b_history.csv"));
}
