#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

namespace fs = std::filesystem;

struct CmdResult {
  int exit_code = -1;
  std::string output;
};

CmdResult run_cli(const std::string& args) {
  const fs::path out_file = fs::temp_directory_path() / "last_cli_out.txt";
  const std::string cmd =
      std::string(LAST_CLI_PATH) + " " + args + " > " + out_file.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CmdResult res;
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_file);
  res.output.assign(std::istreambuf_iterator<char>(in),
                    std::istreambuf_iterator<char>());
  return res;
}

fs::path make_config() {
  const fs::path dir = fs::temp_directory_path() / "last_cli_checks";
  fs::create_directories(dir);
  const fs::path cfg = dir / "lsr.cfg";
  std::ofstream out(cfg);
  out << "dataset.kind = linreg\n"
      << "dataset.n = 80\n"
      << "dataset.d = 3\n"
      << "learner.kind = lsr\n"
      << "learner.eta0 = 0.001\n"
      << "run.iterations = 40\n"
      << "run.seeds = 7\n";
  return cfg;
}

}  // namespace

TEST_CASE("teach happy path writes a trace and exits 0") {
  const fs::path cfg = make_config();
  const fs::path out = cfg.parent_path() / "run1";
  const CmdResult res = run_cli("teach --config " + cfg.string() +
                                " --set teacher.kind=last --seed 7 --out " +
                                out.string());
  INFO(res.output);
  CHECK(res.exit_code == 0);
  CHECK(fs::exists(out / "trace_seed7.csv"));
  CHECK(fs::exists(out / "distance.svg"));
  // the resolved config and seed appear in the banner
  CHECK(res.output.find("teacher.kind = last") != std::string::npos);
  CHECK(res.output.find("# seeds: 7") != std::string::npos);
}

TEST_CASE("missing config file exits 1 and names the path") {
  const CmdResult res = run_cli("teach --config /nonexistent/conf.cfg");
  CHECK(res.exit_code == 1);
  CHECK(res.output.find("/nonexistent/conf.cfg") != std::string::npos);
}

TEST_CASE("unknown key in --set exits 1") {
  const fs::path cfg = make_config();
  const CmdResult res =
      run_cli("teach --config " + cfg.string() + " --set teacher.what=1");
  CHECK(res.exit_code == 1);
  CHECK(res.output.find("unknown key") != std::string::npos);
}

TEST_CASE("mistyped subcommand exits 1 with a suggestion") {
  const CmdResult res = run_cli("tech");
  CHECK(res.exit_code == 1);
  CHECK(res.output.find("did you mean 'teach'") != std::string::npos);
}

TEST_CASE("unknown flag is rejected") {
  const fs::path cfg = make_config();
  const CmdResult res = run_cli("teach --confg " + cfg.string());
  CHECK(res.exit_code == 1);
  CHECK(res.output.find("--config") != std::string::npos);  // suggestion
}

TEST_CASE("help is available per subcommand") {
  CHECK(run_cli("--help").exit_code == 0);
  const CmdResult res = run_cli("teach --help");
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("--set") != std::string::npos);
}

TEST_CASE("theorem-suite super_et prints a pass line") {
  const CmdResult res = run_cli("theorem-suite --kind super_et");
  INFO(res.output);
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("PASS super_et") != std::string::npos);
  CHECK(run_cli("theorem-suite --kind bogus").exit_code == 1);
}

TEST_CASE("gen-data then teach from the saved pool") {
  const fs::path cfg = make_config();
  const fs::path out = cfg.parent_path() / "run2";
  CHECK(run_cli("gen-data --config " + cfg.string() + " --out " + out.string())
            .exit_code == 0);
  REQUIRE(fs::exists(out / "pool.txt"));
  const CmdResult res = run_cli(
      "teach --config " + cfg.string() + " --set dataset.kind=pool --set dataset.pool=" +
      (out / "pool.txt").string() + " --set teacher.kind=sgd --out " + out.string());
  INFO(res.output);
  CHECK(res.exit_code == 0);
  CHECK(fs::exists(out / "trace_seed7.csv"));
}

TEST_CASE("plot renders an svg from a trace csv") {
  const fs::path cfg = make_config();
  const fs::path out = cfg.parent_path() / "run3";
  REQUIRE(run_cli("teach --config " + cfg.string() + " --out " + out.string())
              .exit_code == 0);
  const fs::path svg = out / "replot.svg";
  const CmdResult res =
      run_cli("plot --input " + (out / "trace_seed7.csv").string() +
              " --column dist --log --output " + svg.string());
  INFO(res.output);
  CHECK(res.exit_code == 0);
  CHECK(fs::exists(svg));
}
