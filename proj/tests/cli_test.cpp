// In-process tests of the command-line surface: exit codes, JSON output, and
// the files each subcommand writes.  Every invocation goes through run_cli()
// with captured streams, so these run without spawning processes.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "sof/cli.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
namespace fz = sof::test::frozen;
using nlohmann::json;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult cli(const std::vector<std::string>& args) {
  std::vector<std::string> argv_s;
  argv_s.push_back("sof");
  argv_s.insert(argv_s.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_s) argv.push_back(s.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = sof::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

json parse_out(const CliResult& r) {
  return json::parse(r.out);
}

// Example systems live next to the sources, not the build tree.
std::string repo_file(const std::string& rel) {
  return (fs::path(__FILE__).parent_path().parent_path() / rel).string();
}

const std::string kExample1 = repo_file("examples/example1.json");
const std::string kExample2 = repo_file("examples/example2.json");

// Fresh per-test scratch directory under the test working directory.
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path("cli_scratch") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  EXPECT_TRUE(in.good()) << p;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const std::string& text) {
  return text.substr(0, text.find('\n'));
}

}  // namespace

TEST(CliDispatch, HelpAndArgumentErrors) {
  EXPECT_EQ(cli({"--help"}).code, 0);
  EXPECT_NE(cli({"--help"}).out.find("optimize"), std::string::npos);

  EXPECT_EQ(cli({}).code, 4);                      // subcommand is required
  EXPECT_EQ(cli({"frobnicate"}).code, 4);          // unknown subcommand
  EXPECT_EQ(cli({"optimize"}).code, 4);            // missing required options
  EXPECT_EQ(cli({"sweep", "--system", kExample1}).code, 4);  // missing --grid
  EXPECT_EQ(cli({"reproduce", "--example", "one"}).code, 4);  // missing --out

  const CliResult bad_k0 =
      cli({"eval", "--system", kExample1, "--k0", "pineapple"});
  EXPECT_EQ(bad_k0.code, 4);
  EXPECT_NE(bad_k0.err.find("--k0"), std::string::npos);
}

TEST(CliValidate, AcceptsTheShippedSystems) {
  const CliResult r1 = cli({"validate", "--system", kExample1});
  ASSERT_EQ(r1.code, 0) << r1.err;
  const json j1 = parse_out(r1);
  EXPECT_TRUE(j1["pass"].get<bool>());
  EXPECT_GT(j1["checks"].size(), 0u);
  for (const auto& c : j1["checks"]) EXPECT_TRUE(c["pass"].get<bool>());
  EXPECT_EQ(j1["warnings"].size(), 0u);

  // The second system has a singular Q: valid, but flagged.
  const CliResult r2 = cli({"validate", "--system", kExample2});
  ASSERT_EQ(r2.code, 0) << r2.err;
  const json j2 = parse_out(r2);
  EXPECT_TRUE(j2["pass"].get<bool>());
  ASSERT_EQ(j2["warnings"].size(), 1u);
  EXPECT_NE(j2["warnings"][0].get<std::string>().find("Q"), std::string::npos);
}

TEST(CliValidate, RejectsBrokenInput) {
  EXPECT_EQ(cli({"validate", "--system", "no/such/file.json"}).code, 2);

  const fs::path dir = scratch("validate_bad");
  const fs::path garbled = dir / "garbled.json";
  std::ofstream(garbled) << "{ this is not json";
  EXPECT_EQ(cli({"validate", "--system", garbled.string()}).code, 2);

  // Structurally valid JSON, inconsistent dimensions (B has too many rows).
  const fs::path shapes = dir / "shapes.json";
  std::ofstream(shapes) << R"({"A": [[0.5]], "B": [[1.0], [1.0]],
                              "C": [[1.0]], "Q": [[1.0]], "R": [[1.0]],
                              "X0": [[1.0]]})";
  EXPECT_EQ(cli({"validate", "--system", shapes.string()}).code, 2);
}

TEST(CliEval, ReportsClosedLoopNumbers) {
  const CliResult r = cli({"eval", "--system", kExample1, "--k0", "9"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = parse_out(r);
  sof::test::expect_rel(j["J"].get<double>(), fz::kJ9, 1e-12, "J");
  sof::test::expect_rel(j["spectral_radius"].get<double>(), fz::kRho9, 1e-12,
                        "rho");
  sof::test::expect_rel(j["grad_norm"].get<double>(), fz::kGrad9, 1e-12,
                        "grad");
  EXPECT_GT(j["natural_grad_norm"].get<double>(), 0.0);
  EXPECT_GT(j["gauss_newton_grad_norm"].get<double>(), 0.0);
  EXPECT_GT(j["E_norm"].get<double>(), 0.0);
  EXPECT_LT(j["stability_margin"].get<double>(), 1.0);

  // A destabilizing gain is a runtime failure, not a crash.
  const CliResult bad = cli({"eval", "--system", kExample1, "--k0", "1"});
  EXPECT_EQ(bad.code, 3);
  EXPECT_NE(bad.err.find("error"), std::string::npos);
}

TEST(CliGradCheck, PassesAtDefaultTolerances) {
  const CliResult r1 = cli({"grad-check", "--system", kExample1, "--k0", "9"});
  ASSERT_EQ(r1.code, 0) << r1.err;
  const json j1 = parse_out(r1);
  EXPECT_TRUE(j1["pass"].get<bool>());
  EXPECT_LE(j1["grad_rel_err"].get<double>(), 1e-6);
  EXPECT_LE(j1["hessian_quadratic_rel_err"].get<double>(), 1e-4);

  const CliResult r2 =
      cli({"grad-check", "--system", kExample2, "--k0", "0,-1;0,-2"});
  ASSERT_EQ(r2.code, 0) << r2.err;
  EXPECT_TRUE(parse_out(r2)["pass"].get<bool>());

  // Unreachable tolerances make the same check fail loudly.
  const CliResult strict = cli({"grad-check", "--system", kExample1, "--k0",
                                "9", "--tol", "1e-18", "--hessian-tol",
                                "1e-18"});
  EXPECT_EQ(strict.code, 3);
  EXPECT_FALSE(parse_out(strict)["pass"].get<bool>());
}

TEST(CliOptimize, ConvergesAndWritesDeterministicCsv) {
  const fs::path dir_a = scratch("optimize_a");
  const fs::path dir_b = scratch("optimize_b");
  const std::vector<std::string> base = {
      "optimize", "--system", kExample1,      "--k0",      "9",
      "--method", "gauss-newton", "--eta",    "0.2",       "--epsilon",
      "1e-6"};

  std::vector<std::string> args_a = base;
  args_a.insert(args_a.end(), {"--out", dir_a.string()});
  const CliResult ra = cli(args_a);
  ASSERT_EQ(ra.code, 0) << ra.err;
  const json ja = parse_out(ra);
  EXPECT_EQ(ja["method"].get<std::string>(), "gauss_newton");
  EXPECT_EQ(ja["terminated_by"].get<std::string>(), "stationary");
  sof::test::expect_rel(ja["final_J"].get<double>(), fz::kJopt, 1e-9,
                        "final J");
  EXPECT_LE(ja["final_grad_norm"].get<double>(), 1e-6);

  const fs::path csv_a = dir_a / "run_gauss_newton.csv";
  EXPECT_EQ(ja["csv"].get<std::string>(), csv_a.string());
  ASSERT_TRUE(fs::exists(csv_a));
  EXPECT_EQ(first_line(slurp(csv_a)),
            "iter,J,grad_norm,method_grad_norm,rho,eta_used,k_0_0");

  // Bitwise reproducibility: same invocation, different directory.
  std::vector<std::string> args_b = base;
  args_b.insert(args_b.end(), {"--out", dir_b.string()});
  ASSERT_EQ(cli(args_b).code, 0);
  EXPECT_EQ(slurp(csv_a), slurp(dir_b / "run_gauss_newton.csv"));
}

TEST(CliOptimize, UnguardedDivergenceIsARuntimeError) {
  const fs::path dir = scratch("optimize_unstable");
  const CliResult r =
      cli({"optimize", "--system", kExample1, "--k0", "9", "--eta", "30",
           "--no-monotone", "--out", dir.string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("iteration"), std::string::npos);
}

TEST(CliSweep, LocatesTheScalarMinimum) {
  const fs::path dir = scratch("sweep");
  const CliResult r = cli({"sweep", "--system", kExample1, "--grid",
                           "2.1:22.05:1000", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = parse_out(r);
  EXPECT_NEAR(j["min_K"].get<double>(), fz::kKopt, 0.02);
  EXPECT_NEAR(j["min_J"].get<double>(), fz::kJopt, 1e-3);
  const long stabilizing = j["stabilizing_points"].get<long>();
  EXPECT_GT(stabilizing, 0);
  EXPECT_LT(stabilizing, 1000);

  const std::string csv = slurp(dir / "sweep.csv");
  EXPECT_EQ(first_line(csv), "K,J,grad_norm,rho,stabilizing");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1001);
  // Both grid endpoints sit outside the stabilizing interval.
  std::istringstream lines(csv);
  std::string header, first_row, row, last_row;
  std::getline(lines, header);
  std::getline(lines, first_row);
  while (std::getline(lines, row)) last_row = row;
  EXPECT_EQ(first_row.substr(first_row.size() - 2), ",0");
  EXPECT_EQ(last_row.substr(last_row.size() - 2), ",0");
  EXPECT_NE(first_row.find("nan"), std::string::npos);
}

TEST(CliSweep, ValidatesItsArguments) {
  EXPECT_EQ(cli({"sweep", "--system", kExample1, "--grid", "5:1:10"}).code, 4);
  EXPECT_EQ(cli({"sweep", "--system", kExample1, "--grid", "1:2"}).code, 4);
  EXPECT_EQ(cli({"sweep", "--system", kExample1, "--grid", "1:2:1"}).code, 4);
  // Grids only make sense for scalar gains.
  EXPECT_EQ(cli({"sweep", "--system", kExample2, "--grid", "0:1:10"}).code, 4);
}

TEST(CliLandscape, ReportsPinnedConstants) {
  // gamma pinned to the value the frozen constants were computed at.
  const CliResult r =
      cli({"landscape", "--system", kExample1, "--k0", "9", "--gamma", "1.5",
           "--certificates", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = parse_out(r);
  ASSERT_TRUE(j["constants_available"].get<bool>());
  const json c = j["constants"];
  EXPECT_EQ(c["gamma_provenance"].get<std::string>(), "user_supplied");
  sof::test::expect_rel(c["alpha"].get<double>(), fz::kJ9, 1e-12, "alpha");
  sof::test::expect_rel(c["L"].get<double>(), fz::kL, 1e-10, "L");
  sof::test::expect_rel(c["psi"].get<double>(), fz::kPsi, 1e-10, "psi");
  sof::test::expect_rel(c["M"].get<double>(), fz::kM, 1e-10, "M");
  sof::test::expect_rel(c["zeta1"].get<double>(), fz::kZeta1, 1e-10, "zeta1");
  EXPECT_FALSE(j.contains("certificates"));
}

TEST(CliLandscape, CertificatesPassAndPersist) {
  const fs::path dir = scratch("landscape");
  const CliResult r = cli({"landscape", "--system", kExample1, "--k0", "9",
                           "--gamma-samples", "500", "--certificates", "12",
                           "--kref", "4.0637499328125264", "--out",
                           dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = parse_out(r);
  ASSERT_TRUE(j["constants_available"].get<bool>());
  EXPECT_EQ(j["constants"]["gamma_provenance"].get<std::string>(), "sampled");
  ASSERT_TRUE(j.contains("certificates"));
  EXPECT_EQ(j["certificates"].size(), 6u);
  for (const auto& c : j["certificates"])
    EXPECT_TRUE(c["pass"].get<bool>()) << c["name"].get<std::string>();
  EXPECT_TRUE(j["all_certificates_pass"].get<bool>());

  // --out persists exactly what was printed.
  EXPECT_EQ(slurp(dir / "landscape.json"), r.out);
}

TEST(CliLandscape, SingularQFallsBackGracefully) {
  const CliResult r = cli({"landscape", "--system", kExample2});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = parse_out(r);
  EXPECT_FALSE(j["constants_available"].get<bool>());
  EXPECT_NE(j["warning"].get<std::string>().find("Q"), std::string::npos);
  EXPECT_FALSE(j.contains("constants"));
}

TEST(CliLandscape, ValidatesItsArguments) {
  // alpha below J(K0) defines an empty sublevel set around the seed.
  EXPECT_EQ(cli({"landscape", "--system", kExample1, "--k0", "9", "--alpha",
                 "1.0"}).code,
            4);
  // No --k0 and the zero gain does not stabilize this system.
  EXPECT_EQ(cli({"landscape", "--system", kExample1}).code, 4);
}

TEST(CliModelfree, WritesPerSeedLogsDeterministically) {
  const fs::path dir_a = scratch("modelfree_a");
  const fs::path dir_b = scratch("modelfree_b");
  const std::vector<std::string> base = {
      "modelfree", "--system", kExample1, "--k0", "9",
      "--z", "64", "--rollout-length", "60", "--max-iters", "3",
      "--seed-list", "0,1"};

  std::vector<std::string> args_a = base;
  args_a.insert(args_a.end(), {"--out", dir_a.string()});
  const CliResult ra = cli(args_a);
  ASSERT_EQ(ra.code, 0) << ra.err;
  const json ja = parse_out(ra);
  EXPECT_EQ(ja["method"].get<std::string>(), "vanilla");
  EXPECT_EQ(ja["num_trajectories"].get<long>(), 64);
  ASSERT_EQ(ja["runs"].size(), 2u);
  EXPECT_EQ(ja["runs"][0]["seed"].get<std::uint64_t>(), 0u);
  EXPECT_EQ(ja["runs"][1]["seed"].get<std::uint64_t>(), 1u);

  const fs::path csv0 = dir_a / "mf_vanilla_seed0.csv";
  const fs::path csv1 = dir_a / "mf_vanilla_seed1.csv";
  ASSERT_TRUE(fs::exists(csv0));
  ASSERT_TRUE(fs::exists(csv1));
  EXPECT_EQ(
      first_line(slurp(csv0)),
      "iter,J,grad_norm,method_grad_norm,rho,eta_used,k_0_0,"
      "grad_hat_norm,divergent_count,seed");
  EXPECT_NE(slurp(csv0), slurp(csv1));  // different seeds, different noise

  std::vector<std::string> args_b = base;
  args_b.insert(args_b.end(), {"--out", dir_b.string()});
  ASSERT_EQ(cli(args_b).code, 0);
  EXPECT_EQ(slurp(csv0), slurp(dir_b / "mf_vanilla_seed0.csv"));
}

TEST(CliReproduce, EmitsTheFullArtifactSet) {
  const fs::path dir = scratch("reproduce");
  const CliResult r =
      cli({"reproduce", "--example", "one", "--out", dir.string(),
           "--seed-list", "0,1", "--max-iters", "60", "--mf-iters", "4",
           "--z", "64", "--rollout-length", "50"});
  ASSERT_EQ(r.code, 0) << r.err;

  for (const char* name :
       {"summary.json", "model_based_vanilla.csv", "model_based_natural.csv",
        "model_based_gauss_newton.csv", "model_free_vanilla_policy_err.csv",
        "model_free_vanilla_cost_err.csv", "model_free_natural_policy_err.csv",
        "model_free_natural_cost_err.csv", "plot.py"})
    EXPECT_TRUE(fs::exists(dir / name)) << name;

  const json summary = json::parse(slurp(dir / "summary.json"));
  EXPECT_EQ(summary["example"].get<std::string>(), "one");
  for (const char* method : {"vanilla", "natural", "gauss_newton"}) {
    ASSERT_TRUE(summary["model_based"].contains(method)) << method;
    EXPECT_GE(summary["model_based"][method]["final_rel_policy_err"]
                  .get<double>(),
              0.0);
  }
  for (const char* method : {"vanilla", "natural"}) {
    const json& mf = summary["model_free"][method];
    EXPECT_EQ(mf["seeds"].get<std::vector<std::uint64_t>>(),
              (std::vector<std::uint64_t>{0, 1}));
    EXPECT_GE(mf["final_rel_cost_err"]["max"].get<double>(),
              mf["final_rel_cost_err"]["min"].get<double>());
  }

  EXPECT_EQ(first_line(slurp(dir / "model_based_vanilla.csv")),
            "iter,J,grad_norm,rel_policy_err,rel_cost_err");
  EXPECT_EQ(first_line(slurp(dir / "model_free_vanilla_policy_err.csv")),
            "iter,s0,s1,min,mean,max");

  EXPECT_EQ(cli({"reproduce", "--example", "three", "--out", dir.string()})
                .code,
            4);
}
