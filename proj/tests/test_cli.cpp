#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "fpdecomp/cli.hpp"
#include "fpdecomp/error.hpp"

namespace fs = std::filesystem;
using namespace fpdecomp;

namespace {

const std::string kModels = FPDECOMP_MODELS_DIR;

std::string model(const std::string& name) { return kModels + "/" + name + ".json"; }

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fpdecomp_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "manifest.json")); }

// Rows of a CSV as vectors of doubles, header dropped.
std::vector<std::vector<double>> rows(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> out;
  while (std::getline(in, line)) {
    std::vector<double> r;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) r.push_back(std::stod(cell));
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("linear decomposition") {
    const auto dir = fresh_dir("linear");
    REQUIRE(cli::run({"decompose", "--linear", "--model", model("rot2"), "--out", dir.string()}) == cli::kExitOk);
    const auto rep = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(rep["Xi"][0][0].get<double>() == doctest::Approx(1.0));
    CHECK(rep["J"][0][1].get<double>() == doctest::Approx(1.0));
    const auto man = manifest(dir);
    CHECK(man["status"] == "ok");
    CHECK(man["subcommand"] == "decompose");
    CHECK(man.contains("versions"));
    CHECK(man.contains("wall_time_seconds"));
  }

  TEST_CASE("grid decomposition writes LF-terminated CSV with a header") {
    const auto dir = fresh_dir("grid");
    REQUIRE(cli::run({"decompose", "--grid", "30,30", "--model", model("rot2"), "--out", dir.string()}) ==
            cli::kExitOk);
    const std::string csv = slurp(dir / "rho.csv");
    CHECK(csv.rfind("x1,x2,", 0) == 0);
    CHECK(csv.find('\r') == std::string::npos);
    CHECK(csv.back() == '\n');
    const auto r = rows(dir / "rho.csv");
    CHECK(r.size() == 900);
    double mass = 0.0;
    for (const auto& row : r) mass += row.back() * 0.4 * 0.4;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(fs::exists(dir / "circulation.csv"));
  }

  TEST_CASE("thermo ledger is non-negative") {
    const auto dir = fresh_dir("thermo");
    REQUIRE(cli::run({"thermo", "--model", model("rot2"), "--grid", "40,40", "--u0", "gauss:1,0:1", "--T", "0.5",
                      "--dt", "0.01", "--out", dir.string()}) == cli::kExitOk);
    const auto r = rows(dir / "ledger.csv");
    REQUIRE(r.size() >= 3);
    for (const auto& row : r) {
      CHECK(row[1] >= 0.0);  // F
      CHECK(row[2] >= 0.0);  // ep
      CHECK(row[3] >= 0.0);  // Ein
    }
  }

  TEST_CASE("fixed point and simulate") {
    const auto dir = fresh_dir("fixed");
    CHECK(cli::run({"fixedpoint", "--linear", "--model", model("rot2"), "--at", "0,0", "--out", dir.string()}) ==
          cli::kExitOk);
    CHECK(nlohmann::json::parse(slurp(dir / "report.json"))["classification"] == "center");

    const auto sdir = fresh_dir("simulate");
    REQUIRE(cli::run({"simulate", "--model", model("ou1"), "--x0", "0", "--T", "1", "--dt", "0.01", "--paths", "20",
                      "--seed", "3", "--out", sdir.string()}) == cli::kExitOk);
    const std::string first = slurp(sdir / "endpoints.csv");
    CHECK(rows(sdir / "endpoints.csv").size() == 20);
    REQUIRE(cli::run({"simulate", "--model", model("ou1"), "--x0", "0", "--T", "1", "--dt", "0.01", "--paths", "20",
                      "--seed", "3", "--out", sdir.string()}) == cli::kExitOk);
    CHECK(slurp(sdir / "endpoints.csv") == first);
  }

  TEST_CASE("exit codes") {
    const auto dir = fresh_dir("errors");
    // usage
    CHECK(cli::run({"decompose", "--no-such-flag"}) == cli::kExitUsage);
    CHECK(cli::run({}) == cli::kExitUsage);
    // validation: missing model file, malformed grid
    CHECK(cli::run({"decompose", "--linear", "--model", model("missing"), "--out", dir.string()}) ==
          cli::kExitValidation);
    CHECK(cli::run({"decompose", "--grid", "0,30", "--model", model("rot2"), "--out", dir.string()}) ==
          cli::kExitValidation);
    // numerical: unstable drift
    CHECK(cli::run({"decompose", "--linear", "--model", model("unstable"), "--out", dir.string()}) ==
          cli::kExitNumerical);
    const auto man = manifest(dir);
    CHECK(man["status"] != "ok");
  }

  TEST_CASE("initial density strings") {
    const Grid g({{-2, 2}}, {8});
    CHECK(cli::parse_initial_density("uniform", g).mass() == doctest::Approx(1.0));
    const GridField gauss = cli::parse_initial_density("gauss:0.75:0.3", g);
    CHECK(gauss.mass() == doctest::Approx(1.0));
    Eigen::Index peak;
    gauss.values.maxCoeff(&peak);
    CHECK(peak == 5);
    CHECK_THROWS_AS(cli::parse_initial_density("gauss:0.5", g), Error);
    CHECK_THROWS_AS(cli::parse_initial_density("gauss:0,0:1", g), Error);
    CHECK(cli::parse_reals("1,-2.5,3e-1") == std::vector<double>{1, -2.5, 0.3});
    CHECK(cli::parse_ints("30,40") == std::vector<int>{30, 40});
    CHECK_THROWS_AS(cli::parse_reals("1,,2"), Error);
  }
}
