#include "cli.hpp"

#include <doctest.h>
#include <json.hpp>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cvp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = cvp::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path workdir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / ("cvp-cli-test-" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string write(const std::string& name, const std::string& text) {
  const fs::path p = workdir() / name;
  std::ofstream(p) << text;
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::vector<double>> csv_rows(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

const std::string kBsm = "sigma = 0.2\nr = 0.05\ntau = 1\nstrike = 100\np0 = 100\n";

}  // namespace

TEST_CASE("price: bsm closed form prints the reference price") {
  const Result r = cli({"price", "--model", "bsm", "--method", "closed-form", "--params", write("bsm.par", kBsm)});
  CHECK(r.code == 0);
  CHECK(r.out == "model,method,price\nbsm,closed-form,10.450584\n");
}

TEST_CASE("price: nonlinear with monte carlo is an invalid pair") {
  const Result r = cli({"price", "--model", "nonlinear", "--method", "mc", "--params", write("bsm.par", kBsm)});
  CHECK(r.code == 2);
  CHECK(r.err.find("'nonlinear'") != std::string::npos);
  CHECK(r.err.find("'mc'") != std::string::npos);
  CHECK(r.out.empty());
}

TEST_CASE("price: two-factor pde with perfectly offsetting value and volume") {
  const auto par = write("tf.par", "sigma_c = 0.2\nsigma_v = 0.2\nlambda = 1\nr = 0.05\ntau = 1\nstrike = 90\np0 = 100\n");
  const std::string surf = (workdir() / "tf_surface.csv").string();
  const Result r = cli({"price", "--model", "two-factor", "--method", "pde", "--params", par, "--out", surf,
                        "--format", "json"});
  REQUIRE(r.code == 0);
  const json scalar = json::parse(r.out);
  CHECK(scalar["price"].get<double>() == doctest::Approx(100.0 - 90.0 * std::exp(-0.05)).epsilon(1e-6));
  const json doc = json::parse(slurp(surf));
  CHECK(doc["surface"]["axes"] == json::array({"p", "V"}));
  CHECK(doc["surface"]["rows"].size() == 201 * 21);
}

TEST_CASE("price: surface export in delimited text") {
  const std::string surf = (workdir() / "bsm_surface.csv").string();
  const Result r = cli({"price", "--model", "bsm", "--method", "pde", "--params", write("bsm.par", kBsm), "--out", surf});
  REQUIRE(r.code == 0);
  const std::string text = slurp(surf);
  CHECK(text.rfind("p,price\n", 0) == 0);
  const auto rows = csv_rows(text);
  CHECK(rows.size() == 401);
  REQUIRE(r.out.rfind("model,method,price\nbsm,pde,", 0) == 0);
  CHECK(std::abs(std::stod(r.out.substr(r.out.rfind(',') + 1)) - 10.450584) < 1e-3);
}

TEST_CASE("price: monte carlo record") {
  const auto par = write("mc.par", kBsm + "n_paths = 20000\nantithetic = true\n");
  const Result r = cli({"price", "--model", "bsm", "--method", "mc", "--params", par, "--seed", "5", "--format", "json"});
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["seed"] == 5);
  CHECK(std::abs(j["price"].get<double>() - 10.450584) < 4.0 * j["std_error"].get<double>());
  CHECK(r.out == cli({"price", "--model", "bsm", "--method", "mc", "--params", par, "--seed", "5", "--format", "json"}).out);
}

TEST_CASE("price: accuracy flag exits 3 with output written") {
  const auto par = write("flag.par", kBsm + "n_p = 41\nn_t = 20\ntarget_tolerance = 1e-9\n");
  const std::string surf = (workdir() / "flag_surface.csv").string();
  const Result r = cli({"price", "--model", "bsm", "--method", "pde", "--params", par, "--out", surf});
  CHECK(r.code == 3);
  CHECK(csv_rows(slurp(surf)).size() == 41);
}

TEST_CASE("configuration errors exit 2") {
  CHECK(cli({"price", "--model", "bsm", "--method", "closed-form", "--params", "/nonexistent/x.par"}).code == 2);
  CHECK(cli({"price", "--model", "bsm", "--method", "closed-form"}).code == 2);
  CHECK(cli({"price", "--model", "bogus", "--method", "pde", "--params", write("bsm.par", kBsm)}).code == 2);
  CHECK(cli({"price", "--model", "bsm", "--method", "fft", "--params", write("bsm.par", kBsm)}).code == 2);
  CHECK(cli({"price", "--model", "stochvol-3d", "--method", "closed-form", "--params", write("bsm.par", kBsm)}).code == 2);
  CHECK(cli({"price", "--model", "bsm", "--method", "closed-form", "--params", write("bsm.par", kBsm), "--out",
             "/nonexistent/dir/out.csv"}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  const Result typo = cli({"price", "--model", "bsm", "--method", "closed-form", "--params",
                           write("typo.par", kBsm + "sigam = 0.3\n")});
  CHECK(typo.code == 2);
  CHECK(typo.err.find("line 6: 'sigam'") != std::string::npos);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("simulate: identical seeds give identical bytes") {
  const auto par = write("sim.par", "mu_c = 0.1\nsigma_c = 0.3\nmu_v = 0.05\nsigma_v = 0.2\nlambda = 0.5\nn_paths = 3\nn_steps = 20\n");
  const std::string a = (workdir() / "sim_a.csv").string(), b = (workdir() / "sim_b.csv").string();
  REQUIRE(cli({"simulate", "--model", "two-factor", "--params", par, "--seed", "9", "--out", a}).code == 0);
  REQUIRE(cli({"simulate", "--model", "two-factor", "--params", par, "--seed", "9", "--out", b}).code == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a).rfind("path,t,C,V,p\n", 0) == 0);
  CHECK(csv_rows(slurp(a)).size() == 3 * 21);
  REQUIRE(cli({"simulate", "--model", "two-factor", "--params", par, "--seed", "10", "--out", b}).code == 0);
  CHECK(slurp(a) != slurp(b));
}

TEST_CASE("simulate: noiseless path is a pair of exponentials") {
  const auto par = write("det.par", "mu_c = 0.1\nsigma_c = 0\nmu_v = 0.02\nsigma_v = 0\nlambda = 0\np0 = 10\nv0 = 2\nn_steps = 4\n");
  const Result r = cli({"simulate", "--model", "two-factor", "--params", par});
  REQUIRE(r.code == 0);
  const auto rows = csv_rows(r.out);
  REQUIRE(rows.size() == 5);
  for (const auto& row : rows) {
    const double t = row[1];
    CHECK(row[0] == 0.0);
    CHECK(row[2] == doctest::Approx(20.0 * std::exp(0.1 * t)).epsilon(1e-13));
    CHECK(row[3] == doctest::Approx(2.0 * std::exp(0.02 * t)).epsilon(1e-13));
    CHECK(row[4] == doctest::Approx(10.0 * std::exp(0.08 * t)).epsilon(1e-13));
  }
  CHECK(rows.back()[1] == 1.0);
}

TEST_CASE("simulate then calibrate round trip") {
  const auto par = write("rt.par",
                         "mu_c = 0.1\nsigma_c = 0.3\nmu_v = 0.05\nsigma_v = 0.2\nlambda = 0.5\n"
                         "p0 = 10\nv0 = 100\nhorizon = 40\nn_steps = 10080\n");
  const std::string paths = (workdir() / "rt_paths.csv").string();
  REQUIRE(cli({"simulate", "--model", "two-factor", "--params", par, "--seed", "4", "--out", paths}).code == 0);
  const Result r = cli({"calibrate", paths, "--t2", "0.003968253968253968", "--params",
                        write("cal.par", "annualization = 252\n"), "--format", "json"});
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["n_obs"] == 10080);
  const std::map<std::string, double> truth{{"mu_c", 0.1}, {"sigma_c", 0.3}, {"mu_v", 0.05}, {"sigma_v", 0.2}, {"lambda", 0.5}};
  for (const auto& [name, value] : truth)
    CHECK(std::abs(j["estimates"][name].get<double>() - value) < 4.0 * j["std_errors"][name].get<double>());

  const Result text = cli({"calibrate", paths, "--t2", "0.003968253968253968", "--params", write("cal.par", "annualization = 252\n")});
  CHECK(text.out.rfind("parameter,estimate,std_error\nmu_c,", 0) == 0);
}

TEST_CASE("aggregate: two-tick example") {
  const auto ticks = write("two.csv", "timestamp,value,volume\n0.5,10,2\n0.7,21,3\n");
  const Result r = cli({"aggregate", ticks, "--t2", "1"});
  CHECK(r.code == 0);
  CHECK(r.out == "start,end,sum_value,sum_volume,vwap,simple_avg,n_ticks\n0,1,31,5,6.2,6,2\n");
  const Result j = cli({"aggregate", ticks, "--t2", "1", "--format", "json"});
  CHECK(json::parse(j.out)["windows"][0]["vwap"].get<double>() == 6.2);
}

TEST_CASE("aggregate and calibrate input errors") {
  CHECK(cli({"aggregate", write("empty.csv", ""), "--t2", "1"}).code == 2);
  const Result bad = cli({"aggregate", write("bad.csv", "timestamp,value,volume\n1,2,3\nx,y,z\n"), "--t2", "1"});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("line 3") != std::string::npos);
  CHECK(cli({"aggregate", write("two.csv", "timestamp,value,volume\n0.5,10,2\n"), "--t2", "0"}).code == 2);
  CHECK(cli({"aggregate", write("two.csv", "timestamp,value,volume\n0.5,10,2\n")}).code == 2);
  const Result few = cli({"calibrate", write("few.csv", "timestamp,value,volume\n0.5,10,2\n1.5,11,2\n"), "--t2", "1",
                          "--params", write("cal.par", "annualization = 252\n")});
  CHECK(few.code == 3);
}

TEST_CASE("verify: passing subset, tightened tolerances and report format") {
  const Result ok = cli({"verify", "--criteria", "1,3"});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("PASS  criterion  1") != std::string::npos);
  CHECK(ok.out.find("measured") != std::string::npos);
  CHECK(ok.out.find("tolerance") != std::string::npos);
  CHECK(ok.out.find("2 of 2 criteria passed") != std::string::npos);

  const Result tight = cli({"verify", "--criteria", "1", "--tolerance-scale", "0.01"});
  CHECK(tight.code == 5);
  CHECK(tight.out.find("FAIL  criterion  1") != std::string::npos);
  CHECK(tight.err.find("criterion 1 failed") != std::string::npos);

  const json j = json::parse(cli({"verify", "--criteria", "1", "--format", "json"}).out);
  CHECK(j["criteria"][0]["checks"].size() >= 2);
  CHECK(cli({"verify", "--tolerance-scale", "-1"}).code == 2);
}
