#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "hfqb/beat_model.hpp"
#include "hfqb/dataset.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct cmd_result {
  int code;
  std::string out;
  std::string err;
};

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("hfqb_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

cmd_result run(const std::string& args) {
  const fs::path out = work_dir() / "stdout.txt";
  const fs::path err = work_dir() / "stderr.txt";
  const std::string cmd =
      std::string(HFQB_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  int code = -1;
  if (status != -1 && WIFEXITED(status)) code = WEXITSTATUS(status);
  return {code, slurp(out), slurp(err)};
}

const std::string kFixture = std::string(HFQB_DATA_DIR) + "/cs8p_table1.csv";

}  // namespace

TEST_CASE("freqs with B = 0 scales with A", "[cli]") {
  const auto res = run("freqs --I 7/2 --J 3/2 --A 7.42 --B 0 --json");
  REQUIRE(res.code == 0);
  const json j = json::parse(res.out);
  CHECK(j["I"] == "7/2");
  CHECK_THAT(j["constant"].get<double>(),
             Catch::Matchers::WithinAbs(1837.0 / 8400.0, 1e-12));
  REQUIRE(j["components"].size() == 5);
  const double ratios[5] = {3.0, 7.0, 4.0, 9.0, 5.0};
  for (int k = 0; k < 5; ++k)
    CHECK_THAT(j["components"][k]["nu_MHz"].get<double>(),
               Catch::Matchers::WithinAbs(7.42 * ratios[k], 1e-9));
}

TEST_CASE("freqs reproduces the published frequencies", "[cli]") {
  const auto res = run("freqs --A 7.42 --B 0.14 --json");
  REQUIRE(res.code == 0);
  const json j = json::parse(res.out);
  const double nu_ref[5] = {22.16, 51.80, 29.64, 66.84, 37.20};
  const double amp_ref[5] = {0.09375, 45.0 / 224.0, 0.0375, 77.0 / 480.0, 0.28875};
  for (int k = 0; k < 5; ++k) {
    CHECK_THAT(j["components"][k]["nu_MHz"].get<double>(),
               Catch::Matchers::WithinAbs(nu_ref[k], 1e-9));
    CHECK_THAT(j["components"][k]["amplitude"].get<double>(),
               Catch::Matchers::WithinAbs(amp_ref[k], 1e-12));
  }
}

TEST_CASE("freqs degenerate and invalid spins", "[cli]") {
  const auto res = run("freqs --I 0 --J 1 --json");
  REQUIRE(res.code == 0);
  const json j = json::parse(res.out);
  CHECK(j["components"].empty());
  CHECK(j["constant"].get<double>() == 1.0);

  CHECK(run("freqs --I 13 --J 3/2").code == 2);     // above the 25/2 cap
  CHECK(run("freqs --I 7/3 --J 3/2").code == 2);    // not a half-integer
  CHECK(run("freqs --I 7/2 --J 1/2 --B 1").code == 2);  // B needs I,J >= 1
  CHECK(run("").code == 2);                          // subcommand required
  CHECK(run("--help").code == 0);
}

TEST_CASE("simulate single point at t = 0", "[cli]") {
  const auto res = run("simulate --A 7.42 --B 0.14 --tmin 0 --tmax 0 --tstep 1");
  REQUIRE(res.code == 0);
  std::istringstream is(res.out);
  const hfqb::beat_dataset data = hfqb::load_dataset(is);
  REQUIRE(data.points.size() == 1);
  CHECK_THAT(data.points[0].pl, Catch::Matchers::WithinAbs(1.0 / 7.0, 1e-6));  // 14.29 percent
  CHECK(data.points[0].sigma == 0.01);  // placeholder sigma column
}

TEST_CASE("simulate seeded noise is reproducible", "[cli]") {
  const std::string flags = "simulate --A 7.42 --B 0.14 --W 2.4 --tmax 60 --noise 0.02 ";
  const auto a = run(flags + "--seed 11");
  const auto b = run(flags + "--seed 11");
  const auto c = run(flags + "--seed 12");
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out != c.out);
  std::istringstream is(a.out);
  const auto data = hfqb::load_dataset(is);
  CHECK(data.points.size() == 61);
  CHECK(data.points[0].sigma == 0.02);  // noise level becomes the sigma column
}

TEST_CASE("simulate output round trips to the model", "[cli]") {
  const fs::path csv = work_dir() / "sim.csv";
  const auto res = run("simulate --A 7.1 --B -0.3 --W 1.5 --dt 0.25 --tmax 40 --tstep 2.5 --out " +
                       csv.string());
  REQUIRE(res.code == 0);
  const auto data = hfqb::load_dataset(csv.string());
  REQUIRE(data.points.size() == 17);

  const hfqb::hyperfine_system sys{hfqb::half_int::from_twice(7), hfqb::half_int::from_twice(3),
                                   7.1, -0.3};
  const auto spec = hfqb::make_beat_spectrum(sys);
  for (const auto& p : data.points) {
    const double model = hfqb::polarization_cs(spec, {1.5, 0.25}, p.t_ns);
    CHECK_THAT(p.pl, Catch::Matchers::WithinAbs(model, 5e-9));  // printed to 6 decimals in percent
  }
}

TEST_CASE("fit recovers synthetic truth through the CLI", "[cli]") {
  const fs::path csv = work_dir() / "fit_input.csv";
  REQUIRE(run("simulate --A 7.42 --B 0.14 --W 1.8 --dt 0.3 --tmax 90 --tstep 2.5 --out " +
              csv.string()).code == 0);

  const fs::path report = work_dir() / "report.json";
  const fs::path plots = work_dir() / "plots";
  const auto res = run("fit " + csv.string() +
                       " --grid A=7:8:0.5 --grid B=-0.5:0.5:0.5 --grid dt=0:0.5:0.25"
                       " --grid W=1:2:1 --uncertainty covariance --plot-dir " + plots.string() +
                       " --out " + report.string());
  REQUIRE(res.code == 0);

  const json j = json::parse(slurp(report));
  CHECK_THAT(j["params"]["A_MHz"].get<double>(), Catch::Matchers::WithinAbs(7.42, 1e-4));
  CHECK_THAT(j["params"]["B_MHz"].get<double>(), Catch::Matchers::WithinAbs(0.14, 1e-3));
  CHECK_THAT(j["params"]["dt_ns"].get<double>(), Catch::Matchers::WithinAbs(0.3, 1e-3));
  CHECK_THAT(j["params"]["W_ns"].get<double>(), Catch::Matchers::WithinAbs(1.8, 1e-2));
  CHECK(j["red_chi2"].get<double>() < 1e-10);
  CHECK(j["n_points"] == 37);
  CHECK(j["n_dof"] == 33);
  CHECK(j["two_sigma"]["A_MHz"].get<double>() > 0.0);
  CHECK(j["residual_summary"].contains("fraction_within_1sigma"));

  const std::string curve = slurp(plots / "fit_curve.csv");
  CHECK(curve.rfind("t_ns,PL_percent\n", 0) == 0);
  const std::string resid = slurp(plots / "residuals.csv");
  CHECK(resid.rfind("index,t_ns,normalized_residual\n", 0) == 0);
  CHECK(std::count(resid.begin(), resid.end(), '\n') == 38);  // header + 37 rows
}

TEST_CASE("fit error paths", "[cli]") {
  CHECK(run("fit /nonexistent.csv").code == 2);
  CHECK(run("fit").code == 2);

  const fs::path bad = work_dir() / "bad.csv";
  std::ofstream(bad) << "index,t_ns,PL_percent,sigma_percent\n1,0.9,13.0,oops\n";
  CHECK(run("fit " + bad.string()).code == 3);

  const fs::path dup = work_dir() / "dup.csv";
  std::ofstream(dup) << "index,t_ns,PL_percent,sigma_percent\n"
                        "1,0.9,13.0,1.0\n1,1.8,12.4,1.4\n2,2.0,11.5,3.0\n"
                        "3,2.8,11.9,1.4\n4,4.1,3.3,2.4\n";
  CHECK(run("fit " + dup.string()).code == 3);

  CHECK(run("fit " + kFixture + " --grid A=8:7:0.5").code == 2);   // malformed grid range
  CHECK(run("fit " + kFixture + " --grid Q=1:2:0.5").code == 2);   // unknown parameter
  CHECK(run("fit " + kFixture + " --uncertainty nope").code == 2);
}

TEST_CASE("residuals subcommand", "[cli]") {
  const fs::path csv = work_dir() / "resid_input.csv";
  REQUIRE(run("simulate --A 7.42 --B 0.14 --tmax 50 --tstep 2.5 --out " + csv.string()).code == 0);

  const auto res =
      run("residuals " + csv.string() + " --A 7.42 --B 0.14 --json");
  REQUIRE(res.code == 0);
  const json j = json::parse(res.out);
  // zero up to the 6-decimal rounding of the CSV
  CHECK(j["red_chi2"].get<double>() < 1e-8);
  CHECK(j["residual_summary"]["fraction_within_1sigma"].get<double>() == 1.0);
  REQUIRE(j["residual_summary"]["per_point"].size() == 21);
  CHECK(std::abs(j["residual_summary"]["per_point"][0]["r"].get<double>()) < 1e-4);

  // human-readable table mode
  const auto plain = run("residuals " + csv.string() + " --A 7.42 --B 0.14");
  REQUIRE(plain.code == 0);
  CHECK(plain.out.find("index,t_ns,normalized_residual") != std::string::npos);

  CHECK(run("residuals " + csv.string()).code == 2);  // --A is required
}
