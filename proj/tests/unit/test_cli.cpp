#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "svyexp/cli.hpp"
#include "svyexp/io.hpp"

using namespace svyexp;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "svyexp");
  std::ostringstream out;
  std::ostringstream err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string fixture(const std::string& name) {
  return std::string(SVYEXP_FIXTURE_DIR) + "/" + name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "svyexp_cli_tests";
  fs::create_directories(dir);
  return dir / name;
}

CsvTable table_of(const std::string& text) {
  std::istringstream in(text);
  return parse_csv(in);
}

const CsvRow& row_named(const CsvTable& t, const std::string& col, const std::string& name) {
  const std::size_t i = t.index_of(col);
  for (const auto& r : t.rows) {
    if (r.fields[i] == name) return r;
  }
  FAIL("row '" << name << "' not found");
  return t.rows.front();
}

double number(const CsvTable& t, const CsvRow& r, const std::string& col) {
  return parse_double(r.fields[t.index_of(col)]).value();
}

}  // namespace

TEST_CASE("estimate with equal weights: every weighted estimator equals the plain difference") {
  const Run r = run({"estimate", fixture("equal_weights.csv"), "--estimators",
                     "sate_dm,double_hajek,single_hajek", "--se", "none"});
  REQUIRE(r.code == kExitOk);
  const CsvTable t = table_of(r.out);
  REQUIRE(t.rows.size() == 3);
  for (const auto& row : t.rows) {
    CHECK(number(t, row, "point") == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(row.fields[t.index_of("n")] == "4");
  }
}

TEST_CASE("estimate reproduces the hand-computed double-Hajek example") {
  const Run r =
      run({"estimate", fixture("worked_example.csv"), "--estimators", "double_hajek,sate_dm",
           "--se", "plugin"});
  REQUIRE(r.code == kExitOk);
  const CsvTable t = table_of(r.out);
  CHECK(number(t, row_named(t, "estimator", "double_hajek"), "point") ==
        doctest::Approx(15.5).epsilon(1e-12));
  CHECK(number(t, row_named(t, "estimator", "sate_dm"), "point") ==
        doctest::Approx(13.0).epsilon(1e-12));
  CHECK(row_named(t, "estimator", "sate_dm").fields[t.index_of("se_method")] == "plugin");
}

TEST_CASE("estimate with more weight strata than the data supports reports merges") {
  const Run r = run({"estimate", fixture("ten_rows.csv"), "--estimators", "ps_double",
                     "--post-stratify", "weights:7", "--se", "none"});
  REQUIRE(r.code == kExitOk);
  const CsvTable t = table_of(r.out);
  const std::string notes = t.rows.at(0).fields[t.index_of("notes")];
  CHECK(notes.find("strata 7 -> ") != std::string::npos);
  CHECK(notes.find("merged into stratum") != std::string::npos);

  const Run big = run({"estimate", fixture("ten_rows.csv"), "--estimators", "ps_double",
                       "--post-stratify", "weights:50", "--se", "none"});
  REQUIRE(big.code == kExitOk);
  CHECK(big.out.find("reduced from 50 to n = 10") != std::string::npos);
}

TEST_CASE("csv and json outputs agree") {
  const std::vector<std::string> base{"estimate", fixture("ten_rows.csv"),
                                      "--estimators", "sate_dm,double_hajek,hajek_mean",
                                      "--bootstrap", "200", "--seed", "9"};
  std::vector<std::string> as_json = base;
  as_json.insert(as_json.end(), {"--format", "json"});
  const Run c = run(base);
  const Run j = run(as_json);
  REQUIRE(c.code == kExitOk);
  REQUIRE(j.code == kExitOk);
  const CsvTable t = table_of(c.out);
  const auto doc = nlohmann::json::parse(j.out);
  REQUIRE(doc["reports"].size() == t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& rep = doc["reports"][i];
    CHECK(rep["estimator"].get<std::string>() == t.rows[i].fields[0]);
    for (const char* key : {"point", "se", "ci_low", "ci_high"}) {
      CHECK(std::abs(rep[key].get<double>() - number(t, t.rows[i], key)) <= 1e-12);
    }
    CHECK(rep["ci_low"].get<double>() <= rep["point"].get<double>());
    CHECK(rep["point"].get<double>() <= rep["ci_high"].get<double>());
  }
}

TEST_CASE("estimate writes the output file and a manifest sidecar") {
  const fs::path out = scratch("estimate.csv");
  const Run r = run({"estimate", fixture("worked_example.csv"), "--se", "none", "-o",
                     out.string()});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.empty());
  CHECK(slurp(out).rfind("estimator,point", 0) == 0);
  const auto manifest = nlohmann::json::parse(slurp(out.string() + ".manifest.json"));
  CHECK(manifest["subcommand"] == "estimate");
  CHECK(manifest["input_digest"].get<std::string>().size() == 16);
  CHECK(manifest.contains("timestamp"));
  CHECK(manifest.contains("version"));
}

TEST_CASE("exit codes separate usage from data problems") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"estimate"}).code == kExitUsage);
  CHECK(run({"estimate", fixture("worked_example.csv"), "--se", "sometimes"}).code ==
        kExitUsage);
  CHECK(run({"estimate", fixture("worked_example.csv"), "--estimators", "nope"}).code ==
        kExitUsage);
  CHECK(run({"estimate", fixture("worked_example.csv"), "--estimators", "ps_double"}).code ==
        kExitUsage);
  CHECK(run({"estimate", fixture("worked_example.csv"), "--format", "xml"}).code ==
        kExitUsage);
  CHECK(run({"simulate", "--scenario", "Z"}).code == kExitUsage);

  const Run missing = run({"estimate", fixture("does_not_exist.csv")});
  CHECK(missing.code == kExitData);
  CHECK_FALSE(missing.err.empty());
  CHECK(run({"estimate", fixture("worked_example.csv"), "--weight", "nope"}).code ==
        kExitData);
  CHECK(run({"simulate", "--set", "study.unknown=1", "--reps", "2"}).code == kExitData);
  CHECK(run({"simulate", "--set", "population.b=1", "--reps", "2"}).code == kExitData);
}

TEST_CASE("simulate scenario B is reproducible and close to unbiased") {
  const std::vector<std::string> args{"simulate", "--scenario", "B",
                                      "--reps",   "200",        "--set",
                                      "bootstrap.replicates=200", "--seed", "5"};
  const Run first = run(args);
  const Run second = run(args);
  REQUIRE(first.code == kExitOk);
  CHECK(first.out == second.out);

  std::vector<std::string> threaded = args;
  threaded.insert(threaded.end(), {"--threads", "3"});
  CHECK(run(threaded).out == first.out);

  const CsvTable t = table_of(first.out);
  for (const char* name : {"sate_dm", "double_hajek", "ps_double"}) {
    const CsvRow& row = row_named(t, "estimator", name);
    CHECK(std::abs(number(t, row, "bias")) < 1.0);
    const double cover = number(t, row, "coverage");
    CHECK(cover >= 0.90);
    CHECK(cover <= 0.99);
  }
}

TEST_CASE("simulate reads a config file with overrides") {
  const fs::path cfg = scratch("tiny.cfg");
  {
    std::ofstream f(cfg);
    f << "[population]\nN = 500\ngamma = 0.5\n"
      << "[study]\nsample_n = 60\nreps = 20\n"
      << "[bootstrap]\nreplicates = 0\n";
  }
  const Run r = run({"simulate", "--config", cfg.string(), "--set", "study.reps=30",
                     "--format", "json"});
  REQUIRE(r.code == kExitOk);
  const auto doc = nlohmann::json::parse(r.out);
  CHECK(doc["reps"] == 30);
  CHECK(doc["rows"][0]["coverage"].is_null());

  const fs::path bad = scratch("bad.cfg");
  {
    std::ofstream f(bad);
    f << "[study]\nreps = 10\nnot a setting\n";
  }
  const Run e = run({"simulate", "--config", bad.string()});
  CHECK(e.code == kExitData);
  CHECK(e.err.find(":3:") != std::string::npos);
}

TEST_CASE("simulate sweep emits per-population and average rows") {
  const Run r = run({"simulate", "--scenario", "C", "--reps", "10", "--set",
                     "sweep.gammas=0,1", "--set", "sweep.populations=2", "--set",
                     "population.N=400", "--set", "study.sample_n=40"});
  REQUIRE(r.code == kExitOk);
  const CsvTable t = table_of(r.out);
  CHECK(t.rows.size() == (2 * 2 + 2) * 5);
  std::size_t averages = 0;
  for (const auto& row : t.rows) averages += row.fields[t.index_of("population")] == "avg";
  CHECK(averages == 2 * 5);
}

TEST_CASE("compare: identical equal-weight experiments give zero deltas") {
  const Run r = run({"compare", fixture("compare_equal.csv"), "--group", "survey",
                     "--experiment", "exp", "--bootstrap", "100"});
  REQUIRE(r.code == kExitOk);
  const std::string delta_part = r.out.substr(0, r.out.find("\n\n") + 1);
  const CsvTable t = table_of(delta_part);
  REQUIRE(t.rows.size() == 2);
  for (const auto& row : t.rows) {
    CHECK(row.fields[t.index_of("status")] == "ok");
    CHECK(number(t, row, "delta") == 0.0);
    CHECK(number(t, row, "sate") == doctest::Approx(number(t, row, "hh")).epsilon(1e-12));
  }
  CHECK(r.out.find("theoretical_q,observed_q") != std::string::npos);
}

TEST_CASE("compare flags malformed experiments and keeps going") {
  const fs::path qq = scratch("qq.csv");
  const Run r = run({"compare", fixture("compare_malformed.csv"), "--group", "survey",
                     "--experiment", "exp", "--bootstrap", "100", "--qq", qq.string()});
  REQUIRE(r.code == kExitOk);
  const CsvTable t = table_of(r.out);
  REQUIRE(t.rows.size() == 4);
  auto status = [&](const std::string& e) {
    return row_named(t, "experiment_id", e).fields[t.index_of("status")];
  };
  CHECK(status("e1") == "ok");
  CHECK(status("e3") == "ok");
  CHECK(status("e2").rfind("error:", 0) == 0);
  CHECK(status("e4").rfind("error:", 0) == 0);
  CHECK(r.err.find("2 experiment(s) failed") != std::string::npos);
  const CsvTable q = table_of(slurp(qq));
  CHECK(q.rows.size() == 2);
}
