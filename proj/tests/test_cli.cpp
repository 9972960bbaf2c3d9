#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "rsg/cli.hpp"
#include "rsg/dumpstore.hpp"
#include "support.hpp"

using rsg::test::TempDir;
namespace test = rsg::test;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = rsg::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> simulate_args(const fs::path& out, const std::string& mode = "dilution") {
  return {"simulate", "--mode", mode, "--dim", "64", "--layers", "8", "--trials", "50",
          "--alpha", "10", "--beta", "2", "--noise", "0", "--seed", "7", "--out", out.string()};
}

}  // namespace

TEST_CASE("simulate, validate, analyze") {
  TempDir tmp;
  REQUIRE(run(simulate_args(tmp / "d")).code == 0);
  const Result v = run({"validate", (tmp / "d").string()});
  CHECK(v.code == 0);
  CHECK(v.err.empty());

  const Result a = run({"analyze", (tmp / "d").string(), "--out", (tmp / "r.json").string(), "--csv",
                        (tmp / "csv").string(), "--filter", "all"});
  CHECK(a.code == 0);
  const auto report = nlohmann::json::parse(test::slurp(tmp / "r.json"));
  CHECK(report["format"] == "rsg-report-1");
  CHECK(report["config"]["filter"] == "all");
  CHECK(report["inputs"]["dump_attributes"]["generator"]["seed"] == 7);
  CHECK(std::abs(report["h1"]["mean"].get<double>() - 10 / std::sqrt(104.0)) <= 1e-6);
  CHECK(report["regression"]["status"] == "degenerate predictor");
  CHECK(fs::exists(tmp / "csv" / "layers.csv"));
  CHECK(fs::exists(tmp / "csv" / "scatter.csv"));
  CHECK_FALSE(fs::exists(tmp / "r.json.tmp"));
}

TEST_CASE("analyze exits 2 when no trial is selected") {
  TempDir tmp;
  REQUIRE(run(simulate_args(tmp / "d")).code == 0);
  // beta < alpha in dilution mode: no trial flips.
  const Result a = run({"analyze", (tmp / "d").string(), "--out", (tmp / "r.json").string()});
  CHECK(a.code == 2);
  CHECK(a.err.rfind("rsg: error: no-trials: ", 0) == 0);
  const auto report = nlohmann::json::parse(test::slurp(tmp / "r.json"));
  CHECK(report["n_analyzed"] == 0);
  CHECK(report["filter"]["n_non_compliant"] == 50);

  rsg::write_dump(test::make_dump({}), tmp / "empty");
  const Result e = run({"analyze", (tmp / "empty").string(), "--out", (tmp / "e.json").string()});
  CHECK(e.code == 2);
  CHECK(nlohmann::json::parse(test::slurp(tmp / "e.json"))["filter"]["n_total"] == 0);
}

TEST_CASE("invalid dumps") {
  TempDir tmp;
  REQUIRE(run(simulate_args(tmp / "d")).code == 0);
  const fs::path blob = tmp / "d" / "blobs" / "t000003.w_correct.f32";
  fs::resize_file(blob, fs::file_size(blob) - 4);
  const Result v = run({"validate", (tmp / "d").string()});
  CHECK(v.code == 1);
  CHECK(v.err.find("rsg: violation: trial t000003: length mismatch") != std::string::npos);

  const Result a = run({"analyze", (tmp / "d").string(), "--out", (tmp / "r.json").string()});
  CHECK(a.code == 1);
  CHECK(a.err.rfind("rsg: error: invalid-dump: ", 0) == 0);
  CHECK(std::count(a.err.begin(), a.err.end(), '\n') == 1);
  CHECK_FALSE(fs::exists(tmp / "r.json"));

  CHECK(run({"validate", (tmp / "missing").string()}).code == 1);

  REQUIRE(run(simulate_args(tmp / "ok")).code == 0);
  const Result io = run({"analyze", (tmp / "ok").string(), "--filter", "all", "--out",
                         (tmp / "no" / "such" / "dir" / "r.json").string()});
  CHECK(io.code == 1);
  CHECK(io.err.rfind("rsg: error: io: ", 0) == 0);
}

TEST_CASE("usage errors exit 64") {
  TempDir tmp;
  CHECK(run({}).code == 64);
  CHECK(run({"frobnicate"}).code == 64);
  const Result unknown = run({"validate", "x", "--bogus"});
  CHECK(unknown.code == 64);
  CHECK(unknown.err.rfind("rsg: error: usage: ", 0) == 0);
  CHECK(run({"analyze", "x", "--out", "r.json", "--filter", "some"}).code == 64);
  CHECK(run({"analyze", "x", "--out", "r.json", "--deep-frac", "0"}).code == 64);
  CHECK(run({"simulate", "--mode", "spiral", "--out", (tmp / "s").string()}).code == 64);
  CHECK(run({"simulate", "--beta", "2:x", "--out", (tmp / "s").string()}).code == 64);
  CHECK(run({"simulate", "--mode", "rotation", "--beta", "30", "--out", (tmp / "s").string()}).code == 64);
  CHECK(run({"sweep", "--kind", "other", "--out", (tmp / "s.csv").string()}).code == 64);
  CHECK_FALSE(fs::exists(tmp / "s"));

  const Result help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("simulate") != std::string::npos);
}

TEST_CASE("sweeps") {
  TempDir tmp;
  CHECK(run({"sweep", "--kind", "dilution", "--alpha", "10", "--betas", "0,10", "--out",
             (tmp / "d.csv").string()})
            .code == 0);
  const std::string dil = test::slurp(tmp / "d.csv");
  CHECK(dil.rfind("beta,l_exact,l_predicted,abs_err\n0,1,1,0\n10,", 0) == 0);

  CHECK(run({"sweep", "--kind", "linearization", "--dim", "32", "--seed", "4", "--out",
             (tmp / "l.csv").string()})
            .code == 0);
  const std::string lin = test::slurp(tmp / "l.csv");
  CHECK(lin.rfind("scale,abs_err,ratio\n0.1,", 0) == 0);
  CHECK(std::count(lin.begin(), lin.end(), '\n') == 4);
}

TEST_CASE("identical invocations give byte-identical outputs") {
  TempDir tmp;
  auto sim = [&](const std::string& dir, const std::string& threads) {
    std::vector<std::string> args{"simulate", "--mode", "general", "--dim", "32", "--layers", "10",
                                  "--trials", "30", "--alpha", "0.5", "--beta", "0.5:2",
                                  "--theta", "60:120", "--noise", "0.01", "--seed", "3",
                                  "--threads", threads, "--out", (tmp / dir).string()};
    REQUIRE(run(args).code == 0);
  };
  sim("d1", "1");
  sim("d4", "4");
  CHECK(test::slurp(tmp / "d1" / "manifest.json") == test::slurp(tmp / "d4" / "manifest.json"));
  CHECK(rsg::bit_identical(rsg::read_dump(tmp / "d1"), rsg::read_dump(tmp / "d4")));

  auto analyze = [&](const std::string& tag, const std::string& threads) {
    const Result r = run({"analyze", (tmp / "d1").string(), "--out", (tmp / (tag + ".json")).string(),
                          "--csv", (tmp / tag).string(), "--threads", threads});
    REQUIRE(r.code == 0);
  };
  analyze("a", "1");
  analyze("b", "1");
  analyze("c", "7");
  for (const char* tag : {"b", "c"}) {
    CHECK(test::slurp(tmp / "a.json") == test::slurp(tmp / (std::string(tag) + ".json")));
    CHECK(test::slurp(tmp / "a" / "layers.csv") == test::slurp(tmp / tag / "layers.csv"));
    CHECK(test::slurp(tmp / "a" / "scatter.csv") == test::slurp(tmp / tag / "scatter.csv"));
  }
}
