// Copyright 2026 The acadj Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "oracles.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

// Fresh scratch directory per test case.
fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("acadj_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Result run(const std::string& args, const fs::path& dir, const std::string& env = "") {
  const fs::path log = dir / "stdout.txt";
  const std::string cmd = "cd '" + dir.string() + "' && " + env + " '" + ACADJ_CLI_PATH + "' " + args +
                          " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(log);
  return r;
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

const std::string kSample = std::string(ACADJ_SOURCE_DIR) + "/data/ar1_forecast_sample.csv";
const std::string kQuick =
    " --window 8 --epochs 3 --patience 3 --batch 32 --hidden 8 --layers 3 --seed 4";

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help exits zero on every subcommand") {
    const fs::path d = scratch("help");
    CHECK(run("--help", d).code == 0);
    for (const char* sub : {"fit", "diagnose", "gridsearch-rho", "simulate", "bench-regression",
                            "bench-forecast", "criticals", "classical-fit"}) {
      const Result r = run(std::string(sub) + " --help", d);
      CHECK_MESSAGE(r.code == 0, sub);
      CHECK(r.out.find("--config") != std::string::npos);
    }
    const Result fit = run("fit --help", d);
    for (const char* flag : {"--seed", "--mode", "--freeze-rho", "--rho-dim", "--window", "--epochs",
                             "--patience", "--batch", "--lr-model", "--lr-rho", "--out"})
      CHECK_MESSAGE(fit.out.find(flag) != std::string::npos, flag);
    CHECK(run("bench-regression --help", d).out.find("--workers") != std::string::npos);
  }

  TEST_CASE("usage errors exit with two") {
    const fs::path d = scratch("usage");
    CHECK(run("fit", d).code == 2);
    CHECK(run("nonsense", d).code == 2);
    CHECK(run("fit " + kSample + " --mode sideways --out o", d).code == 2);
  }

  TEST_CASE("malformed csv exits with two") {
    const fs::path d = scratch("badcsv");
    std::ofstream(d / "bad.csv") << "a,b\n1,2\n3,oops\n";
    const Result r = run("fit bad.csv --out o" + kQuick, d);
    CHECK(r.code == 2);
    CHECK(r.out.find("row") != std::string::npos);
    CHECK(run("diagnose missing.csv", d).code == 2);
  }

  TEST_CASE("fit writes the report, checkpoint and loss curves") {
    const fs::path d = scratch("fit");
    const Result r = run("fit " + kSample + " --out o" + kQuick, d);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    for (const char* f : {"fit_report.json", "checkpoint.json", "loss_train.csv", "loss_valid.csv"})
      CHECK(fs::exists(d / "o" / f));
    const json rep = read_json(d / "o" / "fit_report.json");
    const json& diag = rep.at("diagnostics");
    CHECK(diag.contains("remaining_autocorrelation"));
    CHECK(diag.at("remaining_autocorrelation_per_series").size() == 3);
    CHECK(rep.at("effective_config").at("settings").at("seed") == 4);
    CHECK(rep.at("effective_config").at("settings").at("epochs") == 3);
    CHECK(read_json(d / "o" / "checkpoint.json").at("effective_config").at("settings").at("seed") == 4);
    CHECK(slurp(d / "o" / "loss_train.csv").rfind("epoch,loss\n", 0) == 0);
  }

  TEST_CASE("mode none and frozen zero agree") {
    const fs::path d = scratch("frozen");
    REQUIRE(run("fit " + kSample + " --mode none --out a" + kQuick, d).code == 0);
    REQUIRE(run("fit " + kSample + " --mode both --freeze-rho 0 --out b" + kQuick, d).code == 0);
    const json a = read_json(d / "a" / "fit_report.json"), b = read_json(d / "b" / "fit_report.json");
    CHECK(a.at("diagnostics").at("test_rrmse") == b.at("diagnostics").at("test_rrmse"));
    CHECK(slurp(d / "a" / "loss_train.csv") == slurp(d / "b" / "loss_train.csv"));
  }

  TEST_CASE("alternating baseline through the cli") {
    const fs::path d = scratch("mpw");
    const Result r = run("fit " + kSample + " --method mpw --mpw-max-outer 2 --out o" + kQuick, d);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    CHECK(read_json(d / "o" / "fit_report.json").at("method") == "mpw");
  }

  TEST_CASE("outputs are reproducible byte for byte") {
    const fs::path d = scratch("repro");
    REQUIRE(run("fit " + kSample + " --out a" + kQuick, d).code == 0);
    REQUIRE(run("fit " + kSample + " --out b" + kQuick, d).code == 0);
    for (const char* f : {"fit_report.json", "checkpoint.json", "loss_train.csv", "loss_valid.csv"})
      CHECK_MESSAGE(slurp(d / "a" / f) == slurp(d / "b" / f), f);
  }

  TEST_CASE("config file sits between defaults and flags") {
    const fs::path d = scratch("config");
    std::ofstream(d / "cfg.json") << R"({"epochs": 2, "patience": 2, "window": 8, "hidden": 8,
                                        "layers": 3, "batch_size": 32, "seed": 9})";
    REQUIRE(run("fit " + kSample + " --config cfg.json --out a", d).code == 0);
    const json a = read_json(d / "a" / "fit_report.json").at("effective_config").at("settings");
    CHECK(a.at("epochs") == 2);
    CHECK(a.at("seed") == 9);
    REQUIRE(run("fit " + kSample + " --config cfg.json --seed 10 --out b", d).code == 0);
    CHECK(read_json(d / "b" / "fit_report.json").at("effective_config").at("settings").at("seed") == 10);
    std::ofstream(d / "typo.json") << R"({"epoch": 2})";
    CHECK(run("fit " + kSample + " --config typo.json --out c", d).code == 2);
  }

  TEST_CASE("output directory falls back to the environment") {
    const fs::path d = scratch("env");
    const Result r = run("simulate --T 50 --seed 1", d, "ACADJ_OUT_DIR=envout");
    REQUIRE(r.code == 0);
    CHECK(fs::exists(d / "envout" / "simulated.csv"));
    REQUIRE(run("simulate --T 50 --seed 1", d).code == 0);
    CHECK(fs::exists(d / "acadj_out" / "simulated.csv"));
  }

  TEST_CASE("simulate then diagnose recovers rho") {
    const fs::path d = scratch("simdiag");
    REQUIRE(run("simulate --rho 0.5 --sigma 1 --T 1000000 --seed 3 --out s", d).code == 0);
    CHECK(read_json(d / "s" / "simulated.json").at("settings").at("seed") == 3);
    const Result r = run("diagnose s/simulated.csv --json", d);
    REQUIRE(r.code == 0);
    const json j = json::parse(r.out);
    CHECK(std::abs(j.at("averaged_rho_hat").get<double>() - 0.5) < 0.01);
    REQUIRE(run("simulate --rho 0.5 --sigma 1 --T 1000000 --seed 3 --out t", d).code == 0);
    CHECK(slurp(d / "s" / "simulated.csv") == slurp(d / "t" / "simulated.csv"));
  }

  TEST_CASE("diagnose verdicts") {
    const fs::path d = scratch("verdict");
    REQUIRE(run("simulate --rho 0 --sigma 1 --T 5000 --series 2 --seed 2 --out iid", d).code == 0);
    const Result iid = run("diagnose iid/simulated.csv", d);
    CHECK(iid.code == 0);
    CHECK(iid.out.find("no adjustment indicated") != std::string::npos);

    // geometric decay: the lag-1 ratio is exactly 0.95
    {
      std::ofstream f(d / "g.csv");
      f << "e\n";
      double v = 1.0;
      for (int t = 0; t < 40; ++t, v *= 0.95) f << v << "\n";
    }
    const Result g = run("diagnose g.csv", d);
    CHECK(g.out.find("adjust recommended at 95%") != std::string::npos);
    CHECK(g.out.find("not at 99%") != std::string::npos);

    std::ofstream(d / "z.csv") << "e\n0\n0\n0\n0\n";
    const Result z = run("diagnose z.csv", d);
    CHECK(z.code == 0);
    CHECK(z.out.find("undefined") != std::string::npos);
  }

  TEST_CASE("grid search uses the default grid") {
    const fs::path d = scratch("grid");
    const Result r = run("gridsearch-rho " + kSample + " --epochs 1 --patience 1 --window 8 "
                         "--hidden 4 --layers 2 --batch 64 --out o", d);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    const json j = read_json(d / "o" / "grid_search.json");
    CHECK(j.at("table").size() == 15);
    CHECK(j.contains("effective_config"));
    CHECK(run("gridsearch-rho " + kSample + " --grid 0.2,1.5 --out p", d).code == 2);
  }

  TEST_CASE("bench regression and criticals") {
    const fs::path d = scratch("bench");
    const Result r = run("bench-regression --T 40 --N 2 --rho 0.5 --sigma 0.1 --seeds 20 --methods wo,w "
                         "--epochs 2 --hidden 4 --workers 2 --seed 3 --out b", d);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    for (const char* f : {"runs.jsonl", "summary.json", "manifest.json", "rho_error.csv",
                          "remaining_autocorrelation_hist.csv"})
      CHECK(fs::exists(d / "b" / f));
    std::vector<double> rem;
    std::ifstream in(d / "b" / "runs.jsonl");
    for (std::string line; std::getline(in, line);) {
      const json rec = json::parse(line);
      if (rec.at("method") == "wo") rem.push_back(rec.at("remaining_autocorrelation").get<double>());
    }
    REQUIRE(rem.size() == 20);
    const Result c = run("criticals --from b/runs.jsonl --out c", d);
    REQUIRE(c.code == 0);
    const json t = read_json(d / "c" / "critical_values.json");
    for (const auto& e : t.at("entries"))
      CHECK(e.at("threshold").get<double>() ==
            acadj::oracle::sorted_quantile(rem, 1.0 - e.at("tail").get<double>()));
    const Result def = run("criticals", d);
    CHECK(def.out.find("0.928") != std::string::npos);
  }

  TEST_CASE("bench forecast on the bundled sample") {
    const fs::path d = scratch("bforecast");
    const Result r = run("bench-forecast " + kSample + " --seeds 2 --methods wo,w --out o" + kQuick, d);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    const json s = read_json(d / "o" / "summary.json");
    CHECK(s.at("cells")[0].at("metric") == "test_rrmse");
  }

  TEST_CASE("classical fit") {
    const fs::path d = scratch("classical");
    {
      std::ofstream f(d / "lin.csv");
      f << "x,y\n";
      for (int t = 0; t < 50; ++t) f << t << "," << 3 + 2 * t + ((t % 2) ? 0.1 : -0.1) << "\n";
    }
    for (const char* m : {"ols", "co", "co-iter", "pw"}) {
      const Result r = run(std::string("classical-fit lin.csv --method ") + m + " --out " + m, d);
      REQUIRE_MESSAGE(r.code == 0, r.out);
      CHECK(r.out.find("rho") != std::string::npos);
    }
    CHECK(run("classical-fit lin.csv --method ridge --out z", d).code == 2);
    CHECK(run("classical-fit lin.csv --target nope --out z", d).code == 2);
  }
}
