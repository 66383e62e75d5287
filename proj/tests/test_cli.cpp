// Black-box tests for the command-line tool. Expects the binary path as
// argv[1]; drives it through a full workflow in a scratch directory and
// checks exit codes, outputs and file-level determinism.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

std::string g_cli;
fs::path g_dir;
int g_failures = 0;

void check(bool ok, const std::string& what) {
    std::printf("%s %s\n", ok ? "ok  " : "FAIL", what.c_str());
    if (!ok) ++g_failures;
}

int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = "cd '" + g_dir.string() + "' && " + env + " '" + g_cli + "' " +
                            args + " >> cli.log 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// shared model flags kept deliberately tiny so training takes < 1 s
const std::string kFlags =
    "--slots-per-day 24 --lookback 12 --horizon 4 --window 6 --stride 3 "
    "--embed-dim 4 --depth-kernel 3 --channels 2 --top-k 2 --clusters 2 "
    "--epochs 3 --batch-size 16 --seed 42";

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: test_cli <path-to-cli>\n";
        return 2;
    }
    g_cli = fs::absolute(argv[1]).string();
    g_dir = fs::temp_directory_path() / "hierflow_cli_test";
    fs::remove_all(g_dir);
    fs::create_directories(g_dir);

    // ---- generation ------------------------------------------------------
    check(run("gen-synthetic --nodes 6 --days 12 --slots-per-day 24 --archetypes 2 "
              "--noise 0.05 --seed 42 --out data.csv --truth truth.json") == 0,
          "gen-synthetic exits 0");
    check(fs::exists(g_dir / "data.csv") && fs::exists(g_dir / "truth.json"),
          "gen-synthetic writes the dataset and the truth file");
    check(run("gen-synthetic --nodes 0 --out bad.csv") == 2,
          "gen-synthetic with zero nodes exits 2");

    // seed fallback: HIERFLOW_SEED matches an explicit --seed, both differ
    // from the default
    run("gen-synthetic --nodes 4 --days 3 --slots-per-day 24 --seed 7 --out s_explicit.csv");
    run("gen-synthetic --nodes 4 --days 3 --slots-per-day 24 --out s_env.csv",
        "HIERFLOW_SEED=7");
    run("gen-synthetic --nodes 4 --days 3 --slots-per-day 24 --out s_default.csv");
    check(slurp(g_dir / "s_explicit.csv") == slurp(g_dir / "s_env.csv"),
          "HIERFLOW_SEED env matches an explicit --seed byte for byte");
    check(slurp(g_dir / "s_env.csv") != slurp(g_dir / "s_default.csv"),
          "the env seed actually changes the output");

    // ---- hierarchy -------------------------------------------------------
    check(run("build-hierarchy --data data.csv --out-dir hier " + kFlags) == 0,
          "build-hierarchy exits 0");
    check(fs::exists(g_dir / "hier/hierarchy.json") && fs::exists(g_dir / "hier/hr.csv"),
          "build-hierarchy writes hierarchy.json and hr.csv");

    {
        std::ofstream bad(g_dir / "malformed.csv");
        bad << "node_id,slot_0,slot_1\nstation_0,1,not_a_number\n";
    }
    check(run("build-hierarchy --data malformed.csv " + kFlags) == 3,
          "malformed CSV exits 3");
    check(run("build-hierarchy --data missing.csv " + kFlags) == 3,
          "missing data file exits 3");
    check(run("build-hierarchy --data data.csv --no-such-flag 1") == 2,
          "unknown flag exits 2");

    // ---- training --------------------------------------------------------
    check(run("train --data data.csv --mode tp --out-dir ck_tp " + kFlags) == 0,
          "train (tp) exits 0");
    for (const char* f : {"params.json", "config.json", "hierarchy.json", "norm.json",
                          "manifest.json", "train_log.csv"})
        check(fs::exists(g_dir / "ck_tp" / f), std::string("checkpoint contains ") + f);
    check(run("train --data data.csv --mode hp --prediction-layer all --out-dir ck_hp "
              "--hierarchy hier/hierarchy.json " + kFlags) == 0,
          "train (hp, prebuilt hierarchy) exits 0");
    check(run("train --data data.csv --mode xx " + kFlags) == 2,
          "unknown --mode exits 2");
    check(run("train --data data.csv --window 40 --lookback 12 " + kFlags) == 2,
          "window larger than lookback exits 2");

    // ---- prediction ------------------------------------------------------
    check(run("predict --checkpoint ck_hp --data data.csv --t-origin 48 "
              "--out pred.csv") == 0,
          "predict exits 0");
    {
        std::ifstream in(g_dir / "pred.csv");
        std::string header;
        std::getline(in, header);
        check(header == "node_id,t_origin,step,initial,coordinated",
              "hp predictions carry a coordinated column");
    }
    check(run("predict --checkpoint ck_hp --data data.csv --t-origin 3 --out p2.csv") == 2,
          "t-origin before one full lookback exits 2");
    check(run("predict --checkpoint ck_hp --data data.csv --t-origin 99999 "
              "--out p3.csv") == 2,
          "t-origin past the series exits 2");
    check(run("predict --checkpoint nowhere --data data.csv --t-origin 48 "
              "--out p4.csv") == 2,
          "pointing --checkpoint at a missing directory exits 2");

    // ---- evaluation ------------------------------------------------------
    check(run("evaluate --checkpoint ck_hp --data data.csv --out-dir eval1 "
              "--baselines ha,bu,mo,td") == 0,
          "evaluate with baselines exits 0");
    for (const char* f : {"metrics.json", "metrics.csv", "hier_error.csv"})
        check(fs::exists(g_dir / "eval1" / f), std::string("evaluate writes ") + f);
    check(run("evaluate --checkpoint ck_hp --data data.csv --out-dir eval_bad "
              "--baselines nope") == 2,
          "unknown baseline exits 2");

    // identical invocations produce byte-identical reports
    check(run("evaluate --checkpoint ck_hp --data data.csv --out-dir eval2 "
              "--baselines ha,bu,mo,td") == 0,
          "second evaluate exits 0");
    check(slurp(g_dir / "eval1/metrics.json") == slurp(g_dir / "eval2/metrics.json"),
          "metrics.json is byte-identical across identical runs");
    check(slurp(g_dir / "eval1/metrics.csv") == slurp(g_dir / "eval2/metrics.csv"),
          "metrics.csv is byte-identical across identical runs");

    // retraining from scratch is just as deterministic
    check(run("train --data data.csv --mode tp --out-dir ck_tp2 " + kFlags) == 0,
          "second tp training exits 0");
    check(slurp(g_dir / "ck_tp/params.json") == slurp(g_dir / "ck_tp2/params.json"),
          "retraining reproduces params.json byte for byte");

    if (g_failures == 0) fs::remove_all(g_dir);
    std::printf("%d failure(s)\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
