#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunResult {
    int exit_code;
};

fs::path work_dir() {
    auto dir = fs::temp_directory_path() / "groupcox_cli_tests";
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& body) {
    std::ofstream out(path);
    out << body;
}

RunResult run(const std::string& args) {
    std::string cmd = std::string(GROUPCOX_BIN) + " " + args + " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return RunResult{WEXITSTATUS(status)};
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("simulate: minimal config, determinism, and schema errors") {
    auto dir = work_dir();
    write_file(dir / "sim.json",
               R"({"n": 100, "p": 2, "seed": 5, "censoring": {"type": "exponential", "rate": 0.4}})");

    CHECK(run("simulate --config " + (dir / "sim.json").string() + " --out " +
              (dir / "a").string())
              .exit_code == 0);
    // 100 data rows plus header
    std::string csv = slurp(dir / "a" / "dataset.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 101);

    CHECK(run("simulate --config " + (dir / "sim.json").string() + " --out " +
              (dir / "b").string())
              .exit_code == 0);
    CHECK(slurp(dir / "b" / "dataset.csv") == csv);  // byte-identical replay

    json sidecar = json::parse(slurp(dir / "a" / "dataset.csv.json"));
    CHECK(sidecar.contains("config_hash"));
    CHECK(sidecar.contains("tool_version"));
    CHECK(sidecar["n"] == 100);

    // seed override changes the draw
    CHECK(run("simulate --config " + (dir / "sim.json").string() + " --out " +
              (dir / "c").string() + " --seed 99")
              .exit_code == 0);
    CHECK(slurp(dir / "c" / "dataset.csv") != csv);

    write_file(dir / "bad_n.json", R"({"n": 0, "p": 2})");
    CHECK(run("simulate --config " + (dir / "bad_n.json").string()).exit_code == 2);

    write_file(dir / "unknown.json", R"({"n": 10, "p": 1, "bogus": 1})");
    CHECK(run("simulate --config " + (dir / "unknown.json").string()).exit_code == 2);

    CHECK(run("simulate --config " + (dir / "missing.json").string()).exit_code == 2);
}

TEST_CASE("fit: zero solution above the threshold, grids, and degeneracy") {
    auto dir = work_dir();
    write_file(dir / "tiny.csv", "time,status,x1\n3,1,0.5\n1,0,0.2\n2,1,0.9\n");

    write_file(dir / "fit_high.json", R"({
        "data": ")" + (dir / "tiny.csv").string() + R"(",
        "dictionary": {"family": "polynomial", "d": 2},
        "penalty": {"gamma": 2, "lambda": 50.0}})");
    CHECK(run("fit --config " + (dir / "fit_high.json").string() + " --out " +
              (dir / "fh").string())
              .exit_code == 0);
    json report = json::parse(slurp(dir / "fh" / "fit_report.json"));
    CHECK(report["converged"] == true);
    for (double v : report["beta_hat"]) CHECK(v == 0.0);
    CHECK(report["active_groups"].empty());

    write_file(dir / "fit_grid.json", R"({
        "data": ")" + (dir / "tiny.csv").string() + R"(",
        "dictionary": {"family": "polynomial", "d": 2},
        "penalty": {"gamma": 2, "lambda": 1.0},
        "fit": {"lambda_grid": [50.0, 0.5, 0.05]}})");
    CHECK(run("fit --config " + (dir / "fit_grid.json").string() + " --out " +
              (dir / "fg").string())
              .exit_code == 0);
    CHECK(fs::exists(dir / "fg" / "fit_report_1.json"));
    CHECK(fs::exists(dir / "fg" / "fit_report_2.json"));
    CHECK(fs::exists(dir / "fg" / "fit_report_3.json"));

    // separable toy data at lambda zero: report written, exit 3
    write_file(dir / "sep.csv",
               "time,status,x1\n1,1,1\n2,1,1\n3,0,0\n4,0,0\n");
    write_file(dir / "fit_sep.json", R"({
        "data": ")" + (dir / "sep.csv").string() + R"(",
        "dictionary": {"family": "step", "d": 2},
        "penalty": {"gamma": 2, "lambda": 0.0},
        "fit": {"max_iters": 300}})");
    CHECK(run("fit --config " + (dir / "fit_sep.json").string() + " --out " +
              (dir / "fs").string())
              .exit_code == 3);
    json sep_report = json::parse(slurp(dir / "fs" / "fit_report.json"));
    CHECK(sep_report["converged"] == false);

    // config/data mismatch: domain violation in the file
    write_file(dir / "bad.csv", "time,status,x1\n1,1,7.0\n");
    write_file(dir / "fit_bad.json", R"({
        "data": ")" + (dir / "bad.csv").string() + R"(",
        "dictionary": {"family": "polynomial", "d": 2},
        "penalty": {"lambda": 1.0}})");
    CHECK(run("fit --config " + (dir / "fit_bad.json").string()).exit_code == 2);
}

TEST_CASE("fit: rule-driven lambda and smooth/overlap modes") {
    auto dir = work_dir();
    write_file(dir / "sim.json",
               R"({"n": 60, "p": 2, "seed": 11, "censoring": {"type": "exponential", "rate": 0.3}})");
    REQUIRE(run("simulate --config " + (dir / "sim.json").string() + " --out " +
                (dir / "data").string())
                .exit_code == 0);
    std::string data = (dir / "data" / "dataset.csv").string();

    write_file(dir / "fit_rule.json", R"({
        "data": ")" + data + R"(",
        "dictionary": {"family": "cubic-bspline", "d": 4},
        "penalty": {"gamma": 2},
        "lambda_rule": {"rule": "theorem1", "A": 0.05, "plugin_u": true}})");
    CHECK(run("fit --config " + (dir / "fit_rule.json").string() + " --out " +
              (dir / "fr").string())
              .exit_code == 0);
    json report = json::parse(slurp(dir / "fr" / "fit_report.json"));
    CHECK(report.contains("rule_audit"));
    CHECK(report["rule_audit"]["lambda"].get<double>() > 0.0);

    write_file(dir / "fit_smooth.json", R"({
        "data": ")" + data + R"(",
        "dictionary": {"family": "cubic-bspline", "d": 4},
        "mode": "smooth",
        "penalty": {"gamma": 2, "lambda": 0.05, "smooth": {"eps_R": 1e-8}}})");
    CHECK(run("fit --config " + (dir / "fit_smooth.json").string() + " --out " +
              (dir / "fsm").string())
              .exit_code == 0);

    write_file(dir / "fit_overlap.json", R"({
        "data": ")" + data + R"(",
        "dictionary": {"family": "polynomial", "d": 2},
        "mode": "overlap",
        "penalty": {"gamma": 2, "lambda": 0.05,
                     "groups": [[0, 1], [1, 2, 3]]}})");
    CHECK(run("fit --config " + (dir / "fit_overlap.json").string() + " --out " +
              (dir / "fo").string())
              .exit_code == 0);
    json overlap = json::parse(slurp(dir / "fo" / "fit_report.json"));
    CHECK(overlap["beta_hat"].size() == 4);
}

TEST_CASE("verify: suites write reports and respect exit codes") {
    auto dir = work_dir();
    write_file(dir / "verify.json", R"({
        "sandwich": {"instances": 40},
        "lemma1": {"samples": 2000},
        "prop1": {"instances": 4}})");

    CHECK(run("verify lemma1 --config " + (dir / "verify.json").string() + " --out " +
              (dir / "v1").string())
              .exit_code == 0);
    json lemma = json::parse(slurp(dir / "v1" / "verify_lemma1.json"));
    CHECK(lemma["lemma1"]["below_violations"] == 0);

    CHECK(run("verify prop1 --config " + (dir / "verify.json").string() + " --out " +
              (dir / "v2").string())
              .exit_code == 0);

    CHECK(run("verify sandwich --config " + (dir / "verify.json").string() + " --out " +
              (dir / "v3").string())
              .exit_code == 0);
    json sand = json::parse(slurp(dir / "v3" / "verify_sandwich.json"));
    CHECK(sand["sandwich"]["violations_two_sided"] == 0);

    CHECK(run("verify bogus --config " + (dir / "verify.json").string()).exit_code == 2);

    write_file(dir / "rate.json", R"({
        "rate": {"n_grid": [100, 200], "replicates": 3}})");
    CHECK(run("verify rate --config " + (dir / "rate.json").string() + " --out " +
              (dir / "v4").string())
              .exit_code == 0);
    std::string csv = slurp(dir / "v4" / "rate_table.csv");
    CHECK(csv.find("slope") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);  // meta + header + two rows
}
