#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "igm/dataset.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli_bin() {
    const char* p = std::getenv("IGM_CLI_BIN");
    REQUIRE(p != nullptr);
    return p;
}

struct RunResult {
    int code = -1;
    std::string out;
};

// run the binary, capture stdout+stderr and the exit code
RunResult run(const std::string& args) {
    static int n = 0;
    fs::path cap = fs::temp_directory_path() / ("igm_cli_out_" +
                                                std::to_string(n++) + ".txt");
    std::string cmd = cli_bin() + " " + args + " > " + cap.string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    std::ifstream in(cap);
    r.out = {std::istreambuf_iterator<char>(in), {}};
    fs::remove(cap);
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(bool(in));
    return {std::istreambuf_iterator<char>(in), {}};
}

fs::path fresh_dir(const std::string& name) {
    fs::path d = fs::temp_directory_path() / ("igm_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("synth writes a manifest with the requested cardinality") {
    fs::path d = fresh_dir("synth");
    RunResult r = run("synth --classes 4 --per-class 100 --side 16 --seed 3 --out " +
                      (d / "clean").string());
    CHECK(r.code == 0);
    json m = json::parse(slurp(d / "clean" / "manifest.json"));
    CHECK(m.at("num_examples").get<std::size_t>() == 400);
    CHECK(m.at("num_classes").get<std::size_t>() == 4);
    CHECK(m.at("height").get<std::size_t>() == 16);
    auto ds = igm::data::load_dataset((d / "clean").string());
    CHECK(ds.size() == 400);
}

TEST_CASE("noise flips roughly the requested fraction of labels") {
    fs::path d = fresh_dir("noise");
    REQUIRE(run("synth --classes 4 --per-class 250 --side 16 --seed 5 --out " +
                (d / "clean").string()).code == 0);
    RunResult r = run("noise --kind idn --rate 0.4 --seed 7 --in " +
                      (d / "clean").string() + " --out " + (d / "noisy").string());
    CHECK(r.code == 0);
    auto noisy = igm::data::load_dataset((d / "noisy").string());
    double frac = igm::data::flip_fraction(noisy);
    CHECK(frac > 0.38);
    CHECK(frac < 0.42);
    CHECK(noisy.manifest.noise_kind == "idn");
}

TEST_CASE("train is deterministic: same seed, identical metrics.jsonl") {
    fs::path d = fresh_dir("det");
    REQUIRE(run("synth --classes 3 --per-class 20 --side 16 --seed 11 --out " +
                (d / "clean").string()).code == 0);
    REQUIRE(run("noise --kind idn --rate 0.3 --seed 13 --in " +
                (d / "clean").string() + " --out " + (d / "noisy").string()).code == 0);
    std::string common = "train --data " + (d / "noisy").string() +
                         " --test " + (d / "clean").string() +
                         " --seed 17 --set epochs=2 warmup_epochs=1"
                         " deterministic=true --out ";
    REQUIRE(run(common + (d / "run_a").string()).code == 0);
    REQUIRE(run(common + (d / "run_b").string()).code == 0);
    std::string ma = slurp(d / "run_a" / "metrics.jsonl");
    std::string mb = slurp(d / "run_b" / "metrics.jsonl");
    CHECK(ma == mb);
    CHECK(!ma.empty());
    json first = json::parse(ma.substr(0, ma.find('\n')));
    CHECK(first.at("wall_seconds").get<double>() == 0.0);
    // run dir echoes the resolved config
    json cfg = json::parse(slurp(d / "run_a" / "config.json"));
    CHECK(cfg.at("epochs").get<std::size_t>() == 2);
    CHECK(cfg.at("seed").get<std::uint64_t>() == 17);
}

TEST_CASE("config file is honored and --set overrides it") {
    fs::path d = fresh_dir("cfg");
    REQUIRE(run("synth --classes 3 --per-class 10 --side 16 --seed 19 --out " +
                (d / "clean").string()).code == 0);
    {
        std::ofstream f(d / "cfg.json");
        f << R"({"epochs": 2, "warmup_epochs": 1, "tau": 0.6, "seed": 21})";
    }
    REQUIRE(run("train --data " + (d / "clean").string() + " --config " +
                (d / "cfg.json").string() + " --set tau=0.7 --out " +
                (d / "run").string()).code == 0);
    json cfg = json::parse(slurp(d / "run" / "config.json"));
    CHECK(cfg.at("epochs").get<std::size_t>() == 2);
    CHECK(cfg.at("tau").get<double>() == doctest::Approx(0.7));
    CHECK(cfg.at("seed").get<std::uint64_t>() == 21);
}

TEST_CASE("reference profile fills in its own defaults unless overridden") {
    fs::path d = fresh_dir("reference");
    REQUIRE(run("synth --classes 3 --per-class 10 --side 16 --seed 23 --out " +
                (d / "clean").string()).code == 0);
    // cap epochs/warmup so the run stays cheap; d_z should still become 25
    REQUIRE(run("train --data " + (d / "clean").string() +
                " --set profile=reference epochs=1 warmup_epochs=1 --out " +
                (d / "run").string()).code == 0);
    json cfg = json::parse(slurp(d / "run" / "config.json"));
    CHECK(cfg.at("profile").get<std::string>() == "reference");
    CHECK(cfg.at("d_z").get<std::size_t>() == 25);
    CHECK(cfg.at("epochs").get<std::size_t>() == 1);
}

TEST_CASE("eval prints the checkpoint accuracy") {
    fs::path d = fresh_dir("eval");
    REQUIRE(run("synth --classes 3 --per-class 20 --side 16 --seed 29 --out " +
                (d / "clean").string()).code == 0);
    REQUIRE(run("train --data " + (d / "clean").string() +
                " --set epochs=2 warmup_epochs=1 --seed 31 --out " +
                (d / "run").string()).code == 0);
    RunResult r = run("eval --ckpt " + (d / "run" / "ckpt_2").string() +
                      " --data " + (d / "clean").string());
    CHECK(r.code == 0);
    double acc = std::stod(r.out);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
}

TEST_CASE("report writes one CSV row per run") {
    fs::path d = fresh_dir("report");
    REQUIRE(run("synth --classes 3 --per-class 10 --side 16 --seed 37 --out " +
                (d / "clean").string()).code == 0);
    for (const char* name : {"r1", "r2"})
        REQUIRE(run("train --data " + (d / "clean").string() +
                    " --test " + (d / "clean").string() +
                    " --set epochs=1 warmup_epochs=1 --seed 41 --out " +
                    (d / name).string()).code == 0);
    RunResult r = run("report --run " + (d / "r1").string() + " " +
                      (d / "r2").string() + " --out " + (d / "out.csv").string());
    CHECK(r.code == 0);
    std::string csv = slurp(d / "out.csv");
    CHECK(csv.rfind("run,epochs,seed,profile,use_dividemix,use_cb_recon,"
                    "test_accuracy,codivide_auc1,codivide_auc2\n", 0) == 0);
    std::size_t lines = std::count(csv.begin(), csv.end(), '\n');
    CHECK(lines == 3);  // header + two runs
}

TEST_CASE("resume after --stop-epoch matches an uninterrupted run") {
    fs::path d = fresh_dir("resume");
    REQUIRE(run("synth --classes 3 --per-class 15 --side 16 --seed 43 --out " +
                (d / "clean").string()).code == 0);
    REQUIRE(run("noise --kind idn --rate 0.3 --seed 47 --in " +
                (d / "clean").string() + " --out " + (d / "noisy").string()).code == 0);
    std::string base = "train --data " + (d / "noisy").string() +
                       " --seed 53 --set epochs=3 warmup_epochs=1"
                       " deterministic=true";
    REQUIRE(run(base + " --out " + (d / "full").string()).code == 0);
    REQUIRE(run(base + " --stop-epoch 1 --out " + (d / "part").string()).code == 0);
    REQUIRE(run(base + " --resume " + (d / "part" / "ckpt_1").string() +
                " --out " + (d / "part").string()).code == 0);
    CHECK(slurp(d / "full" / "metrics.jsonl") == slurp(d / "part" / "metrics.jsonl"));
}

TEST_CASE("bad usage and bad inputs exit with code 2") {
    fs::path d = fresh_dir("errs");
    CHECK(run("").code == 2);                       // no subcommand
    CHECK(run("frobnicate").code == 2);             // unknown subcommand
    CHECK(run("synth").code == 2);                  // missing required --out
    CHECK(run("train --data " + (d / "nope").string() + " --out " +
              (d / "x").string()).code == 2);       // missing dataset
    REQUIRE(run("synth --classes 3 --per-class 5 --side 16 --seed 59 --out " +
                (d / "clean").string()).code == 0);
    CHECK(run("train --data " + (d / "clean").string() + " --out " +
              (d / "x").string() + " --set nosuch=1").code == 2);
    CHECK(run("train --data " + (d / "clean").string() + " --out " +
              (d / "x").string() + " --set tau=2.0").code == 2);  // invalid value
    CHECK(run("noise --kind bogus --in " + (d / "clean").string() + " --out " +
              (d / "y").string()).code == 2);
    CHECK(run("eval --ckpt " + (d / "nope").string() + " --data " +
              (d / "clean").string()).code == 2);
    {
        std::ofstream f(d / "bad.json");
        f << "{not json";
    }
    CHECK(run("train --data " + (d / "clean").string() + " --config " +
              (d / "bad.json").string() + " --out " + (d / "x").string()).code == 2);
}

TEST_CASE("--help documents the config keys") {
    RunResult r = run("train --help");
    CHECK(r.code == 0);
    for (const char* key : {"epochs", "warmup_epochs", "lambda_u", "d_z",
                            "use_dividemix", "use_cb_recon", "profile"})
        CHECK(r.out.find(key) != std::string::npos);
    CHECK(r.out.find("desk-scale") != std::string::npos);
}
