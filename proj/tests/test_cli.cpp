#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int status = 0;
    std::string out;
};

Result run(const std::string& args, const fs::path& cwd) {
    const std::string cmd = "cd '" + cwd.string() + "' && '" GENGNN_CLI "' " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p);
    Result r;
    std::array<char, 4096> buf{};
    while (std::size_t k = std::fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), k);
    const int st = pclose(p);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

bool error_line(const std::string& out, const std::string& code) {
    return std::regex_search(out, std::regex("(^|\n)error\\[" + code + "\\]: [^\n]+"));
}

// Fresh scratch directory per test case.
fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("gengnn_cli_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

const char* kTinyConfig = R"({"dataset": "tree",
 "model": {"layers": 2, "hidden_x": 8, "hidden_e": 4, "hidden_y": 8, "readout_x": 8, "readout_e": 4, "ffn": 8, "rrwp_k": 4, "time_dim": 4, "dropout": 0.0},
 "diffusion": {"steps": 20},
 "train": {"epochs": 4, "batch_size": 8, "lr": 0.001, "checkpoint_every": 2}})";

// Tiny tree run in d/run; returns its path.
fs::path tiny_run(const fs::path& d, const std::string& extra = "", const std::string& name = "run") {
    if (!fs::exists(d / "data.jsonl")) REQUIRE(run("gen --kind tree --count 24 --nodes 8 --seed 1 --out data.jsonl", d).status == 0);
    if (!fs::exists(d / "cfg.json")) spit(d / "cfg.json", kTinyConfig);
    const Result r = run("train --config cfg.json --data data.jsonl --out " + name + " --quiet " + extra, d);
    INFO(r.out);
    REQUIRE(r.status == 0);
    return d / name;
}

}  // namespace

TEST_CASE("gen writes the requested count and prints a summary") {
    const fs::path d = scratch("gen");
    Result r = run("gen --kind tree --count 40 --nodes 64 --out t.jsonl", d);
    CHECK(r.status == 0);
    CHECK(r.out.find("wrote 40 tree graphs") != std::string::npos);
    CHECK(r.out.find("nodes 64..64") != std::string::npos);
    const std::string text = slurp(d / "t.jsonl");
    CHECK(std::count(text.begin(), text.end(), '\n') == 40);

    r = run("gen --kind planar --count 0 --out e.jsonl", d);
    CHECK(r.status == 0);
    CHECK(r.out.find("warning") != std::string::npos);
    CHECK(fs::exists(d / "e.jsonl"));
    CHECK(fs::file_size(d / "e.jsonl") == 0);

    r = run("gen --kind hexagon --count 3 --out x.jsonl", d);
    CHECK(r.status != 0);
    CHECK(error_line(r.out, "E_USAGE"));
    for (const char* k : {"tree", "planar", "sbm", "comm20"}) CHECK(r.out.find(k) != std::string::npos);
    CHECK(r.out.find("Usage") != std::string::npos);
    CHECK_FALSE(fs::exists(d / "x.jsonl"));
}

TEST_CASE("train validates the config and records ablations") {
    const fs::path d = scratch("train");
    REQUIRE(run("gen --kind tree --count 24 --nodes 8 --seed 1 --out data.jsonl", d).status == 0);
    spit(d / "bad.json", R"({"modle": 1, "model": {"layers": 0, "hiden": 3, "flags": {"resid": false}},
        "diffusion": {"transition": "foo"}, "train": {"lr": -1, "epochs": "x", "batchsize": 4}})");
    Result r = run("train --config bad.json --data data.jsonl --out r", d);
    CHECK(r.status != 0);
    CHECK(error_line(r.out, "E_CONFIG"));
    for (const char* key : {"modle", "model.hiden", "model.flags.resid", "layers", "diffusion.transition", "train.lr", "train.epochs", "train.batchsize"})
        CHECK_MESSAGE(r.out.find(key) != std::string::npos, key);
    CHECK_FALSE(fs::exists(d / "r"));

    r = run("train --config bad.json --data nowhere.jsonl --out r", d);
    CHECK(r.status != 0);
    r = run("train --data nowhere.jsonl --out r", d);
    CHECK(error_line(r.out, "E_IO"));
    CHECK(r.out.find("nowhere.jsonl") != std::string::npos);

    r = run("train --data data.jsonl --out r --disable residual,bogus", d);
    CHECK(error_line(r.out, "E_CONFIG"));
    CHECK(r.out.find("bogus") != std::string::npos);

    const fs::path run_dir = tiny_run(d, "--disable residual,rrwp");
    const json cfg = json::parse(slurp(run_dir / "config.json"));
    CHECK(cfg["disabled"] == json({"residual", "rrwp"}));
    CHECK(cfg["model"]["flags"]["residual"] == false);
    CHECK(cfg["model"]["flags"]["rrwp"] == false);
    CHECK(cfg["model"]["flags"]["ffn"] == true);
    const json rec = json::parse(slurp(run_dir / "run.json"));
    CHECK(rec["status"] == "completed");
    CHECK(rec["artifacts"]["checkpoints"].size() == 2);
    CHECK(fs::exists(run_dir / "data" / "train.jsonl"));
    const std::string losses = slurp(run_dir / "losses.csv");
    CHECK(std::count(losses.begin(), losses.end(), '\n') == 5);

    r = run("train --config cfg.json --data data.jsonl --out run --disable residual,rrwp", d);
    CHECK(error_line(r.out, "E_IO"));
    CHECK(r.out.find("--resume") != std::string::npos);
}

TEST_CASE("train defaults follow the hyperparameter table") {
    const fs::path d = scratch("schema");
    const Result r = run("train --schema", d);
    REQUIRE(r.status == 0);
    const json s = json::parse(r.out);
    CHECK(s["model.layers"]["default"] == 12);
    CHECK(s["diffusion.steps"]["default"] == 500);
    CHECK(s["train.batch_size"]["default"] == 64);
    CHECK(s["train.lr"]["default"] == 1e-4);
    CHECK(s["model.hidden_x"]["default"] == 64);
    CHECK(s["model.hidden_e"]["default"] == 16);
    CHECK(s["model.ffn"]["default"] == 32);
}

TEST_CASE("an interrupted run resumes to the same model") {
    const fs::path d = scratch("resume");
    const fs::path a = tiny_run(d, "", "a");
    const fs::path b = tiny_run(d, "", "b");
    // Roll b back to its epoch-2 state.
    fs::remove(b / "model.json");
    fs::remove(b / "checkpoints" / "epoch-0004.json");
    json rec = json::parse(slurp(b / "run.json"));
    rec["status"] = "running";
    spit(b / "run.json", rec.dump());
    std::string losses = slurp(b / "losses.csv");
    for (int k = 0; k < 2; ++k) losses.erase(losses.rfind('\n', losses.size() - 2) + 1);
    spit(b / "losses.csv", losses);

    const Result r = run("train --config cfg.json --data data.jsonl --out b --resume --quiet", d);
    INFO(r.out);
    CHECK(r.status == 0);
    CHECK(r.out.find("after epoch 2") != std::string::npos);
    const json ma = json::parse(slurp(a / "model.json")), mb = json::parse(slurp(b / "model.json"));
    CHECK(ma["params"] == mb["params"]);
    CHECK(slurp(a / "losses.csv") == slurp(b / "losses.csv"));
    CHECK(run("train --config cfg.json --data data.jsonl --out b --resume", d).status != 0);
}

TEST_CASE("sample folds are reproducible byte for byte") {
    const fs::path d = scratch("sample");
    const fs::path rd = tiny_run(d);
    Result r1 = run("sample --run run --seed 7 --folds 5 --count 6 --snapshots 1", d);
    Result r2 = run("sample --run run --seed 7 --folds 5 --count 6 --snapshots 1", d);
    REQUIRE(r1.status == 0);
    REQUIRE(r2.status == 0);
    CHECK(r1.out.find("±") != std::string::npos);
    const fs::path s1 = rd / "samples" / "seed-7-001", s2 = rd / "samples" / "seed-7-002";
    for (const char* f : {"fold-1.jsonl", "fold-2.jsonl", "fold-3.jsonl", "fold-4.jsonl", "fold-5.jsonl", "metrics.csv", "summary.csv", "snapshots.jsonl"}) {
        REQUIRE(fs::exists(s1 / f));
        CHECK_MESSAGE(slurp(s1 / f) == slurp(s2 / f), f);
    }
    CHECK(slurp(s1 / "fold-1.jsonl") != slurp(s1 / "fold-2.jsonl"));
    const std::string summary = slurp(s1 / "summary.csv");
    CHECK(summary.find("\nmean,") != std::string::npos);
    CHECK(summary.find("\nstd,") != std::string::npos);
    const std::string metrics = slurp(s1 / "metrics.csv");
    CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 6);
    CHECK(json::parse(slurp(rd / "run.json"))["artifacts"]["samples"].size() == 2);
}

TEST_CASE("sample rejects a checkpoint that does not match the run") {
    const fs::path d = scratch("compat");
    const fs::path rd = tiny_run(d);
    const fs::path other = tiny_run(d, "--disable ffn", "other");
    Result r = run("sample --run run --checkpoint other/model.json --count 2", d);
    CHECK(r.status != 0);
    CHECK(error_line(r.out, "E_COMPAT"));
    r = run("sample --run nowhere --count 2", d);
    CHECK(error_line(r.out, "E_IO"));
    (void)rd;
    (void)other;
}

TEST_CASE("eval of a set against itself and idempotent re-evaluation") {
    const fs::path d = scratch("eval");
    const fs::path rd = tiny_run(d);
    Result r = run("eval --run run --samples data.jsonl --ref data.jsonl --baseline data.jsonl --magdiff", d);
    INFO(r.out);
    REQUIRE(r.status == 0);
    const json rep = json::parse(slurp(rd / "reports" / "report-001.json"));
    for (const auto& [k, v] : rep["mmd"].items()) CHECK(v.get<double>() == 0.0);
    CHECK(rep["magdiff"].get<double>() == 0.0);
    CHECK(rep["validity"] == 100.0);
    CHECK(fs::exists(rd / "reports" / "report-001.csv"));
    CHECK(fs::exists(rd / "reports" / "report-001-magnitude.csv"));
    r = run("eval --run run --samples data.jsonl --ref data.jsonl --baseline data.jsonl --magdiff", d);
    CHECK(r.out.find("unchanged") != std::string::npos);
    CHECK_FALSE(fs::exists(rd / "reports" / "report-002.json"));

    r = run("eval --samples data.jsonl --ref data.jsonl --out rep", d);
    CHECK(error_line(r.out, "E_INVALID_ARG"));
    r = run("eval --samples data.jsonl --ref data.jsonl --out rep --kind sbm", d);
    CHECK(r.status == 0);
    CHECK(json::parse(slurp(d / "rep" / "report-001.json"))["validity"] == 0.0);
}

TEST_CASE("diagnose reports the bound or marks it not applicable") {
    const fs::path d = scratch("diagnose");
    tiny_run(d);
    tiny_run(d, "--disable residual", "nores");
    REQUIRE(run("sample --run run --count 3 --snapshots 2", d).status == 0);
    REQUIRE(run("sample --run nores --count 3 --snapshots 1", d).status == 0);
    REQUIRE(run("sample --run run --count 3 --seed 1", d).status == 0);

    Result r = run("diagnose --samples run/samples/seed-0-001", d);
    INFO(r.out);
    CHECK(r.status == 0);
    const json on = json::parse(slurp(d / "run/samples/seed-0-001/diagnose-001/theorem.json"));
    CHECK(on["applicable"] == true);
    CHECK(on["fraction_ok"] == 1.0);
    CHECK(on["steps"] == 40);

    r = run("diagnose --samples nores/samples/seed-0-001", d);
    CHECK(r.out.find("not applicable") != std::string::npos);
    const json off = json::parse(slurp(d / "nores/samples/seed-0-001/diagnose-001/theorem.json"));
    CHECK(off["applicable"] == false);
    CHECK(off["per_chain"][0]["mu_v"].size() == 20);

    r = run("diagnose --samples run/samples/seed-1-001", d);
    CHECK(error_line(r.out, "E_IO"));
    CHECK(r.out.find("--snapshots") != std::string::npos);
}

TEST_CASE("diagnose depth sweep groups runs into series") {
    const fs::path d = scratch("sweep");
    std::string dirs;
    for (int layers : {1, 2, 3}) {
        json cfg = json::parse(kTinyConfig);
        cfg["model"]["layers"] = layers;
        spit(d / ("cfg" + std::to_string(layers) + ".json"), cfg.dump());
        if (!fs::exists(d / "data.jsonl")) REQUIRE(run("gen --kind tree --count 24 --nodes 8 --seed 1 --out data.jsonl", d).status == 0);
        const std::string name = "L" + std::to_string(layers);
        REQUIRE(run("train --config cfg" + std::to_string(layers) + ".json --data data.jsonl --out " + name + " --quiet", d).status == 0);
        REQUIRE(run("sample --run " + name + " --count 4 --snapshots 2", d).status == 0);
        dirs += " --sweep " + name + "/samples/seed-0-001";
    }
    Result r = run("diagnose" + dirs + " --out sweep", d);
    INFO(r.out);
    CHECK(r.status == 0);
    const std::string csv = slurp(d / "sweep" / "depth_sweep.csv");
    CHECK(csv.rfind("series,depth,validity,mean_erank,mean_numrank\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    CHECK(json::parse(slurp(d / "sweep" / "depth_sweep.json")).contains("full"));
    r = run("diagnose --sweep L1/samples/seed-0-001 --out sweep2", d);
    CHECK(error_line(r.out, "E_CONTRACT"));
}
