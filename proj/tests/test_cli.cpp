#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "smoothlab/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using smoothlab::cli::run;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result invoke(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("smoothlab_cli_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

const std::vector<std::string> kSmallGraph{"--n", "60", "--p-in", "0.3", "--p-out", "0.06"};

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
}

} // namespace

TEST_CASE("gradcheck passes on the reference instance") {
    const auto r = invoke({"gradcheck", "--n", "12", "--depth", "5", "--width", "4", "--seed", "7"});
    REQUIRE(r.code == 0);
    const auto doc = json::parse(r.out);
    CHECK(doc["max_rel_err"].get<double>() < 1e-5);
    CHECK(doc["pass"] == true);
    const auto cls = invoke({"gradcheck", "--task", "classification", "--seed", "3", "--format", "csv"});
    CHECK(cls.code == 0);
    CHECK(cls.out.rfind("max_abs_err,max_rel_err,worst_layer,pass\n", 0) == 0);
}

TEST_CASE("constant-gradient counterexample report") {
    const auto r = invoke({"counterexample", "prop32", "--n", "50", "--depth", "20"});
    REQUIRE(r.code == 0);
    const auto doc = json::parse(r.out);
    CHECK(doc["holds"] == true);
    REQUIRE(doc["layers"].size() == 21);
    for (const auto& layer : doc["layers"]) CHECK(std::abs(layer["grad_norm"].get<double>() - 1.0) <= 1e-12);
}

TEST_CASE("MLP counterexample report") {
    const auto r = invoke({"counterexample", "prop42", "--n", "20", "--depth", "4", "--k-zero", "2", "--seed", "1"});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["holds"] == true);
}

TEST_CASE("zeroed-output counterexample report") {
    const auto r = invoke(with({"counterexample", "cor42", "--depth", "5", "10", "--width", "4"}, {}));
    REQUIRE(r.code == 0);
    const auto doc = json::parse(r.out);
    CHECK(doc.contains("max_grad_strictly_decreasing"));
}

TEST_CASE("usage errors exit 2") {
    CHECK(invoke({"train", "--config", "definitely_missing_config.json"}).code == 2);
    CHECK(invoke({"train", "--bogus"}).code == 2);
    CHECK(invoke({}).code == 2);
    CHECK(invoke({"frobnicate"}).code == 2);
    CHECK(invoke({"profile", "--format", "xml"}).code == 2);
}

TEST_CASE("contract violations exit 1") {
    const auto r = invoke({"counterexample", "prop42", "--depth", "3", "--k-zero", "5"});
    CHECK(r.code == 1);
    CHECK(r.err.find("zeroed layer") != std::string::npos);
    CHECK(invoke({"gradcheck", "--step", "1"}).code == 1);
    CHECK(invoke(with({"profile", "--activation", "gelu"}, kSmallGraph)).code == 1);
}

TEST_CASE("gen writes readable data files") {
    TempDir tmp("gen");
    const auto r = invoke(with({"gen", "--out", tmp / "data", "--seed", "2"}, kSmallGraph));
    REQUIRE(r.code == 0);
    for (const char* f : {"graph.edges", "features.csv", "labels.csv", "meta.json"})
        CHECK(fs::exists(tmp.path / "data" / f));
    const auto summary = json::parse(r.out);
    CHECK(summary["lambda"].get<double>() < 1.0);

    // The generated files drive a run through the external-data path.
    const auto p = invoke({"profile", "--graph", tmp / "data/graph.edges", "--features", tmp / "data/features.csv",
                           "--labels", tmp / "data/labels.csv", "--depth", "6", "--width", "4", "--format", "csv"});
    REQUIRE(p.code == 0);
    CHECK(p.out.rfind("k,forward_energy,backward_energy,grad_norm,spectral_norm\n", 0) == 0);
    CHECK(invoke({"profile", "--graph", tmp / "data/graph.edges"}).code == 2);
}

TEST_CASE("train run directory and config round-trip") {
    TempDir tmp("train");
    const auto args = with({"train", "--out", tmp / "runs", "--depth", "3", "--width", "4", "--epochs", "4"},
                           kSmallGraph);
    const auto first = invoke(args);
    REQUIRE(first.code == 0);
    const fs::path dir = json::parse(first.out)["run_dir"].get<std::string>();
    for (const char* f : {"config.json", "meta.json", "log.csv", "bounds.json", "model.ckpt", "profiles/epoch_00000.csv",
                          "profiles/epoch_00004.csv"})
        CHECK(fs::exists(dir / f));
    const std::string log = slurp(dir / "log.csv");

    // Same flags: same directory, same bytes.
    const auto second = invoke(args);
    CHECK(second.out == first.out);
    CHECK(slurp(dir / "log.csv") == log);

    // Feeding the written config back reproduces the run.
    const auto again = invoke({"train", "--out", tmp / "runs2", "--config", (dir / "config.json").string()});
    REQUIRE(again.code == 0);
    const fs::path dir2 = json::parse(again.out)["run_dir"].get<std::string>();
    CHECK(dir2.filename() == dir.filename());
    CHECK(slurp(dir2 / "log.csv") == log);

    // The checkpoint profiles against the same data.
    const auto prof = invoke(with({"profile", "--checkpoint", (dir / "model.ckpt").string(), "--format", "csv"},
                                  kSmallGraph));
    REQUIRE(prof.code == 0);
    CHECK(prof.out == slurp(dir / "profiles/epoch_00004.csv"));
    const auto bounds = invoke(with({"bounds", "--checkpoint", (dir / "model.ckpt").string()}, kSmallGraph));
    REQUIRE(bounds.code == 0);
    const auto doc = json::parse(bounds.out);
    CHECK(doc.contains("inputs"));
    CHECK(doc.contains("records"));
    CHECK(doc.contains("condition_report"));
}

TEST_CASE("flags override config keys") {
    TempDir tmp("override");
    {
        std::ofstream cfg(tmp / "cfg.json");
        cfg << R"({"n": 60, "p_in": 0.3, "p_out": 0.06, "depth": 3, "width": 4, "epochs": 2})";
    }
    const auto base = invoke({"train", "--out", tmp / "runs", "--config", tmp / "cfg.json"});
    const auto changed = invoke({"train", "--out", tmp / "runs", "--config", tmp / "cfg.json", "--lr", "0.2"});
    REQUIRE(base.code == 0);
    REQUIRE(changed.code == 0);
    const fs::path d1 = json::parse(base.out)["run_dir"].get<std::string>();
    const fs::path d2 = json::parse(changed.out)["run_dir"].get<std::string>();
    CHECK(d1 != d2);
    CHECK(json::parse(slurp(d2 / "config.json"))["learning_rate"] == 0.2);
    CHECK(json::parse(slurp(d2 / "config.json"))["depth"] == 3);
    {
        std::ofstream cfg(tmp / "bad.json");
        cfg << R"({"depht": 3})";
    }
    CHECK(invoke({"train", "--out", tmp / "runs", "--config", tmp / "bad.json"}).code == 1);
}

TEST_CASE("bounds sweep output") {
    const auto r = invoke(with({"bounds", "--sweep", "--depths", "4", "8", "--alphas", "0", "--qs", "1", "2"},
                               kSmallGraph));
    REQUIRE(r.code == 0);
    const auto doc = json::parse(r.out);
    CHECK(doc["rows"].size() == 4);
}

TEST_CASE("condition report case flag") {
    const auto r = invoke(with({"bounds", "--depth", "10", "--width", "4", "--case", "balanced-classification"},
                               kSmallGraph));
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["condition_report"]["case"] == "balanced-classification");
    CHECK(invoke(with({"bounds", "--case", "nonsense"}, kSmallGraph)).code != 0);
}

TEST_CASE("installed binary behaves like the in-process entry point") {
    const char* exe = std::getenv("SMOOTHLAB_CLI");
    if (exe == nullptr) {
        MESSAGE("SMOOTHLAB_CLI not set; skipping subprocess check");
        return;
    }
    TempDir tmp("binary");
    const std::string out = tmp / "out.json";
    const std::string cmd = std::string("\"") + exe + "\" gradcheck --n 12 --depth 5 --width 4 --seed 7 > \"" + out + "\"";
    CHECK(std::system(cmd.c_str()) == 0);
    const auto in_process = invoke({"gradcheck", "--n", "12", "--depth", "5", "--width", "4", "--seed", "7"});
    CHECK(slurp(out) == in_process.out);
    const std::string missing = std::string("\"") + exe + "\" train --config /nonexistent/cfg.json 2>/dev/null";
    const int status = std::system(missing.c_str());
    CHECK(WEXITSTATUS(status) == 2);
}
