/**
 * @file test_cli.cpp
 * @brief Run configuration, manifests, and the gen / stencil-check / train /
 *        rollout / eval commands.
 */
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "meshderiv/checkpoint.hpp"
#include "meshderiv/commands.hpp"
#include "meshderiv/errors.hpp"

using namespace meshderiv;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory, removed on destruction.
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) {
        path = fs::temp_directory_path() / ("meshderiv_cli_" + name + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& sub) const { return (path / sub).string(); }
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

std::map<std::string, std::string> dir_bytes(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = slurp(e.path());
    return out;
}

RunConfig config(std::initializer_list<std::pair<const char*, std::string>> kv) {
    RunConfig c;
    for (const auto& [k, v] : kv) c.set(k, v, "flag");
    return c;
}

int run(int (*cmd)(const RunConfig&, std::ostream&), const RunConfig& c, std::string* log = nullptr) {
    std::ostringstream os;
    const int code = cmd(c, os);
    if (log) *log = os.str();
    return code;
}

void gen_tiny_diffusion(const std::string& out, const std::string& seed = "3") {
    REQUIRE(run(cmd_gen, config({{"family", "diffusion"},
                                 {"out", out},
                                 {"seed", seed},
                                 {"n-train", "2"},
                                 {"n-val", "1"},
                                 {"n-test", "2"},
                                 {"nx", "8"},
                                 {"ny", "8"},
                                 {"steps", "6"}})) == 0);
}

RunConfig tiny_train(const std::string& dataset, const std::string& out) {
    return config({{"dataset", dataset},
                   {"out", out},
                   {"epochs", "2"},
                   {"mp-hidden", "4"},
                   {"message-width", "3"},
                   {"source-width", "2"},
                   {"fusion-hidden", "6"},
                   {"seed", "1"}});
}

}  // namespace

TEST_CASE("config precedence: file < environment < flag, with sources") {
    RunConfig c;
    c.load_text("# comment\n\nseed = 5\nlr = 0.01\nfusion-hidden = 12\n", "desk.cfg");
    CHECK(c.get_u64("seed", 0) == 5);
    CHECK(c.entries().at("seed").source == "file");
    ::setenv("MESHDERIV_SEED", "7", 1);
    c.load_env();
    ::unsetenv("MESHDERIV_SEED");
    CHECK(c.get_u64("seed", 0) == 7);
    CHECK(c.entries().at("seed").source == "env");
    c.set("seed", "9", "flag");
    CHECK(c.get_u64("seed", 0) == 9);
    CHECK(c.get_double("lr", 1.0) == 0.01);
    // '-' and '_' are interchangeable.
    CHECK(c.get_int("fusion_hidden", 0) == 12);
    CHECK(c.has("fusion-hidden"));
    CHECK(c.get_int("epochs", 200) == 200);

    const auto j = nlohmann::json::parse(manifest_json("train", c, {"b.csv", "a.ckpt"}));
    CHECK(j["command"] == "train");
    CHECK(j["version"] == MESHDERIV_VERSION);
    CHECK(j["config"]["seed"]["value"] == "9");
    CHECK(j["config"]["seed"]["source"] == "flag");
    CHECK(j["config"]["lr"]["source"] == "file");
    CHECK(j["config"]["epochs"]["value"] == "200");
    CHECK(j["config"]["epochs"]["source"] == "default");
    CHECK(j["outputs"] == nlohmann::json::array({"a.ckpt", "b.csv"}));
    CHECK(manifest_json("train", c, {"b.csv", "a.ckpt"}) == manifest_json("train", c, {"a.ckpt", "b.csv"}));
}

TEST_CASE("config errors") {
    RunConfig c;
    CHECK_THROWS_AS(c.load_text("no equals sign here\n"), ConfigError);
    CHECK_THROWS_AS(c.load_text(" = 3\n"), ConfigError);
    CHECK_THROWS_AS(c.load_file("/nonexistent/desk.cfg"), ConfigError);
    c.set("epochs", "many");
    CHECK_THROWS_AS(c.get_int("epochs", 1), ConfigError);
    c.set("seed", "-4");
    CHECK_THROWS_AS(c.get_u64("seed", 1), ConfigError);
    c.set("lr", "fast");
    CHECK_THROWS_AS(c.get_double("lr", 1.0), ConfigError);
    c.set("raster", "maybe");
    CHECK_THROWS_AS(c.get_bool("raster", false), ConfigError);
    CHECK(config({{"raster", "yes"}}).get_bool("raster", false));
}

TEST_CASE("bundled desk config parses") {
    RunConfig c;
    c.load_file(fs::path(MESHDERIV_SOURCE_DIR) / "configs" / "desk.cfg");
    CHECK(c.get_int("epochs", 0) == 200);
    CHECK(c.get_int("k", 0) == 4);
    CHECK(c.get_int("n_train", 0) == 16);
}

TEST_CASE("gen shock: case count, manifest, byte reproducibility") {
    TempDir tmp("gen_shock");
    const auto c = config({{"family", "shock"}, {"cases", "8"}, {"seed", "1"}, {"nx", "16"}, {"ny", "2"}, {"frames", "5"},
                           {"out", tmp.str("a")}});
    REQUIRE(run(cmd_gen, c) == 0);
    const auto files = dir_bytes(tmp.path / "a");
    std::size_t traj = 0;
    for (const auto& [name, bytes] : files) traj += name.ends_with(".mdtraj");
    CHECK(traj == 8);
    CHECK(files.count("cases.csv") == 1);
    REQUIRE(files.count("run.json") == 1);
    const auto j = nlohmann::json::parse(files.at("run.json"));
    CHECK(j["outputs"].size() == 9);
    CHECK(j["config"]["wave_speed"]["value"] == "exact-riemann");

    const TrajectoryDataset ds = load_dataset(tmp.path / "a");
    REQUIRE(ds.cases.size() == 8);
    std::size_t n_test = 0;
    for (const auto& k : ds.cases) {
        n_test += k.split == Split::Test;
        CHECK(k.frames.size() == 5);
        CHECK(k.channels.size() == 3);
    }
    CHECK(n_test == 2);

    // Same seed into a fresh directory: identical bytes. Only the manifest
    // records the differing output path.
    fs::remove_all(tmp.path / "a");
    REQUIRE(run(cmd_gen, c) == 0);
    CHECK(dir_bytes(tmp.path / "a") == files);
}

TEST_CASE("gen shock full grid: 500 cases labeled 400/25/75") {
    TempDir tmp("gen_full");
    REQUIRE(run(cmd_gen, config({{"family", "shock"}, {"full-grid", "true"}, {"nx", "8"}, {"ny", "2"}, {"frames", "1"},
                                 {"jobs", "2"}, {"out", tmp.str("full")}})) == 0);
    std::ifstream csv(tmp.path / "full" / "cases.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line == "case_id,p_L,rho_L,dt,split");
    std::map<std::string, int> n;
    while (std::getline(csv, line)) ++n[line.substr(line.rfind(',') + 1)];
    CHECK(n["train"] == 400);
    CHECK(n["val"] == 25);
    CHECK(n["test"] == 75);
}

TEST_CASE("gen errors") {
    TempDir tmp("gen_err");
    CHECK_THROWS_AS(run(cmd_gen, config({{"family", "weather"}, {"out", tmp.str("x")}})), ConfigError);
    std::ofstream(tmp.path / "file") << "x";
    CHECK_THROWS_AS(run(cmd_gen, config({{"family", "shock"}, {"cases", "1"}, {"out", tmp.str("file/sub")}})), IoError);
    CHECK_THROWS_AS(run(cmd_gen, config({{"family", "shock"}, {"cases", "0"}, {"out", tmp.str("y")}})), ConfigError);
}

TEST_CASE("stencil-check: exit codes and flagged nodes") {
    std::string log;
    CHECK(run(cmd_stencil_check, config({{"meshes", "5"}}), &log) == 0);
    CHECK(log.find("exactness ok") != std::string::npos);
    CHECK(log.find("max gradient error") != std::string::npos);

    CHECK(run(cmd_stencil_check, config({{"meshes", "2"}, {"inject-collinear", "true"}}), &log) == 0);
    CHECK(log.find("flagged gradient mesh 2") != std::string::npos);
    CHECK(run(cmd_stencil_check, config({{"meshes", "2"}, {"inject-collinear", "true"}, {"strict", "true"}}), &log) ==
          1);

    TempDir tmp("stencil");
    CHECK(run(cmd_stencil_check, config({{"meshes", "1"}, {"out", tmp.str("r")}})) == 0);
    CHECK(fs::exists(tmp.path / "r" / "stencil_report.txt"));
    CHECK(fs::exists(tmp.path / "r" / "run.json"));

    StencilSuiteOptions o;
    o.meshes = 3;
    const StencilSuiteReport r = stencil_property_suite(o);
    CHECK(r.meshes == 3);
    CHECK(r.nodes == 3 * 256);
    CHECK(r.exact());
    CHECK(r.flagged_fraction() < 0.05);
}

TEST_CASE("train: outputs, ablation flag, identical loss CSVs for the same seed") {
    TempDir tmp("train");
    gen_tiny_diffusion(tmp.str("data"));
    REQUIRE(run(cmd_train, tiny_train(tmp.str("data"), tmp.str("r1"))) == 0);
    REQUIRE(run(cmd_train, tiny_train(tmp.str("data"), tmp.str("r2"))) == 0);
    const std::string l1 = slurp(tmp.path / "r1" / "loss.csv");
    CHECK(l1 == slurp(tmp.path / "r2" / "loss.csv"));
    CHECK(slurp(tmp.path / "r1" / "model.ckpt") == slurp(tmp.path / "r2" / "model.ckpt"));
    CHECK(std::count(l1.begin(), l1.end(), '\n') == 3);  // header + 2 epochs
    CHECK(load_checkpoint(tmp.path / "r1" / "model.ckpt").model.config.use_mls);

    RunConfig ab = tiny_train(tmp.str("data"), tmp.str("r3"));
    ab.set("ablate-mls", "true");
    REQUIRE(run(cmd_train, ab) == 0);
    CHECK(!load_checkpoint(tmp.path / "r3" / "model.ckpt").model.config.use_mls);

    CHECK_THROWS_AS(run(cmd_train, config({{"out", tmp.str("r4")}})), ConfigError);
    CHECK_THROWS_AS(run(cmd_train, tiny_train(tmp.str("missing"), tmp.str("r4"))), IoError);

    const TrajectoryDataset ds = load_dataset(tmp.path / "data");
    const ModelConfig mc = model_config_from(config({{"fusion-hidden", "6"}}), ds);
    CHECK(mc.n_channels == 1);
    CHECK(mc.n_globals == 4);
    CHECK(mc.fusion_hidden == 6);
    TrajectoryDataset mixed = ds;
    mixed.cases[1].globals.set("extra", 1.0);
    CHECK_THROWS_AS(model_config_from(RunConfig{}, mixed), InvalidArgument);
}

TEST_CASE("rollout and eval") {
    TempDir tmp("pipeline");
    gen_tiny_diffusion(tmp.str("data"));
    REQUIRE(run(cmd_train, tiny_train(tmp.str("data"), tmp.str("run"))) == 0);
    const std::string ckpt = tmp.str("run/model.ckpt");
    REQUIRE(run(cmd_rollout, config({{"checkpoint", ckpt}, {"dataset", tmp.str("data")}, {"out", tmp.str("pred")}})) ==
            0);
    const TrajectoryDataset pred = load_dataset(tmp.path / "pred");
    REQUIRE(pred.cases.size() == 2);
    CHECK(pred.cases[0].frames.size() == 7);
    const TrajectoryDataset truth = load_dataset(tmp.path / "data");
    CHECK(pred.cases[0].frames[0].values == truth.cases[3].frames[0].values);

    REQUIRE(run(cmd_rollout, config({{"checkpoint", ckpt}, {"dataset", tmp.str("data")}, {"out", tmp.str("pred3")},
                                     {"steps", "3"}, {"split", "all"}})) == 0);
    const TrajectoryDataset p3 = load_dataset(tmp.path / "pred3");
    CHECK(p3.cases.size() == 5);
    CHECK(p3.cases[0].frames.size() == 4);

    // Predictions against the truth they came from.
    std::string log;
    REQUIRE(run(cmd_eval, config({{"dataset", tmp.str("data")}, {"predictions", tmp.str("pred")},
                                  {"out", tmp.str("eval")}, {"raster", "true"}, {"raster-resolution", "16"}}),
                &log) == 0);
    CHECK(log.find("evaluated 2 cases") != std::string::npos);
    const std::string csv = slurp(tmp.path / "eval" / "metrics.csv");
    CHECK(csv.rfind("case,channel,metric,value\n", 0) == 0);
    std::size_t pgm = 0;
    for (const auto& e : fs::directory_iterator(tmp.path / "eval" / "raster")) pgm += e.path().extension() == ".pgm";
    CHECK(pgm > 0);

    // Ground truth against itself.
    REQUIRE(run(cmd_eval, config({{"dataset", tmp.str("data")}, {"out", tmp.str("self")}})) == 0);
    std::istringstream rows(slurp(tmp.path / "self" / "metrics.csv"));
    std::string line;
    std::getline(rows, line);
    std::size_t checked = 0;
    std::map<std::string, int> per_case;
    while (std::getline(rows, line)) {
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
        REQUIRE(f.size() == 4);
        ++per_case[f[0]];
        const std::string& m = f[2];
        if (f[3] == "nan") continue;
        const double v = std::stod(f[3]);
        if (m.starts_with("RMSE") || m.starts_with("RRMSE") || m == "NMSE") {
            CHECK(v == 0.0);
            ++checked;
        }
        if (m.starts_with("SSIM") || m == "NSE" || m == "R2") {
            CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
            ++checked;
        }
    }
    CHECK(per_case.size() == 5);
    CHECK(checked > 0);
    const int rows_per_case = per_case.begin()->second;
    for (const auto& [id, n] : per_case) CHECK(n == rows_per_case);

    // Masking to important nodes keeps the identities and records the node count.
    REQUIRE(run(cmd_eval, config({{"dataset", tmp.str("data")}, {"out", tmp.str("mask")},
                                  {"important-nodes", "0.3"}})) == 0);
    CHECK(slurp(tmp.path / "mask" / "metrics.csv").find(",all,nodes,") != std::string::npos);

    // Channel mismatch between checkpoint and dataset.
    REQUIRE(run(cmd_gen, config({{"family", "shock"}, {"cases", "2"}, {"nx", "8"}, {"ny", "2"}, {"frames", "3"},
                                 {"out", tmp.str("shock")}})) == 0);
    CHECK_THROWS_AS(run(cmd_rollout, config({{"checkpoint", ckpt}, {"dataset", tmp.str("shock")},
                                             {"out", tmp.str("bad")}, {"split", "all"}})),
                    InvalidArgument);
    CHECK_THROWS_AS(run(cmd_rollout, config({{"checkpoint", ckpt}, {"dataset", tmp.str("data")},
                                             {"out", tmp.str("bad")}, {"split", "nothing"}})),
                    InvalidArgument);
}

TEST_CASE("parallel_for and PGM output") {
    std::atomic<int> sum{0};
    parallel_for(100, 4, [&](std::size_t i) { sum += static_cast<int>(i); });
    CHECK(sum == 4950);
    CHECK_THROWS_AS(parallel_for(10, 3,
                                 [](std::size_t i) {
                                     if (i == 6) throw InvalidArgument("boom");
                                 }),
                    InvalidArgument);

    Eigen::MatrixXd img(2, 3);
    img << 0, 0.5, 1, 1, 1, 1;
    const std::string p = pgm_bytes(img, 0.0, 1.0);
    const std::string header = "P5\n3 2\n255\n";
    REQUIRE(p.size() == header.size() + 6);
    CHECK(p.substr(0, header.size()) == header);
    // Row 0 is written last.
    CHECK(static_cast<unsigned char>(p[header.size()]) == 255);
    CHECK(static_cast<unsigned char>(p[header.size() + 3]) == 0);
    CHECK(static_cast<unsigned char>(p[header.size() + 5]) == 255);
}
