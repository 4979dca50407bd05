/**
 * @file meshderiv.cpp
 * @brief Command-line entry point: gen, stencil-check, train, rollout, eval.
 */

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "meshderiv/commands.hpp"
#include "meshderiv/errors.hpp"

namespace {

struct OptionSpec {
    const char* name;
    const char* help;
    bool flag = false;
};

struct Subcommand {
    CLI::App* app = nullptr;
    std::string config_file;
    std::map<std::string, std::string> values;
    std::map<std::string, bool> flags;
    std::map<std::string, CLI::Option*> options;
    int (*run)(const meshderiv::RunConfig&, std::ostream&) = nullptr;
};

void add_options(Subcommand& sc, const std::vector<OptionSpec>& specs) {
    sc.app->add_option("--config", sc.config_file, "key = value config file (flags override it)");
    for (const auto& s : specs) {
        const std::string name = std::string("--") + s.name;
        if (s.flag) {
            sc.options[s.name] = sc.app->add_flag(name, sc.flags[s.name], s.help);
        } else {
            sc.options[s.name] = sc.app->add_option(name, sc.values[s.name], s.help);
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mesh-based learned PDE surrogates: data generation, training, rollout and evaluation"};
    app.set_version_flag("--version", MESHDERIV_VERSION);
    app.require_subcommand(1);

    std::vector<Subcommand> subs(5);
    subs[0].app = app.add_subcommand("gen", "generate shock-tube or diffusion datasets");
    subs[0].run = meshderiv::cmd_gen;
    add_options(subs[0], {{"family", "shock or diffusion"},
                          {"out", "output directory"},
                          {"seed", "RNG seed (default from MESHDERIV_SEED)"},
                          {"cases", "shock cases sampled across the split (default 8)"},
                          {"full-grid", "all 500 shock cases", true},
                          {"nx", "cells / nodes along x"},
                          {"ny", "cells / nodes along y"},
                          {"extent", "shock domain size (m)"},
                          {"x-diaphragm", "diaphragm position (m)"},
                          {"frames", "shock frames per case"},
                          {"substeps", "solver steps per frame"},
                          {"wave-speed", "exact-riemann or initial-characteristic"},
                          {"n-train", "diffusion training cases"},
                          {"n-val", "diffusion validation cases"},
                          {"n-test", "diffusion test cases"},
                          {"jitter", "mesh jitter in grid spacings"},
                          {"neighbors", "k nearest neighbors"},
                          {"k-min", "min diffusivity"},
                          {"k-max", "max diffusivity"},
                          {"u-max", "max advection speed per component"},
                          {"dt", "diffusion frame interval (s)"},
                          {"steps", "diffusion frames after the initial one"},
                          {"jobs", "parallel cases"}});

    subs[1].app = app.add_subcommand("stencil-check", "exactness suite for the MLS stencils");
    subs[1].run = meshderiv::cmd_stencil_check;
    add_options(subs[1], {{"meshes", "number of random meshes"},
                          {"nx", "nodes along x"},
                          {"ny", "nodes along y"},
                          {"jitter", "mesh jitter in grid spacings"},
                          {"neighbors", "k nearest neighbors"},
                          {"seed", "RNG seed"},
                          {"inject-collinear", "add a mesh with collinear neighborhoods", true},
                          {"strict", "fail when any node is flagged", true},
                          {"out", "write the report here"}});

    subs[2].app = app.add_subcommand("train", "train a model on a dataset");
    subs[2].run = meshderiv::cmd_train;
    add_options(subs[2], {{"dataset", "dataset directory"},
                          {"out", "output directory"},
                          {"epochs", "training epochs"},
                          {"lr", "base learning rate"},
                          {"k", "rollout window length K"},
                          {"seed", "initialization and shuffle seed"},
                          {"ablate-mls", "drop gradient/Laplacian features", true},
                          {"integrator", "euler, heun or rk4"},
                          {"mp-rounds", "message passing rounds"},
                          {"mp-hidden", "message passing hidden width"},
                          {"message-width", "edge message width"},
                          {"source-width", "source term width"},
                          {"fusion-hidden", "fusion MLP hidden width"},
                          {"fusion-depth", "fusion MLP hidden layers"},
                          {"weight-decay", "AdamW weight decay"},
                          {"edge-geometry", "feed edge displacements to messages (true/false)"},
                          {"normalized-loss", "loss on z-scored states (true/false)"},
                          {"log-every", "epochs between progress lines"}});

    subs[3].app = app.add_subcommand("rollout", "roll a checkpoint out from initial frames");
    subs[3].run = meshderiv::cmd_rollout;
    add_options(subs[3], {{"checkpoint", "model checkpoint"},
                          {"dataset", "dataset directory"},
                          {"out", "output directory"},
                          {"split", "train, val, test or all"},
                          {"steps", "steps per case (default: all frames)"},
                          {"policy", "frozen or rebuild"},
                          {"jobs", "parallel cases"}});

    subs[4].app = app.add_subcommand("eval", "score predictions against ground truth");
    subs[4].run = meshderiv::cmd_eval;
    add_options(subs[4], {{"dataset", "ground-truth dataset directory"},
                          {"predictions", "prediction directory (default: the dataset itself)"},
                          {"out", "output directory"},
                          {"raster", "write PGM frames", true},
                          {"raster-resolution", "raster size in pixels"},
                          {"important-nodes", "mask nodes never exceeding this value in channel 0"},
                          {"jobs", "parallel cases"}});

    CLI11_PARSE(app, argc, argv);

    for (auto& sc : subs) {
        if (!sc.app->parsed()) continue;
        try {
            meshderiv::RunConfig cfg;
            if (!sc.config_file.empty()) cfg.load_file(sc.config_file);
            cfg.load_env();
            for (const auto& [name, opt] : sc.options) {
                if (opt->count() == 0) continue;
                if (sc.flags.count(name)) {
                    cfg.set(name, sc.flags[name] ? "true" : "false", "flag");
                } else {
                    cfg.set(name, sc.values[name], "flag");
                }
            }
            return sc.run(cfg, std::cout);
        } catch (const meshderiv::Error& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 2;
        } catch (const std::exception& e) {
            std::cerr << "unexpected error: " << e.what() << '\n';
            return 3;
        }
    }
    return 0;
}
