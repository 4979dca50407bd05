/**
 * @file commands.hpp
 * @brief Subcommand implementations behind the command-line tool.
 *
 * Every command reads its parameters from a RunConfig, writes its outputs
 * atomically into the configured directory together with a run.json
 * manifest, and returns a process exit code. Library errors propagate as
 * exceptions.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "meshderiv/config.hpp"
#include "meshderiv/dataset.hpp"
#include "meshderiv/diffusion.hpp"
#include "meshderiv/mls.hpp"
#include "meshderiv/model.hpp"
#include "meshderiv/train.hpp"

namespace meshderiv {

struct StencilSuiteOptions {
    int meshes = 100;
    int nx = 16;
    int ny = 16;
    double jitter = 0.3;
    int k = 8;
    std::uint64_t seed = 1;
    /// Append a mesh whose neighborhoods are all collinear.
    bool inject_collinear = false;
    MlsOptions mls;
};

struct NodeRef {
    int mesh = -1;
    std::size_t node = 0;
};

struct StencilSuiteReport {
    std::size_t meshes = 0;
    std::size_t nodes = 0;
    double max_gradient_error = 0.0;    // affine fields, unflagged nodes
    double max_laplacian_error = 0.0;   // quadratic fields, unflagged nodes
    NodeRef worst_gradient, worst_laplacian;
    std::vector<NodeRef> flagged_gradient;
    std::vector<NodeRef> flagged_laplacian;
    double seconds = 0.0;

    double flagged_fraction() const;
    bool exact(double grad_tol = 1e-9, double lap_tol = 1e-8) const {
        return max_gradient_error < grad_tol && max_laplacian_error < lap_tol;
    }
};

/// Exactness of both stencils on seeded jittered meshes with random affine
/// (gradient) and quadratic (Laplacian) fields.
StencilSuiteReport stencil_property_suite(const StencilSuiteOptions& opt);

/// Model configuration from the config keys, sized for the dataset's channels
/// and globals. Throws InvalidArgument when the dataset cases disagree.
ModelConfig model_config_from(const RunConfig& cfg, const TrajectoryDataset& ds);
TrainConfig train_config_from(const RunConfig& cfg);
DiffusionSpec diffusion_spec_from(const RunConfig& cfg);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first error.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

/// Binary PGM (P5) of an image scaled from [lo, hi] to [0, 255]; row 0 of
/// `img` is written last so +y points up.
std::string pgm_bytes(const Eigen::MatrixXd& img, double lo, double hi);

int cmd_gen(const RunConfig& cfg, std::ostream& log);
int cmd_stencil_check(const RunConfig& cfg, std::ostream& log);
int cmd_train(const RunConfig& cfg, std::ostream& log);
int cmd_rollout(const RunConfig& cfg, std::ostream& log);
int cmd_eval(const RunConfig& cfg, std::ostream& log);

}  // namespace meshderiv
