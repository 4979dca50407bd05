/**
 * @file diffusion.hpp
 * @brief Synthetic advection-diffusion trajectories on jittered meshes.
 *
 * Ground truth integrates ds/dt = k lap(s) - u . grad(s) with RK4 on the MLS
 * operators of the case mesh, using `substeps` fine steps per exported frame.
 * The data is therefore self-consistent with the operators rather than an
 * independent reference solution.
 */
#pragma once

#include <cstdint>
#include <vector>

#include "meshderiv/dataset.hpp"
#include "meshderiv/mls.hpp"

namespace meshderiv {

struct GaussianBump {
    double x, y, amplitude, width;
};

struct DiffusionCaseSpec {
    double k = 0.005;  // m^2/s
    double ux = 0.0;   // m/s
    double uy = 0.0;
    std::uint64_t mesh_seed = 1;
    std::vector<GaussianBump> bumps;
};

struct DiffusionSpec {
    int n_train = 16;
    int n_val = 2;
    int n_test = 4;
    int nx = 22;  // 484 nodes
    int ny = 22;
    double extent = 1.0;
    double jitter = 0.3;
    int k_neighbors = 8;
    double k_min = 0.001;
    double k_max = 0.005;
    double u_max = 0.4;  // per component
    double dt = 0.01;    // s per frame
    int n_steps = 20;    // frames after the initial one
    int substeps = 10;
    std::uint64_t seed = 1;

    int n_cases() const { return n_train + n_val + n_test; }
};

/// dt_sub * (k * max_i sum_j |w_ij| + |u| * max_i sum_j |c_ij|); explicit
/// steps are accepted when this is at most 1.
double diffusion_stability_number(const MlsOperatorSet& ops, const Neighborhood& nbr, double k, double ux, double uy,
                                  double dt_sub);

/// One trajectory. Throws InvalidArgument (with the computed bound) when the
/// stability number exceeds 1.
TrajectoryCase generate_diffusion_case(const DiffusionSpec& spec, const DiffusionCaseSpec& c, const std::string& id);

/// Seeded parameters for case `index` of the dataset.
DiffusionCaseSpec sample_diffusion_case(const DiffusionSpec& spec, int index);

/// Cases 0..n_train-1 are train, then val, then test. Deterministic in the seed.
TrajectoryDataset generate_diffusion_dataset(const DiffusionSpec& spec);

}  // namespace meshderiv
