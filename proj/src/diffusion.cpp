#include "meshderiv/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "meshderiv/errors.hpp"
#include "meshderiv/integrator.hpp"

namespace meshderiv {

double diffusion_stability_number(const MlsOperatorSet& ops, const Neighborhood& nbr, double k, double ux, double uy,
                                  double dt_sub) {
    double lap = 0.0, grad = 0.0;
    for (std::size_t i = 0; i < nbr.n_nodes(); ++i) {
        double sw = 0.0, sc = 0.0;
        for (std::size_t e = nbr.begin(i); e < nbr.end(i); ++e) {
            sw += std::abs(ops.laplacian.weights[e]);
            sc += norm(ops.gradient.coeff[e]);
        }
        lap = std::max(lap, sw);
        grad = std::max(grad, sc);
    }
    return dt_sub * (std::abs(k) * lap + std::hypot(ux, uy) * grad);
}

TrajectoryCase generate_diffusion_case(const DiffusionSpec& spec, const DiffusionCaseSpec& c, const std::string& id) {
    if (spec.n_steps < 1 || spec.substeps < 1 || !(spec.dt > 0.0) || c.k < 0.0) {
        throw InvalidArgument("diffusion case needs positive dt, steps, substeps and k >= 0");
    }
    TrajectoryCase tc;
    tc.id = id;
    tc.graph = make_perturbed_mesh(spec.nx, spec.ny, spec.extent, spec.jitter, c.mesh_seed, spec.k_neighbors);
    tc.channels = {"s"};
    tc.globals.set("k", c.k);
    tc.globals.set("u_x", c.ux);
    tc.globals.set("u_y", c.uy);
    tc.globals.set("dt", spec.dt);

    const Neighborhood nbr(tc.graph.mesh, tc.graph.edges);
    const MlsOperatorSet ops = build_mls_operators(nbr);
    const double h = spec.dt / spec.substeps;
    const double stab = diffusion_stability_number(ops, nbr, c.k, c.ux, c.uy, h);
    if (stab > 1.0) {
        std::ostringstream os;
        os << "diffusion substep " << h << " s violates the stability bound (number " << stab << " > 1, max substep "
           << h / stab << " s)";
        throw InvalidArgument(os.str());
    }

    const auto n = static_cast<Eigen::Index>(tc.graph.mesh.n_nodes());
    Field s(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec2 p = tc.graph.mesh.positions[static_cast<std::size_t>(i)];
        double v = 0.0;
        for (const auto& b : c.bumps) {
            const double r2 = (p.x - b.x) * (p.x - b.x) + (p.y - b.y) * (p.y - b.y);
            v += b.amplitude * std::exp(-r2 / (b.width * b.width));
        }
        s(i, 0) = v;
    }

    const Derivative f = [&](const Field& x) -> Field {
        Field out = c.k * apply_laplacian(ops.laplacian, nbr, x);
        if (c.ux != 0.0 || c.uy != 0.0) {
            const Field g = apply_gradient(ops.gradient, nbr, x);
            out -= c.ux * g.col(0) + c.uy * g.col(1);
        }
        return out;
    };
    tc.frames.push_back({s, 0.0});
    for (int t = 1; t <= spec.n_steps; ++t) {
        for (int k = 0; k < spec.substeps; ++k) s = step(IntegratorKind::RK4, f, s, h);
        tc.frames.push_back({s, t * spec.dt});
    }
    return tc;
}

DiffusionCaseSpec sample_diffusion_case(const DiffusionSpec& spec, int index) {
    std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(index) + 1);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    DiffusionCaseSpec c;
    c.k = spec.k_min + (spec.k_max - spec.k_min) * U(rng);
    c.ux = spec.u_max * (2.0 * U(rng) - 1.0);
    c.uy = spec.u_max * (2.0 * U(rng) - 1.0);
    c.mesh_seed = rng();
    const int n_bumps = 1 + static_cast<int>(U(rng) * 3.0);
    const double lo = 0.3 * spec.extent, span = 0.4 * spec.extent;
    for (int b = 0; b < n_bumps; ++b) {
        GaussianBump g;
        g.x = lo + span * U(rng);
        g.y = lo + span * U(rng);
        g.amplitude = 0.5 + 0.5 * U(rng);
        g.width = spec.extent * (0.08 + 0.07 * U(rng));
        c.bumps.push_back(g);
    }
    return c;
}

TrajectoryDataset generate_diffusion_dataset(const DiffusionSpec& spec) {
    if (spec.n_train < 0 || spec.n_val < 0 || spec.n_test < 0 || spec.n_cases() < 1) {
        throw InvalidArgument("diffusion dataset needs at least one case");
    }
    TrajectoryDataset ds;
    for (int i = 0; i < spec.n_cases(); ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "diff_%03d", i);
        TrajectoryCase tc = generate_diffusion_case(spec, sample_diffusion_case(spec, i), id);
        tc.split = i < spec.n_train ? Split::Train : i < spec.n_train + spec.n_val ? Split::Val : Split::Test;
        ds.cases.push_back(std::move(tc));
    }
    return ds;
}

}  // namespace meshderiv
