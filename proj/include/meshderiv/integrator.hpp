/**
 * @file integrator.hpp
 * @brief Explicit Runge-Kutta steps (Euler, Heun, classical RK4).
 */
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "meshderiv/mesh.hpp"

namespace meshderiv {

enum class IntegratorKind { Euler, Heun, RK4 };

const char* integrator_name(IntegratorKind k);
IntegratorKind parse_integrator(const std::string& s);

/// Stage inputs u_i = s + dt * sum_{j<i} a[i][j] k_j, stages k_i = f(u_i),
/// result s + dt * sum_i b[i] k_i.
struct ButcherTableau {
    std::vector<std::vector<double>> a;
    std::vector<double> b;

    std::size_t stages() const { return b.size(); }
};

const ButcherTableau& tableau(IntegratorKind k);

using Derivative = std::function<Field(const Field&)>;

/// One explicit step. Throws InvalidArgument for dt <= 0 and DivergenceError
/// (carrying `step_index`) when the result is not finite.
Field step(IntegratorKind kind, const Derivative& f, const Field& s, double dt, std::size_t step_index = 0);

}  // namespace meshderiv
