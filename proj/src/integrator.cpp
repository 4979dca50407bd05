#include "meshderiv/integrator.hpp"

#include "meshderiv/errors.hpp"

namespace meshderiv {

const char* integrator_name(IntegratorKind k) {
    switch (k) {
        case IntegratorKind::Euler: return "euler";
        case IntegratorKind::Heun: return "heun";
        case IntegratorKind::RK4: return "rk4";
    }
    return "euler";
}

IntegratorKind parse_integrator(const std::string& s) {
    if (s == "euler") return IntegratorKind::Euler;
    if (s == "heun") return IntegratorKind::Heun;
    if (s == "rk4") return IntegratorKind::RK4;
    throw InvalidArgument("unknown integrator '" + s + "'");
}

const ButcherTableau& tableau(IntegratorKind k) {
    using Rows = std::vector<std::vector<double>>;
    static const ButcherTableau euler{Rows{std::vector<double>{}}, {1.0}};
    static const ButcherTableau heun{Rows{std::vector<double>{}, {1.0}}, {0.5, 0.5}};
    static const ButcherTableau rk4{Rows{std::vector<double>{}, {0.5}, {0.0, 0.5}, {0.0, 0.0, 1.0}},
                                    {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0}};
    switch (k) {
        case IntegratorKind::Euler: return euler;
        case IntegratorKind::Heun: return heun;
        case IntegratorKind::RK4: return rk4;
    }
    return euler;
}

Field step(IntegratorKind kind, const Derivative& f, const Field& s, double dt, std::size_t step_index) {
    if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
    const ButcherTableau& tab = tableau(kind);
    std::vector<Field> k;
    k.reserve(tab.stages());
    Field out = s;
    for (std::size_t i = 0; i < tab.stages(); ++i) {
        Field u = s;
        for (std::size_t j = 0; j < tab.a[i].size(); ++j) {
            if (tab.a[i][j] != 0.0) u += (dt * tab.a[i][j]) * k[j];
        }
        k.push_back(f(u));
        out += (dt * tab.b[i]) * k.back();
    }
    if (!out.allFinite()) throw DivergenceError(step_index);
    return out;
}

}  // namespace meshderiv
