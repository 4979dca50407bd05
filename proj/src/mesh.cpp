/**
 * @file mesh.cpp
 * @brief Mesh generators, neighborhoods and the plain-text mesh format.
 */

#include "meshderiv/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "meshderiv/errors.hpp"

namespace meshderiv {

double norm(Vec2 v) { return std::hypot(v.x, v.y); }

void Mesh::validate() const {
    if (positions.size() < 3) {
        throw InvalidArgument("mesh needs at least 3 nodes, got " + std::to_string(positions.size()));
    }
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (!std::isfinite(positions[i].x) || !std::isfinite(positions[i].y)) {
            throw InvalidArgument("non-finite position at node " + std::to_string(i));
        }
    }
    // sweep in x order; only pairs within 1e-12 in x can coincide
    std::vector<std::size_t> order(positions.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return positions[a].x < positions[b].x; });
    constexpr double tol = 1e-12;
    for (std::size_t a = 0; a < order.size(); ++a) {
        for (std::size_t b = a + 1; b < order.size(); ++b) {
            const Vec2 pa = positions[order[a]];
            const Vec2 pb = positions[order[b]];
            if (pb.x - pa.x > tol) break;
            if (norm(pb - pa) <= tol) {
                throw InvalidArgument("coincident nodes " + std::to_string(order[a]) + " and " +
                                      std::to_string(order[b]));
            }
        }
    }
}

void EdgeSet::validate(std::size_t n_nodes) const {
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const auto [i, j] = edges[e];
        if (i >= n_nodes || j >= n_nodes) {
            throw InvalidArgument("edge " + std::to_string(e) + " index out of range");
        }
        if (i == j) throw InvalidArgument("self-loop at node " + std::to_string(i));
    }
    if (symmetric) {
        auto sorted = edges;
        std::sort(sorted.begin(), sorted.end());
        for (const auto& [i, j] : sorted) {
            if (!std::binary_search(sorted.begin(), sorted.end(), std::make_pair(j, i))) {
                throw InvalidArgument("edge set flagged symmetric but (" + std::to_string(j) + ", " +
                                      std::to_string(i) + ") is missing");
            }
        }
    }
}

MeshGraph make_regular_grid(int nx, int ny, double extent, bool diagonals) {
    if (nx < 2 || ny < 2) throw InvalidArgument("grid needs nx, ny >= 2");
    if (!(extent > 0.0) || !std::isfinite(extent)) throw InvalidArgument("grid extent must be positive");

    MeshGraph g;
    const double hx = extent / nx;
    const double hy = extent / ny;
    g.mesh.positions.reserve(static_cast<std::size_t>(nx) * ny);
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            g.mesh.positions.push_back({(ix + 0.5) * hx, (iy + 0.5) * hy});
        }
    }
    auto id = [nx](int ix, int iy) { return static_cast<std::uint32_t>(iy * nx + ix); };
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    if (!diagonals && dx != 0 && dy != 0) continue;
                    const int jx = ix + dx;
                    const int jy = iy + dy;
                    if (jx < 0 || jx >= nx || jy < 0 || jy >= ny) continue;
                    g.edges.edges.emplace_back(id(ix, iy), id(jx, jy));
                }
            }
        }
    }
    g.edges.symmetric = true;
    return g;
}

EdgeSet knn_edges(const Mesh& mesh, int k) {
    const std::size_t n = mesh.n_nodes();
    if (k < 1 || static_cast<std::size_t>(k) >= n) throw InvalidArgument("k must be in [1, n_nodes)");
    EdgeSet out;
    out.edges.reserve(n * k);
    std::vector<std::pair<double, std::uint32_t>> cand(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t c = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const Vec2 d = mesh.positions[j] - mesh.positions[i];
            cand[c++] = {d.x * d.x + d.y * d.y, static_cast<std::uint32_t>(j)};
        }
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        std::sort(cand.begin(), cand.begin() + k,
                  [](const auto& a, const auto& b) { return a.second < b.second; });
        for (int m = 0; m < k; ++m) out.edges.emplace_back(static_cast<std::uint32_t>(i), cand[m].second);
    }
    out.symmetric = false;
    return out;
}

MeshGraph make_perturbed_mesh(int nx, int ny, double extent, double jitter, std::uint64_t seed, int k) {
    if (!(jitter >= 0.0) || jitter >= 0.5) throw InvalidArgument("jitter must lie in [0, 0.5)");
    MeshGraph g = make_regular_grid(nx, ny, extent, false);
    const double hx = extent / nx;
    const double hy = extent / ny;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            // draw for every node so the stream does not depend on the boundary
            const double ox = u(rng);
            const double oy = u(rng);
            if (ix == 0 || iy == 0 || ix == nx - 1 || iy == ny - 1) continue;
            Vec2& p = g.mesh.positions[static_cast<std::size_t>(iy) * nx + ix];
            p.x += jitter * hx * ox;
            p.y += jitter * hy * oy;
        }
    }
    g.edges = knn_edges(g.mesh, k);
    return g;
}

std::uint64_t fingerprint_geometry(std::span<const Vec2> positions, std::span<const std::uint32_t> sources,
                                   std::span<const std::uint32_t> targets) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t bytes) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t b = 0; b < bytes; ++b) {
            h ^= p[b];
            h *= 1099511628211ULL;
        }
    };
    mix(positions.data(), positions.size_bytes());
    mix(sources.data(), sources.size_bytes());
    mix(targets.data(), targets.size_bytes());
    return h;
}

Neighborhood::Neighborhood(const Mesh& mesh, const EdgeSet& edges) {
    const std::size_t n = mesh.n_nodes();
    edges.validate(n);
    positions_ = mesh.positions;

    std::vector<std::size_t> count(n, 0);
    for (const auto& [i, j] : edges.edges) ++count[i];
    for (std::size_t i = 0; i < n; ++i) {
        if (count[i] == 0) throw IsolatedNodeError(i);
    }
    offsets_.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) offsets_[i + 1] = offsets_[i] + count[i];

    const std::size_t m = edges.size();
    sources_.resize(m);
    targets_.resize(m);
    edge_ids_.resize(m);
    std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t e = 0; e < m; ++e) {
        const auto [i, j] = edges.edges[e];
        const std::size_t slot = fill[i]++;
        sources_[slot] = i;
        targets_[slot] = j;
        edge_ids_[slot] = e;
    }
    compute_geometry();
}

void Neighborhood::compute_geometry() {
    disp_.resize(targets_.size());
    for (std::size_t e = 0; e < targets_.size(); ++e) {
        disp_[e] = positions_[targets_[e]] - positions_[sources_[e]];
    }
    fingerprint_ = fingerprint_geometry(positions_, sources_, targets_);
}

Neighborhood Neighborhood::with_positions(std::span<const Vec2> positions) const {
    if (positions.size() != positions_.size()) {
        throw InvalidArgument("node count mismatch: " + std::to_string(positions.size()) + " vs " +
                              std::to_string(positions_.size()));
    }
    Neighborhood out = *this;
    out.positions_.assign(positions.begin(), positions.end());
    out.compute_geometry();
    return out;
}

Neighborhood build_neighborhoods(const Mesh& mesh, const EdgeSet& edges) { return Neighborhood(mesh, edges); }

void write_mesh_text(std::ostream& os, const MeshGraph& g) {
    std::ostringstream buf;
    buf.precision(17);
    buf << "nodes " << g.mesh.n_nodes() << '\n';
    for (const Vec2& p : g.mesh.positions) buf << p.x << ' ' << p.y << '\n';
    buf << "edges " << g.edges.size() << '\n';
    for (const auto& [i, j] : g.edges.edges) buf << i << ' ' << j << '\n';
    os << buf.str();
}

MeshGraph read_mesh_text(std::istream& is) {
    MeshGraph g;
    std::string line;
    auto next = [&]() -> bool {
        while (std::getline(is, line)) {
            if (line.empty() || line[0] == '#') continue;
            return true;
        }
        return false;
    };
    auto header = [&](const char* word) -> std::size_t {
        if (!next()) throw IoError(std::string("mesh text: missing '") + word + "' header");
        std::istringstream ss(line);
        std::string w;
        std::size_t n = 0;
        if (!(ss >> w >> n) || w != word) throw IoError(std::string("mesh text: expected '") + word + " N'");
        return n;
    };
    const std::size_t n = header("nodes");
    g.mesh.positions.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!next()) throw IoError("mesh text: truncated node list");
        std::istringstream ss(line);
        if (!(ss >> g.mesh.positions[i].x >> g.mesh.positions[i].y)) {
            throw IoError("mesh text: bad node line " + std::to_string(i));
        }
    }
    const std::size_t m = header("edges");
    g.edges.edges.resize(m);
    for (std::size_t e = 0; e < m; ++e) {
        if (!next()) throw IoError("mesh text: truncated edge list");
        std::istringstream ss(line);
        if (!(ss >> g.edges.edges[e].first >> g.edges.edges[e].second)) {
            throw IoError("mesh text: bad edge line " + std::to_string(e));
        }
    }
    // symmetric flag is inferred
    g.edges.symmetric = true;
    try {
        g.edges.validate(n);
    } catch (const InvalidArgument&) {
        g.edges.symmetric = false;
        g.edges.validate(n);
    }
    return g;
}

}  // namespace meshderiv
