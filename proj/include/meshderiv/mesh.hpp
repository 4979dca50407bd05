/**
 * @file mesh.hpp
 * @brief Node sets, directed edge sets, and per-node neighborhoods in 2D.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace meshderiv {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(Vec2 a, Vec2 b) = default;
};

double norm(Vec2 v);

/// Node values, one row per node and one column per channel.
using Field = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Node positions of a 2D discrete domain (meters).
struct Mesh {
    std::vector<Vec2> positions;

    std::size_t n_nodes() const { return positions.size(); }

    /// Throws InvalidArgument on non-finite positions, fewer than 3 nodes, or
    /// two nodes closer than 1e-12 m.
    void validate() const;
};

/// Directed edges (i, j): j is a neighbor of i.
struct EdgeSet {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    bool symmetric = false;

    std::size_t size() const { return edges.size(); }
    void validate(std::size_t n_nodes) const;
};

struct MeshGraph {
    Mesh mesh;
    EdgeSet edges;
};

/// Cell-centered nx*ny grid over [0, extent]^2, node index = iy*nx + ix.
/// 4-connected, plus diagonals when requested. Edges are symmetric.
MeshGraph make_regular_grid(int nx, int ny, double extent, bool diagonals = false);

/// Regular grid whose interior nodes are jittered by a seeded uniform offset of
/// up to `jitter` grid spacings per axis; edges are the k nearest neighbors.
MeshGraph make_perturbed_mesh(int nx, int ny, double extent, double jitter, std::uint64_t seed, int k = 8);

/// Directed k-nearest-neighbor edges, ties broken by node index.
EdgeSet knn_edges(const Mesh& mesh, int k);

/// CSR view of an edge set with displacements dr_ij = p_j - p_i.
/// Edges are ordered by source node (stable with respect to the EdgeSet order);
/// every per-edge array in the library is aligned with this ordering.
class Neighborhood {
public:
    Neighborhood() = default;
    Neighborhood(const Mesh& mesh, const EdgeSet& edges);

    std::size_t n_nodes() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
    std::size_t n_edges() const { return targets_.size(); }

    std::size_t begin(std::size_t i) const { return offsets_[i]; }
    std::size_t end(std::size_t i) const { return offsets_[i + 1]; }
    std::size_t degree(std::size_t i) const { return offsets_[i + 1] - offsets_[i]; }

    std::span<const std::size_t> offsets() const { return offsets_; }
    std::span<const std::uint32_t> sources() const { return sources_; }
    std::span<const std::uint32_t> targets() const { return targets_; }
    std::span<const Vec2> displacements() const { return disp_; }
    /// Index into the originating EdgeSet for each CSR edge.
    std::span<const std::size_t> edge_ids() const { return edge_ids_; }
    const std::vector<Vec2>& positions() const { return positions_; }

    /// Hash of positions and edges; operators built here must match it.
    std::uint64_t fingerprint() const { return fingerprint_; }

    /// Same topology, new node positions.
    Neighborhood with_positions(std::span<const Vec2> positions) const;

private:
    void compute_geometry();

    std::vector<std::size_t> offsets_;
    std::vector<std::uint32_t> sources_;
    std::vector<std::uint32_t> targets_;
    std::vector<std::size_t> edge_ids_;
    std::vector<Vec2> disp_;
    std::vector<Vec2> positions_;
    std::uint64_t fingerprint_ = 0;
};

/// Same as constructing a Neighborhood: throws IsolatedNodeError when a node
/// has no outgoing edge.
Neighborhood build_neighborhoods(const Mesh& mesh, const EdgeSet& edges);

std::uint64_t fingerprint_geometry(std::span<const Vec2> positions, std::span<const std::uint32_t> sources,
                                   std::span<const std::uint32_t> targets);

/// Plain-text interchange: "nodes N", N lines "x y", "edges M", M lines "i j".
/// Lines starting with '#' are comments.
void write_mesh_text(std::ostream& os, const MeshGraph& g);
MeshGraph read_mesh_text(std::istream& is);

}  // namespace meshderiv
