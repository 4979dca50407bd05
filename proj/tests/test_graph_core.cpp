/**
 * @file test_graph_core.cpp
 * @brief Meshes, neighborhoods, datasets and the on-disk containers.
 */
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "meshderiv/dataset.hpp"
#include "meshderiv/errors.hpp"
#include "meshderiv/mesh.hpp"

using namespace meshderiv;

namespace {

TrajectoryCase small_case(const std::string& id, int frames = 3) {
    TrajectoryCase c;
    c.id = id;
    c.graph = make_regular_grid(3, 3, 1.0);
    c.channels = {"a", "b"};
    c.globals.set("k", 0.5);
    c.globals.set("dt", 0.1);
    for (int k = 0; k < frames; ++k) {
        StateField f;
        f.values = Field::Constant(9, 2, 1.0 + k);
        f.values(4, 1) = -0.25 * k;
        f.time = 0.1 * k;
        c.frames.push_back(f);
    }
    c.split = Split::Train;
    return c;
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("meshderiv_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("regular grid: node count, spacing and extent") {
    const MeshGraph g = make_regular_grid(64, 64, 0.5);
    CHECK(g.mesh.n_nodes() == 4096);
    const double h = 0.5 / 64;
    double lo = 1e9, hi = -1e9;
    for (const Vec2& p : g.mesh.positions) {
        lo = std::min({lo, p.x, p.y});
        hi = std::max({hi, p.x, p.y});
    }
    CHECK(lo == doctest::Approx(0.5 * h));
    CHECK(hi == doctest::Approx(0.5 - 0.5 * h));

    const Neighborhood nbr(g.mesh, g.edges);
    for (const Vec2& d : nbr.displacements()) {
        CHECK(std::abs(norm(d) - h) <= 2 * std::numeric_limits<double>::epsilon() * h);
    }
}

TEST_CASE("regular grid: smallest grid and diagonal connectivity") {
    const MeshGraph g = make_regular_grid(2, 2, 1.0);
    CHECK(g.mesh.n_nodes() == 4);
    CHECK(g.edges.size() == 8);
    CHECK(g.edges.symmetric);
    CHECK_NOTHROW(g.edges.validate(4));

    const MeshGraph d = make_regular_grid(3, 3, 1.0, true);
    const Neighborhood nbr(d.mesh, d.edges);
    CHECK(nbr.degree(4) == 8);

    CHECK_THROWS_AS(make_regular_grid(3, 3, 0.0), InvalidArgument);
    CHECK_THROWS_AS(make_regular_grid(3, 3, -1.0), InvalidArgument);
    CHECK_THROWS_AS(make_regular_grid(1, 3, 1.0), InvalidArgument);
}

TEST_CASE("perturbed mesh: zero jitter, determinism, degree") {
    const MeshGraph reg = make_regular_grid(10, 10, 1.0);
    const MeshGraph z = make_perturbed_mesh(10, 10, 1.0, 0.0, 7);
    CHECK(z.mesh.positions == reg.mesh.positions);

    const MeshGraph a = make_perturbed_mesh(12, 12, 1.0, 0.3, 42, 8);
    const MeshGraph b = make_perturbed_mesh(12, 12, 1.0, 0.3, 42, 8);
    std::ostringstream sa, sb;
    write_mesh_text(sa, a);
    write_mesh_text(sb, b);
    CHECK(sa.str() == sb.str());
    CHECK(a.mesh.positions == b.mesh.positions);
    CHECK(a.edges.edges == b.edges.edges);

    const MeshGraph c = make_perturbed_mesh(12, 12, 1.0, 0.3, 43, 8);
    CHECK(c.mesh.positions != a.mesh.positions);

    const Neighborhood nbr(a.mesh, a.edges);
    for (std::size_t i = 0; i < nbr.n_nodes(); ++i) CHECK(nbr.degree(i) == 8);
    double dmin = 1e9;
    for (std::size_t i = 0; i < a.mesh.n_nodes(); ++i) {
        for (std::size_t j = i + 1; j < a.mesh.n_nodes(); ++j) {
            dmin = std::min(dmin, norm(a.mesh.positions[i] - a.mesh.positions[j]));
        }
    }
    CHECK(dmin > 0.0);
    CHECK_NOTHROW(a.mesh.validate());

    CHECK_THROWS_AS(make_perturbed_mesh(10, 10, 1.0, 0.5, 1), InvalidArgument);
    CHECK_THROWS_AS(make_perturbed_mesh(10, 10, 1.0, -0.1, 1), InvalidArgument);
}

TEST_CASE("neighborhood: grid geometry and antisymmetry") {
    const MeshGraph g = make_regular_grid(3, 3, 3.0);
    const Neighborhood nbr = build_neighborhoods(g.mesh, g.edges);
    CHECK(nbr.degree(4) == 4);
    std::set<std::pair<double, double>> got;
    const auto tgt = nbr.targets();
    const auto disp = nbr.displacements();
    for (std::size_t e = nbr.begin(4); e < nbr.end(4); ++e) {
        got.insert({disp[e].x, disp[e].y});
        CHECK(disp[e] == g.mesh.positions[tgt[e]] - g.mesh.positions[4]);
    }
    const std::set<std::pair<double, double>> want = {{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}};
    CHECK(got == want);

    const MeshGraph p = make_perturbed_mesh(9, 9, 1.0, 0.4, 3);
    EdgeSet sym;
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
    for (auto [i, j] : p.edges.edges) {
        if (seen.insert({i, j}).second) sym.edges.emplace_back(i, j);
        if (seen.insert({j, i}).second) sym.edges.emplace_back(j, i);
    }
    sym.symmetric = true;
    CHECK_NOTHROW(sym.validate(p.mesh.n_nodes()));
    const Neighborhood sn(p.mesh, sym);
    const auto src = sn.sources();
    const auto t2 = sn.targets();
    const auto d2 = sn.displacements();
    std::map<std::pair<std::uint32_t, std::uint32_t>, Vec2> by_pair;
    for (std::size_t e = 0; e < sn.n_edges(); ++e) by_pair[{src[e], t2[e]}] = d2[e];
    for (const auto& [k, d] : by_pair) {
        const Vec2 r = by_pair.at({k.second, k.first});
        CHECK(d.x + r.x == 0.0);
        CHECK(d.y + r.y == 0.0);
    }
}

TEST_CASE("neighborhood: isolated node and invalid edge sets") {
    Mesh m;
    m.positions = {{0, 0}, {1, 0}, {0, 1}, {5, 5}};
    EdgeSet e;
    e.edges = {{0, 1}, {1, 0}, {0, 2}, {2, 0}, {1, 2}, {2, 1}};
    CHECK_THROWS_AS(Neighborhood(m, e), IsolatedNodeError);
    try {
        Neighborhood bad(m, e);
    } catch (const IsolatedNodeError& err) {
        CHECK(err.node == 3);
    }

    EdgeSet self;
    self.edges = {{0, 0}};
    CHECK_THROWS_AS(self.validate(4), InvalidArgument);
    EdgeSet range;
    range.edges = {{0, 9}};
    CHECK_THROWS_AS(range.validate(4), InvalidArgument);
    EdgeSet asym;
    asym.edges = {{0, 1}};
    asym.symmetric = true;
    CHECK_THROWS_AS(asym.validate(4), InvalidArgument);
}

TEST_CASE("mesh validation") {
    Mesh two;
    two.positions = {{0, 0}, {1, 0}};
    CHECK_THROWS_AS(two.validate(), InvalidArgument);
    Mesh dup;
    dup.positions = {{0, 0}, {1, 0}, {0, 0}};
    CHECK_THROWS_AS(dup.validate(), InvalidArgument);
    Mesh nan;
    nan.positions = {{0, 0}, {1, 0}, {std::nan(""), 0}};
    CHECK_THROWS_AS(nan.validate(), InvalidArgument);
}

TEST_CASE("neighborhood fingerprint follows positions") {
    const MeshGraph g = make_perturbed_mesh(6, 6, 1.0, 0.2, 5);
    const Neighborhood a(g.mesh, g.edges);
    const Neighborhood b(g.mesh, g.edges);
    CHECK(a.fingerprint() == b.fingerprint());
    std::vector<Vec2> moved = g.mesh.positions;
    moved[3].x += 1e-9;
    CHECK(a.with_positions(moved).fingerprint() != a.fingerprint());
    CHECK_THROWS_AS(a.with_positions(std::vector<Vec2>(3)), InvalidArgument);
}

TEST_CASE("mesh text round trip") {
    const MeshGraph g = make_perturbed_mesh(5, 4, 2.0, 0.3, 11, 4);
    std::ostringstream os;
    write_mesh_text(os, g);
    std::istringstream is(os.str());
    const MeshGraph r = read_mesh_text(is);
    CHECK(r.mesh.positions == g.mesh.positions);
    CHECK(r.edges.edges == g.edges.edges);

    std::istringstream junk("nodes 2\n0 0\n");
    CHECK_THROWS_AS(read_mesh_text(junk), IoError);
}

TEST_CASE("validate_dataset reports violations as data") {
    TrajectoryDataset ds;
    ds.cases = {small_case("a"), small_case("b")};
    CHECK(validate_dataset(ds).empty());

    TrajectoryDataset bad_time = ds;
    bad_time.cases[1].frames[2].time = 0.05;
    auto v = validate_dataset(bad_time);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("b") != std::string::npos);
    CHECK(v[0].find("2") != std::string::npos);

    TrajectoryDataset bad_shape = ds;
    bad_shape.cases[0].frames[1].values = Field::Zero(8, 2);
    v = validate_dataset(bad_shape);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("shape") != std::string::npos);

    TrajectoryDataset bad_dt = ds;
    bad_dt.cases[0].globals = GlobalParams{};
    bad_dt.cases[0].globals.set("dt", -1.0);
    CHECK(!validate_dataset(bad_dt).empty());
}

TEST_CASE("global params keep insertion order") {
    GlobalParams g;
    g.set("p_L", 1e5);
    g.set("rho_L", 1.0);
    g.set("dt", 1e-5);
    g.set("rho_L", 2.0);
    CHECK(g.names() == std::vector<std::string>{"p_L", "rho_L", "dt"});
    CHECK(g.at("rho_L") == 2.0);
    CHECK(!g.get("missing"));
    CHECK_THROWS_AS(g.at("missing"), InvalidArgument);
}

TEST_CASE("case container round trip is bit exact") {
    TrajectoryCase c = small_case("round");
    c.frames[1].values(2, 0) = 1.0 / 3.0;
    c.split = Split::Test;
    std::ostringstream os;
    write_case(os, c);
    std::istringstream is(os.str());
    const TrajectoryCase r = read_case(is);
    CHECK(r.id == c.id);
    CHECK(r.channels == c.channels);
    CHECK(r.globals == c.globals);
    CHECK(r.split == Split::Test);
    CHECK(r.graph.mesh.positions == c.graph.mesh.positions);
    CHECK(r.graph.edges.edges == c.graph.edges.edges);
    REQUIRE(r.frames.size() == c.frames.size());
    for (std::size_t k = 0; k < c.frames.size(); ++k) {
        CHECK(r.frames[k].time == c.frames[k].time);
        CHECK(r.frames[k].values == c.frames[k].values);
    }
    std::ostringstream again;
    write_case(again, r);
    CHECK(again.str() == os.str());

    std::istringstream bad("not a container");
    CHECK_THROWS_AS(read_case(bad), IoError);
    const std::string bytes = os.str();
    std::istringstream cut(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(read_case(cut), IoError);
}

TEST_CASE("dataset directory round trip") {
    const auto dir = scratch_dir("dataset");
    TrajectoryDataset ds;
    ds.cases = {small_case("c0"), small_case("c1", 4)};
    ds.cases[1].split = Split::Val;
    save_dataset(dir, ds);
    CHECK(std::filesystem::exists(dir / "cases.csv"));
    CHECK(std::filesystem::exists(dir / "c0.mdtraj"));
    const TrajectoryDataset r = load_dataset(dir);
    REQUIRE(r.cases.size() == 2);
    CHECK(r.cases[1].id == "c1");
    CHECK(r.cases[1].frames.size() == 4);
    CHECK(r.by_split(Split::Val).size() == 1);
    CHECK(r.by_split(Split::Train).size() == 1);
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(load_dataset(dir), IoError);
}

TEST_CASE("split labels") {
    for (Split s : {Split::Train, Split::Val, Split::Test}) CHECK(parse_split(split_name(s)) == s);
    CHECK_THROWS_AS(parse_split("holdout"), InvalidArgument);
}
