#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "heatinv/mesh.hpp"
#include "heatinv/rng.hpp"
#include "heatinv/sparse.hpp"

using namespace heatinv;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("build_mesh counts and geometry", "[mesh]") {
    SECTION("h = 1/2") {
        const Mesh m = build_mesh(0.5);
        REQUIRE(m.n_dof == 1);
        REQUIRE(m.triangles.size() == 8);
        const Point p = m.nodes[m.dof_to_node[0]];
        REQUIRE(p[0] == Catch::Approx(0.5));
        REQUIRE(p[1] == Catch::Approx(0.5));
    }
    SECTION("h = 1/4") {
        const Mesh m = build_mesh(0.25);
        REQUIRE(m.n_dof == 9);
        REQUIRE(m.triangles.size() == 32);
    }
    SECTION("h = 1/64") {
        REQUIRE(build_mesh(1.0 / 64.0).n_dof == 3969);
    }
    SECTION("every triangle has signed area h^2/2") {
        const Mesh m = build_mesh(1.0 / 8.0);
        for (const auto& tri : m.triangles) {
            const auto geo = detail::element_geometry(m, tri);
            REQUIRE(geo.area == Catch::Approx(m.h * m.h / 2.0));
        }
    }
    SECTION("invalid h") {
        REQUIRE_THROWS_AS(build_mesh(0.3), ArgumentError);
        REQUIRE_THROWS_AS(build_mesh(1.0), ArgumentError);
        REQUIRE_THROWS_AS(build_mesh(-0.25), ArgumentError);
    }
}

TEST_CASE("mass matrix", "[mesh]") {
    SECTION("entries of the full mass matrix sum to the domain area") {
        const Mesh m = build_mesh(0.25);
        const SparseMatrix full = assemble_full_mass(m);
        double total = 0.0;
        for (double v : full.values) total += v;
        REQUIRE(total == Catch::Approx(1.0).epsilon(1e-12));
    }
    SECTION("single interior node at h = 1/2: M_11 = h^2/2") {
        const Mesh m = build_mesh(0.5);
        const SparseMatrix mass = assemble_mass(m);
        REQUIRE(mass.at(0, 0) == Catch::Approx(0.125));
    }
    SECTION("symmetric and positive definite") {
        const Mesh m = build_mesh(1.0 / 8.0);
        const SparseMatrix mass = assemble_mass(m);
        for (std::size_t i = 0; i < mass.n_rows; ++i)
            for (std::size_t k = mass.row_offsets[i]; k < mass.row_offsets[i + 1]; ++k)
                REQUIRE(mass.values[k] == mass.at(mass.col_indices[k], i));
        Rng rng(3);
        Vector b(m.n_dof);
        for (auto& v : b) v = rng.gaussian();
        REQUIRE_NOTHROW(cg_solve(mass, b));  // CG converging certifies SPD
        for (double v : mass.values) REQUIRE(v >= 0.0);
    }
}

TEST_CASE("stiffness matrix", "[mesh]") {
    SECTION("criss-cross P1 Laplacian at h = 1/2 reproduces the 5-point stencil diagonal") {
        const Mesh m = build_mesh(0.5);
        const SparseMatrix a = assemble_stiffness(m, ProblemCoefficients{});
        REQUIRE(a.at(0, 0) == Catch::Approx(4.0));
    }
    SECTION("constants lie in the kernel away from the boundary") {
        const Mesh m = build_mesh(1.0 / 8.0);
        const SparseMatrix a = assemble_stiffness(m, ProblemCoefficients{});
        const Vector ones(m.n_dof, 1.0);
        const Vector w = spmv(a, ones);
        for (std::size_t j = 2; j < m.cells_per_side - 1; ++j)
            for (std::size_t i = 2; i < m.cells_per_side - 1; ++i) {
                const auto dof = m.interior_dof_map[m.node_index(i, j)];
                REQUIRE(std::abs(w[static_cast<std::size_t>(dof)]) < 1e-12);
            }
    }
    SECTION("smallest eigenvalue of M^{-1} A approaches 2 pi^2") {
        // inverse power iteration on the pencil A v = mu M v
        const Mesh m = build_mesh(1.0 / 32.0);
        const SparseMatrix a = assemble_stiffness(m, ProblemCoefficients{});
        const SparseMatrix mass = assemble_mass(m);
        Vector x(m.n_dof, 1.0);
        double mu = 0.0;
        for (int it = 0; it < 25; ++it) {
            const Vector mx = spmv(mass, x);
            x = cg_solve(a, mx, CgConfig{1e-12, 0}, false, &x).x;
            const double nrm = std::sqrt(dot(x, spmv(mass, x)));
            scale(x, 1.0 / nrm);
            mu = dot(x, spmv(a, x)) / dot(x, spmv(mass, x));
        }
        REQUIRE(mu == Catch::Approx(2.0 * kPi * kPi).epsilon(0.01));
    }
    SECTION("nonpositive diffusion coefficient rejected") {
        const Mesh m = build_mesh(0.25);
        ProblemCoefficients bad;
        bad.a = ScalarField([](double x, double) { return x - 0.5; });
        REQUIRE_THROWS_AS(assemble_stiffness(m, bad), ArgumentError);
    }
}

TEST_CASE("point evaluation", "[mesh]") {
    const Mesh m = build_mesh(0.25);
    SECTION("hat function is 1 at its node and 0 at the others") {
        for (std::size_t d = 0; d < m.n_dof; ++d) {
            FieldVector hat(m);
            hat.coefficients[d] = 1.0;
            for (std::size_t e = 0; e < m.n_dof; ++e) {
                const Point p = m.nodes[m.dof_to_node[e]];
                const Vector v = evaluate_at_points(hat, {p});
                REQUIRE(v[0] == (d == e ? 1.0 : 0.0));
            }
        }
    }
    SECTION("P1 reproduces linear functions inside interior cells") {
        const Mesh fine = build_mesh(1.0 / 8.0);
        const FieldVector v = interpolate(fine, [](double x, double y) { return x + y; });
        for (const Point p : {Point{0.3, 0.55}, Point{0.51, 0.49}, Point{0.66, 0.3}}) {
            const Vector got = evaluate_at_points(v, {p});
            REQUIRE(got[0] == Catch::Approx(p[0] + p[1]).margin(1e-13));
        }
    }
    SECTION("zero field evaluates to zero, boundary points included") {
        const FieldVector z(m);
        const Vector got = evaluate_at_points(z, {{0.1, 0.9}, {0.0, 0.0}, {1.0, 0.37}});
        for (double v : got) REQUIRE(v == 0.0);
    }
    SECTION("nodal values are exact") {
        Rng rng(9);
        FieldVector v(m);
        for (auto& c : v.coefficients) c = rng.gaussian();
        for (std::size_t d = 0; d < m.n_dof; ++d) {
            const Vector got = evaluate_at_points(v, {m.nodes[m.dof_to_node[d]]});
            REQUIRE(got[0] == v.coefficients[d]);
        }
    }
    SECTION("points outside the closed square rejected") {
        const FieldVector z(m);
        REQUIRE_THROWS_AS(evaluate_at_points(z, {{1.01, 0.5}}), ArgumentError);
        REQUIRE_THROWS_AS(evaluate_at_points(z, {{0.5, -0.2}}), ArgumentError);
    }
}

TEST_CASE("discrete norms", "[mesh]") {
    const Mesh m = build_mesh(1.0 / 8.0);
    const DiscreteNorms norms(m);
    SECTION("zero field") {
        const FieldVector z(m);
        REQUIRE(norms.l2(z) == 0.0);
        REQUIRE(norms.h1(z) == 0.0);
        REQUIRE(norms.hminus1(z) == 0.0);
    }
    SECTION("homogeneity and ordering on random fields") {
        Rng rng(31);
        for (int t = 0; t < 100; ++t) {
            FieldVector v(m);
            for (auto& c : v.coefficients) c = rng.gaussian();
            const double l2 = norms.l2(v), h1 = norms.h1(v), hm1 = norms.hminus1(v);
            REQUIRE(hm1 <= l2 * (1.0 + 1e-10));
            REQUIRE(l2 <= h1 * (1.0 + 1e-10));  // discrete Poincare with C = 1
            const double alpha = -2.5;
            REQUIRE(norms.l2(alpha * v) == Catch::Approx(std::abs(alpha) * l2).epsilon(1e-12));
            REQUIRE(norms.h1(alpha * v) == Catch::Approx(std::abs(alpha) * h1).epsilon(1e-12));
            REQUIRE(norms.hminus1(alpha * v) == Catch::Approx(std::abs(alpha) * hm1).epsilon(1e-9));
        }
    }
    SECTION("free functions agree with the cached object") {
        FieldVector v(m);
        v.coefficients[10] = 1.0;
        REQUIRE(l2_norm(v) == Catch::Approx(norms.l2(v)));
        REQUIRE(h1_norm(v) == Catch::Approx(norms.h1(v)));
        REQUIRE(hminus1_norm(v) == Catch::Approx(norms.hminus1(v)).epsilon(1e-10));
    }
    SECTION("mesh mismatch rejected") {
        const Mesh other = build_mesh(0.25);
        REQUIRE_THROWS_AS(norms.l2(FieldVector(other)), ArgumentError);
    }
}

TEST_CASE("interpolation error decays at second order", "[mesh]") {
    auto u = [](double x, double y) { return std::sin(kPi * x) * std::sin(kPi * y); };
    auto err = [&](double h) {
        const Mesh m = build_mesh(h);
        const FieldVector diff = interpolate(m, u) - project_l2(m, u);
        return DiscreteNorms(m).l2(diff);
    };
    const double ratio = err(1.0 / 8.0) / err(1.0 / 16.0);
    REQUIRE(ratio >= 3.5);
    REQUIRE(ratio <= 4.5);
}
