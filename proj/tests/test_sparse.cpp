#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "heatinv/rng.hpp"
#include "heatinv/sparse.hpp"

using namespace heatinv;

namespace {

SparseMatrix dense_to_csr(const std::vector<std::vector<double>>& rows) {
    TripletBuilder b(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            if (rows[i][j] != 0.0) b.add(i, j, rows[i][j]);
    return b.build();
}

} // namespace

TEST_CASE("spmv basic cases", "[sparse]") {
    SECTION("identity") {
        const Vector x = {1.0, 2.0, 3.0};
        REQUIRE(spmv(sparse_identity(3), x) == x);
    }
    SECTION("2x2 hand arithmetic") {
        const SparseMatrix a = dense_to_csr({{2, 1}, {1, 2}});
        const Vector y = spmv(a, {1.0, 1.0});
        REQUIRE(y[0] == Catch::Approx(3.0));
        REQUIRE(y[1] == Catch::Approx(3.0));
    }
    SECTION("zero matrix") {
        SparseMatrix z;
        z.n_rows = z.n_cols = 4;
        z.row_offsets.assign(5, 0);
        const Vector y = spmv(z, {1.0, -2.0, 3.0, 4.0});
        for (double v : y) REQUIRE(v == 0.0);
    }
    SECTION("dimension mismatch") {
        REQUIRE_THROWS_AS(spmv(sparse_identity(3), Vector{1.0, 2.0}), ArgumentError);
    }
}

TEST_CASE("triplet builder canonicalizes", "[sparse]") {
    TripletBuilder b(3, 3);
    b.add(1, 2, 0.5);
    b.add(1, 0, 1.0);
    b.add(1, 2, 0.25);  // duplicate, must merge
    b.add(0, 0, 2.0);
    const SparseMatrix m = b.build();
    REQUIRE(m.row_offsets == std::vector<std::size_t>{0, 1, 3, 3});
    REQUIRE(m.col_indices == std::vector<std::size_t>{0, 0, 2});
    REQUIRE(m.at(1, 2) == Catch::Approx(0.75));
    for (std::size_t i = 0; i < m.n_rows; ++i)
        for (std::size_t k = m.row_offsets[i]; k + 1 < m.row_offsets[i + 1]; ++k)
            REQUIRE(m.col_indices[k] < m.col_indices[k + 1]);
    REQUIRE_THROWS_AS(b.add(3, 0, 1.0), ArgumentError);
}

TEST_CASE("spmv is linear", "[sparse]") {
    Rng rng(101);
    TripletBuilder b(20, 20);
    for (int k = 0; k < 120; ++k)
        b.add(static_cast<std::size_t>(rng.uniform() * 20), static_cast<std::size_t>(rng.uniform() * 20),
              rng.gaussian());
    const SparseMatrix a = b.build();
    Vector x(20), y(20);
    for (auto& v : x) v = rng.gaussian();
    for (auto& v : y) v = rng.gaussian();
    const double alpha = 1.7, beta = -0.3;
    Vector combo(20);
    for (std::size_t i = 0; i < 20; ++i) combo[i] = alpha * x[i] + beta * y[i];
    const Vector lhs = spmv(a, combo);
    const Vector ax = spmv(a, x), ay = spmv(a, y);
    for (std::size_t i = 0; i < 20; ++i)
        REQUIRE(lhs[i] == Catch::Approx(alpha * ax[i] + beta * ay[i]).margin(1e-12));
}

TEST_CASE("cg on simple systems", "[sparse]") {
    SECTION("identity") {
        const Vector b = {1, 2, 3, 4, 5};
        const CgResult r = cg_solve(sparse_identity(5), b);
        for (std::size_t i = 0; i < 5; ++i) REQUIRE(r.x[i] == Catch::Approx(b[i]));
    }
    SECTION("2x2") {
        const SparseMatrix a = dense_to_csr({{2, 1}, {1, 2}});
        const CgResult r = cg_solve(a, {3.0, 3.0});
        REQUIRE(r.x[0] == Catch::Approx(1.0).epsilon(1e-9));
        REQUIRE(r.x[1] == Catch::Approx(1.0).epsilon(1e-9));
    }
    SECTION("diagonal 1..100") {
        TripletBuilder b(100, 100);
        for (std::size_t i = 0; i < 100; ++i) b.add(i, i, static_cast<double>(i + 1));
        const CgResult r = cg_solve(b.build(), Vector(100, 1.0));
        for (std::size_t i = 0; i < 100; ++i)
            REQUIRE(std::abs(r.x[i] - 1.0 / static_cast<double>(i + 1)) < 1e-10);
    }
    SECTION("zero right-hand side") {
        const CgResult r = cg_solve(sparse_identity(4), Vector(4, 0.0));
        REQUIRE(r.iterations == 0);
        for (double v : r.x) REQUIRE(v == 0.0);
    }
}

TEST_CASE("cg on random SPD systems converges within the iteration bound", "[sparse]") {
    Rng rng(2024);
    for (const std::size_t n : {20u, 80u, 200u}) {
        // A = R^T R + eps I
        std::vector<Vector> r_rows(n, Vector(n));
        for (auto& row : r_rows)
            for (auto& v : row) v = rng.gaussian();
        TripletBuilder b(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < n; ++k) s += r_rows[k][i] * r_rows[k][j];
                if (i == j) s += 0.1;
                b.add(i, j, s);
            }
        const SparseMatrix a = b.build();
        Vector rhs(n);
        for (auto& v : rhs) v = rng.gaussian();

        CgConfig cfg;
        cfg.max_iterations = 3 * n;  // n in exact arithmetic, slack factor 3 in floats
        const CgResult sol = cg_solve(a, rhs, cfg);
        const Vector res = spmv(a, sol.x);
        double rn = 0.0;
        for (std::size_t i = 0; i < n; ++i) rn += (res[i] - rhs[i]) * (res[i] - rhs[i]);
        REQUIRE(std::sqrt(rn) <= cfg.rel_tolerance * norm2(rhs) * 1.01);
        REQUIRE(sol.iterations <= 3 * n);
    }
}

TEST_CASE("cg failure paths", "[sparse]") {
    SECTION("iteration cap produces SolverError with residual") {
        TripletBuilder b(50, 50);
        for (std::size_t i = 0; i < 50; ++i) b.add(i, i, std::pow(10.0, -(static_cast<double>(i) / 7.0)));
        CgConfig cfg;
        cfg.max_iterations = 2;
        try {
            cg_solve(b.build(), Vector(50, 1.0), cfg);
            FAIL("expected SolverError");
        } catch (const SolverError& e) {
            REQUIRE(e.final_residual > 0.0);
            REQUIRE(e.iterations == 2);
        }
    }
    SECTION("indefinite operator breaks down") {
        TripletBuilder b(2, 2);
        b.add(0, 0, 1.0);
        b.add(1, 1, -1.0);
        REQUIRE_THROWS_AS(cg_solve(b.build(), Vector{0.0, 1.0}), SolverError);
    }
}

TEST_CASE("matrix-free apply matches assembled matrix", "[sparse]") {
    Rng rng(5);
    TripletBuilder b(30, 30);
    for (std::size_t i = 0; i < 30; ++i) {
        b.add(i, i, 4.0);
        if (i + 1 < 30) {
            b.add(i, i + 1, -1.0);
            b.add(i + 1, i, -1.0);
        }
    }
    const SparseMatrix a = b.build();
    Vector rhs(30);
    for (auto& v : rhs) v = rng.gaussian();

    const CgResult direct = cg_solve(a, rhs);
    auto apply = [&a](const Vector& x, Vector& y) { spmv(a, x, y); };
    const Vector diag = a.diagonal();
    const CgResult via_op = cg_solve(apply, 30, rhs, CgConfig{}, &diag);
    for (std::size_t i = 0; i < 30; ++i)
        REQUIRE(via_op.x[i] == Catch::Approx(direct.x[i]).margin(1e-9));

    // warm start from the exact solution terminates immediately
    const CgResult warm = cg_solve(apply, 30, rhs, CgConfig{}, nullptr, &direct.x);
    REQUIRE(warm.iterations == 0);
}
