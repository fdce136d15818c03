#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "heatinv/dense_eig.hpp"
#include "heatinv/rng.hpp"

using namespace heatinv;

TEST_CASE("generalized eig on diagonal pencils", "[eig]") {
    SECTION("A = diag(1,2,3), B = I") {
        DenseMatrix a(3, 3), b = DenseMatrix::identity(3);
        a(0, 0) = 1.0;
        a(1, 1) = 2.0;
        a(2, 2) = 3.0;
        const SymmetricEig e = dense_generalized_eig(a, b);
        REQUIRE(e.eigenvalues[0] == Catch::Approx(1.0));
        REQUIRE(e.eigenvalues[1] == Catch::Approx(2.0));
        REQUIRE(e.eigenvalues[2] == Catch::Approx(3.0));
    }
    SECTION("A = I, B = diag(1,2,4) gives 1/B_kk sorted") {
        DenseMatrix a = DenseMatrix::identity(3), b(3, 3);
        b(0, 0) = 1.0;
        b(1, 1) = 2.0;
        b(2, 2) = 4.0;
        const SymmetricEig e = dense_generalized_eig(a, b);
        REQUIRE(e.eigenvalues[0] == Catch::Approx(0.25));
        REQUIRE(e.eigenvalues[1] == Catch::Approx(0.5));
        REQUIRE(e.eigenvalues[2] == Catch::Approx(1.0));
    }
    SECTION("2x2") {
        DenseMatrix a(2, 2), b(2, 2);
        a(0, 0) = 2.0;
        a(1, 1) = 2.0;
        b(0, 0) = 1.0;
        b(1, 1) = 2.0;
        const SymmetricEig e = dense_generalized_eig(a, b);
        REQUIRE(e.eigenvalues[0] == Catch::Approx(1.0));
        REQUIRE(e.eigenvalues[1] == Catch::Approx(2.0));
    }
}

TEST_CASE("generalized eig residuals on a random pencil", "[eig]") {
    Rng rng(77);
    const std::size_t n = 30;
    DenseMatrix a(n, n), r(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            r(i, j) = rng.gaussian();
            if (j >= i) {
                const double v = rng.gaussian();
                a(i, j) = v;
                a(j, i) = v;
            }
        }
    DenseMatrix b(n, n);  // R^T R + I, SPD
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = i == j ? 1.0 : 0.0;
            for (std::size_t k = 0; k < n; ++k) s += r(k, i) * r(k, j);
            b(i, j) = s;
        }

    double norm_a = 0.0, norm_b = 0.0;
    for (double v : a.data) norm_a = std::max(norm_a, std::abs(v));
    for (double v : b.data) norm_b = std::max(norm_b, std::abs(v));

    const SymmetricEig e = dense_generalized_eig(a, b);
    for (std::size_t k = 0; k + 1 < n; ++k) REQUIRE(e.eigenvalues[k] <= e.eigenvalues[k + 1]);
    for (std::size_t k = 0; k < n; ++k) {
        Vector v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = e.eigenvectors(i, k);
        const Vector av = matvec(a, v), bv = matvec(b, v);
        double res = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            res = std::max(res, std::abs(av[i] - e.eigenvalues[k] * bv[i]));
        REQUIRE(res <= 1e-8 * (norm_a + std::abs(e.eigenvalues[k]) * norm_b));
    }
}

TEST_CASE("generalized eig rejects bad input", "[eig]") {
    SECTION("B not SPD") {
        DenseMatrix a = DenseMatrix::identity(2), b(2, 2);
        b(0, 0) = 1.0;
        b(1, 1) = -1.0;
        REQUIRE_THROWS_AS(dense_generalized_eig(a, b), ArgumentError);
    }
    SECTION("asymmetric A") {
        DenseMatrix a(2, 2), b = DenseMatrix::identity(2);
        a(0, 1) = 1.0;
        a(1, 0) = 2.0;
        REQUIRE_THROWS_AS(dense_generalized_eig(a, b), ArgumentError);
    }
    SECTION("dimension mismatch") {
        REQUIRE_THROWS_AS(dense_generalized_eig(DenseMatrix::identity(2), DenseMatrix::identity(3)),
                          ArgumentError);
    }
}

TEST_CASE("cholesky solve", "[eig]") {
    DenseMatrix b(3, 3);
    // SPD by construction: diag-dominant
    const double vals[3][3] = {{4, 1, 0}, {1, 5, 2}, {0, 2, 6}};
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) b(i, j) = vals[i][j];
    const DenseMatrix l = cholesky(b);
    const Vector x_true = {1.0, -2.0, 0.5};
    const Vector rhs = matvec(b, x_true);
    const Vector x = cholesky_solve(l, rhs);
    for (std::size_t i = 0; i < 3; ++i) REQUIRE(x[i] == Catch::Approx(x_true[i]).margin(1e-12));

    // L L^T reproduces B
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 3; ++k) s += l(i, k) * l(j, k);
            REQUIRE(s == Catch::Approx(b(i, j)).margin(1e-12));
        }
}
