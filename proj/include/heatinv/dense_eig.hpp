#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "heatinv/errors.hpp"
#include "heatinv/sparse.hpp"

namespace heatinv {

/// Small dense matrix, row-major. Used for desk-scale spectra and test
/// oracles only; nothing here is tuned for large n.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

inline DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

inline Vector matvec(const DenseMatrix& a, const Vector& x) {
    if (x.size() != a.cols) throw ArgumentError("matvec: dimension mismatch");
    Vector y(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) s += a(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

/// Lower-triangular Cholesky factor of an SPD matrix. Throws ArgumentError
/// when a pivot is nonpositive (matrix not SPD).
inline DenseMatrix cholesky(const DenseMatrix& b) {
    if (b.rows != b.cols) throw ArgumentError("cholesky: matrix must be square");
    const std::size_t n = b.rows;
    DenseMatrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = b(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
        if (!(diag > 0.0)) throw ArgumentError("cholesky: matrix not positive definite");
        l(j, j) = std::sqrt(diag);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = b(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

inline Vector forward_substitute(const DenseMatrix& l, const Vector& b) {
    const std::size_t n = l.rows;
    Vector x(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x[k];
        x[i] = s / l(i, i);
    }
    return x;
}

/// Solves L^T x = b for lower-triangular L.
inline Vector back_substitute_transposed(const DenseMatrix& l, const Vector& b) {
    const std::size_t n = l.rows;
    Vector x(n);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
        x[ii] = s / l(ii, ii);
    }
    return x;
}

/// Solves B x = b given the Cholesky factor of B.
inline Vector cholesky_solve(const DenseMatrix& l, const Vector& b) {
    return back_substitute_transposed(l, forward_substitute(l, b));
}

namespace detail {

// Householder tridiagonalization with accumulated transform, followed by QL
// with implicit shifts. Classic Wilkinson-Reinsch procedure (tred2/tql2 as in
// EISPACK and its public-domain descendants).
inline void tred2(DenseMatrix& v, Vector& d, Vector& e) {
    const std::size_t n = v.rows;
    d.assign(n, 0.0);
    e.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) d[j] = v(n - 1, j);

    for (std::size_t i = n - 1; i > 0; --i) {
        double scale = 0.0;
        double h = 0.0;
        for (std::size_t k = 0; k < i; ++k) scale += std::abs(d[k]);
        if (scale == 0.0) {
            e[i] = d[i - 1];
            for (std::size_t j = 0; j < i; ++j) {
                d[j] = v(i - 1, j);
                v(i, j) = 0.0;
                v(j, i) = 0.0;
            }
        } else {
            for (std::size_t k = 0; k < i; ++k) {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            double f = d[i - 1];
            double g = std::sqrt(h);
            if (f > 0.0) g = -g;
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for (std::size_t j = 0; j < i; ++j) e[j] = 0.0;

            for (std::size_t j = 0; j < i; ++j) {
                f = d[j];
                v(j, i) = f;
                g = e[j] + v(j, j) * f;
                for (std::size_t k = j + 1; k < i; ++k) {
                    g += v(k, j) * d[k];
                    e[k] += v(k, j) * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for (std::size_t j = 0; j < i; ++j) {
                e[j] /= h;
                f += e[j] * d[j];
            }
            const double hh = f / (h + h);
            for (std::size_t j = 0; j < i; ++j) e[j] -= hh * d[j];
            for (std::size_t j = 0; j < i; ++j) {
                f = d[j];
                g = e[j];
                for (std::size_t k = j; k < i; ++k) v(k, j) -= f * e[k] + g * d[k];
                d[j] = v(i - 1, j);
                v(i, j) = 0.0;
            }
        }
        d[i] = h;
    }

    for (std::size_t i = 0; i + 1 < n; ++i) {
        v(n - 1, i) = v(i, i);
        v(i, i) = 1.0;
        const double h = d[i + 1];
        if (h != 0.0) {
            for (std::size_t k = 0; k <= i; ++k) d[k] = v(k, i + 1) / h;
            for (std::size_t j = 0; j <= i; ++j) {
                double g = 0.0;
                for (std::size_t k = 0; k <= i; ++k) g += v(k, i + 1) * v(k, j);
                for (std::size_t k = 0; k <= i; ++k) v(k, j) -= g * d[k];
            }
        }
        for (std::size_t k = 0; k <= i; ++k) v(k, i + 1) = 0.0;
    }
    for (std::size_t j = 0; j < n; ++j) {
        d[j] = v(n - 1, j);
        v(n - 1, j) = 0.0;
    }
    v(n - 1, n - 1) = 1.0;
    e[0] = 0.0;
}

inline void tql2(DenseMatrix& v, Vector& d, Vector& e) {
    const std::size_t n = v.rows;
    for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
    e[n - 1] = 0.0;

    double f = 0.0;
    double tst1 = 0.0;
    const double eps = std::pow(2.0, -52.0);
    for (std::size_t l = 0; l < n; ++l) {
        tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
        std::size_t m = l;
        while (m < n && std::abs(e[m]) > eps * tst1) ++m;

        if (m > l) {
            std::size_t iter = 0;
            do {
                if (++iter > 200)
                    throw SolverError("tql2: QL iteration did not converge", std::abs(e[l]), iter);
                double g = d[l];
                double p = (d[l + 1] - g) / (2.0 * e[l]);
                double r = std::hypot(p, 1.0);
                if (p < 0.0) r = -r;
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                const double dl1 = d[l + 1];
                double h = g - d[l];
                for (std::size_t i = l + 2; i < n; ++i) d[i] -= h;
                f += h;

                p = d[m];
                double c = 1.0, c2 = c, c3 = c;
                const double el1 = e[l + 1];
                double s = 0.0, s2 = 0.0;
                for (std::size_t ii = m; ii-- > l;) {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[ii];
                    h = c * p;
                    r = std::hypot(p, e[ii]);
                    e[ii + 1] = s * r;
                    s = e[ii] / r;
                    c = p / r;
                    p = c * d[ii] - s * g;
                    d[ii + 1] = h + s * (c * g + s * d[ii]);
                    for (std::size_t k = 0; k < n; ++k) {
                        h = v(k, ii + 1);
                        v(k, ii + 1) = s * v(k, ii) + c * h;
                        v(k, ii) = c * v(k, ii) - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
            } while (std::abs(e[l]) > eps * tst1);
        }
        d[l] += f;
        e[l] = 0.0;
    }

    // ascending order, eigenvector columns follow
    for (std::size_t i = 0; i + 1 < n; ++i) {
        std::size_t k = i;
        double p = d[i];
        for (std::size_t j = i + 1; j < n; ++j) {
            if (d[j] < p) {
                k = j;
                p = d[j];
            }
        }
        if (k != i) {
            std::swap(d[k], d[i]);
            for (std::size_t j = 0; j < n; ++j) std::swap(v(j, i), v(j, k));
        }
    }
}

} // namespace detail

/// Eigenvalues (ascending) and vectors of a dense symmetric matrix.
struct SymmetricEig {
    Vector eigenvalues;
    DenseMatrix eigenvectors;  // column k pairs with eigenvalues[k]
};

inline SymmetricEig dense_symmetric_eig(const DenseMatrix& a) {
    if (a.rows != a.cols) throw ArgumentError("dense_symmetric_eig: matrix must be square");
    SymmetricEig out;
    out.eigenvectors = a;
    Vector e;
    detail::tred2(out.eigenvectors, out.eigenvalues, e);
    detail::tql2(out.eigenvectors, out.eigenvalues, e);
    return out;
}

/// Generalized symmetric eigenproblem A v = rho B v with B SPD, solved by the
/// Cholesky reduction B = L L^T followed by the symmetric eigensolve of
/// L^{-1} A L^{-T}. Eigenvalues ascend; eigenvector k is column k. Intended
/// for desk-scale spectra (n up to ~2000).
inline SymmetricEig dense_generalized_eig(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows != a.cols || b.rows != b.cols || a.rows != b.rows)
        throw ArgumentError("dense_generalized_eig: dimension mismatch");
    const std::size_t n = a.rows;

    double scale_a = 0.0, asym_a = 0.0, scale_b = 0.0, asym_b = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            scale_a = std::max(scale_a, std::abs(a(i, j)));
            asym_a = std::max(asym_a, std::abs(a(i, j) - a(j, i)));
            scale_b = std::max(scale_b, std::abs(b(i, j)));
            asym_b = std::max(asym_b, std::abs(b(i, j) - b(j, i)));
        }
    if (asym_a > 1e-8 * std::max(scale_a, 1e-300) || asym_b > 1e-8 * std::max(scale_b, 1e-300))
        throw ArgumentError("dense_generalized_eig: inputs must be symmetric");

    const DenseMatrix l = cholesky(b);

    // C = L^{-1} A L^{-T}, built column by column through two triangular solves.
    DenseMatrix y(n, n);  // Y = L^{-1} A
    Vector col(n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) col[i] = a(i, j);
        const Vector s = forward_substitute(l, col);
        for (std::size_t i = 0; i < n; ++i) y(i, j) = s[i];
    }
    DenseMatrix c(n, n);  // C = (L^{-1} Y^T)^T
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) col[i] = y(j, i);
        const Vector s = forward_substitute(l, col);
        for (std::size_t i = 0; i < n; ++i) c(j, i) = s[i];
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double m = 0.5 * (c(i, j) + c(j, i));
            c(i, j) = m;
            c(j, i) = m;
        }

    SymmetricEig eig = dense_symmetric_eig(c);

    // back-transform eigenvectors: v = L^{-T} z
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) col[i] = eig.eigenvectors(i, j);
        const Vector v = back_substitute_transposed(l, col);
        for (std::size_t i = 0; i < n; ++i) eig.eigenvectors(i, j) = v[i];
    }
    return eig;
}

} // namespace heatinv
