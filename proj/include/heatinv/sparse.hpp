#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <tuple>
#include <vector>

#include "heatinv/errors.hpp"

namespace heatinv {

using Vector = std::vector<double>;

/// Compressed-row sparse matrix. Canonical form: within each row the column
/// indices are strictly increasing and duplicates have been merged. Symmetric
/// operators assembled by this library satisfy value(i,j) == value(j,i)
/// exactly because both entries are accumulated from the same element sums.
struct SparseMatrix {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<std::size_t> row_offsets;  // length n_rows + 1, nondecreasing
    std::vector<std::size_t> col_indices;
    std::vector<double> values;

    std::size_t nnz() const { return values.size(); }

    /// Entry lookup (O(log row length)); absent entries read as 0.
    double at(std::size_t i, std::size_t j) const {
        const auto begin = col_indices.begin() + static_cast<std::ptrdiff_t>(row_offsets[i]);
        const auto end = col_indices.begin() + static_cast<std::ptrdiff_t>(row_offsets[i + 1]);
        const auto it = std::lower_bound(begin, end, j);
        if (it == end || *it != j) return 0.0;
        return values[static_cast<std::size_t>(it - col_indices.begin())];
    }

    Vector diagonal() const {
        Vector d(std::min(n_rows, n_cols), 0.0);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = at(i, i);
        return d;
    }
};

/// Accumulates (i, j, value) contributions and converts to canonical CSR,
/// summing duplicates. The usual finite element assembly path.
class TripletBuilder {
public:
    TripletBuilder(std::size_t n_rows, std::size_t n_cols) : n_rows_(n_rows), n_cols_(n_cols) {}

    void add(std::size_t i, std::size_t j, double value) {
        if (i >= n_rows_ || j >= n_cols_)
            throw ArgumentError("TripletBuilder::add: index out of range");
        triplets_.emplace_back(i, j, value);
    }

    SparseMatrix build() const {
        auto sorted = triplets_;
        std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
            return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
        });
        SparseMatrix m;
        m.n_rows = n_rows_;
        m.n_cols = n_cols_;
        m.row_offsets.assign(n_rows_ + 1, 0);
        for (std::size_t k = 0; k < sorted.size();) {
            const std::size_t i = std::get<0>(sorted[k]);
            const std::size_t j = std::get<1>(sorted[k]);
            double v = 0.0;
            while (k < sorted.size() && std::get<0>(sorted[k]) == i && std::get<1>(sorted[k]) == j) {
                v += std::get<2>(sorted[k]);
                ++k;
            }
            m.col_indices.push_back(j);
            m.values.push_back(v);
            ++m.row_offsets[i + 1];
        }
        for (std::size_t i = 0; i < n_rows_; ++i) m.row_offsets[i + 1] += m.row_offsets[i];
        return m;
    }

private:
    std::size_t n_rows_, n_cols_;
    std::vector<std::tuple<std::size_t, std::size_t, double>> triplets_;
};

inline SparseMatrix sparse_identity(std::size_t n) {
    SparseMatrix m;
    m.n_rows = m.n_cols = n;
    m.row_offsets.resize(n + 1);
    m.col_indices.resize(n);
    m.values.assign(n, 1.0);
    for (std::size_t i = 0; i <= n; ++i) m.row_offsets[i] = i;
    for (std::size_t i = 0; i < n; ++i) m.col_indices[i] = i;
    return m;
}

/// y = A x, in place.
inline void spmv(const SparseMatrix& a, const Vector& x, Vector& y) {
    if (x.size() != a.n_cols)
        throw ArgumentError("spmv: vector length " + std::to_string(x.size()) +
                            " does not match matrix columns " + std::to_string(a.n_cols));
    y.assign(a.n_rows, 0.0);
    for (std::size_t i = 0; i < a.n_rows; ++i) {
        double s = 0.0;
        for (std::size_t k = a.row_offsets[i]; k < a.row_offsets[i + 1]; ++k)
            s += a.values[k] * x[a.col_indices[k]];
        y[i] = s;
    }
}

inline Vector spmv(const SparseMatrix& a, const Vector& x) {
    Vector y;
    spmv(a, x, y);
    return y;
}

inline double dot(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vector& a) { return std::sqrt(dot(a, a)); }

/// y += alpha x
inline void axpy(double alpha, const Vector& x, Vector& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(Vector& x, double alpha) {
    for (double& v : x) v *= alpha;
}

struct CgConfig {
    double rel_tolerance = 1e-10;
    std::size_t max_iterations = 0;  // 0: defaults to 10 * n

    void validate() const {
        if (!(rel_tolerance > 0.0)) throw ArgumentError("CgConfig: rel_tolerance must be positive");
    }
};

struct CgResult {
    Vector x;
    std::size_t iterations = 0;
    double rel_residual = 0.0;
};

using LinearOperator = std::function<void(const Vector&, Vector&)>;

/// Conjugate gradients for SPD systems, given as an abstract apply callback.
/// Optional Jacobi preconditioning via `diag` (entries must be positive) and
/// warm starting via `x0`. Stops when ||b - A x|| <= rel_tolerance * ||b||.
/// Throws SolverError (with the final residual) on non-convergence and on
/// breakdown, which indicates a non-SPD operator.
inline CgResult cg_solve(const LinearOperator& apply_a, std::size_t n, const Vector& b,
                         const CgConfig& cfg = {}, const Vector* diag = nullptr,
                         const Vector* x0 = nullptr) {
    cfg.validate();
    if (b.size() != n) throw ArgumentError("cg_solve: right-hand side length mismatch");
    if (diag && diag->size() != n) throw ArgumentError("cg_solve: preconditioner length mismatch");
    const std::size_t max_it = cfg.max_iterations ? cfg.max_iterations : 10 * std::max<std::size_t>(n, 1);

    CgResult res;
    const double bnorm = norm2(b);
    if (bnorm == 0.0) {
        res.x.assign(n, 0.0);
        return res;
    }

    Vector x(n, 0.0);
    Vector r = b;
    if (x0) {
        if (x0->size() != n) throw ArgumentError("cg_solve: initial guess length mismatch");
        x = *x0;
        Vector ax;
        apply_a(x, ax);
        for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ax[i];
    }

    auto precondition = [&](const Vector& v, Vector& out) {
        out.resize(n);
        if (diag) {
            for (std::size_t i = 0; i < n; ++i) out[i] = v[i] / (*diag)[i];
        } else {
            out = v;
        }
    };

    Vector z;
    precondition(r, z);
    Vector p = z;
    Vector ap;
    double rz = dot(r, z);
    double rnorm = norm2(r);

    std::size_t it = 0;
    while (rnorm > cfg.rel_tolerance * bnorm && it < max_it) {
        apply_a(p, ap);
        const double pap = dot(p, ap);
        if (!(pap > 0.0))
            throw SolverError("cg_solve: breakdown (operator not positive definite)", rnorm / bnorm, it);
        const double alpha = rz / pap;
        axpy(alpha, p, x);
        axpy(-alpha, ap, r);
        precondition(r, z);
        const double rz_next = dot(r, z);
        const double beta = rz_next / rz;
        rz = rz_next;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
        rnorm = norm2(r);
        ++it;
    }
    if (rnorm > cfg.rel_tolerance * bnorm)
        throw SolverError("cg_solve: no convergence within " + std::to_string(max_it) + " iterations",
                          rnorm / bnorm, it);
    res.x = std::move(x);
    res.iterations = it;
    res.rel_residual = rnorm / bnorm;
    return res;
}

/// Conjugate gradients on an assembled SPD matrix.
inline CgResult cg_solve(const SparseMatrix& a, const Vector& b, const CgConfig& cfg = {},
                         bool jacobi = false, const Vector* x0 = nullptr) {
    if (a.n_rows != a.n_cols) throw ArgumentError("cg_solve: matrix must be square");
    if (b.size() != a.n_rows) throw ArgumentError("cg_solve: right-hand side length mismatch");
    Vector d;
    if (jacobi) {
        d = a.diagonal();
        for (double v : d)
            if (!(v > 0.0)) throw ArgumentError("cg_solve: nonpositive diagonal, Jacobi unusable");
    }
    auto apply = [&a](const Vector& x, Vector& y) { spmv(a, x, y); };
    return cg_solve(apply, a.n_rows, b, cfg, jacobi ? &d : nullptr, x0);
}

} // namespace heatinv
