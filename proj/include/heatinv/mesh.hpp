#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "heatinv/errors.hpp"
#include "heatinv/sparse.hpp"

namespace heatinv {

using Point = std::array<double, 2>;

/// Spatial coefficient: either a constant (recognizable, so exact closed
/// forms can be used downstream) or an arbitrary callable of (x, y).
class ScalarField {
public:
    ScalarField(double value = 0.0) : constant_(true), value_(value) {}
    ScalarField(std::function<double(double, double)> fn) : constant_(false), fn_(std::move(fn)) {}

    bool is_constant() const { return constant_; }
    double constant_value() const { return value_; }
    double operator()(double x, double y) const { return constant_ ? value_ : fn_(x, y); }

private:
    bool constant_;
    double value_ = 0.0;
    std::function<double(double, double)> fn_;
};

/// Temporal signal g(t), same constant-or-callable split.
class TimeSignal {
public:
    TimeSignal(double value = 1.0) : constant_(true), value_(value) {}
    TimeSignal(std::function<double(double)> fn) : constant_(false), fn_(std::move(fn)) {}

    bool is_constant() const { return constant_; }
    double constant_value() const { return value_; }
    double operator()(double t) const { return constant_ ? value_ : fn_(t); }

private:
    bool constant_;
    double value_ = 1.0;
    std::function<double(double)> fn_;
};

/// Coefficients of the parabolic operator u_t - div(a grad u) + c u = f g(t)
/// on (0,1)^2 x (0,T) with homogeneous Dirichlet data.
struct ProblemCoefficients {
    ScalarField a = ScalarField(1.0);
    ScalarField c = ScalarField(0.0);
    TimeSignal g = TimeSignal(1.0);
    double T = 1.0;

    void validate() const {
        if (!(T > 0.0)) throw ArgumentError("ProblemCoefficients: T must be positive");
    }
};

/// Structured P1 triangulation of the unit square: h^{-1} x h^{-1} cells,
/// each split along the lower-left to upper-right diagonal. Nodes are ordered
/// row-major, y outer, x inner. Interior nodes carry the degrees of freedom;
/// boundary nodes are eliminated (u = 0).
struct Mesh {
    double h = 0.0;
    std::size_t cells_per_side = 0;                    // m = 1/h
    std::vector<Point> nodes;                          // (m+1)^2
    std::vector<std::array<std::size_t, 3>> triangles; // 2 m^2, positive orientation
    std::vector<std::ptrdiff_t> interior_dof_map;      // node -> dof index, -1 on boundary
    std::vector<std::size_t> dof_to_node;
    std::size_t n_dof = 0;                             // (m-1)^2

    std::size_t node_index(std::size_t i, std::size_t j) const {
        return j * (cells_per_side + 1) + i;
    }
};

inline Mesh build_mesh(double h) {
    if (!(h > 0.0)) throw ArgumentError("build_mesh: h must be positive");
    const double m_real = 1.0 / h;
    const auto m = static_cast<std::size_t>(std::llround(m_real));
    if (m < 2 || std::abs(m_real - static_cast<double>(m)) > 1e-9)
        throw ArgumentError("build_mesh: 1/h must be an integer >= 2, got h=" + std::to_string(h));

    Mesh mesh;
    mesh.h = h;
    mesh.cells_per_side = m;
    mesh.nodes.reserve((m + 1) * (m + 1));
    for (std::size_t j = 0; j <= m; ++j)
        for (std::size_t i = 0; i <= m; ++i)
            mesh.nodes.push_back({static_cast<double>(i) * h, static_cast<double>(j) * h});

    mesh.triangles.reserve(2 * m * m);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t ll = mesh.node_index(i, j);
            const std::size_t lr = mesh.node_index(i + 1, j);
            const std::size_t ul = mesh.node_index(i, j + 1);
            const std::size_t ur = mesh.node_index(i + 1, j + 1);
            mesh.triangles.push_back({ll, lr, ur});
            mesh.triangles.push_back({ll, ur, ul});
        }

    mesh.interior_dof_map.assign(mesh.nodes.size(), -1);
    for (std::size_t j = 1; j < m; ++j)
        for (std::size_t i = 1; i < m; ++i) {
            const std::size_t node = mesh.node_index(i, j);
            mesh.interior_dof_map[node] = static_cast<std::ptrdiff_t>(mesh.dof_to_node.size());
            mesh.dof_to_node.push_back(node);
        }
    mesh.n_dof = mesh.dof_to_node.size();
    return mesh;
}

/// Coefficient vector of a P1 function on the interior hat-function basis.
struct FieldVector {
    const Mesh* mesh = nullptr;
    Vector coefficients;

    FieldVector() = default;
    explicit FieldVector(const Mesh& m) : mesh(&m), coefficients(m.n_dof, 0.0) {}
    FieldVector(const Mesh& m, Vector c) : mesh(&m), coefficients(std::move(c)) {
        if (coefficients.size() != m.n_dof)
            throw ArgumentError("FieldVector: coefficient length does not match mesh dof count");
    }
};

inline void require_same_mesh(const FieldVector& a, const FieldVector& b, const char* where) {
    if (a.mesh == nullptr || b.mesh == nullptr || a.mesh != b.mesh)
        throw ArgumentError(std::string(where) + ": fields live on different meshes");
}

inline FieldVector operator-(const FieldVector& a, const FieldVector& b) {
    require_same_mesh(a, b, "FieldVector difference");
    FieldVector out(*a.mesh);
    for (std::size_t i = 0; i < out.coefficients.size(); ++i)
        out.coefficients[i] = a.coefficients[i] - b.coefficients[i];
    return out;
}

inline FieldVector operator*(double alpha, const FieldVector& a) {
    FieldVector out = a;
    for (double& v : out.coefficients) v *= alpha;
    return out;
}

namespace detail {

struct ElementGeometry {
    double area;
    std::array<double, 3> grad_x;  // constant P1 gradients
    std::array<double, 3> grad_y;
    Point centroid;
};

inline ElementGeometry element_geometry(const Mesh& mesh, const std::array<std::size_t, 3>& tri) {
    const Point& p0 = mesh.nodes[tri[0]];
    const Point& p1 = mesh.nodes[tri[1]];
    const Point& p2 = mesh.nodes[tri[2]];
    const double det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    ElementGeometry g;
    g.area = 0.5 * det;
    g.grad_x = {(p1[1] - p2[1]) / det, (p2[1] - p0[1]) / det, (p0[1] - p1[1]) / det};
    g.grad_y = {(p2[0] - p1[0]) / det, (p0[0] - p2[0]) / det, (p1[0] - p0[0]) / det};
    g.centroid = {(p0[0] + p1[0] + p2[0]) / 3.0, (p0[1] + p1[1] + p2[1]) / 3.0};
    return g;
}

} // namespace detail

/// Consistent P1 mass matrix over interior dofs. SPD.
inline SparseMatrix assemble_mass(const Mesh& mesh) {
    TripletBuilder builder(mesh.n_dof, mesh.n_dof);
    for (const auto& tri : mesh.triangles) {
        const auto geo = detail::element_geometry(mesh, tri);
        for (std::size_t r = 0; r < 3; ++r) {
            const std::ptrdiff_t dr = mesh.interior_dof_map[tri[r]];
            if (dr < 0) continue;
            for (std::size_t s = 0; s < 3; ++s) {
                const std::ptrdiff_t ds = mesh.interior_dof_map[tri[s]];
                if (ds < 0) continue;
                const double entry = geo.area / 12.0 * (r == s ? 2.0 : 1.0);
                builder.add(static_cast<std::size_t>(dr), static_cast<std::size_t>(ds), entry);
            }
        }
    }
    return builder.build();
}

/// Mass matrix over all nodes, boundary included. Its entries sum to the
/// domain area; used by checks, not by solvers.
inline SparseMatrix assemble_full_mass(const Mesh& mesh) {
    TripletBuilder builder(mesh.nodes.size(), mesh.nodes.size());
    for (const auto& tri : mesh.triangles) {
        const auto geo = detail::element_geometry(mesh, tri);
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t s = 0; s < 3; ++s)
                builder.add(tri[r], tri[s], geo.area / 12.0 * (r == s ? 2.0 : 1.0));
    }
    return builder.build();
}

/// Stiffness matrix of (a grad u, grad v) + (c u, v) over interior dofs.
/// Coefficients are sampled at triangle centroids; exact for the constant
/// coefficients every experiment here uses, one-point quadrature otherwise.
inline SparseMatrix assemble_stiffness(const Mesh& mesh, const ProblemCoefficients& coeff) {
    TripletBuilder builder(mesh.n_dof, mesh.n_dof);
    for (const auto& tri : mesh.triangles) {
        const auto geo = detail::element_geometry(mesh, tri);
        const double a_elem = coeff.a(geo.centroid[0], geo.centroid[1]);
        const double c_elem = coeff.c(geo.centroid[0], geo.centroid[1]);
        if (!(a_elem > 0.0))
            throw ArgumentError("assemble_stiffness: diffusion coefficient nonpositive at centroid");
        for (std::size_t r = 0; r < 3; ++r) {
            const std::ptrdiff_t dr = mesh.interior_dof_map[tri[r]];
            if (dr < 0) continue;
            for (std::size_t s = 0; s < 3; ++s) {
                const std::ptrdiff_t ds = mesh.interior_dof_map[tri[s]];
                if (ds < 0) continue;
                double entry = a_elem * geo.area *
                               (geo.grad_x[r] * geo.grad_x[s] + geo.grad_y[r] * geo.grad_y[s]);
                entry += c_elem * geo.area / 12.0 * (r == s ? 2.0 : 1.0);
                builder.add(static_cast<std::size_t>(dr), static_cast<std::size_t>(ds), entry);
            }
        }
    }
    return builder.build();
}

namespace detail {

struct PointLocation {
    std::array<std::size_t, 3> nodes;
    std::array<double, 3> weights;  // barycentric values of the three hats
};

/// O(1) structured point location: cell from floor(x/h), then one diagonal
/// test. Local coordinates are snapped to the nearest lattice value when
/// within 1e-9 so evaluation at mesh nodes is exact.
inline PointLocation locate(const Mesh& mesh, const Point& p) {
    const double tol = 1e-12;
    if (p[0] < -tol || p[0] > 1.0 + tol || p[1] < -tol || p[1] > 1.0 + tol)
        throw ArgumentError("locate: point (" + std::to_string(p[0]) + ", " + std::to_string(p[1]) +
                            ") outside the closed unit square");
    const auto m = static_cast<double>(mesh.cells_per_side);
    auto split = [&](double coord) {
        double scaled = coord * m;
        scaled = std::min(std::max(scaled, 0.0), m);
        double cell = std::floor(scaled);
        if (cell >= m) cell = m - 1.0;
        double local = scaled - cell;
        const double snapped = std::round(local);
        if (std::abs(local - snapped) < 1e-9) local = snapped;
        if (local >= 1.0 && cell < m - 1.0) {  // snapped onto the next gridline
            cell += 1.0;
            local = 0.0;
        }
        return std::pair<std::size_t, double>{static_cast<std::size_t>(cell), local};
    };
    const auto [ci, xi] = split(p[0]);
    const auto [cj, eta] = split(p[1]);

    const std::size_t ll = mesh.node_index(ci, cj);
    const std::size_t lr = mesh.node_index(ci + 1, cj);
    const std::size_t ul = mesh.node_index(ci, cj + 1);
    const std::size_t ur = mesh.node_index(ci + 1, cj + 1);

    PointLocation loc;
    if (eta <= xi) {  // lower triangle (ll, lr, ur)
        loc.nodes = {ll, lr, ur};
        loc.weights = {1.0 - xi, xi - eta, eta};
    } else {          // upper triangle (ll, ur, ul)
        loc.nodes = {ll, ur, ul};
        loc.weights = {1.0 - eta, xi, eta - xi};
    }
    return loc;
}

} // namespace detail

/// P1 interpolation of the field at arbitrary points of the closed square.
/// Boundary nodes contribute zero (Dirichlet).
inline Vector evaluate_at_points(const FieldVector& v, const std::vector<Point>& points) {
    if (v.mesh == nullptr) throw ArgumentError("evaluate_at_points: empty field");
    Vector out(points.size(), 0.0);
    for (std::size_t p = 0; p < points.size(); ++p) {
        const auto loc = detail::locate(*v.mesh, points[p]);
        double s = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            const std::ptrdiff_t dof = v.mesh->interior_dof_map[loc.nodes[k]];
            if (dof >= 0) s += loc.weights[k] * v.coefficients[static_cast<std::size_t>(dof)];
        }
        out[p] = s;
    }
    return out;
}

/// Nodal interpolant of an analytic function (boundary values dropped).
inline FieldVector interpolate(const Mesh& mesh, const std::function<double(double, double)>& f) {
    FieldVector v(mesh);
    for (std::size_t d = 0; d < mesh.n_dof; ++d) {
        const Point& p = mesh.nodes[mesh.dof_to_node[d]];
        v.coefficients[d] = f(p[0], p[1]);
    }
    return v;
}

/// L2 projection onto the interior P1 space: solves M F = (f, phi_j) with the
/// load integrated by the mid-edge three-point rule (exact through degree 2).
inline FieldVector project_l2(const Mesh& mesh, const std::function<double(double, double)>& f,
                              const CgConfig& cg = {1e-12, 0}) {
    Vector load(mesh.n_dof, 0.0);
    for (const auto& tri : mesh.triangles) {
        const Point& p0 = mesh.nodes[tri[0]];
        const Point& p1 = mesh.nodes[tri[1]];
        const Point& p2 = mesh.nodes[tri[2]];
        const auto geo = detail::element_geometry(mesh, tri);
        const std::array<Point, 3> mid = {Point{0.5 * (p0[0] + p1[0]), 0.5 * (p0[1] + p1[1])},
                                          Point{0.5 * (p1[0] + p2[0]), 0.5 * (p1[1] + p2[1])},
                                          Point{0.5 * (p2[0] + p0[0]), 0.5 * (p2[1] + p0[1])}};
        const std::array<double, 3> fmid = {f(mid[0][0], mid[0][1]), f(mid[1][0], mid[1][1]),
                                            f(mid[2][0], mid[2][1])};
        // hat r is 1/2 on the two edges adjacent to vertex r, 0 on the opposite one
        for (std::size_t r = 0; r < 3; ++r) {
            const std::ptrdiff_t dof = mesh.interior_dof_map[tri[r]];
            if (dof < 0) continue;
            double contrib = 0.0;
            for (std::size_t e = 0; e < 3; ++e)
                if (e == r || (e + 1) % 3 == r) contrib += 0.5 * fmid[e];
            load[static_cast<std::size_t>(dof)] += geo.area / 3.0 * contrib;
        }
    }
    const SparseMatrix mass = assemble_mass(mesh);
    FieldVector v(mesh);
    v.coefficients = cg_solve(mass, load, cg).x;
    return v;
}

/// Discrete L2, H1 and H-1 norms on a fixed mesh. Assembles the mass matrix
/// and the unit-coefficient stiffness once; the H-1 norm solves
/// (A0 + M) z = M F by CG and returns sqrt((M F, z)).
class DiscreteNorms {
public:
    explicit DiscreteNorms(const Mesh& mesh) : mesh_(&mesh), mass_(assemble_mass(mesh)) {
        ProblemCoefficients unit;
        unit.a = ScalarField(1.0);
        unit.c = ScalarField(0.0);
        const SparseMatrix a0 = assemble_stiffness(mesh, unit);
        TripletBuilder builder(mesh.n_dof, mesh.n_dof);
        for (std::size_t i = 0; i < a0.n_rows; ++i)
            for (std::size_t k = a0.row_offsets[i]; k < a0.row_offsets[i + 1]; ++k)
                builder.add(i, a0.col_indices[k], a0.values[k]);
        for (std::size_t i = 0; i < mass_.n_rows; ++i)
            for (std::size_t k = mass_.row_offsets[i]; k < mass_.row_offsets[i + 1]; ++k)
                builder.add(i, mass_.col_indices[k], mass_.values[k]);
        h1_operator_ = builder.build();
    }

    const Mesh& mesh() const { return *mesh_; }
    const SparseMatrix& mass() const { return mass_; }

    double l2(const FieldVector& v) const {
        check(v);
        return std::sqrt(std::max(0.0, dot(v.coefficients, spmv(mass_, v.coefficients))));
    }

    double h1(const FieldVector& v) const {
        check(v);
        return std::sqrt(std::max(0.0, dot(v.coefficients, spmv(h1_operator_, v.coefficients))));
    }

    double hminus1(const FieldVector& v) const {
        check(v);
        const Vector mf = spmv(mass_, v.coefficients);
        if (norm2(mf) == 0.0) return 0.0;
        const Vector z = cg_solve(h1_operator_, mf, CgConfig{1e-12, 0}).x;
        return std::sqrt(std::max(0.0, dot(mf, z)));
    }

private:
    void check(const FieldVector& v) const {
        if (v.mesh != mesh_) throw ArgumentError("DiscreteNorms: field lives on a different mesh");
    }

    const Mesh* mesh_;
    SparseMatrix mass_;
    SparseMatrix h1_operator_;  // A0 + M
};

inline double l2_norm(const FieldVector& v) { return DiscreteNorms(*v.mesh).l2(v); }
inline double h1_norm(const FieldVector& v) { return DiscreteNorms(*v.mesh).h1(v); }
inline double hminus1_norm(const FieldVector& v) { return DiscreteNorms(*v.mesh).hminus1(v); }

} // namespace heatinv
