#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "heatinv/errors.hpp"
#include "heatinv/mesh.hpp"
#include "heatinv/sensing.hpp"
#include "heatinv/sparse.hpp"

namespace heatinv {

/// Discretization of the heat problem: backward Euler with n_steps uniform
/// steps of size tau on [0, T], P1 elements in space.
struct ForwardConfig {
    const Mesh* mesh = nullptr;
    ProblemCoefficients coeff;
    double tau = 0.0;
    std::size_t n_steps = 0;

    ForwardConfig() = default;
    ForwardConfig(const Mesh& m, ProblemCoefficients pc, std::size_t steps)
        : mesh(&m), coeff(std::move(pc)), n_steps(steps) {
        if (steps == 0) throw ArgumentError("ForwardConfig: need at least one time step");
        coeff.validate();
        tau = coeff.T / static_cast<double>(steps);
    }
    ForwardConfig(const Mesh& m, ProblemCoefficients pc, double step, std::size_t steps)
        : mesh(&m), coeff(std::move(pc)), tau(step), n_steps(steps) {
        coeff.validate();
        if (!(tau > 0.0) || steps == 0) throw ArgumentError("ForwardConfig: tau and n_steps must be positive");
        if (std::abs(tau * static_cast<double>(steps) - coeff.T) > 1e-12 * coeff.T)
            throw ArgumentError("ForwardConfig: tau * n_steps must equal T");
    }
};

/// The fully discrete forward map and its exact algebraic transpose.
///
/// Time stepping solves (M + tau A) U^i = M U^{i-1} + tau g(t^i) M F with
/// U^0 = 0; the terminal coefficient vector U^N realizes the discrete source-
/// to-state operator. Sampling composes that with P1 point evaluation at the
/// sensors, giving the linear map T from coefficient space to R^n. The
/// adjoint runs the same recursion in reverse time so that <TF, w> = <F, T'w>
/// holds to solver tolerance; the Tikhonov normal equations rely on this
/// exact symmetry. The step systems share one assembled matrix and a
/// Jacobi-preconditioned CG warm-started from the previous step.
class ForwardOperator {
public:
    explicit ForwardOperator(const ForwardConfig& cfg) : cfg_(cfg) {
        if (cfg.mesh == nullptr) throw ArgumentError("ForwardOperator: config has no mesh");
        mass_ = assemble_mass(*cfg.mesh);
        const SparseMatrix stiffness = assemble_stiffness(*cfg.mesh, cfg.coeff);

        TripletBuilder builder(mass_.n_rows, mass_.n_cols);
        for (std::size_t i = 0; i < mass_.n_rows; ++i)
            for (std::size_t k = mass_.row_offsets[i]; k < mass_.row_offsets[i + 1]; ++k)
                builder.add(i, mass_.col_indices[k], mass_.values[k]);
        for (std::size_t i = 0; i < stiffness.n_rows; ++i)
            for (std::size_t k = stiffness.row_offsets[i]; k < stiffness.row_offsets[i + 1]; ++k)
                builder.add(i, stiffness.col_indices[k], cfg.tau * stiffness.values[k]);
        system_ = builder.build();
        system_diag_ = system_.diagonal();

        g_steps_.resize(cfg.n_steps);
        for (std::size_t i = 1; i <= cfg.n_steps; ++i)
            g_steps_[i - 1] = cfg.coeff.g(static_cast<double>(i) * cfg.tau);  // right endpoints
    }

    const ForwardConfig& config() const { return cfg_; }
    const Mesh& mesh() const { return *cfg_.mesh; }
    const SparseMatrix& mass() const { return mass_; }

    /// Terminal state u_h^N for source coefficients f.
    FieldVector solve(const FieldVector& f) const {
        if (f.mesh != cfg_.mesh) throw ArgumentError("ForwardOperator::solve: field on wrong mesh");
        const std::size_t n = mass_.n_rows;
        const Vector mf = spmv(mass_, f.coefficients);
        Vector state(n, 0.0);
        Vector rhs(n), mstate(n);
        for (std::size_t i = 0; i < cfg_.n_steps; ++i) {
            spmv(mass_, state, mstate);
            rhs = mstate;
            axpy(cfg_.tau * g_steps_[i], mf, rhs);
            state = step_solve(rhs, state);
        }
        return FieldVector(*cfg_.mesh, std::move(state));
    }

    /// (T F)_i: terminal state sampled at the sensors.
    Vector sample(const FieldVector& f, const SensorSet& sensors) const {
        return evaluate_at_points(solve(f), sensors.points);
    }

    /// T' w: point loads scattered onto the P1 basis, reverse-time recursion,
    /// and accumulation of tau g(t^i) M Phi^i.
    FieldVector adjoint_sample(const Vector& w, const SensorSet& sensors) const {
        if (w.size() != sensors.n)
            throw ArgumentError("adjoint_sample: weight length does not match sensor count");
        const std::size_t n = mass_.n_rows;

        Vector load(n, 0.0);
        for (std::size_t i = 0; i < sensors.n; ++i) {
            const auto loc = detail::locate(*cfg_.mesh, sensors.points[i]);
            for (std::size_t k = 0; k < 3; ++k) {
                const std::ptrdiff_t dof = cfg_.mesh->interior_dof_map[loc.nodes[k]];
                if (dof >= 0) load[static_cast<std::size_t>(dof)] += w[i] * loc.weights[k];
            }
        }

        Vector acc(n, 0.0);
        if (norm2(load) == 0.0) return FieldVector(*cfg_.mesh, std::move(acc));

        Vector phi = step_solve(load, Vector(n, 0.0));
        Vector mphi(n);
        for (std::size_t i = cfg_.n_steps; i >= 1; --i) {
            spmv(mass_, phi, mphi);
            axpy(cfg_.tau * g_steps_[i - 1], mphi, acc);
            if (i > 1) phi = step_solve(mphi, phi);
        }
        return FieldVector(*cfg_.mesh, std::move(acc));
    }

private:
    Vector step_solve(const Vector& rhs, const Vector& warm_start) const {
        auto apply = [this](const Vector& x, Vector& y) { spmv(system_, x, y); };
        // two orders tighter than the outer inversion tolerance, so inner
        // solver noise cannot break the adjoint identity
        const CgConfig cfg{1e-12, 0};
        return cg_solve(apply, system_.n_rows, rhs, cfg, &system_diag_, &warm_start).x;
    }

    ForwardConfig cfg_;
    SparseMatrix mass_;
    SparseMatrix system_;  // M + tau A
    Vector system_diag_;
    Vector g_steps_;       // g(t^i), i = 1..N
};

inline FieldVector forward_solve(const ForwardConfig& cfg, const FieldVector& f) {
    return ForwardOperator(cfg).solve(f);
}

inline Vector sample_forward(const ForwardConfig& cfg, const FieldVector& f, const SensorSet& sensors) {
    return ForwardOperator(cfg).sample(f, sensors);
}

inline FieldVector adjoint_sample(const ForwardConfig& cfg, const Vector& w, const SensorSet& sensors) {
    return ForwardOperator(cfg).adjoint_sample(w, sensors);
}

namespace detail {

/// Adaptive Simpson quadrature, plain recursive bisection.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa,
                               double fm, double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

} // namespace detail

/// alpha(mu) = e^{-mu T} int_0^T e^{mu s} g(s) ds, the damping factor a
/// separable source picks up mode-by-mode. Closed form for constant g,
/// adaptive quadrature of e^{mu (s - T)} g(s) otherwise (the shifted
/// exponent keeps the integrand in [0, 1] for any mu).
inline double spectral_alpha(double mu, const TimeSignal& g, double T) {
    if (!(mu > 0.0)) throw ArgumentError("spectral_alpha: mu must be positive");
    if (g.is_constant()) return g.constant_value() * (1.0 - std::exp(-mu * T)) / mu;
    auto integrand = [&](double s) { return std::exp(mu * (s - T)) * g(s); };
    return detail::integrate(integrand, 0.0, T, 1e-14);
}

/// One Dirichlet Laplacian mode sin(p pi x) sin(q pi y) on the unit square,
/// with its eigenvalue and damping factor.
struct SpectralMode {
    int p = 1;
    int q = 1;
    double mu = 0.0;
    double alpha = 0.0;

    static SpectralMode make(int p, int q, const TimeSignal& g, double T) {
        if (p < 1 || q < 1) throw ArgumentError("SpectralMode: indices must be positive");
        SpectralMode m;
        m.p = p;
        m.q = q;
        const double pi = 3.14159265358979323846;
        m.mu = pi * pi * static_cast<double>(p * p + q * q);
        m.alpha = spectral_alpha(m.mu, g, T);
        return m;
    }
};

/// Exact terminal-state values (S f)(points) for f = sum_k weights_k *
/// sin(p_k pi x) sin(q_k pi y), valid for the constant-coefficient problem
/// a = 1, c = 0 where the modes diagonalize the operator.
inline Vector spectral_oracle(const ProblemCoefficients& coeff, const std::vector<SpectralMode>& modes,
                              const Vector& weights, const std::vector<Point>& points) {
    if (!coeff.a.is_constant() || coeff.a.constant_value() != 1.0 || !coeff.c.is_constant() ||
        coeff.c.constant_value() != 0.0)
        throw ArgumentError("spectral_oracle: requires constant coefficients a = 1, c = 0");
    if (modes.size() != weights.size())
        throw ArgumentError("spectral_oracle: one weight per mode required");
    const double pi = 3.14159265358979323846;
    Vector out(points.size(), 0.0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double x = points[i][0], y = points[i][1];
        double s = 0.0;
        for (std::size_t k = 0; k < modes.size(); ++k)
            s += weights[k] * modes[k].alpha * std::sin(modes[k].p * pi * x) * std::sin(modes[k].q * pi * y);
        out[i] = s;
    }
    return out;
}

/// The same spectral sum without the damping factors: the source itself.
inline double spectral_source_value(const std::vector<SpectralMode>& modes, const Vector& weights,
                                    double x, double y) {
    const double pi = 3.14159265358979323846;
    double s = 0.0;
    for (std::size_t k = 0; k < modes.size(); ++k)
        s += weights[k] * std::sin(modes[k].p * pi * x) * std::sin(modes[k].q * pi * y);
    return s;
}

} // namespace heatinv
