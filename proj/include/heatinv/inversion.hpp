#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "heatinv/errors.hpp"
#include "heatinv/forward.hpp"
#include "heatinv/measurements.hpp"
#include "heatinv/mesh.hpp"
#include "heatinv/sparse.hpp"

namespace heatinv {

enum class TikhonovPreconditioner {
    none,
    mass_diagonal,  // diag(lambda M); cheap, mildly helpful near the boundary
    probed          // diag(lambda M) + probed diag(T'T)/n; n_dof applications of T
};

/// Empirical-norm Tikhonov problem: minimize ||T f - m||_n^2 + lambda ||f||_{L2}^2
/// over the P1 coefficient space, with T the sampled discrete forward map.
struct TikhonovProblem {
    const ForwardOperator* fwd = nullptr;
    const MeasurementSet* data = nullptr;
    double lambda = 0.0;
    CgConfig cg;
    TikhonovPreconditioner preconditioner = TikhonovPreconditioner::mass_diagonal;

    TikhonovProblem() = default;
    TikhonovProblem(const ForwardOperator& f, const MeasurementSet& d, double lam, CgConfig c = {})
        : fwd(&f), data(&d), lambda(lam), cg(c) {}

    void validate() const {
        if (fwd == nullptr || data == nullptr) throw ArgumentError("TikhonovProblem: missing operator or data");
        if (!(lambda > 0.0)) throw ArgumentError("TikhonovProblem: lambda must be positive");
        data->validate();
    }
};

struct TikhonovResult {
    FieldVector f_h;
    double residual_n = 0.0;  // ||T f_h - m||_n
    double penalty = 0.0;     // ||f_h||_{L2}
    double objective = 0.0;   // residual_n^2 + lambda penalty^2
    std::size_t cg_iterations = 0;
};

/// Solves the normal equations (lambda M + T'T/n) F = T'm/n matrix-free: each
/// operator application is one forward solve plus sampling and one adjoint
/// solve. An optional initial guess warm-starts CG (the lambda fixed point
/// passes the previous iterate's solution).
inline TikhonovResult tikhonov_solve(const TikhonovProblem& p, const FieldVector* initial = nullptr) {
    p.validate();
    const ForwardOperator& fwd = *p.fwd;
    const MeasurementSet& data = *p.data;
    const SensorSet& sensors = data.sensors;
    const Mesh& mesh = fwd.mesh();
    const SparseMatrix& mass = fwd.mass();
    const double inv_n = 1.0 / static_cast<double>(sensors.n);

    auto apply_normal = [&](const Vector& x, Vector& y) {
        const FieldVector f(mesh, x);
        const Vector tf = fwd.sample(f, sensors);
        const FieldVector adj = fwd.adjoint_sample(tf, sensors);
        y = spmv(mass, x);
        scale(y, p.lambda);
        axpy(inv_n, adj.coefficients, y);
    };

    Vector rhs = fwd.adjoint_sample(data.values, sensors).coefficients;
    scale(rhs, inv_n);

    Vector diag;
    if (p.preconditioner != TikhonovPreconditioner::none) {
        diag = mass.diagonal();
        scale(diag, p.lambda);
        if (p.preconditioner == TikhonovPreconditioner::probed) {
            Vector probe(mesh.n_dof, 0.0);
            for (std::size_t j = 0; j < mesh.n_dof; ++j) {
                probe[j] = 1.0;
                const Vector tj = fwd.sample(FieldVector(mesh, probe), sensors);
                diag[j] += inv_n * dot(tj, tj);
                probe[j] = 0.0;
            }
        }
    }

    CgResult cg = cg_solve(apply_normal, mesh.n_dof, rhs, p.cg, diag.empty() ? nullptr : &diag,
                           initial && initial->mesh == &mesh ? &initial->coefficients : nullptr);

    TikhonovResult r;
    r.f_h = FieldVector(mesh, std::move(cg.x));
    r.cg_iterations = cg.iterations;
    Vector misfit = fwd.sample(r.f_h, sensors);
    for (std::size_t i = 0; i < misfit.size(); ++i) misfit[i] -= data.values[i];
    r.residual_n = empirical_norm(misfit);
    r.penalty = std::sqrt(std::max(0.0, dot(r.f_h.coefficients, spmv(mass, r.f_h.coefficients))));
    r.objective = r.residual_n * r.residual_n + p.lambda * r.penalty * r.penalty;
    return r;
}

struct ErrorMetrics {
    double pred_err_n = 0.0;   // ||S f* - T f_h||_n
    double l2_err = 0.0;       // ||f* - f_h||_{L2}
    double hminus1_err = 0.0;  // ||f* - f_h||_{H^-1}
    double residual_n = 0.0;   // ||T f_h - m||_n, carried over from the solve
};

/// Errors of a recovered source against the truth. f_true must already live
/// on the inversion mesh (project it first when the truth is analytic or on
/// a finer mesh); truth_samples are the noiseless (S f*)(x_i).
inline ErrorMetrics error_metrics(const ForwardOperator& fwd, const TikhonovResult& r,
                                  const FieldVector& f_true, const Vector& truth_samples,
                                  const SensorSet& sensors, const DiscreteNorms& norms) {
    if (f_true.mesh != r.f_h.mesh || f_true.mesh != &fwd.mesh() || &norms.mesh() != f_true.mesh)
        throw ArgumentError("error_metrics: mesh mismatch between truth, solution, and norms");
    if (truth_samples.size() != sensors.n)
        throw ArgumentError("error_metrics: truth sample count does not match sensors");

    ErrorMetrics m;
    Vector pred = fwd.sample(r.f_h, sensors);
    for (std::size_t i = 0; i < pred.size(); ++i) pred[i] -= truth_samples[i];
    m.pred_err_n = empirical_norm(pred);
    const FieldVector diff = r.f_h - f_true;
    m.l2_err = norms.l2(diff);
    m.hminus1_err = norms.hminus1(diff);
    m.residual_n = r.residual_n;
    return m;
}

/// A-priori regularization parameter: lambda^{1/2 + d/8} = sigma n^{-1/2} / ||f*||.
/// For d = 2 the exponent on the right-hand side is 4/3. sigma = 0 yields the
/// degenerate lambda = 0, which downstream constructors reject.
inline double lambda_rule(double sigma, std::size_t n, double f_norm, int d = 2) {
    if (sigma < 0.0 || n == 0) throw ArgumentError("lambda_rule: sigma and n must be positive");
    if (!(f_norm > 0.0)) throw ArgumentError("lambda_rule: f_norm must be positive");
    if (d < 1 || d > 3) throw ArgumentError("lambda_rule: dimension must be 1, 2, or 3");
    const double exponent = 1.0 / (0.5 + static_cast<double>(d) / 8.0);
    const double rhs = sigma / (std::sqrt(static_cast<double>(n)) * f_norm);
    return std::pow(rhs, exponent);
}

enum class LambdaStop { converged, max_iterations, degenerate };

inline std::string to_string(LambdaStop s) {
    switch (s) {
        case LambdaStop::converged: return "converged";
        case LambdaStop::max_iterations: return "max_iterations";
        default: return "degenerate";
    }
}

struct LambdaIterate {
    double lambda = 0.0;       // value used for this solve
    double residual_n = 0.0;
    double penalty = 0.0;
    double lambda_next = 0.0;  // update computed from this solve
};

struct LambdaTrace {
    std::vector<LambdaIterate> iterates;
    bool converged = false;
    LambdaStop stop_reason = LambdaStop::max_iterations;
    double lambda_final = 0.0;
    TikhonovResult final;  // solution at the last solved iterate
};

struct SelectLambdaOptions {
    double initial_lambda = 0.0;  // 0: the natural guess n^{-4/(d+4)}
    double tolerance = 1e-10;     // on |lambda_{j+1} - lambda_j|
    std::size_t max_iterations = 50;
    int d = 2;
    CgConfig cg;
    TikhonovPreconditioner preconditioner = TikhonovPreconditioner::mass_diagonal;
};

/// Self-consistent choice of the regularization parameter: alternate a
/// Tikhonov solve with the update
///   lambda^{1/2 + d/8} = n^{-1/2} ||T f_h - m||_n / ||f_h||_{L2},
/// which estimates the noise level by the residual and ||f*|| by the current
/// solution. Stops when consecutive lambdas differ by less than the
/// tolerance. A vanishing penalty (pure-noise data) is recorded as a
/// degenerate stop, not an error.
inline LambdaTrace select_lambda(const ForwardOperator& fwd, const MeasurementSet& data,
                                 const SelectLambdaOptions& opts = {}) {
    data.validate();
    if (data.sensors.n == 0) throw ArgumentError("select_lambda: empty data");
    const double n = static_cast<double>(data.sensors.n);
    const double update_exponent = 1.0 / (0.5 + static_cast<double>(opts.d) / 8.0);

    LambdaTrace trace;
    double lambda = opts.initial_lambda > 0.0
                        ? opts.initial_lambda
                        : std::pow(n, -4.0 / (static_cast<double>(opts.d) + 4.0));

    FieldVector warm;
    for (std::size_t j = 0; j < opts.max_iterations; ++j) {
        TikhonovProblem problem(fwd, data, lambda, opts.cg);
        problem.preconditioner = opts.preconditioner;
        TikhonovResult result = tikhonov_solve(problem, warm.mesh ? &warm : nullptr);

        LambdaIterate it;
        it.lambda = lambda;
        it.residual_n = result.residual_n;
        it.penalty = result.penalty;

        const double data_scale = empirical_norm(data.values);
        if (result.penalty <= 1e-14 * std::max(1.0, data_scale)) {
            it.lambda_next = lambda;
            trace.iterates.push_back(it);
            trace.stop_reason = LambdaStop::degenerate;
            trace.converged = false;
            trace.lambda_final = lambda;
            trace.final = std::move(result);
            return trace;
        }

        const double next = std::pow(result.residual_n / (std::sqrt(n) * result.penalty), update_exponent);
        it.lambda_next = next;
        trace.iterates.push_back(it);
        warm = result.f_h;
        trace.final = std::move(result);

        if (std::abs(next - lambda) < opts.tolerance) {
            trace.converged = true;
            trace.stop_reason = LambdaStop::converged;
            trace.lambda_final = next;
            return trace;
        }
        lambda = next;
    }
    trace.stop_reason = LambdaStop::max_iterations;
    trace.converged = false;
    trace.lambda_final = lambda;
    return trace;
}

} // namespace heatinv
