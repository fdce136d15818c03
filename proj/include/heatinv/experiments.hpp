#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "heatinv/dense_eig.hpp"
#include "heatinv/errors.hpp"
#include "heatinv/forward.hpp"
#include "heatinv/inversion.hpp"
#include "heatinv/measurements.hpp"
#include "heatinv/mesh.hpp"
#include "heatinv/sensing.hpp"
#include "heatinv/stats.hpp"

namespace heatinv {

// ---------------------------------------------------------------------------
// source presets

/// A registered true source f*. p2 carries its eigenmode expansion, which
/// unlocks the exact spectral data path.
struct SourcePreset {
    std::string id;
    std::string description;
    std::function<double(double, double)> value;
    double l2_norm = 0.0;
    std::vector<std::pair<int, int>> mode_indices;  // nonempty: exact oracle available
    Vector mode_weights;

    bool spectral() const { return !mode_indices.empty(); }
};

namespace detail {

inline double quadrature_l2_norm(const std::function<double(double, double)>& f, std::size_t cells) {
    double s = 0.0;
    const double step = 1.0 / static_cast<double>(cells);
    for (std::size_t j = 0; j < cells; ++j)
        for (std::size_t i = 0; i < cells; ++i) {
            const double v = f((static_cast<double>(i) + 0.5) * step, (static_cast<double>(j) + 0.5) * step);
            s += v * v;
        }
    return std::sqrt(s * step * step);
}

} // namespace detail

/// p1: smooth two-bump source scaled to ||f*|| = 0.54. p2: the first
/// Laplacian eigenmode (exact forward data available). p3: a piecewise
/// constant block.
inline const SourcePreset& source_preset(const std::string& id) {
    static const std::vector<SourcePreset> registry = [] {
        std::vector<SourcePreset> r;

        auto bumps = [](double x, double y) {
            const double dx1 = x - 0.3, dy1 = y - 0.4;
            const double dx2 = x - 0.7, dy2 = y - 0.65;
            return std::exp(-(dx1 * dx1 + dy1 * dy1) / (2.0 * 0.12 * 0.12)) +
                   0.8 * std::exp(-(dx2 * dx2 + dy2 * dy2) / (2.0 * 0.10 * 0.10));
        };
        const double bumps_norm = detail::quadrature_l2_norm(bumps, 1024);
        const double amp = 0.54 / bumps_norm;
        SourcePreset p1;
        p1.id = "p1";
        p1.description = "two gaussian bumps, ||f||_L2 = 0.54";
        p1.value = [bumps, amp](double x, double y) { return amp * bumps(x, y); };
        p1.l2_norm = 0.54;
        r.push_back(std::move(p1));

        SourcePreset p2;
        p2.id = "p2";
        p2.description = "single mode sin(pi x) sin(pi y)";
        const double pi = 3.14159265358979323846;
        p2.value = [pi](double x, double y) { return std::sin(pi * x) * std::sin(pi * y); };
        p2.l2_norm = 0.5;  // sqrt(int sin^2 sin^2) = 1/2
        p2.mode_indices = {{1, 1}};
        p2.mode_weights = {1.0};
        r.push_back(std::move(p2));

        SourcePreset p3;
        p3.id = "p3";
        p3.description = "indicator block [0.25,0.5]^2";
        p3.value = [](double x, double y) {
            return (x >= 0.25 && x <= 0.5 && y >= 0.25 && y <= 0.5) ? 1.0 : 0.0;
        };
        p3.l2_norm = 0.25;
        r.push_back(std::move(p3));
        return r;
    }();
    for (const auto& p : registry)
        if (p.id == id) return p;
    throw ArgumentError("unknown source preset: " + id + " (registered: p1, p2, p3)");
}

// ---------------------------------------------------------------------------
// configuration

struct ExperimentConfig {
    std::string experiment;
    double h = 1.0 / 32.0;
    double tau = 1.0 / 64.0;
    double T = 1.0;
    std::size_t sensors_k = 100;
    double sigma = 0.001;
    std::string noise = "gaussian";
    std::vector<double> lambdas;  // empty: use the a-priori rule
    std::size_t replications = 8;
    std::uint64_t seed = 1;
    std::string source_preset_id = "p1";
    std::string out_dir = "out";
    int d = 2;
    std::string truth = "fem";  // "fem" (refined mesh) or "oracle" (spectral preset only)
    std::size_t truth_refine = 2;
    std::vector<std::size_t> ladder_n = {2500, 10000, 40000};
    std::size_t max_rate_steps = 96;
    unsigned threads = 0;  // 0: hardware concurrency

    void validate() const {
        static const std::vector<std::string> known = {"forward-check", "invert",   "select-lambda",
                                                       "lambda-sweep",  "mc-study", "rate-check",
                                                       "eig-study"};
        bool ok = false;
        for (const auto& k : known) ok = ok || k == experiment;
        if (!ok) throw ArgumentError("unknown experiment: " + experiment);
        if (replications < 1) throw ArgumentError("replications must be >= 1");
        if (sensors_k < 2) throw ArgumentError("sensors_k must be >= 2");
        if (sigma < 0.0) throw ArgumentError("sigma must be nonnegative");
        if (!(T > 0.0)) throw ArgumentError("T must be positive");
        if (truth != "fem" && truth != "oracle") throw ArgumentError("truth must be 'fem' or 'oracle'");
        if (truth_refine < 2) throw ArgumentError("truth_refine must be >= 2 (inverse-crime guard)");
        source_preset(source_preset_id);
        noise_kind_from_string(noise);
        for (double l : lambdas)
            if (!(l > 0.0)) throw ArgumentError("lambda values must be positive");
    }
};

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["experiment"] = c.experiment;
    j["h"] = c.h;
    j["tau"] = c.tau;
    j["T"] = c.T;
    j["sensors_k"] = c.sensors_k;
    j["sigma"] = c.sigma;
    j["noise"] = c.noise;
    j["lambdas"] = c.lambdas;
    j["replications"] = c.replications;
    j["seed"] = c.seed;
    j["source_preset"] = c.source_preset_id;
    j["out"] = c.out_dir;
    j["d"] = c.d;
    j["truth"] = c.truth;
    j["truth_refine"] = c.truth_refine;
    j["ladder_n"] = c.ladder_n;
    j["max_rate_steps"] = c.max_rate_steps;
    j["threads"] = c.threads;
    return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    try {
        if (!j.contains("schema_version") || j.at("schema_version").get<int>() != 1)
            throw ParseError("config: missing or unsupported schema_version (expected 1)");
        for (const auto& [key, value] : j.items()) {
            if (key == "schema_version") continue;
            else if (key == "experiment") c.experiment = value.get<std::string>();
            else if (key == "h") c.h = value.get<double>();
            else if (key == "tau") c.tau = value.get<double>();
            else if (key == "T") c.T = value.get<double>();
            else if (key == "sensors_k") c.sensors_k = value.get<std::size_t>();
            else if (key == "sigma") c.sigma = value.get<double>();
            else if (key == "noise") c.noise = value.get<std::string>();
            else if (key == "lambdas") c.lambdas = value.get<std::vector<double>>();
            else if (key == "replications") c.replications = value.get<std::size_t>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "source_preset") c.source_preset_id = value.get<std::string>();
            else if (key == "out") c.out_dir = value.get<std::string>();
            else if (key == "d") c.d = value.get<int>();
            else if (key == "truth") c.truth = value.get<std::string>();
            else if (key == "truth_refine") c.truth_refine = value.get<std::size_t>();
            else if (key == "ladder_n") c.ladder_n = value.get<std::vector<std::size_t>>();
            else if (key == "max_rate_steps") c.max_rate_steps = value.get<std::size_t>();
            else if (key == "threads") c.threads = value.get<unsigned>();
            else throw ParseError("config: unknown key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("load_config: " + path + ": " + e.what());
    }
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// reports

struct Report {
    std::string name;  // experiment id; files are <out>/<name>.csv and .json
    std::vector<std::string> columns;
    std::vector<Vector> rows;
    nlohmann::json summary;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

struct ReportPaths {
    std::string csv;
    std::string json;
};

/// CSV table plus JSON summary side file. Deterministic byte-for-byte for a
/// given report: stable column order, 17-significant-digit numerics.
inline ReportPaths emit_report(const Report& report, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("emit_report: cannot create directory " + out_dir + ": " + ec.message());

    ReportPaths paths;
    paths.csv = (fs::path(out_dir) / (report.name + ".csv")).string();
    paths.json = (fs::path(out_dir) / (report.name + ".json")).string();

    std::ofstream csv(paths.csv);
    if (!csv) throw IoError("emit_report: cannot open " + paths.csv);
    for (std::size_t i = 0; i < report.columns.size(); ++i)
        csv << (i ? "," : "") << report.columns[i];
    csv << '\n';
    for (const auto& row : report.rows) {
        if (row.size() != report.columns.size())
            throw ArgumentError("emit_report: row width does not match column count");
        for (std::size_t i = 0; i < row.size(); ++i)
            csv << (i ? "," : "") << detail::format_double(row[i]);
        csv << '\n';
    }
    if (!csv) throw IoError("emit_report: write failed for " + paths.csv);
    csv.close();

    nlohmann::json j;
    j["experiment"] = report.name;
    j["columns"] = report.columns;
    j["n_rows"] = report.rows.size();
    j["summary"] = report.summary;
    std::ofstream js(paths.json);
    if (!js) throw IoError("emit_report: cannot open " + paths.json);
    js << j.dump(2) << '\n';
    if (!js) throw IoError("emit_report: write failed for " + paths.json);
    return paths;
}

/// Reads back a CSV table written by emit_report.
inline Report load_report_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_report_csv: cannot open " + path);
    Report r;
    std::string line;
    if (!std::getline(in, line)) throw ParseError("load_report_csv: empty file " + path);
    std::stringstream header(line);
    std::string field;
    while (std::getline(header, field, ',')) r.columns.push_back(field);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        Vector row;
        while (std::getline(ss, field, ',')) {
            try {
                row.push_back(std::stod(field));
            } catch (const std::exception&) {
                throw ParseError("load_report_csv: " + path + ": line " + std::to_string(line_no) +
                                 ": bad number '" + field + "'");
            }
        }
        if (row.size() != r.columns.size())
            throw ParseError("load_report_csv: " + path + ": line " + std::to_string(line_no) +
                             ": expected " + std::to_string(r.columns.size()) + " fields, got " +
                             std::to_string(row.size()));
        r.rows.push_back(std::move(row));
    }
    return r;
}

// ---------------------------------------------------------------------------
// shared experiment plumbing

/// Runs fn(0..n-1) on a small thread pool. Work items own their outputs, so
/// results are independent of scheduling.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
    unsigned k = threads ? threads : std::thread::hardware_concurrency();
    if (k == 0) k = 1;
    k = static_cast<unsigned>(std::min<std::size_t>(k, n));
    if (k <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(k);
    for (unsigned t = 0; t < k; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

/// Everything a replication needs that does not depend on the noise draw:
/// meshes, operators, sensors, the projected truth and its noiseless sensor
/// samples. Heap members keep internal references stable across moves.
struct Dataset {
    std::unique_ptr<Mesh> mesh;
    std::unique_ptr<ForwardOperator> op;
    std::unique_ptr<DiscreteNorms> norms;
    SensorSet sensors;
    FieldVector f_true;     // truth projected onto the inversion mesh
    Vector truth_samples;   // noiseless (S f*)(x_i)
    double f_norm = 0.0;    // continuous ||f*||
    ProblemCoefficients coeff;
    NoiseKind noise_kind = NoiseKind::gaussian;
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

inline std::size_t steps_for(double tau, double T) {
    const auto n = static_cast<std::size_t>(std::llround(T / tau));
    if (n == 0 || std::abs(static_cast<double>(n) * tau - T) > 1e-9 * T)
        throw ArgumentError("tau must divide T into an integer number of steps");
    return n;
}

/// Builds the shared state for one experiment geometry. Truth data comes
/// either from the exact spectral solution (oracle; spectral presets only) or
/// from a forward solve on a truth_refine-times finer mesh and time grid,
/// which keeps the synthetic data clear of the inversion discretization.
inline Dataset build_dataset(const ExperimentConfig& cfg, double h, double tau, std::size_t sensors_k) {
    const SourcePreset& preset = source_preset(cfg.source_preset_id);

    Dataset ds;
    ds.coeff.a = ScalarField(1.0);
    ds.coeff.c = ScalarField(0.0);
    ds.coeff.g = TimeSignal(1.0);
    ds.coeff.T = cfg.T;
    ds.mesh = std::make_unique<Mesh>(build_mesh(h));
    ds.op = std::make_unique<ForwardOperator>(ForwardConfig(*ds.mesh, ds.coeff, tau, steps_for(tau, cfg.T)));
    ds.norms = std::make_unique<DiscreteNorms>(*ds.mesh);
    ds.sensors = make_uniform_sensors(sensors_k);
    ds.f_true = project_l2(*ds.mesh, preset.value);
    ds.f_norm = preset.l2_norm;
    ds.noise_kind = noise_kind_from_string(cfg.noise);
    ds.sigma = cfg.sigma;
    ds.seed = cfg.seed;

    if (cfg.truth == "oracle") {
        if (!preset.spectral())
            throw ArgumentError("truth='oracle' requires a spectral preset (p2)");
        std::vector<SpectralMode> modes;
        for (auto [p, q] : preset.mode_indices)
            modes.push_back(SpectralMode::make(p, q, ds.coeff.g, ds.coeff.T));
        ds.truth_samples = spectral_oracle(ds.coeff, modes, preset.mode_weights, ds.sensors.points);
    } else {
        const Mesh truth_mesh = build_mesh(h / static_cast<double>(cfg.truth_refine));
        const std::size_t truth_steps = steps_for(tau, cfg.T) * cfg.truth_refine;
        const ForwardOperator truth_op(ForwardConfig(truth_mesh, ds.coeff, truth_steps));
        const FieldVector f_fine = project_l2(truth_mesh, preset.value);
        ds.truth_samples = truth_op.sample(f_fine, ds.sensors);
    }
    return ds;
}

inline Dataset build_dataset(const ExperimentConfig& cfg) {
    return build_dataset(cfg, cfg.h, cfg.tau, cfg.sensors_k);
}

/// Measurements for one replication: truth plus a fresh noise draw from the
/// substream (master seed, replication index).
inline MeasurementSet measurements_for(const Dataset& ds, std::size_t replication) {
    MeasurementSet m;
    m.sensors = ds.sensors;
    m.noise.kind = ds.noise_kind;
    m.noise.sigma = ds.sigma;
    m.noise.seed = derive_substream(ds.seed, replication);
    m.truth = ds.truth_samples;
    m.values = ds.truth_samples;
    const Vector e = draw_noise(m.noise, ds.sensors.n);
    for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] += e[i];
    return m;
}

inline double rule_or_single_lambda(const ExperimentConfig& cfg, const Dataset& ds) {
    if (cfg.lambdas.size() == 1) return cfg.lambdas.front();
    if (!cfg.lambdas.empty())
        throw ArgumentError(cfg.experiment + ": give at most one --lambda (or none for the rule)");
    if (cfg.sigma == 0.0)
        throw ArgumentError(cfg.experiment + ": the lambda rule degenerates at sigma = 0; pass --lambda");
    return lambda_rule(cfg.sigma, ds.sensors.n, ds.f_norm, cfg.d);
}

// ---------------------------------------------------------------------------
// experiment runners

/// Forward accuracy against the exact spectral solution, on (h, tau) and the
/// refined (h/2, tau/4), for f = sin(pi x) sin(pi y).
inline Report run_forward_check(const ExperimentConfig& cfg) {
    ProblemCoefficients coeff;
    coeff.T = cfg.T;
    const SensorSet sensors = make_uniform_sensors(cfg.sensors_k);
    const std::vector<SpectralMode> modes = {SpectralMode::make(1, 1, coeff.g, coeff.T)};
    const Vector weights = {1.0};
    const Vector exact = spectral_oracle(coeff, modes, weights, sensors.points);
    const double exact_norm = empirical_norm(exact);

    Report report;
    report.name = "forward-check";
    report.columns = {"level", "h", "tau", "rel_err_n", "l2_err"};
    double l2_errors[2] = {0.0, 0.0};
    for (int level = 0; level < 2; ++level) {
        const double h = level == 0 ? cfg.h : cfg.h / 2.0;
        const double tau = level == 0 ? cfg.tau : cfg.tau / 4.0;  // tau ~ h^2 coupling
        const Mesh mesh = build_mesh(h);
        const ForwardOperator op(ForwardConfig(mesh, coeff, tau, steps_for(tau, cfg.T)));
        const FieldVector f = interpolate(mesh, [](double x, double y) {
            const double pi = 3.14159265358979323846;
            return std::sin(pi * x) * std::sin(pi * y);
        });
        const FieldVector u = op.solve(f);

        Vector sampled = evaluate_at_points(u, sensors.points);
        for (std::size_t i = 0; i < sampled.size(); ++i) sampled[i] -= exact[i];
        const double rel_err_n = empirical_norm(sampled) / exact_norm;

        const FieldVector u_exact = modes[0].alpha * f;  // exact state is alpha * mode
        const double l2_err = DiscreteNorms(mesh).l2(u - u_exact);
        l2_errors[level] = l2_err;
        report.rows.push_back({static_cast<double>(level), h, tau, rel_err_n, l2_err});
    }
    report.summary["alpha"] = modes[0].alpha;
    report.summary["rel_err_n_coarse"] = report.rows[0][3];
    report.summary["rel_err_n_fine"] = report.rows[1][3];
    report.summary["l2_ratio"] = l2_errors[0] / l2_errors[1];
    return report;
}

/// One Tikhonov solve. data_path, when nonempty, loads measurements from
/// disk instead of generating them; dump_data_path saves the generated set.
inline Report run_invert(const ExperimentConfig& cfg, const std::string& data_path = "",
                         const std::string& dump_data_path = "") {
    Dataset ds = build_dataset(cfg);
    MeasurementSet data;
    if (!data_path.empty()) {
        data = load_measurements(data_path);
    } else {
        data = measurements_for(ds, 0);
        if (!dump_data_path.empty()) save_measurements(data, dump_data_path);
    }

    const double lambda = rule_or_single_lambda(cfg, ds);
    TikhonovProblem problem(*ds.op, data, lambda);
    const TikhonovResult result = tikhonov_solve(problem);

    Report report;
    report.name = "invert";
    report.columns = {"lambda",     "residual_n", "penalty",       "objective",
                      "cg_iterations", "pred_err_n", "l2_err",     "hminus1_err"};
    double pred = std::nan(""), l2e = std::nan(""), hm1 = std::nan("");
    if (data.truth) {
        const ErrorMetrics m = error_metrics(*ds.op, result, ds.f_true, *data.truth, data.sensors, *ds.norms);
        pred = m.pred_err_n;
        l2e = m.l2_err;
        hm1 = m.hminus1_err;
    }
    report.rows.push_back({lambda, result.residual_n, result.penalty, result.objective,
                           static_cast<double>(result.cg_iterations), pred, l2e, hm1});
    report.summary["lambda"] = lambda;
    report.summary["residual_n"] = result.residual_n;
    report.summary["penalty"] = result.penalty;
    return report;
}

/// Tikhonov solves over a lambda list on one fixed dataset, reporting the
/// prediction-error minimizer. Solves run from the largest lambda down so
/// each warm-starts the next.
inline Report run_lambda_sweep(const ExperimentConfig& cfg) {
    Dataset ds = build_dataset(cfg);
    const MeasurementSet data = measurements_for(ds, 0);

    std::vector<double> lambdas = cfg.lambdas;
    if (lambdas.empty())
        for (int k = 1; k <= 10; ++k) lambdas.push_back(std::pow(10.0, -k));

    std::vector<std::size_t> order(lambdas.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return lambdas[a] > lambdas[b]; });

    std::vector<ErrorMetrics> metrics(lambdas.size());
    std::vector<double> penalties(lambdas.size());
    FieldVector warm;
    for (const std::size_t idx : order) {
        TikhonovProblem problem(*ds.op, data, lambdas[idx]);
        const TikhonovResult result = tikhonov_solve(problem, warm.mesh ? &warm : nullptr);
        metrics[idx] = error_metrics(*ds.op, result, ds.f_true, ds.truth_samples, data.sensors, *ds.norms);
        penalties[idx] = result.penalty;
        warm = result.f_h;
    }

    Report report;
    report.name = "lambda-sweep";
    report.columns = {"lambda", "pred_err_n", "l2_err", "residual_n", "penalty"};
    std::size_t argmin = 0;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        report.rows.push_back({lambdas[i], metrics[i].pred_err_n, metrics[i].l2_err,
                               metrics[i].residual_n, penalties[i]});
        if (metrics[i].pred_err_n < metrics[argmin].pred_err_n) argmin = i;
    }
    report.summary["argmin_lambda"] = lambdas[argmin];
    report.summary["argmin_pred_err_n"] = metrics[argmin].pred_err_n;
    if (cfg.sigma > 0.0)
        report.summary["rule_lambda"] = lambda_rule(cfg.sigma, ds.sensors.n, ds.f_norm, cfg.d);
    return report;
}

/// The self-consistent lambda fixed point on one dataset.
inline Report run_select_lambda(const ExperimentConfig& cfg) {
    Dataset ds = build_dataset(cfg);
    const MeasurementSet data = measurements_for(ds, 0);

    SelectLambdaOptions opts;
    opts.d = cfg.d;
    if (cfg.lambdas.size() == 1) opts.initial_lambda = cfg.lambdas.front();
    const LambdaTrace trace = select_lambda(*ds.op, data, opts);

    Report report;
    report.name = "select-lambda";
    report.columns = {"iteration", "lambda", "residual_n", "penalty", "lambda_next"};
    for (std::size_t j = 0; j < trace.iterates.size(); ++j) {
        const auto& it = trace.iterates[j];
        report.rows.push_back({static_cast<double>(j), it.lambda, it.residual_n, it.penalty, it.lambda_next});
    }
    report.summary["converged"] = trace.converged;
    report.summary["stop_reason"] = to_string(trace.stop_reason);
    report.summary["lambda_final"] = trace.lambda_final;
    report.summary["iterations"] = trace.iterates.size();
    report.summary["residual_n"] = trace.final.residual_n;
    report.summary["penalty"] = trace.final.penalty;
    if (!trace.iterates.empty()) {
        const auto& last = trace.iterates.back();
        const double exponent = 0.5 + static_cast<double>(cfg.d) / 8.0;
        const double lhs = std::pow(trace.lambda_final, exponent);
        const double rhs = last.residual_n / (std::sqrt(static_cast<double>(ds.sensors.n)) * last.penalty);
        report.summary["fixed_point_identity_rel_err"] = std::abs(lhs - rhs) / std::max(rhs, 1e-300);
    }
    if (cfg.sigma > 0.0) {
        report.summary["rule_lambda"] = lambda_rule(cfg.sigma, ds.sensors.n, ds.f_norm, cfg.d);
        report.summary["residual_over_sigma"] = trace.final.residual_n / cfg.sigma;
    }
    return report;
}

/// Monte Carlo error study: R replications with independent noise substreams
/// on fixed geometry, QQ statistics of the standardized prediction errors.
inline Report run_mc_study(const ExperimentConfig& cfg) {
    if (cfg.replications < 2) throw ArgumentError("mc-study: needs replications >= 2");
    Dataset ds = build_dataset(cfg);
    const double lambda = rule_or_single_lambda(cfg, ds);

    const std::size_t r_count = cfg.replications;
    std::vector<ErrorMetrics> metrics(r_count);
    parallel_for(r_count, cfg.threads, [&](std::size_t r) {
        const MeasurementSet data = measurements_for(ds, r);
        TikhonovProblem problem(*ds.op, data, lambda);
        const TikhonovResult result = tikhonov_solve(problem);
        metrics[r] = error_metrics(*ds.op, result, ds.f_true, ds.truth_samples, data.sensors, *ds.norms);
    });

    Report report;
    report.name = "mc-study";
    report.columns = {"rep", "pred_err_n", "l2_err", "hminus1_err", "residual_n", "lambda"};
    std::vector<double> pred(r_count), l2e(r_count), hm1(r_count), res(r_count);
    nlohmann::json records = nlohmann::json::array();
    for (std::size_t r = 0; r < r_count; ++r) {
        pred[r] = metrics[r].pred_err_n;
        l2e[r] = metrics[r].l2_err;
        hm1[r] = metrics[r].hminus1_err;
        res[r] = metrics[r].residual_n;
        report.rows.push_back({static_cast<double>(r), pred[r], l2e[r], hm1[r], res[r], lambda});
        records.push_back({{"rep", r}, {"seed", derive_substream(cfg.seed, r)}});
    }

    auto aggregate = [](const std::vector<double>& v) {
        return nlohmann::json{{"mean", mean(v)}, {"std", sample_std(v)}};
    };
    report.summary["lambda"] = lambda;
    report.summary["aggregates"] = {{"pred_err_n", aggregate(pred)},
                                    {"l2_err", aggregate(l2e)},
                                    {"hminus1_err", aggregate(hm1)},
                                    {"residual_n", aggregate(res)}};
    report.summary["rho0"] = ds.f_norm + cfg.sigma / std::sqrt(static_cast<double>(ds.sensors.n));
    report.summary["records"] = records;

    const std::vector<double> z = standardize(pred);
    const auto pairs = qq_pairs(z);
    nlohmann::json qq = nlohmann::json::array();
    std::vector<double> theo(pairs.size()), samp(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        theo[i] = pairs[i].first;
        samp[i] = pairs[i].second;
        qq.push_back({pairs[i].first, pairs[i].second});
    }
    report.summary["qq_pairs"] = qq;
    report.summary["qq_correlation"] = pearson_correlation(theo, samp);
    std::size_t tail = 0;
    for (double v : z)
        if (std::abs(v) > 3.0) ++tail;
    report.summary["tail_fraction_beyond_3std"] = static_cast<double>(tail) / static_cast<double>(r_count);

    const Histogram hist = histogram(pred, std::min<std::size_t>(20, r_count));
    report.summary["histogram"] = {{"edges", hist.edges}, {"counts", hist.counts}};
    return report;
}

namespace detail {

/// Smallest t with t |ln t| = target (target < 1/e), by bisection.
inline double solve_tau_log(double target) {
    const double e_inv = std::exp(-1.0);
    auto value = [](double t) { return t * std::abs(std::log(t)); };
    if (target >= value(e_inv)) return e_inv;
    double lo = 1e-12, hi = e_inv;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (value(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

/// Convergence-rate study over a ladder of sensor counts. Each rung couples
/// the discretization to its rule-chosen lambda: 1/h = round(lambda^{-1/4})
/// and tau solving tau |ln tau| = lambda^{1/2}, with the step count capped at
/// max_rate_steps (for smooth constant g the temporal error is far below the
/// spatial one, so the cap does not move the fit).
inline Report run_rate_check(const ExperimentConfig& cfg) {
    if (cfg.sigma <= 0.0) throw ArgumentError("rate-check: needs sigma > 0");
    const SourcePreset& preset = source_preset(cfg.source_preset_id);

    Report report;
    report.name = "rate-check";
    report.columns = {"rung", "n", "lambda", "h", "tau", "n_steps", "mean_pred_err_n", "std_pred_err_n"};

    std::vector<double> log_sqrt_lambda, log_mean_err;
    for (std::size_t rung = 0; rung < cfg.ladder_n.size(); ++rung) {
        const auto k = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(cfg.ladder_n[rung]))));
        const std::size_t n = k * k;  // sensor grids realize n as k^2
        const double lambda = lambda_rule(cfg.sigma, n, preset.l2_norm, cfg.d);

        const auto inv_h = std::max<long long>(4, std::llround(std::pow(lambda, -0.25)));
        const double h = 1.0 / static_cast<double>(inv_h);
        const double tau_target = detail::solve_tau_log(std::sqrt(lambda));
        auto n_steps = static_cast<std::size_t>(std::ceil(cfg.T / tau_target));
        n_steps = std::min(std::max<std::size_t>(n_steps, 8), cfg.max_rate_steps);
        const double tau = cfg.T / static_cast<double>(n_steps);

        Dataset ds = build_dataset(cfg, h, tau, k);
        std::vector<double> errs(cfg.replications);
        parallel_for(cfg.replications, cfg.threads, [&](std::size_t r) {
            const MeasurementSet data = measurements_for(ds, rung * cfg.replications + r);
            TikhonovProblem problem(*ds.op, data, lambda);
            const TikhonovResult result = tikhonov_solve(problem);
            Vector diff = ds.op->sample(result.f_h, ds.sensors);
            for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= ds.truth_samples[i];
            errs[r] = empirical_norm(diff);
        });

        const double m = mean(errs);
        report.rows.push_back({static_cast<double>(rung), static_cast<double>(n), lambda, h, tau,
                               static_cast<double>(n_steps), m, sample_std(errs)});
        log_sqrt_lambda.push_back(0.5 * std::log(lambda));
        log_mean_err.push_back(std::log(m));
    }

    if (report.rows.size() >= 2) {
        const LinearFit fit = linear_fit(log_sqrt_lambda, log_mean_err);
        report.summary["slope"] = fit.slope;
        report.summary["intercept"] = fit.intercept;
        report.summary["insufficient_ladder"] = false;
    } else {
        report.summary["slope"] = nullptr;
        report.summary["insufficient_ladder"] = true;
    }
    report.summary["replications"] = cfg.replications;
    return report;
}

/// Eigenvalue decay of the sampled source-to-state map: probes the discrete
/// forward operator on every basis vector, forms the terminal-state Gram
/// matrix G, and solves the dense pencil M v = rho G v.
inline Report run_eig_study(const ExperimentConfig& cfg) {
    ProblemCoefficients coeff;
    coeff.T = cfg.T;
    const Mesh mesh = build_mesh(cfg.h);
    if (mesh.n_dof > 400)
        throw ArgumentError("eig-study: dense study limited to n_dof <= 400, got " +
                            std::to_string(mesh.n_dof) + " (use a coarser --h)");
    const ForwardOperator op(ForwardConfig(mesh, coeff, cfg.tau, steps_for(cfg.tau, cfg.T)));
    const SparseMatrix& mass = op.mass();
    const std::size_t n = mesh.n_dof;

    std::vector<Vector> terminal(n);
    parallel_for(n, cfg.threads, [&](std::size_t j) {
        Vector e(n, 0.0);
        e[j] = 1.0;
        terminal[j] = op.solve(FieldVector(mesh, std::move(e))).coefficients;
    });

    DenseMatrix g(n, n);
    std::vector<Vector> m_terminal(n);
    for (std::size_t j = 0; j < n; ++j) m_terminal[j] = spmv(mass, terminal[j]);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = j; k < n; ++k) {
            const double v = dot(terminal[j], m_terminal[k]);
            g(j, k) = v;
            g(k, j) = v;
        }

    DenseMatrix m_dense(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t kk = mass.row_offsets[i]; kk < mass.row_offsets[i + 1]; ++kk)
            m_dense(i, mass.col_indices[kk]) = mass.values[kk];

    const SymmetricEig eig = dense_generalized_eig(m_dense, g);

    Report report;
    report.name = "eig-study";
    report.columns = {"k", "rho"};
    const std::size_t k_max = std::min<std::size_t>(20, n);
    for (std::size_t k = 0; k < k_max; ++k)
        report.rows.push_back({static_cast<double>(k + 1), eig.eigenvalues[k]});

    std::vector<double> log_k, log_rho;
    for (std::size_t k = 2; k <= k_max; ++k) {
        log_k.push_back(std::log(static_cast<double>(k)));
        log_rho.push_back(std::log(eig.eigenvalues[k - 1]));
    }
    report.summary["rho1"] = eig.eigenvalues[0];
    report.summary["slope"] = linear_fit(log_k, log_rho).slope;
    report.summary["reference_slope"] = 4.0 / static_cast<double>(cfg.d);
    const double mu11 = 2.0 * 3.14159265358979323846 * 3.14159265358979323846;
    report.summary["rho1_reference"] = std::pow(mu11 / (1.0 - std::exp(-mu11 * cfg.T)), 2.0);
    return report;
}

/// Dispatch on cfg.experiment. data/dump paths only apply to invert.
inline Report run_experiment(const ExperimentConfig& cfg, const std::string& data_path = "",
                             const std::string& dump_data_path = "") {
    cfg.validate();
    if (cfg.experiment == "forward-check") return run_forward_check(cfg);
    if (cfg.experiment == "invert") return run_invert(cfg, data_path, dump_data_path);
    if (cfg.experiment == "select-lambda") return run_select_lambda(cfg);
    if (cfg.experiment == "lambda-sweep") return run_lambda_sweep(cfg);
    if (cfg.experiment == "mc-study") return run_mc_study(cfg);
    if (cfg.experiment == "rate-check") return run_rate_check(cfg);
    if (cfg.experiment == "eig-study") return run_eig_study(cfg);
    throw ArgumentError("unknown experiment: " + cfg.experiment);
}

} // namespace heatinv
