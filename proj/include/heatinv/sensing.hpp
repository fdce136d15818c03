#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "heatinv/errors.hpp"
#include "heatinv/mesh.hpp"
#include "heatinv/rng.hpp"

namespace heatinv {

/// A quasi-uniform set of sensor locations in the closed unit square.
/// d_max is the fill distance (largest distance from a domain point to its
/// nearest sensor), d_min the smallest pairwise separation; their ratio is
/// the quasi-uniformity bound B.
struct SensorSet {
    std::vector<Point> points;
    std::size_t n = 0;
    double d_max = 0.0;
    double d_min = 0.0;
    double quasi_uniformity() const { return d_max / d_min; }
};

/// k x k sensors at cell centers ((i+1/2)/k, (j+1/2)/k). Cell centers keep
/// the sensors off the mesh nodes, so sampling exercises genuine point
/// interpolation. Fill distance and separation have closed forms here.
inline SensorSet make_uniform_sensors(std::size_t k, double quasi_uniformity_bound = 4.0) {
    if (k < 2) throw ArgumentError("make_uniform_sensors: need k >= 2 per side");
    SensorSet s;
    s.n = k * k;
    s.points.reserve(s.n);
    const double spacing = 1.0 / static_cast<double>(k);
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < k; ++i)
            s.points.push_back({(static_cast<double>(i) + 0.5) * spacing,
                                (static_cast<double>(j) + 0.5) * spacing});
    s.d_min = spacing;
    s.d_max = 0.5 * spacing * std::sqrt(2.0);  // attained at the square's corners
    if (s.quasi_uniformity() > quasi_uniformity_bound)
        throw ArgumentError("make_uniform_sensors: quasi-uniformity bound violated");
    return s;
}

/// General sensor set from explicit points. Validates distinctness and
/// domain membership; d_min is exact (O(n^2)), d_max is estimated on a probe
/// grid. Meant for scattered test configurations, not for n in the 10^5 range.
inline SensorSet sensor_set_from_points(std::vector<Point> points,
                                        std::size_t probe_resolution = 64,
                                        double quasi_uniformity_bound = 4.0) {
    if (points.empty()) throw ArgumentError("sensor_set_from_points: empty sensor list");
    SensorSet s;
    s.n = points.size();
    for (const auto& p : points)
        if (p[0] < 0.0 || p[0] > 1.0 || p[1] < 0.0 || p[1] > 1.0)
            throw ArgumentError("sensor_set_from_points: sensor outside the closed unit square");

    double dmin2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = i + 1; j < points.size(); ++j) {
            const double dx = points[i][0] - points[j][0];
            const double dy = points[i][1] - points[j][1];
            dmin2 = std::min(dmin2, dx * dx + dy * dy);
        }
    if (!(dmin2 > 0.0)) throw ArgumentError("sensor_set_from_points: sensors must be pairwise distinct");
    s.d_min = std::sqrt(dmin2);

    double dmax2 = 0.0;
    const double step = 1.0 / static_cast<double>(probe_resolution);
    for (std::size_t j = 0; j <= probe_resolution; ++j)
        for (std::size_t i = 0; i <= probe_resolution; ++i) {
            const double x = static_cast<double>(i) * step;
            const double y = static_cast<double>(j) * step;
            double best = std::numeric_limits<double>::infinity();
            for (const auto& p : points) {
                const double dx = x - p[0];
                const double dy = y - p[1];
                best = std::min(best, dx * dx + dy * dy);
            }
            dmax2 = std::max(dmax2, best);
        }
    s.d_max = std::sqrt(dmax2);
    s.points = std::move(points);
    if (s.quasi_uniformity() > quasi_uniformity_bound)
        throw ArgumentError("sensor_set_from_points: quasi-uniformity bound violated");
    return s;
}

/// Empirical inner product (u, v)_n = (1/n) sum u_i v_i over sensor values.
inline double empirical_inner(const Vector& u, const Vector& v) {
    if (u.size() != v.size() || u.empty())
        throw ArgumentError("empirical_inner: vectors must be nonempty and of equal length");
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s / static_cast<double>(u.size());
}

/// Empirical semi-norm ||u||_n = sqrt((u, u)_n).
inline double empirical_norm(const Vector& u) { return std::sqrt(empirical_inner(u, u)); }

enum class NoiseKind { gaussian, uniform_bounded };

inline std::string to_string(NoiseKind k) {
    return k == NoiseKind::gaussian ? "gaussian" : "uniform_bounded";
}

inline NoiseKind noise_kind_from_string(const std::string& s) {
    if (s == "gaussian") return NoiseKind::gaussian;
    if (s == "uniform_bounded") return NoiseKind::uniform_bounded;
    throw ArgumentError("unknown noise kind: " + s);
}

/// iid measurement noise with standard deviation sigma. The gaussian kind is
/// sub-Gaussian with parameter sigma; uniform_bounded draws from
/// [-sigma*sqrt(3), sigma*sqrt(3)], which has variance sigma^2.
struct NoiseModel {
    NoiseKind kind = NoiseKind::gaussian;
    double sigma = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (sigma < 0.0) throw ArgumentError("NoiseModel: sigma must be nonnegative");
    }

    double draw(Rng& rng) const {
        if (kind == NoiseKind::gaussian) return sigma * rng.gaussian();
        const double half_width = sigma * std::sqrt(3.0);
        return rng.uniform(-half_width, half_width);
    }
};

} // namespace heatinv
