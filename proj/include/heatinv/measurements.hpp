#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "heatinv/errors.hpp"
#include "heatinv/forward.hpp"
#include "heatinv/rng.hpp"
#include "heatinv/sensing.hpp"

namespace heatinv {

/// Sensor data m_i = (S f*)(x_i) + e_i. When the noiseless truth is kept,
/// values - truth are the realized noise draws.
struct MeasurementSet {
    SensorSet sensors;
    Vector values;
    std::optional<Vector> truth;
    NoiseModel noise;

    void validate() const {
        if (values.size() != sensors.n)
            throw ArgumentError("MeasurementSet: value count does not match sensor count");
        if (truth && truth->size() != sensors.n)
            throw ArgumentError("MeasurementSet: truth count does not match sensor count");
    }
};

inline Vector draw_noise(const NoiseModel& noise, std::size_t n) {
    noise.validate();
    Vector e(n, 0.0);
    if (noise.sigma == 0.0) return e;
    Rng rng(noise.seed);
    for (std::size_t i = 0; i < n; ++i) e[i] = noise.draw(rng);
    return e;
}

/// Synthetic data from a discrete forward solve. To stay clear of the
/// inverse crime, pass an operator on a mesh finer than the inversion mesh.
inline MeasurementSet generate_measurements(const ForwardOperator& fwd, const FieldVector& f_true,
                                            const SensorSet& sensors, const NoiseModel& noise) {
    MeasurementSet m;
    m.sensors = sensors;
    m.noise = noise;
    m.truth = fwd.sample(f_true, sensors);
    m.values = *m.truth;
    const Vector e = draw_noise(noise, sensors.n);
    for (std::size_t i = 0; i < sensors.n; ++i) m.values[i] += e[i];
    m.validate();
    return m;
}

/// Synthetic data from the exact spectral solution: no discretization at all
/// in the truth.
inline MeasurementSet generate_measurements(const ProblemCoefficients& coeff,
                                            const std::vector<SpectralMode>& modes,
                                            const Vector& weights, const SensorSet& sensors,
                                            const NoiseModel& noise) {
    MeasurementSet m;
    m.sensors = sensors;
    m.noise = noise;
    m.truth = spectral_oracle(coeff, modes, weights, sensors.points);
    m.values = *m.truth;
    const Vector e = draw_noise(noise, sensors.n);
    for (std::size_t i = 0; i < sensors.n; ++i) m.values[i] += e[i];
    m.validate();
    return m;
}

inline nlohmann::json measurements_to_json(const MeasurementSet& m) {
    m.validate();
    nlohmann::json j;
    j["n"] = m.sensors.n;
    auto& pts = j["sensor_points"] = nlohmann::json::array();
    for (const auto& p : m.sensors.points) pts.push_back({p[0], p[1]});
    j["values"] = m.values;
    if (m.truth) j["truth"] = *m.truth;
    j["noise"] = {{"kind", to_string(m.noise.kind)}, {"sigma", m.noise.sigma}, {"seed", m.noise.seed}};
    return j;
}

inline void save_measurements(const MeasurementSet& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_measurements: cannot open " + path + " for writing");
    out << measurements_to_json(m).dump(2) << '\n';
    if (!out) throw IoError("save_measurements: write failed for " + path);
}

inline MeasurementSet measurements_from_json(const nlohmann::json& j) {
    MeasurementSet m;
    try {
        const auto n = j.at("n").get<std::size_t>();
        std::vector<Point> pts;
        for (const auto& p : j.at("sensor_points")) {
            if (!p.is_array() || p.size() != 2)
                throw ParseError("measurement file: sensor_points entries must be [x, y] pairs");
            pts.push_back({p[0].get<double>(), p[1].get<double>()});
        }
        if (pts.size() != n)
            throw ParseError("measurement file: header n = " + std::to_string(n) + " but " +
                             std::to_string(pts.size()) + " sensor rows");
        m.sensors = sensor_set_from_points(std::move(pts));
        m.values = j.at("values").get<Vector>();
        if (m.values.size() != n)
            throw ParseError("measurement file: field 'values' has " + std::to_string(m.values.size()) +
                             " entries, expected " + std::to_string(n));
        if (j.contains("truth")) {
            m.truth = j.at("truth").get<Vector>();
            if (m.truth->size() != n)
                throw ParseError("measurement file: field 'truth' has " + std::to_string(m.truth->size()) +
                                 " entries, expected " + std::to_string(n));
        }
        const auto& jn = j.at("noise");
        m.noise.kind = noise_kind_from_string(jn.at("kind").get<std::string>());
        m.noise.sigma = jn.at("sigma").get<double>();
        m.noise.seed = jn.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("measurement file: ") + e.what());
    }
    m.noise.validate();
    m.validate();
    return m;
}

inline MeasurementSet load_measurements(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_measurements: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("load_measurements: " + path + ": " + e.what());
    }
    return measurements_from_json(j);
}

} // namespace heatinv
