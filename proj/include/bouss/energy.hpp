#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "bouss/coefficients.hpp"
#include "bouss/forward.hpp"
#include "bouss/mesh.hpp"

namespace bouss {

struct EnergyRecord {
    double t = 0.0;
    double E = 0.0;
    double drift = 0.0;          ///< E(t) - E(0)
    double relative_drift = 0.0; ///< drift / max(|E(0)|, floor)
    double min_coeff_factor = 0.0; ///< min over Gauss points of 1 + alpha c^2 N
    double min_c = 0.0;
};

inline constexpr double energy_floor = 1e-14;

/// E = 1/2 int [(1 + alpha c^2 N) V^2 + c N^2] by Gauss quadrature of the P1 interpolants.
inline double energy(const Mesh& mesh, const CoefficientSamples& samples, double alpha,
                     const StatePair& s) {
    double acc = 0.0;
    for (std::size_t e = 0; e < mesh.n_elements(); ++e)
        for (std::size_t q = 0; q < GaussRule::size; ++q) {
            const double nq = Mesh::interpolate(s.N, e, q);
            const double vq = Mesh::interpolate(s.V, e, q);
            acc += mesh.gauss_weight(q) *
                   ((1.0 + alpha * samples.c2(e, q) * nq) * vq * vq + samples.c(e, q) * nq * nq);
        }
    return 0.5 * acc;
}

inline double energy(const Mesh& mesh, const CoefficientProfile& profile, double alpha,
                     const StatePair& s) {
    check_state(mesh, s);
    return energy(mesh, CoefficientSamples(profile, mesh), alpha, s);
}

/// Incremental energy diagnostics; the first recorded state fixes E(0).
class EnergyMonitor {
public:
    EnergyMonitor(const Mesh& mesh, const CoefficientProfile& profile, double alpha)
        : mesh_(mesh), samples_(profile, mesh), alpha_(alpha) {
        for (double c : samples_.c_values())
            min_c_ = std::min(min_c_, c);
    }

    EnergyRecord record(double t, const StatePair& s) {
        EnergyRecord r;
        r.t = t;
        r.E = energy(mesh_, samples_, alpha_, s);
        if (!started_) {
            e0_ = r.E;
            started_ = true;
        }
        r.drift = r.E - e0_;
        r.relative_drift = r.drift / std::max(std::abs(e0_), energy_floor);
        r.min_coeff_factor = std::numeric_limits<double>::infinity();
        for (std::size_t e = 0; e < mesh_.n_elements(); ++e)
            for (std::size_t q = 0; q < GaussRule::size; ++q)
                r.min_coeff_factor =
                    std::min(r.min_coeff_factor,
                             1.0 + alpha_ * samples_.c2(e, q) * Mesh::interpolate(s.N, e, q));
        r.min_c = min_c_;
        return r;
    }

private:
    Mesh mesh_;
    CoefficientSamples samples_;
    double alpha_;
    double min_c_ = std::numeric_limits<double>::infinity();
    double e0_ = 0.0;
    bool started_ = false;
};

inline std::vector<EnergyRecord> energy_series(const Trajectory& trajectory, const Mesh& mesh,
                                               const CoefficientProfile& profile, double alpha) {
    EnergyMonitor monitor(mesh, profile, alpha);
    std::vector<EnergyRecord> out;
    out.reserve(trajectory.snapshots.size());
    for (std::size_t k = 0; k < trajectory.snapshots.size(); ++k)
        out.push_back(monitor.record(trajectory.times[k], trajectory.snapshots[k]));
    return out;
}

/// Largest |relative drift| over a series.
inline double max_relative_drift(const std::vector<EnergyRecord>& series) {
    double m = 0.0;
    for (const auto& r : series)
        m = std::max(m, std::abs(r.relative_drift));
    return m;
}

} // namespace bouss
