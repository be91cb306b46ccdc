#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "adr/error.hpp"

namespace adr {

enum class ScheduleUnit { PerEpoch, PerIteration };

/// Cosine annealing endpoints over a horizon of scheduling units. Works for
/// both decreasing (start > end, e.g. temperature) and increasing
/// (start < end, e.g. interpolation factor) schedules.
struct AnnealSpec {
    double start = 0.0;
    double end = 0.0;
    std::int64_t horizon = 1;
    ScheduleUnit unit = ScheduleUnit::PerEpoch;

    void validate() const {
        if (horizon < 1) throw parameter_error("anneal spec: horizon must be >= 1");
        if (!std::isfinite(start) || !std::isfinite(end))
            throw parameter_error("anneal spec: endpoints must be finite");
    }

    static AnnealSpec constant(double v) { return AnnealSpec{v, v, 1, ScheduleUnit::PerEpoch}; }
};

/// value(t) = end + (start - end) * (1 + cos(pi * t / horizon)) / 2.
/// Exact at both endpoints: value(0) = start, value(horizon) = end.
inline double cosine_anneal(const AnnealSpec& spec, double t) {
    spec.validate();
    if (t < 0.0 || t > static_cast<double>(spec.horizon))
        throw parameter_error("cosine_anneal: t=" + std::to_string(t) + " outside [0, " +
                              std::to_string(spec.horizon) + "]");
    const double phase = (1.0 + std::cos(M_PI * t / static_cast<double>(spec.horizon))) / 2.0;
    return spec.end + (spec.start - spec.end) * phase;
}

} // namespace adr
