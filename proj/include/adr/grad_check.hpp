#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "adr/error.hpp"

namespace adr {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_coordinate = 0;
    bool pass = false;
};

/// Compare an analytic gradient against central finite differences of f,
/// coordinate by coordinate. The error at coordinate i is
/// |a_i - d_i| / max(|a_i|, |d_i|), falling back to the absolute difference
/// when both magnitudes sit below 1e-6 (flat or disconnected coordinates).
inline GradCheckReport grad_check(const std::function<double(const std::vector<double>&)>& f,
                                  std::vector<double> point,
                                  const std::vector<double>& analytic_grad,
                                  double step, double tolerance) {
    if (!(step > 0.0)) throw parameter_error("grad_check: step must be positive");
    if (point.size() != analytic_grad.size())
        throw dimension_error("grad_check: gradient length does not match point length");
    GradCheckReport report;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double orig = point[i];
        point[i] = orig + step;
        const double fp = f(point);
        point[i] = orig - step;
        const double fm = f(point);
        point[i] = orig;
        const double numeric = (fp - fm) / (2.0 * step);
        const double a = analytic_grad[i];
        const double scale = std::max(std::abs(a), std::abs(numeric));
        const double err = scale < 1e-6 ? std::abs(a - numeric) : std::abs(a - numeric) / scale;
        if (err > report.max_rel_error) {
            report.max_rel_error = err;
            report.worst_coordinate = i;
        }
    }
    report.pass = report.max_rel_error < tolerance;
    return report;
}

} // namespace adr
