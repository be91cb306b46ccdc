#pragma once

#include <cstdint>
#include <vector>

#include "adr/ops.hpp"
#include "adr/schedule.hpp"
#include "adr/tensor.hpp"

namespace adr {

/// Soft target for one example: a probability row whose argmax is the
/// ground-truth class (ties break toward it), plus the per-sample
/// interpolation factor actually used and the teacher's predicted class.
struct RectifiedTarget {
    std::vector<double> distribution;
    double lambda_used = 0.0;
    std::int64_t teacher_argmax = 0;
};

struct AdrConfig {
    AnnealSpec tau_spec{2.5, 2.0, 1, ScheduleUnit::PerEpoch};
    AnnealSpec lambda_spec{0.7, 0.95, 1, ScheduleUnit::PerEpoch};

    void validate() const {
        tau_spec.validate();
        lambda_spec.validate();
        if (!(tau_spec.start > 0.0) || !(tau_spec.end > 0.0))
            throw parameter_error("adr config: tau endpoints must be positive");
        if (lambda_spec.start < 0.0 || lambda_spec.start > 1.0 || lambda_spec.end < 0.0 ||
            lambda_spec.end > 1.0)
            throw parameter_error("adr config: lambda endpoints must be in [0, 1]");
    }
};

/// Teacher's softened distribution P_t = softmax(z / tau) for one row of
/// clean-input teacher logits.
inline std::vector<double> teacher_distribution(const std::vector<double>& teacher_logits,
                                                double tau) {
    if (!(tau > 0.0)) throw parameter_error("teacher_distribution: tau must be positive");
    Tensor row({1, static_cast<std::int64_t>(teacher_logits.size())}, teacher_logits);
    Tensor p = softmax_t(row, tau);
    return p.data;
}

/// Per-sample interpolation factor:
///   lambda_i = clamp(lambda - (P_t[teacher_argmax] - P_t[y]), 0, 1).
/// A correct teacher leaves lambda unchanged; the more probability the
/// teacher puts on a wrong class, the less it is trusted.
inline double adjusted_lambda(const std::vector<double>& p_t, std::int64_t y, double lambda) {
    if (lambda < 0.0 || lambda > 1.0)
        throw parameter_error("adjusted_lambda: lambda must be in [0, 1]");
    if (y < 0 || y >= static_cast<std::int64_t>(p_t.size()))
        throw parameter_error("adjusted_lambda: class index " + std::to_string(y) +
                              " out of range");
    std::size_t top = 0;
    for (std::size_t j = 1; j < p_t.size(); ++j)
        if (p_t[j] > p_t[top]) top = j; // ties break toward the smallest index
    const double raw = lambda - (p_t[top] - p_t[static_cast<std::size_t>(y)]);
    return raw < 0.0 ? 0.0 : (raw > 1.0 ? 1.0 : raw);
}

/// Rectified distribution: y_tilde = lambda_i * P_t + (1 - lambda_i) * one_hot(y).
inline RectifiedTarget rectify(const std::vector<double>& p_t, std::int64_t y, double lambda_i) {
    if (lambda_i < 0.0 || lambda_i > 1.0)
        throw parameter_error("rectify: lambda_i must be in [0, 1]");
    if (y < 0 || y >= static_cast<std::int64_t>(p_t.size()))
        throw parameter_error("rectify: class index out of range");
    RectifiedTarget target;
    target.lambda_used = lambda_i;
    target.teacher_argmax = 0;
    for (std::size_t j = 1; j < p_t.size(); ++j)
        if (p_t[j] > p_t[static_cast<std::size_t>(target.teacher_argmax)])
            target.teacher_argmax = static_cast<std::int64_t>(j);
    target.distribution.resize(p_t.size());
    for (std::size_t j = 0; j < p_t.size(); ++j) {
        const double hot = static_cast<std::int64_t>(j) == y ? 1.0 : 0.0;
        target.distribution[j] = lambda_i * p_t[j] + (1.0 - lambda_i) * hot;
    }
    return target;
}

/// Full per-batch pipeline (teacher softening, per-sample lambda, mix).
/// Teacher logits must come from clean inputs with no gradient recording.
inline std::vector<RectifiedTarget> rectify_batch(const Tensor& teacher_logits,
                                                  const std::vector<int>& labels, double tau,
                                                  double lambda) {
    if (teacher_logits.shape.size() != 2 ||
        teacher_logits.shape[0] != static_cast<std::int64_t>(labels.size()))
        throw dimension_error("rectify_batch: logits " + shape_str(teacher_logits.shape) +
                              " do not match " + std::to_string(labels.size()) + " labels");
    const Tensor p_all = softmax_t(teacher_logits, tau);
    const std::int64_t c = p_all.shape[1];
    std::vector<RectifiedTarget> out;
    out.reserve(labels.size());
    for (std::size_t r = 0; r < labels.size(); ++r) {
        std::vector<double> row(p_all.data.begin() + static_cast<std::ptrdiff_t>(r * c),
                                p_all.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
        try {
            const double li = adjusted_lambda(row, labels[r], lambda);
            out.push_back(rectify(row, labels[r], li));
        } catch (const parameter_error& e) {
            throw parameter_error("rectify_batch: row " + std::to_string(r) + ": " + e.what());
        }
    }
    return out;
}

/// Pack rectified targets into an N x C tensor usable as a loss target.
inline Tensor targets_tensor(const std::vector<RectifiedTarget>& targets) {
    if (targets.empty()) throw parameter_error("targets_tensor: empty target list");
    const std::int64_t n = static_cast<std::int64_t>(targets.size());
    const std::int64_t c = static_cast<std::int64_t>(targets[0].distribution.size());
    Tensor out = Tensor::zeros({n, c});
    for (std::int64_t r = 0; r < n; ++r)
        for (std::int64_t j = 0; j < c; ++j)
            out(r, j) = targets[static_cast<std::size_t>(r)].distribution[static_cast<std::size_t>(j)];
    return out;
}

} // namespace adr
