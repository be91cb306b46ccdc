#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "adr/model.hpp"
#include "adr/tensor.hpp"

namespace adr {

struct SgdConfig {
    double lr = 0.1;
    double momentum = 0.9;
    bool nesterov = true;
    double weight_decay = 0.0005;

    void validate() const {
        if (!(lr > 0.0)) throw parameter_error("sgd: learning rate must be positive");
        if (momentum < 0.0 || momentum >= 1.0)
            throw parameter_error("sgd: momentum must be in [0, 1)");
        if (weight_decay < 0.0) throw parameter_error("sgd: weight decay must be non-negative");
    }
};

/// Per-parameter velocity buffers, zero-initialized on first use.
struct SgdState {
    std::vector<Tensor> velocity;

    void ensure(const ParamSet& ps) {
        if (!velocity.empty()) return;
        velocity.reserve(ps.params.size());
        for (const auto& p : ps.params) velocity.push_back(Tensor::zeros(p.value.shape));
    }
};

/// One SGD step with weight decay and (Nesterov) momentum:
///   g <- grad + wd*w;  v <- m*v + g;
///   w <- w - lr*(g + m*v)   (nesterov)
///   w <- w - lr*v           (otherwise)
inline void sgd_step(ParamSet& params, const std::vector<Tensor>& grads, SgdState& state,
                     const SgdConfig& cfg) {
    cfg.validate();
    if (grads.size() != params.params.size())
        throw dimension_error("sgd_step: got " + std::to_string(grads.size()) +
                              " gradients for " + std::to_string(params.params.size()) +
                              " parameters");
    state.ensure(params);
    for (std::size_t i = 0; i < params.params.size(); ++i) {
        auto& p = params.params[i];
        const Tensor& grad = grads[i];
        check_same_shape(p.value, grad, "sgd_step");
        if (!grad.all_finite())
            throw numeric_error("sgd_step: non-finite gradient for parameter '" + p.name + "'");
        Tensor& v = state.velocity[i];
        for (std::size_t j = 0; j < p.value.data.size(); ++j) {
            const double g = grad.data[j] + cfg.weight_decay * p.value.data[j];
            v.data[j] = cfg.momentum * v.data[j] + g;
            const double update = cfg.nesterov ? g + cfg.momentum * v.data[j] : v.data[j];
            p.value.data[j] -= cfg.lr * update;
        }
    }
}

/// Step decay: full rate for the first half of training, /10 from 50%, /100
/// from 75% (boundaries at floor of the fraction).
inline double lr_at(double base_lr, std::int64_t epoch, std::int64_t total_epochs) {
    if (epoch < 0 || epoch >= total_epochs)
        throw parameter_error("lr_at: epoch " + std::to_string(epoch) + " outside horizon " +
                              std::to_string(total_epochs));
    const std::int64_t half = total_epochs / 2;
    const std::int64_t three_quarters = (3 * total_epochs) / 4;
    if (epoch < half) return base_lr;
    if (epoch < three_quarters) return base_lr / 10.0;
    return base_lr / 100.0;
}

/// Exponential-moving-average teacher: theta_t = gamma*theta_t + (1-gamma)*theta_s.
struct EmaState {
    ParamSet teacher;
    double gamma = 0.995;
};

inline void ema_update(EmaState& ema, const ParamSet& student) {
    if (ema.gamma < 0.0 || ema.gamma > 1.0)
        throw parameter_error("ema_update: gamma must be in [0, 1]");
    if (ema.teacher.params.size() != student.params.size())
        throw dimension_error("ema_update: teacher/student parameter count mismatch");
    for (std::size_t i = 0; i < student.params.size(); ++i) {
        Tensor& t = ema.teacher.params[i].value;
        const Tensor& s = student.params[i].value;
        check_same_shape(t, s, "ema_update");
        for (std::size_t j = 0; j < t.data.size(); ++j)
            t.data[j] = ema.gamma * t.data[j] + (1.0 - ema.gamma) * s.data[j];
    }
}

} // namespace adr
