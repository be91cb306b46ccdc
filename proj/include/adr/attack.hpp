#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "adr/data.hpp"
#include "adr/model.hpp"
#include "adr/ops.hpp"
#include "adr/rng.hpp"

namespace adr {

/// l-inf PGD parameters. Inputs live in [clamp_lo, clamp_hi].
struct AttackConfig {
    double epsilon = 8.0 / 255.0;
    double alpha = 2.0 / 255.0;
    std::int64_t steps = 10;
    bool random_init = true;
    double clamp_lo = 0.0;
    double clamp_hi = 1.0;
    bool debug_feasibility = false;

    void validate() const {
        if (epsilon < 0.0) throw parameter_error("attack: epsilon must be >= 0");
        if (steps < 0) throw parameter_error("attack: steps must be >= 0");
        if (steps > 0 && !(alpha > 0.0))
            throw parameter_error("attack: alpha must be positive when steps > 0");
        if (!(clamp_lo < clamp_hi)) throw parameter_error("attack: clamp_lo must be < clamp_hi");
    }
};

/// Number of in-loop feasibility assertions executed so far (debug mode).
inline std::atomic<std::uint64_t>& pgd_feasibility_checks() {
    static std::atomic<std::uint64_t> count{0};
    return count;
}

namespace detail {

inline double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline void project_ball_and_clamp(Tensor& x, const Tensor& center, const AttackConfig& cfg) {
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double lo = std::max(center.data[i] - cfg.epsilon, cfg.clamp_lo);
        const double hi = std::min(center.data[i] + cfg.epsilon, cfg.clamp_hi);
        x.data[i] = std::clamp(x.data[i], lo, hi);
    }
}

inline void assert_feasible(const Tensor& x, const Tensor& center, const AttackConfig& cfg,
                            const char* where) {
    ++pgd_feasibility_checks();
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        if (std::abs(x.data[i] - center.data[i]) > cfg.epsilon + 1e-9)
            throw numeric_error(std::string("pgd: epsilon-ball violation after ") + where);
        if (x.data[i] < cfg.clamp_lo - 1e-12 || x.data[i] > cfg.clamp_hi + 1e-12)
            throw numeric_error(std::string("pgd: clamp-range violation after ") + where);
    }
}

} // namespace detail

/// l-inf PGD against soft (or one-hot) target rows: optional uniform random
/// start inside the ball, then `steps` signed-gradient ascent steps of size
/// alpha, each projected back onto the epsilon ball around the original
/// input and the valid data range. sign(0) = 0.
inline Tensor pgd(const ModelSpec& spec, const ParamSet& params, const Tensor& x,
                  const Tensor& targets, const AttackConfig& cfg, Rng& rng) {
    cfg.validate();
    if (x.shape.size() != 4)
        throw dimension_error("pgd: expected NCHW batch, got " + shape_str(x.shape));
    if (targets.shape != Shape{x.shape[0], spec.num_classes})
        throw dimension_error("pgd: target rows " + shape_str(targets.shape) +
                              " do not match batch of " + std::to_string(x.shape[0]));
    Tensor adv = x;
    adv.node = -1;
    if (cfg.random_init) {
        // one draw per coordinate, once per attack (not per step)
        for (auto& v : adv.data) v += cfg.epsilon * rng.uniform(-1.0, 1.0);
        for (auto& v : adv.data) v = std::clamp(v, cfg.clamp_lo, cfg.clamp_hi);
    }
    if (cfg.debug_feasibility) detail::assert_feasible(adv, x, cfg, "init");
    for (std::int64_t k = 0; k < cfg.steps; ++k) {
        Tape tape;
        Tensor xt = tape.watch(adv);
        Tensor logits = forward(spec, params, xt, &tape, nullptr);
        Tensor loss = soft_cross_entropy(logits, targets, &tape);
        tape.backward(loss);
        Tensor g = tape.grad(xt);
        if (!g.all_finite()) throw numeric_error("pgd: non-finite input gradient");
        for (std::size_t i = 0; i < adv.data.size(); ++i)
            adv.data[i] += cfg.alpha * detail::sign0(g.data[i]);
        detail::project_ball_and_clamp(adv, x, cfg);
        if (cfg.debug_feasibility) detail::assert_feasible(adv, x, cfg, "step");
    }
    return adv;
}

inline std::vector<int> predict(const ModelSpec& spec, const ParamSet& params,
                                const Tensor& batch) {
    Tensor logits = forward(spec, params, batch);
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(logits.shape[0]));
    for (std::int64_t r = 0; r < logits.shape[0]; ++r)
        out.push_back(static_cast<int>(argmax_row(logits, r)));
    return out;
}

inline double standard_accuracy(const ModelSpec& spec, const ParamSet& params, const Dataset& ds,
                                std::int64_t batch_size = 128) {
    std::int64_t correct = 0;
    for (std::int64_t start = 0; start < ds.n; start += batch_size) {
        std::vector<std::int64_t> idx;
        for (std::int64_t i = start; i < std::min(start + batch_size, ds.n); ++i)
            idx.push_back(i);
        std::vector<int> labels;
        Tensor xb = ds.batch(idx, &labels);
        auto pred = predict(spec, params, xb);
        for (std::size_t i = 0; i < pred.size(); ++i)
            if (pred[i] == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.n);
}

/// PGD robust accuracy with one-hot targets built from the dataset labels.
/// Randomness comes from substream (seed, tag, batch_index).
inline double robust_accuracy(const ModelSpec& spec, const ParamSet& params, const Dataset& ds,
                              const AttackConfig& cfg, std::uint64_t seed,
                              const std::string& tag = "attack-eval",
                              std::int64_t batch_size = 128) {
    std::int64_t correct = 0;
    std::uint64_t batch_index = 0;
    for (std::int64_t start = 0; start < ds.n; start += batch_size, ++batch_index) {
        std::vector<std::int64_t> idx;
        for (std::int64_t i = start; i < std::min(start + batch_size, ds.n); ++i)
            idx.push_back(i);
        std::vector<int> labels;
        Tensor xb = ds.batch(idx, &labels);
        Tensor targets = one_hot(labels, spec.num_classes);
        Rng rng = Rng::substream(seed, tag, batch_index);
        Tensor adv = pgd(spec, params, xb, targets, cfg, rng);
        auto pred = predict(spec, params, adv);
        for (std::size_t i = 0; i < pred.size(); ++i)
            if (pred[i] == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.n);
}

struct SweepRow {
    double key = 0.0; // epsilon or step count
    double robust_acc = 0.0;
    std::int64_t n_examples = 0;
};

/// Robust accuracy per attack radius; the ε=0 entry is clean accuracy.
/// Step size scales with the radius: alpha = max(eps/4, base_alpha * eps/base_eps).
inline std::vector<SweepRow> eps_sweep(const ModelSpec& spec, const ParamSet& params,
                                       const Dataset& ds, const std::vector<double>& eps_list,
                                       const AttackConfig& cfg_base, std::uint64_t seed,
                                       std::int64_t batch_size = 128) {
    for (std::size_t i = 1; i < eps_list.size(); ++i)
        if (eps_list[i] < eps_list[i - 1])
            throw parameter_error("eps_sweep: eps_list must be ascending");
    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < eps_list.size(); ++i) {
        const double eps = eps_list[i];
        SweepRow row;
        row.key = eps;
        row.n_examples = ds.n;
        if (eps == 0.0) {
            row.robust_acc = standard_accuracy(spec, params, ds, batch_size);
        } else {
            AttackConfig cfg = cfg_base;
            cfg.epsilon = eps;
            const double scaled =
                cfg_base.epsilon > 0.0 ? cfg_base.alpha * eps / cfg_base.epsilon : 0.0;
            cfg.alpha = std::max(eps / 4.0, scaled);
            row.robust_acc = robust_accuracy(spec, params, ds, cfg, seed,
                                             "eps-sweep-" + std::to_string(i), batch_size);
        }
        rows.push_back(row);
    }
    return rows;
}

/// Robust accuracy per PGD step count at fixed radius.
inline std::vector<SweepRow> steps_sweep(const ModelSpec& spec, const ParamSet& params,
                                         const Dataset& ds,
                                         const std::vector<std::int64_t>& step_list,
                                         const AttackConfig& cfg_base, std::uint64_t seed,
                                         std::int64_t batch_size = 128) {
    for (std::size_t i = 1; i < step_list.size(); ++i)
        if (step_list[i] < step_list[i - 1])
            throw parameter_error("steps_sweep: step_list must be ascending");
    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < step_list.size(); ++i) {
        AttackConfig cfg = cfg_base;
        cfg.steps = step_list[i];
        SweepRow row;
        row.key = static_cast<double>(step_list[i]);
        row.n_examples = ds.n;
        row.robust_acc = robust_accuracy(spec, params, ds, cfg, seed,
                                         "steps-sweep-" + std::to_string(i), batch_size);
        rows.push_back(row);
    }
    return rows;
}

} // namespace adr
