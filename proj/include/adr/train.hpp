#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "adr/attack.hpp"
#include "adr/checkpoint.hpp"
#include "adr/data.hpp"
#include "adr/metrics.hpp"
#include "adr/model.hpp"
#include "adr/optim.hpp"
#include "adr/rectify.hpp"
#include "adr/schedule.hpp"

namespace adr {

enum class TrainMethod { At, Trades };

struct TrainConfig {
    TrainMethod method = TrainMethod::At;
    bool use_adr = false;
    AdrConfig adr;             // horizon 0 = resolve from the training length
    AttackConfig attack;       // training-time PGD
    AttackConfig eval_attack;  // validation PGD
    SgdConfig sgd;
    double gamma = 0.995;      // EMA decay
    std::int64_t epochs = 200;
    std::int64_t batch_size = 128;
    double beta = 6.0;         // TRADES coefficient
    double val_fraction = 0.1;
    std::int64_t aug_pad = 0;
    double aug_flip_prob = 0.0;
    std::uint64_t seed = 1;
    bool deterministic = true;

    void validate() const {
        if (epochs < 1) throw parameter_error("train: epochs must be >= 1");
        if (batch_size < 1) throw parameter_error("train: batch_size must be >= 1");
        if (gamma < 0.0 || gamma > 1.0) throw parameter_error("train: gamma must be in [0, 1]");
        if (method == TrainMethod::Trades && !(beta > 0.0))
            throw parameter_error("train: beta must be positive for TRADES");
        if (!(val_fraction > 0.0) || !(val_fraction < 1.0))
            throw parameter_error("train: val_fraction must be in (0, 1)");
        sgd.validate();
        attack.validate();
        eval_attack.validate();
        if (use_adr) adr.validate();
    }
};

/// Mutable state of a run: student weights, EMA teacher, optimizer state,
/// counters, best-checkpoint tracking and the per-epoch metric history.
struct RunState {
    ParamSet student;
    EmaState ema;
    SgdState opt;
    std::int64_t epoch = 0;     // completed epochs
    std::int64_t iteration = 0; // completed optimizer steps
    std::uint64_t seed = 0;
    double best_robust_acc = -1.0;
    std::int64_t best_epoch = -1;
    std::string best_checkpoint_path;
    std::vector<MetricRow> history;
};

/// Best-minus-final validation robust accuracy (the robust-overfitting gap).
inline double best_final_gap(const RunState& state) {
    if (state.history.empty()) return 0.0;
    return state.best_robust_acc - state.history.back().val_rob_acc;
}

/// Output locations; leave out_dir empty to keep the run in memory only.
struct TrainIo {
    std::string out_dir;

    bool enabled() const { return !out_dir.empty(); }
    std::string metrics_path() const { return out_dir + "/metrics.jsonl"; }
    std::string best_path() const { return out_dir + "/best.ckpt"; }
    std::string final_path() const { return out_dir + "/final.ckpt"; }
    std::string snapshot_path() const { return out_dir + "/diagnostic_snapshot.json"; }
};

/// Standard plus PGD robust accuracy over a validation split.
struct EvalResult {
    double standard_acc = 0.0;
    double robust_acc = 0.0;
};

inline EvalResult validate(const ModelSpec& spec, const ParamSet& params, const Dataset& val_set,
                           const AttackConfig& eval_attack, std::uint64_t seed,
                           const std::string& tag = "val-attack",
                           std::int64_t batch_size = 128) {
    if (val_set.n == 0) throw config_error("validate: empty validation set");
    EvalResult r;
    r.standard_acc = standard_accuracy(spec, params, val_set, batch_size);
    r.robust_acc = robust_accuracy(spec, params, val_set, eval_attack, seed, tag, batch_size);
    return r;
}

/// TRADES objective: soft CE on clean logits against the target rows plus
/// beta * KL(clean || adversarial). Pass tape-watched parameter tensors to
/// get theta-gradients.
inline Tensor trades_loss(const ModelSpec& spec, const std::vector<Tensor>& tracked,
                          const Tensor& x, const Tensor& x_adv, const Tensor& targets,
                          double beta, Tape* tape) {
    if (!(beta > 0.0)) throw parameter_error("trades_loss: beta must be positive");
    Tensor clean_logits = forward_tracked(spec, tracked, x, tape);
    Tensor adv_logits = forward_tracked(spec, tracked, x_adv, tape);
    Tensor ce = soft_cross_entropy(clean_logits, targets, tape);
    Tensor kl = kl_divergence(adv_logits, clean_logits, tape);
    return add(ce, scale(kl, beta, tape), tape);
}

inline double trades_loss_value(const ModelSpec& spec, const ParamSet& params, const Tensor& x,
                                const Tensor& x_adv, const Tensor& targets, double beta) {
    std::vector<Tensor> plain;
    plain.reserve(params.params.size());
    for (const auto& p : params.params) plain.push_back(p.value);
    return trades_loss(spec, plain, x, x_adv, targets, beta, nullptr).item();
}

namespace detail {

inline AnnealSpec resolve_horizon(AnnealSpec spec, std::int64_t epochs,
                                  std::int64_t iters_total) {
    if (spec.horizon == 0) {
        const std::int64_t units =
            spec.unit == ScheduleUnit::PerEpoch ? epochs : iters_total;
        spec.horizon = units > 1 ? units - 1 : 1;
    }
    return spec;
}

inline Checkpoint make_checkpoint(const ModelSpec& spec, const RunState& state) {
    Checkpoint ck;
    ck.spec = spec;
    ck.student = state.student;
    ck.teacher = state.ema.teacher;
    ck.velocity = state.opt.velocity;
    ck.epoch = state.epoch;
    ck.iteration = state.iteration;
    ck.rng_seed = state.seed;
    ck.best_robust_acc = state.best_robust_acc;
    ck.best_epoch = state.best_epoch;
    ck.history = state.history;
    return ck;
}

inline void write_diagnostic_snapshot(const TrainIo& io, std::int64_t epoch, std::int64_t batch,
                                      std::int64_t iteration, double loss, double lr) {
    if (!io.enabled()) return;
    nlohmann::ordered_json j;
    j["event"] = "non_finite_loss";
    j["epoch"] = epoch;
    j["batch"] = batch;
    j["iteration"] = iteration;
    j["loss"] = std::isfinite(loss) ? nlohmann::json(loss) : nlohmann::json(nullptr);
    j["lr"] = lr;
    std::ofstream f(io.snapshot_path());
    f << j.dump(2) << "\n";
}

} // namespace detail

/// Shared training loop for AT, AT+ADR, TRADES and TRADES+ADR. Implements
/// the full per-batch pipeline: schedule lookup, clean-input teacher
/// softening and rectification (ADR), PGD example construction, one
/// optimizer step, one EMA teacher update, then per-epoch validation with
/// best-checkpoint retention.
///
/// All randomness is drawn from substreams of cfg.seed keyed by purpose and
/// epoch/batch index, so runs with equal config and seed are bitwise
/// reproducible and a resumed run replays the exact stream of the
/// uninterrupted one.
inline RunState train_run(const ModelSpec& spec, const TrainConfig& cfg, const Dataset& pool,
                          const TrainIo& io = {}, const Checkpoint* resume = nullptr) {
    cfg.validate();
    spec.validate();
    if (pool.n < 2) throw config_error("train: dataset too small to split");
    auto [train_set, val_set] = split(pool, cfg.val_fraction, cfg.seed);
    if (val_set.n == 0) throw config_error("train: empty validation split");

    const std::int64_t n_train = train_set.n;
    const std::int64_t batches_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
    const std::int64_t iters_total = batches_per_epoch * cfg.epochs;
    const AnnealSpec tau_spec = detail::resolve_horizon(cfg.adr.tau_spec, cfg.epochs, iters_total);
    const AnnealSpec lambda_spec =
        detail::resolve_horizon(cfg.adr.lambda_spec, cfg.epochs, iters_total);

    RunState state;
    state.seed = cfg.seed;
    if (resume) {
        if (resume->student.params.empty())
            throw checkpoint_error("resume: checkpoint has no student parameters");
        state.student = resume->student;
        state.ema.teacher = resume->teacher;
        state.ema.gamma = cfg.gamma;
        state.opt.velocity = resume->velocity;
        state.epoch = resume->epoch;
        state.iteration = resume->iteration;
        state.seed = resume->rng_seed;
        state.best_robust_acc = resume->best_robust_acc;
        state.best_epoch = resume->best_epoch;
        state.history = resume->history;
    } else {
        state.student = init(spec, cfg.seed);
        state.ema.teacher = state.student; // Algorithm line 1: teacher starts as the student
        state.ema.gamma = cfg.gamma;
    }

    if (io.enabled()) std::filesystem::create_directories(io.out_dir);

    for (std::int64_t e = state.epoch; e < cfg.epochs; ++e) {
        const auto epoch_start = std::chrono::steady_clock::now();
        const double lr_e = lr_at(cfg.sgd.lr, e, cfg.epochs);
        SgdConfig sgd_e = cfg.sgd;
        sgd_e.lr = lr_e;
        double tau_e = 0.0, lambda_e = 0.0;
        if (cfg.use_adr) {
            if (tau_spec.unit == ScheduleUnit::PerEpoch)
                tau_e = cosine_anneal(tau_spec, static_cast<double>(std::min(e, tau_spec.horizon)));
            if (lambda_spec.unit == ScheduleUnit::PerEpoch)
                lambda_e = cosine_anneal(lambda_spec,
                                         static_cast<double>(std::min(e, lambda_spec.horizon)));
        }

        std::vector<std::int64_t> order(static_cast<std::size_t>(n_train));
        for (std::int64_t i = 0; i < n_train; ++i) order[static_cast<std::size_t>(i)] = i;
        {
            Rng shuffle_rng = Rng::substream(state.seed, "shuffle", static_cast<std::uint64_t>(e));
            shuffle_rng.shuffle(order);
        }

        double loss_sum = 0.0;
        for (std::int64_t b = 0; b < batches_per_epoch; ++b) {
            const std::int64_t start = b * cfg.batch_size;
            const std::int64_t stop = std::min(start + cfg.batch_size, n_train);
            std::vector<std::int64_t> idx(order.begin() + start, order.begin() + stop);
            std::vector<int> labels;
            Tensor xb = train_set.batch(idx, &labels);
            const std::uint64_t step_key =
                static_cast<std::uint64_t>(e * batches_per_epoch + b);
            if (cfg.aug_pad > 0 || cfg.aug_flip_prob > 0.0) {
                Rng aug_rng = Rng::substream(state.seed, "augment", step_key);
                xb = augment(xb, cfg.aug_pad, cfg.aug_flip_prob, aug_rng);
            }

            if (cfg.use_adr) {
                if (tau_spec.unit == ScheduleUnit::PerIteration)
                    tau_e = cosine_anneal(
                        tau_spec,
                        static_cast<double>(std::min(state.iteration, tau_spec.horizon)));
                if (lambda_spec.unit == ScheduleUnit::PerIteration)
                    lambda_e = cosine_anneal(
                        lambda_spec,
                        static_cast<double>(std::min(state.iteration, lambda_spec.horizon)));
            }

            // Targets: one-hot for plain AT/TRADES, rectified for ADR. The
            // teacher only ever sees the clean inputs, with no recording.
            Tensor targets;
            if (cfg.use_adr) {
                Tensor teacher_logits = forward(spec, state.ema.teacher, xb);
                targets = targets_tensor(rectify_batch(teacher_logits, labels, tau_e, lambda_e));
            } else {
                targets = one_hot(labels, spec.num_classes);
            }

            // Inner maximization: CE ascent against the training targets for
            // AT; for TRADES the attack climbs KL(clean || adv), whose input
            // gradient equals CE ascent against the frozen clean distribution.
            Tensor attack_target = targets;
            if (cfg.method == TrainMethod::Trades)
                attack_target = softmax(forward(spec, state.student, xb));
            Rng attack_rng = Rng::substream(state.seed, "attack", step_key);
            Tensor x_adv = pgd(spec, state.student, xb, attack_target, cfg.attack, attack_rng);

            Tape tape;
            std::vector<int> param_nodes;
            std::vector<Tensor> tracked = watch_params(state.student, tape, &param_nodes);
            Tensor loss;
            if (cfg.method == TrainMethod::At) {
                Tensor logits = forward_tracked(spec, tracked, x_adv, &tape);
                loss = soft_cross_entropy(logits, targets, &tape);
            } else {
                loss = trades_loss(spec, tracked, xb, x_adv, targets, cfg.beta, &tape);
            }
            const double loss_v = loss.item();
            if (!std::isfinite(loss_v)) {
                detail::write_diagnostic_snapshot(io, e, b, state.iteration, loss_v, lr_e);
                throw numeric_error("train: non-finite loss at epoch " + std::to_string(e) +
                                    ", batch " + std::to_string(b) +
                                    (io.enabled() ? " (snapshot: " + io.snapshot_path() + ")"
                                                  : ""));
            }
            tape.backward(loss);
            std::vector<Tensor> grads;
            grads.reserve(param_nodes.size());
            for (int node : param_nodes) grads.push_back(tape.grad(node));
            sgd_step(state.student, grads, state.opt, sgd_e);
            ema_update(state.ema, state.student);
            ++state.iteration;
            loss_sum += loss_v;
        }

        const EvalResult student_eval =
            validate(spec, state.student, val_set, cfg.eval_attack, state.seed,
                     "val-student-" + std::to_string(e), cfg.batch_size);
        const EvalResult teacher_eval =
            validate(spec, state.ema.teacher, val_set, cfg.eval_attack, state.seed,
                     "val-teacher-" + std::to_string(e), cfg.batch_size);

        MetricRow row;
        row.epoch = e;
        row.lr = lr_e;
        if (cfg.use_adr) {
            row.tau = tau_e;
            row.lambda = lambda_e;
        }
        row.train_loss = loss_sum / static_cast<double>(batches_per_epoch);
        row.val_std_acc = student_eval.standard_acc;
        row.val_rob_acc = student_eval.robust_acc;
        row.val_rob_acc_ema = teacher_eval.robust_acc;
        const auto epoch_end = std::chrono::steady_clock::now();
        row.wall_s = cfg.deterministic
                         ? 0.0
                         : std::chrono::duration<double>(epoch_end - epoch_start).count();
        state.history.push_back(row);
        state.epoch = e + 1;

        if (student_eval.robust_acc > state.best_robust_acc) {
            state.best_robust_acc = student_eval.robust_acc;
            state.best_epoch = e;
            if (io.enabled()) {
                save_checkpoint(detail::make_checkpoint(spec, state), io.best_path());
                state.best_checkpoint_path = io.best_path();
            }
        }
        if (io.enabled()) append_metrics_jsonl(io.metrics_path(), row);
    }

    if (io.enabled()) save_checkpoint(detail::make_checkpoint(spec, state), io.final_path());
    return state;
}

/// Baseline PGD adversarial training (one-hot targets). The EMA teacher is
/// still tracked so weight-averaged evaluation stays available.
inline RunState train_at(const ModelSpec& spec, const TrainConfig& cfg, const Dataset& pool,
                         const TrainIo& io = {}, const Checkpoint* resume = nullptr) {
    if (cfg.use_adr) throw parameter_error("train_at: cfg.use_adr must be false");
    return train_run(spec, cfg, pool, io, resume);
}

/// Annealing self-distillation rectification training.
inline RunState train_adr(const ModelSpec& spec, const TrainConfig& cfg, const Dataset& pool,
                          const TrainIo& io = {}, const Checkpoint* resume = nullptr) {
    if (!cfg.use_adr) throw parameter_error("train_adr: cfg.use_adr must be true");
    return train_run(spec, cfg, pool, io, resume);
}

} // namespace adr
