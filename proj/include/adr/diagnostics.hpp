#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adr/attack.hpp"
#include "adr/data.hpp"
#include "adr/model.hpp"
#include "adr/ops.hpp"
#include "adr/rng.hpp"

namespace adr {

namespace detail {

inline void check_distribution(const std::vector<double>& p, const char* what) {
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0))
            throw parameter_error(std::string(what) + ": negative or non-finite entry");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw parameter_error(std::string(what) + ": entries sum to " + std::to_string(sum));
}

} // namespace detail

/// Shannon entropy in nats, with 0*ln(0) = 0.
inline double entropy(const std::vector<double>& p) {
    detail::check_distribution(p, "entropy");
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

/// Jensen-Shannon divergence in nats: 0.5*KL(p||m) + 0.5*KL(q||m) with
/// m = (p+q)/2. Symmetric, bounded by ln 2.
inline double js_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    detail::check_distribution(p, "js_divergence");
    detail::check_distribution(q, "js_divergence");
    if (p.size() != q.size())
        throw dimension_error("js_divergence: distributions of different lengths");
    double js = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) js += 0.5 * p[i] * std::log(p[i] / m);
        if (q[i] > 0.0) js += 0.5 * q[i] * std::log(q[i] / m);
    }
    return js;
}

/// Per-example entropies of one subset plus their histogram.
struct EntropyReport {
    std::vector<double> entropies;
    std::vector<double> bin_edges; // bins+1 edges
    std::vector<std::int64_t> counts;
    std::string subset;
};

inline EntropyReport make_entropy_report(std::vector<double> values, double lo, double hi,
                                         std::int64_t bins, std::string subset) {
    if (bins < 1) throw parameter_error("make_entropy_report: bins must be >= 1");
    EntropyReport r;
    r.subset = std::move(subset);
    r.entropies = std::move(values);
    r.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
    for (std::int64_t i = 0; i <= bins; ++i)
        r.bin_edges[static_cast<std::size_t>(i)] =
            lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    r.counts.assign(static_cast<std::size_t>(bins), 0);
    for (double v : r.entropies) {
        std::int64_t b = static_cast<std::int64_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
        b = std::clamp<std::int64_t>(b, 0, bins - 1);
        ++r.counts[static_cast<std::size_t>(b)];
    }
    return r;
}

inline std::vector<double> softmax_row_of(const Tensor& logits, std::int64_t r) {
    Tensor p = softmax(logits);
    const std::int64_t c = p.shape[1];
    return std::vector<double>(p.data.begin() + static_cast<std::ptrdiff_t>(r * c),
                               p.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
}

/// Output entropies partitioned by prediction correctness.
struct ConfidenceSplit {
    EntropyReport correct;
    EntropyReport misclassified;
};

inline ConfidenceSplit confidence_split(const ModelSpec& spec, const ParamSet& params,
                                        const Dataset& ds, std::int64_t bins = 30,
                                        std::int64_t batch_size = 128) {
    std::vector<double> ent_correct, ent_wrong;
    for (std::int64_t start = 0; start < ds.n; start += batch_size) {
        std::vector<std::int64_t> idx;
        for (std::int64_t i = start; i < std::min(start + batch_size, ds.n); ++i) idx.push_back(i);
        std::vector<int> labels;
        Tensor xb = ds.batch(idx, &labels);
        Tensor logits = forward(spec, params, xb);
        Tensor probs = softmax(logits);
        const std::int64_t c = probs.shape[1];
        for (std::int64_t r = 0; r < logits.shape[0]; ++r) {
            std::vector<double> row(probs.data.begin() + static_cast<std::ptrdiff_t>(r * c),
                                    probs.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
            const double h = entropy(row);
            if (argmax_row(logits, r) == labels[static_cast<std::size_t>(r)])
                ent_correct.push_back(h);
            else
                ent_wrong.push_back(h);
        }
    }
    const double hi = std::log(static_cast<double>(spec.num_classes));
    ConfidenceSplit out;
    out.correct = make_entropy_report(std::move(ent_correct), 0.0, hi, bins, "correct");
    out.misclassified = make_entropy_report(std::move(ent_wrong), 0.0, hi, bins, "misclassified");
    return out;
}

/// Clean-vs-adversarial output consistency: per-example JS divergence under
/// PGD plus entropy reports of both views. Works on unlabeled data too, in
/// which case the attack targets the model's own predictions.
struct ConsistencyReport {
    std::vector<double> js;
    EntropyReport clean_entropy;
    EntropyReport adv_entropy;
};

inline ConsistencyReport consistency_report(const ModelSpec& spec, const ParamSet& params,
                                            const Dataset& ds, const AttackConfig& attack_cfg,
                                            std::uint64_t seed, std::int64_t bins = 30,
                                            std::int64_t batch_size = 128) {
    ConsistencyReport out;
    std::vector<double> ent_clean, ent_adv;
    std::uint64_t batch_index = 0;
    for (std::int64_t start = 0; start < ds.n; start += batch_size, ++batch_index) {
        std::vector<std::int64_t> idx;
        for (std::int64_t i = start; i < std::min(start + batch_size, ds.n); ++i) idx.push_back(i);
        Tensor xb = ds.batch(idx);
        Tensor clean_logits = forward(spec, params, xb);
        std::vector<int> attack_labels;
        if (ds.labels.empty()) {
            for (std::int64_t r = 0; r < clean_logits.shape[0]; ++r)
                attack_labels.push_back(static_cast<int>(argmax_row(clean_logits, r)));
        } else {
            for (auto i : idx) attack_labels.push_back(ds.labels[static_cast<std::size_t>(i)]);
        }
        Tensor targets = one_hot(attack_labels, spec.num_classes);
        Rng rng = Rng::substream(seed, "consistency-attack", batch_index);
        Tensor adv = pgd(spec, params, xb, targets, attack_cfg, rng);
        Tensor adv_logits = forward(spec, params, adv);
        Tensor pc = softmax(clean_logits);
        Tensor pa = softmax(adv_logits);
        const std::int64_t c = pc.shape[1];
        for (std::int64_t r = 0; r < pc.shape[0]; ++r) {
            std::vector<double> rc(pc.data.begin() + static_cast<std::ptrdiff_t>(r * c),
                                   pc.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
            std::vector<double> ra(pa.data.begin() + static_cast<std::ptrdiff_t>(r * c),
                                   pa.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
            out.js.push_back(js_divergence(rc, ra));
            ent_clean.push_back(entropy(rc));
            ent_adv.push_back(entropy(ra));
        }
    }
    const double hi = std::log(static_cast<double>(spec.num_classes));
    out.clean_entropy = make_entropy_report(std::move(ent_clean), 0.0, hi, bins, "clean");
    out.adv_entropy = make_entropy_report(std::move(ent_adv), 0.0, hi, bins, "adversarial");
    return out;
}

/// Loss values over a probe grid: 1-D in weight space or 2-D around an input.
struct LandscapeGrid {
    std::vector<double> offsets_a;
    std::vector<double> offsets_b; // {0} for weight mode
    std::vector<double> loss;      // row-major a x b
    std::vector<double> grad_mag;  // input mode only; zeros otherwise
    std::string mode;              // "weight_1d" or "input_2d"
    std::uint64_t direction_seed = 0;
    std::vector<std::string> warnings;
};

namespace detail {

inline double mean_adversarial_ce(const ModelSpec& spec, const ParamSet& params,
                                  const Dataset& ds, const AttackConfig& attack_cfg,
                                  std::uint64_t seed, const std::string& tag,
                                  std::int64_t batch_size) {
    double total = 0.0;
    std::int64_t batches = 0;
    std::uint64_t batch_index = 0;
    for (std::int64_t start = 0; start < ds.n; start += batch_size, ++batch_index) {
        std::vector<std::int64_t> idx;
        for (std::int64_t i = start; i < std::min(start + batch_size, ds.n); ++i) idx.push_back(i);
        std::vector<int> labels;
        Tensor xb = ds.batch(idx, &labels);
        Tensor targets = one_hot(labels, spec.num_classes);
        Rng rng = Rng::substream(seed, tag, batch_index);
        Tensor adv = pgd(spec, params, xb, targets, attack_cfg, rng);
        Tensor logits = forward(spec, params, adv);
        total += soft_cross_entropy(logits, targets).item();
        ++batches;
    }
    return total / static_cast<double>(batches);
}

} // namespace detail

/// Sample a Gaussian direction in weight space, rescale each filter (conv
/// output channel / fully connected output row) to the norm of the
/// corresponding weight group, leave biases at zero. Returns the direction
/// as one tensor per parameter.
inline std::vector<Tensor> filter_normalized_direction(const ParamSet& params,
                                                       std::uint64_t seed,
                                                       std::vector<std::string>* warnings) {
    std::vector<Tensor> dir;
    dir.reserve(params.params.size());
    for (std::size_t pi = 0; pi < params.params.size(); ++pi) {
        const Tensor& w = params.params[pi].value;
        Tensor d = Tensor::zeros(w.shape);
        if (w.shape.size() < 2) { // bias
            dir.push_back(std::move(d));
            continue;
        }
        Rng rng = Rng::substream(seed, "landscape-direction", static_cast<std::uint64_t>(pi));
        for (auto& v : d.data) v = rng.normal();
        const std::int64_t groups = w.shape[0];
        const std::int64_t per_group = numel(w.shape) / groups;
        for (std::int64_t g = 0; g < groups; ++g) {
            double wn = 0.0, dn = 0.0;
            for (std::int64_t j = 0; j < per_group; ++j) {
                const double wv = w.data[static_cast<std::size_t>(g * per_group + j)];
                const double dv = d.data[static_cast<std::size_t>(g * per_group + j)];
                wn += wv * wv;
                dn += dv * dv;
            }
            wn = std::sqrt(wn);
            dn = std::sqrt(dn);
            if (wn == 0.0 || dn == 0.0) {
                for (std::int64_t j = 0; j < per_group; ++j)
                    d.data[static_cast<std::size_t>(g * per_group + j)] = 0.0;
                if (warnings)
                    warnings->push_back("zero-norm group " + std::to_string(g) + " in " +
                                        params.params[pi].name + "; direction left at zero");
                continue;
            }
            const double s = wn / dn;
            for (std::int64_t j = 0; j < per_group; ++j)
                d.data[static_cast<std::size_t>(g * per_group + j)] *= s;
        }
        dir.push_back(std::move(d));
    }
    return dir;
}

/// Loss along a filter-normalized random direction in weight space. Each
/// grid point perturbs the weights to w + a*d, regenerates adversarial
/// examples on the perturbed model and records mean CE against one-hot
/// labels.
inline LandscapeGrid weight_landscape(const ModelSpec& spec, const ParamSet& params,
                                      const Dataset& ds, const std::vector<double>& alpha_grid,
                                      std::uint64_t seed, const AttackConfig& attack_cfg,
                                      std::int64_t batch_size = 128) {
    if (alpha_grid.empty()) throw parameter_error("weight_landscape: empty alpha grid");
    if (ds.n == 0) throw parameter_error("weight_landscape: empty dataset");
    for (double a : alpha_grid)
        if (!std::isfinite(a)) throw parameter_error("weight_landscape: non-finite alpha");
    LandscapeGrid grid;
    grid.mode = "weight_1d";
    grid.direction_seed = seed;
    grid.offsets_a = alpha_grid;
    grid.offsets_b = {0.0};
    const std::vector<Tensor> dir = filter_normalized_direction(params, seed, &grid.warnings);
    for (std::size_t ai = 0; ai < alpha_grid.size(); ++ai) {
        const double a = alpha_grid[ai];
        ParamSet perturbed = params;
        for (std::size_t pi = 0; pi < perturbed.params.size(); ++pi)
            for (std::size_t j = 0; j < perturbed.params[pi].value.data.size(); ++j)
                perturbed.params[pi].value.data[j] += a * dir[pi].data[j];
        grid.loss.push_back(detail::mean_adversarial_ce(spec, perturbed, ds, attack_cfg, seed,
                                                        "landscape-attack-" + std::to_string(ai),
                                                        batch_size));
        grid.grad_mag.push_back(0.0);
    }
    return grid;
}

/// Loss surface around one input: z(a, b) = CE at clamp(x + a*r1 + b*r2)
/// with r1 = sign of the input gradient at x and r2 ~ Rademacher(0.5).
/// Each point also records the input-gradient magnitude.
inline LandscapeGrid input_landscape(const ModelSpec& spec, const ParamSet& params,
                                     const Tensor& x, int label,
                                     const std::vector<double>& grid_a,
                                     const std::vector<double>& grid_b, std::uint64_t seed,
                                     double clamp_lo = 0.0, double clamp_hi = 1.0) {
    if (x.shape.size() != 4 || x.shape[0] != 1)
        throw parameter_error("input_landscape: expected a single 1xCxHxW example");
    LandscapeGrid grid;
    grid.mode = "input_2d";
    grid.direction_seed = seed;
    grid.offsets_a = grid_a;
    grid.offsets_b = grid_b;
    const Tensor target = one_hot({label}, spec.num_classes);
    auto loss_and_grad = [&](const Tensor& point, Tensor* grad_out) {
        Tape tape;
        Tensor xt = tape.watch(point);
        Tensor logits = forward(spec, params, xt, &tape, nullptr);
        Tensor loss = soft_cross_entropy(logits, target, &tape);
        if (grad_out) {
            tape.backward(loss);
            *grad_out = tape.grad(xt);
        }
        return loss.item();
    };
    Tensor g0;
    loss_and_grad(x, &g0);
    Tensor r1 = g0;
    for (auto& v : r1.data) v = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    Tensor r2 = Tensor::zeros(x.shape);
    Rng rng = Rng::substream(seed, "landscape-rademacher", 0);
    for (auto& v : r2.data) v = rng.uniform() < 0.5 ? -1.0 : 1.0;
    for (double a : grid_a)
        for (double b : grid_b) {
            Tensor point = x;
            for (std::size_t i = 0; i < point.data.size(); ++i)
                point.data[i] = std::clamp(point.data[i] + a * r1.data[i] + b * r2.data[i],
                                           clamp_lo, clamp_hi);
            Tensor g;
            grid.loss.push_back(loss_and_grad(point, &g));
            double norm = 0.0;
            for (double v : g.data) norm += v * v;
            grid.grad_mag.push_back(std::sqrt(norm));
        }
    return grid;
}

// ---------------------------------------------------------------------------
// CSV / JSON emission
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

inline void write_histogram_csv(const std::string& path, const EntropyReport& r) {
    std::ofstream f(path);
    if (!f) throw config_error("cannot open " + path);
    f << "bin_lo,bin_hi,count\n";
    for (std::size_t i = 0; i < r.counts.size(); ++i)
        f << detail::fmt_double(r.bin_edges[i]) << "," << detail::fmt_double(r.bin_edges[i + 1])
          << "," << r.counts[i] << "\n";
}

inline void write_values_csv(const std::string& path, const std::string& column,
                             const std::vector<double>& values) {
    std::ofstream f(path);
    if (!f) throw config_error("cannot open " + path);
    f << "index," << column << "\n";
    for (std::size_t i = 0; i < values.size(); ++i)
        f << i << "," << detail::fmt_double(values[i]) << "\n";
}

inline void write_grid_csv(const std::string& path, const LandscapeGrid& grid) {
    std::ofstream f(path);
    if (!f) throw config_error("cannot open " + path);
    f << "a,b,loss,grad_mag\n";
    std::size_t k = 0;
    for (double a : grid.offsets_a)
        for (double b : grid.offsets_b) {
            f << detail::fmt_double(a) << "," << detail::fmt_double(b) << ","
              << detail::fmt_double(grid.loss[k]) << "," << detail::fmt_double(grid.grad_mag[k])
              << "\n";
            ++k;
        }
}

inline void write_sweep_csv(const std::string& path, const std::string& key_name,
                            const std::vector<SweepRow>& rows) {
    std::ofstream f(path);
    if (!f) throw config_error("cannot open " + path);
    f << key_name << ",robust_acc,n_examples\n";
    for (const auto& r : rows)
        f << detail::fmt_double(r.key) << "," << detail::fmt_double(r.robust_acc) << ","
          << r.n_examples << "\n";
}

inline nlohmann::ordered_json values_summary_json(const std::vector<double>& values) {
    nlohmann::ordered_json j;
    if (values.empty()) {
        j["count"] = 0;
        return j;
    }
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    double mean = 0.0;
    for (double v : sorted) mean += v;
    mean /= static_cast<double>(sorted.size());
    j["count"] = sorted.size();
    j["mean"] = mean;
    j["median"] = sorted[sorted.size() / 2];
    j["min"] = sorted.front();
    j["max"] = sorted.back();
    return j;
}

} // namespace adr
