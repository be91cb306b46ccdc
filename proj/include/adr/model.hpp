#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "adr/ops.hpp"
#include "adr/rng.hpp"
#include "adr/tensor.hpp"

namespace adr {

enum class ModelKind { Mlp, SmallConv };

/// Architecture description. Mlp widths give the full chain including the
/// (flattened) input width and ending at num_classes. SmallConv is fixed:
/// conv(3x3,16)-relu-pool - conv(3x3,32)-relu-pool - flatten - fc(128)-relu
/// - fc(num_classes), padding 1 on both convs.
struct ModelSpec {
    ModelKind kind = ModelKind::Mlp;
    std::vector<std::int64_t> mlp_widths;
    std::int64_t in_c = 1, in_h = 8, in_w = 8;
    std::int64_t num_classes = 10;

    static ModelSpec mlp(std::vector<std::int64_t> widths, std::int64_t c, std::int64_t h,
                         std::int64_t w) {
        ModelSpec s;
        s.kind = ModelKind::Mlp;
        s.mlp_widths = std::move(widths);
        s.in_c = c;
        s.in_h = h;
        s.in_w = w;
        s.num_classes = s.mlp_widths.empty() ? 0 : s.mlp_widths.back();
        s.validate();
        return s;
    }

    static ModelSpec small_conv(std::int64_t c, std::int64_t h, std::int64_t w,
                                std::int64_t classes) {
        ModelSpec s;
        s.kind = ModelKind::SmallConv;
        s.in_c = c;
        s.in_h = h;
        s.in_w = w;
        s.num_classes = classes;
        s.validate();
        return s;
    }

    void validate() const {
        if (in_c < 1 || in_h < 1 || in_w < 1 || num_classes < 2)
            throw parameter_error("model spec: invalid input shape or class count");
        if (kind == ModelKind::Mlp) {
            if (mlp_widths.size() < 2)
                throw parameter_error("model spec: MLP needs at least input and output widths");
            for (auto w : mlp_widths)
                if (w < 1) throw parameter_error("model spec: zero-width MLP layer");
            if (mlp_widths.front() != in_c * in_h * in_w)
                throw parameter_error("model spec: MLP input width " +
                                      std::to_string(mlp_widths.front()) +
                                      " does not match input shape");
            if (mlp_widths.back() != num_classes)
                throw parameter_error("model spec: MLP widths must end at num_classes");
        } else {
            if (in_h % 4 != 0 || in_w % 4 != 0)
                throw parameter_error(
                    "model spec: SmallConv needs spatial extents divisible by 4");
        }
    }
};

struct Param {
    std::string name;
    Tensor value;
};

/// Named, ordered parameter tensors with flat access for EMA, checkpoints
/// and landscape probes. Ordering is deterministic given the ModelSpec.
struct ParamSet {
    std::vector<Param> params;

    std::int64_t total_count() const {
        std::int64_t n = 0;
        for (const auto& p : params) n += p.value.size();
        return n;
    }

    std::vector<double> flatten() const {
        std::vector<double> flat;
        flat.reserve(static_cast<std::size_t>(total_count()));
        for (const auto& p : params) flat.insert(flat.end(), p.value.data.begin(), p.value.data.end());
        return flat;
    }

    void unflatten(const std::vector<double>& flat) {
        if (static_cast<std::int64_t>(flat.size()) != total_count())
            throw dimension_error("unflatten: expected " + std::to_string(total_count()) +
                                  " values, got " + std::to_string(flat.size()));
        std::size_t pos = 0;
        for (auto& p : params) {
            std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                      flat.begin() + static_cast<std::ptrdiff_t>(pos + p.value.data.size()),
                      p.value.data.begin());
            pos += p.value.data.size();
        }
    }
};

namespace detail {

inline Tensor kaiming_uniform(Shape shape, std::int64_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

} // namespace detail

/// Kaiming-uniform (fan-in) weights, zero biases. The same seed yields
/// bitwise-identical parameters.
inline ParamSet init(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    ParamSet ps;
    std::uint64_t idx = 0;
    auto next_rng = [&] { return Rng::substream(seed, "init", idx++); };
    if (spec.kind == ModelKind::Mlp) {
        for (std::size_t l = 0; l + 1 < spec.mlp_widths.size(); ++l) {
            const std::int64_t in = spec.mlp_widths[l], out = spec.mlp_widths[l + 1];
            Rng rng = next_rng();
            ps.params.push_back({"fc" + std::to_string(l) + ".w",
                                 detail::kaiming_uniform({out, in}, in, rng)});
            ps.params.push_back({"fc" + std::to_string(l) + ".b", Tensor::zeros({out})});
        }
    } else {
        Rng r1 = next_rng();
        ps.params.push_back({"conv1.w",
                             detail::kaiming_uniform({16, spec.in_c, 3, 3}, spec.in_c * 9, r1)});
        ps.params.push_back({"conv1.b", Tensor::zeros({16})});
        Rng r2 = next_rng();
        ps.params.push_back({"conv2.w", detail::kaiming_uniform({32, 16, 3, 3}, 16 * 9, r2)});
        ps.params.push_back({"conv2.b", Tensor::zeros({32})});
        const std::int64_t flat = 32 * (spec.in_h / 4) * (spec.in_w / 4);
        Rng r3 = next_rng();
        ps.params.push_back({"fc1.w", detail::kaiming_uniform({128, flat}, flat, r3)});
        ps.params.push_back({"fc1.b", Tensor::zeros({128})});
        Rng r4 = next_rng();
        ps.params.push_back({"fc2.w",
                             detail::kaiming_uniform({spec.num_classes, 128}, 128, r4)});
        ps.params.push_back({"fc2.b", Tensor::zeros({spec.num_classes})});
    }
    return ps;
}

/// Forward over an explicit parameter-tensor list (ParamSet order). The
/// tensors may be tape-watched leaves, which lets a caller run several
/// forwards against one set of leaves (TRADES needs clean + adversarial).
inline Tensor forward_tracked(const ModelSpec& spec, const std::vector<Tensor>& tracked,
                              const Tensor& batch, Tape* tape = nullptr) {
    if (batch.shape.size() != 4 || batch.shape[1] != spec.in_c || batch.shape[2] != spec.in_h ||
        batch.shape[3] != spec.in_w)
        throw dimension_error("forward: batch " + shape_str(batch.shape) +
                              " does not match model input " +
                              shape_str({-1, spec.in_c, spec.in_h, spec.in_w}));
    if (spec.kind == ModelKind::Mlp) {
        Tensor h = flatten(batch, tape);
        const std::size_t layers = tracked.size() / 2;
        for (std::size_t l = 0; l < layers; ++l) {
            h = linear(h, tracked[2 * l], tracked[2 * l + 1], tape);
            if (l + 1 < layers) h = relu(h, tape);
        }
        return h;
    }
    Tensor h = conv2d(batch, tracked[0], 1, 1, tape);
    h = add_bias(h, tracked[1], tape);
    h = relu(h, tape);
    h = maxpool2d(h, tape);
    h = conv2d(h, tracked[2], 1, 1, tape);
    h = add_bias(h, tracked[3], tape);
    h = relu(h, tape);
    h = maxpool2d(h, tape);
    h = flatten(h, tape);
    h = linear(h, tracked[4], tracked[5], tape);
    h = relu(h, tape);
    h = linear(h, tracked[6], tracked[7], tape);
    return h;
}

/// Watch every parameter of `ps` on the tape; node ids land in ParamSet order.
inline std::vector<Tensor> watch_params(const ParamSet& ps, Tape& tape,
                                        std::vector<int>* param_nodes = nullptr) {
    std::vector<Tensor> tracked;
    tracked.reserve(ps.params.size());
    for (const auto& p : ps.params) {
        tracked.push_back(tape.watch(p.value));
        if (param_nodes) param_nodes->push_back(tracked.back().node);
    }
    return tracked;
}

/// Forward pass producing N x num_classes logits. When `tape` is given and
/// `param_nodes` is non-null, every parameter is watched and its node id
/// appended to `param_nodes` (in ParamSet order) so theta-gradients can be
/// read back. When `param_nodes` is null, parameters stay constants and
/// only tracked activations (e.g. a watched input batch) record gradients.
inline Tensor forward(const ModelSpec& spec, const ParamSet& ps, const Tensor& batch,
                      Tape* tape = nullptr, std::vector<int>* param_nodes = nullptr) {
    std::vector<Tensor> tracked;
    if (tape != nullptr && param_nodes != nullptr) {
        tracked = watch_params(ps, *tape, param_nodes);
    } else {
        tracked.reserve(ps.params.size());
        for (const auto& p : ps.params) tracked.push_back(p.value);
    }
    return forward_tracked(spec, tracked, batch, tape);
}

} // namespace adr
