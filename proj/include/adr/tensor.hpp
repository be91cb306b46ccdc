#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "adr/error.hpp"

namespace adr {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

/// Dense row-major tensor of 64-bit floats. Value semantics: copies are
/// independent, reads are thread-safe. `node` ties the tensor to a node on
/// the tape that produced (or watched) it; -1 means untracked.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    int node = -1;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel(shape) != static_cast<std::int64_t>(data.size()))
            throw dimension_error("tensor data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    }

    static Tensor zeros(Shape s) {
        auto n = numel(s);
        return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    }
    static Tensor full(Shape s, double v) {
        auto n = numel(s);
        return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), v));
    }
    static Tensor scalar(double v) { return Tensor({}, {v}); }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    bool is_scalar() const { return data.size() == 1 && shape.empty(); }
    double item() const {
        if (data.size() != 1) throw usage_error("item() on non-scalar tensor " + shape_str(shape));
        return data[0];
    }

    double& operator()(std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    double operator()(std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
    double& operator()(std::int64_t i, std::int64_t j) {
        return data[static_cast<std::size_t>(i * shape[1] + j)];
    }
    double operator()(std::int64_t i, std::int64_t j) const {
        return data[static_cast<std::size_t>(i * shape[1] + j)];
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape != b.shape)
        throw dimension_error(std::string(what) + ": shape mismatch " + shape_str(a.shape) +
                              " vs " + shape_str(b.shape));
}

/// Reverse-mode gradient tape. Ops append one node per primitive during the
/// forward pass; backward() replays the nodes in reverse, accumulating into
/// per-node gradient buffers. One tape per forward pass; single-owner, not
/// thread-safe.
class Tape {
public:
    using BackwardFn = std::function<void(const Tensor& grad_out, Tape&)>;

    /// Register a leaf. Returns a tracked copy whose gradient can be read
    /// back after backward().
    Tensor watch(const Tensor& t) {
        Tensor copy = t;
        copy.node = push(t.shape, nullptr);
        return copy;
    }

    /// Ops call this to record an intermediate node.
    int record(Shape out_shape, BackwardFn back) {
        return push(std::move(out_shape), std::move(back));
    }

    void accumulate(int node, const Tensor& g) {
        auto& slot = grads_[static_cast<std::size_t>(node)];
        if (slot.data.empty()) {
            slot = g;
            slot.node = -1;
            return;
        }
        if (slot.shape != g.shape)
            throw dimension_error("gradient accumulation shape mismatch at node " +
                                  std::to_string(node));
        for (std::size_t i = 0; i < slot.data.size(); ++i) slot.data[i] += g.data[i];
    }

    /// Run the backward sweep from a recorded scalar output.
    void backward(const Tensor& output) {
        if (output.data.size() != 1)
            throw usage_error("backward: output must be scalar, got " + shape_str(output.shape));
        if (output.node < 0)
            throw usage_error("backward: output was not recorded on this tape");
        Tensor seed = Tensor::full(output.shape, 1.0);
        accumulate(output.node, seed);
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
            auto& node = nodes_[static_cast<std::size_t>(i)];
            if (!node.backward) continue;
            const Tensor& g = grads_[static_cast<std::size_t>(i)];
            if (g.data.empty()) continue; // node not on the path to the output
            node.backward(g, *this);
        }
        ran_backward_ = true;
    }

    /// Gradient of the backward output w.r.t. the given node. Nodes that are
    /// disconnected from the output return zeros of the node's shape.
    Tensor grad(int node) const {
        if (node < 0 || node >= static_cast<int>(nodes_.size()))
            throw usage_error("grad: invalid node id " + std::to_string(node));
        const Tensor& g = grads_[static_cast<std::size_t>(node)];
        if (g.data.empty()) return Tensor::zeros(nodes_[static_cast<std::size_t>(node)].shape);
        return g;
    }

    Tensor grad(const Tensor& t) const {
        if (t.node < 0) throw usage_error("grad: tensor is not tracked by this tape");
        return grad(t.node);
    }

    std::size_t num_nodes() const { return nodes_.size(); }
    bool ran_backward() const { return ran_backward_; }

private:
    struct Node {
        Shape shape;
        BackwardFn backward;
    };

    int push(Shape shape, BackwardFn back) {
        nodes_.push_back(Node{std::move(shape), std::move(back)});
        grads_.emplace_back();
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    bool ran_backward_ = false;
};

} // namespace adr
