#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "adr/gemm.hpp"
#include "adr/tensor.hpp"

namespace adr {

// ---------------------------------------------------------------------------
// Untaped helpers
// ---------------------------------------------------------------------------

inline Tensor one_hot(const std::vector<int>& labels, std::int64_t num_classes) {
    Tensor out = Tensor::zeros({static_cast<std::int64_t>(labels.size()), num_classes});
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] < 0 || labels[r] >= num_classes)
            throw parameter_error("one_hot: label " + std::to_string(labels[r]) +
                                  " out of range for " + std::to_string(num_classes) + " classes");
        out(static_cast<std::int64_t>(r), labels[r]) = 1.0;
    }
    return out;
}

/// Row argmax; ties break toward the smallest index.
inline std::int64_t argmax_row(const Tensor& t, std::int64_t row) {
    const std::int64_t c = t.shape[1];
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < c; ++j)
        if (t(row, j) > t(row, best)) best = j;
    return best;
}

// ---------------------------------------------------------------------------
// Primitive differentiable ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
    check_same_shape(a, b, "add");
    Tensor out = a;
    out.node = -1;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    if (tape && (a.node >= 0 || b.node >= 0)) {
        const int an = a.node, bn = b.node;
        out.node = tape->record(out.shape, [an, bn](const Tensor& g, Tape& t) {
            if (an >= 0) t.accumulate(an, g);
            if (bn >= 0) t.accumulate(bn, g);
        });
    }
    return out;
}

inline Tensor scale(const Tensor& a, double c, Tape* tape = nullptr) {
    Tensor out = a;
    out.node = -1;
    for (auto& v : out.data) v *= c;
    if (tape && a.node >= 0) {
        const int an = a.node;
        out.node = tape->record(out.shape, [an, c](const Tensor& g, Tape& t) {
            Tensor gx = g;
            gx.node = -1;
            for (auto& v : gx.data) v *= c;
            t.accumulate(an, gx);
        });
    }
    return out;
}

/// Scalar contraction against constant weights: sum_i x_i * w_i.
inline Tensor weighted_sum(const Tensor& x, const Tensor& weights, Tape* tape = nullptr) {
    check_same_shape(x, weights, "weighted_sum");
    double s = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) s += x.data[i] * weights.data[i];
    Tensor out = Tensor::scalar(s);
    if (tape && x.node >= 0) {
        auto w = std::make_shared<Tensor>(weights);
        const int xn = x.node;
        out.node = tape->record(out.shape, [w, xn](const Tensor& g, Tape& t) {
            Tensor gx = *w;
            gx.node = -1;
            for (auto& v : gx.data) v *= g.data[0];
            t.accumulate(xn, gx);
        });
    }
    return out;
}

inline Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0])
        throw dimension_error("matmul: incompatible shapes " + shape_str(a.shape) + " and " +
                              shape_str(b.shape));
    const std::int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor out = Tensor::zeros({m, n});
    gemm(false, false, m, n, k, a.data.data(), b.data.data(), 0.0, out.data.data());
    if (tape && (a.node >= 0 || b.node >= 0)) {
        auto ka = std::make_shared<Tensor>(a);
        auto kb = std::make_shared<Tensor>(b);
        const int an = a.node, bn = b.node;
        out.node = tape->record(out.shape, [ka, kb, an, bn, m, k, n](const Tensor& g, Tape& t) {
            if (an >= 0) {
                Tensor ga = Tensor::zeros({m, k});
                gemm(false, true, m, k, n, g.data.data(), kb->data.data(), 0.0, ga.data.data());
                t.accumulate(an, ga);
            }
            if (bn >= 0) {
                Tensor gb = Tensor::zeros({k, n});
                gemm(true, false, k, n, m, ka->data.data(), g.data.data(), 0.0, gb.data.data());
                t.accumulate(bn, gb);
            }
        });
    }
    return out;
}

/// Fully connected layer: x[N x in] * W[out x in]^T + b[out].
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b, Tape* tape = nullptr) {
    if (x.shape.size() != 2 || w.shape.size() != 2 || x.shape[1] != w.shape[1])
        throw dimension_error("linear: incompatible shapes " + shape_str(x.shape) + " and " +
                              shape_str(w.shape));
    const std::int64_t n = x.shape[0], in = x.shape[1], out_dim = w.shape[0];
    if (b.shape != Shape{out_dim})
        throw dimension_error("linear: bias shape " + shape_str(b.shape) + " does not match " +
                              std::to_string(out_dim) + " outputs");
    Tensor out = Tensor::zeros({n, out_dim});
    gemm(false, true, n, out_dim, in, x.data.data(), w.data.data(), 0.0, out.data.data());
    for (std::int64_t r = 0; r < n; ++r)
        for (std::int64_t j = 0; j < out_dim; ++j) out(r, j) += b(j);
    if (tape && (x.node >= 0 || w.node >= 0 || b.node >= 0)) {
        auto kx = std::make_shared<Tensor>(x);
        auto kw = std::make_shared<Tensor>(w);
        const int xn = x.node, wn = w.node, bn = b.node;
        out.node = tape->record(
            out.shape, [kx, kw, xn, wn, bn, n, in, out_dim](const Tensor& g, Tape& t) {
                if (xn >= 0) {
                    Tensor gx = Tensor::zeros({n, in});
                    gemm(false, false, n, in, out_dim, g.data.data(), kw->data.data(), 0.0,
                         gx.data.data());
                    t.accumulate(xn, gx);
                }
                if (wn >= 0) {
                    Tensor gw = Tensor::zeros({out_dim, in});
                    gemm(true, false, out_dim, in, n, g.data.data(), kx->data.data(), 0.0,
                         gw.data.data());
                    t.accumulate(wn, gw);
                }
                if (bn >= 0) {
                    Tensor gb = Tensor::zeros({out_dim});
                    for (std::int64_t r = 0; r < n; ++r)
                        for (std::int64_t j = 0; j < out_dim; ++j) gb(j) += g(r, j);
                    t.accumulate(bn, gb);
                }
            });
    }
    return out;
}

namespace detail {

struct ConvGeom {
    std::int64_t n, c, h, w;      // input
    std::int64_t f, kh, kw;       // kernels
    std::int64_t stride, pad;
    std::int64_t ho, wo;          // output spatial
    std::int64_t cols_per_image;  // ho*wo
    std::int64_t col_rows;        // c*kh*kw
};

inline ConvGeom conv_geometry(const Shape& in, const Shape& ker, std::int64_t stride,
                              std::int64_t pad) {
    if (in.size() != 4 || ker.size() != 4)
        throw dimension_error("conv2d: expected NCHW input and FCKK kernels, got " +
                              shape_str(in) + " and " + shape_str(ker));
    ConvGeom g;
    g.n = in[0];
    g.c = in[1];
    g.h = in[2];
    g.w = in[3];
    g.f = ker[0];
    g.kh = ker[2];
    g.kw = ker[3];
    g.stride = stride;
    g.pad = pad;
    if (ker[1] != g.c)
        throw dimension_error("conv2d: kernel channels " + std::to_string(ker[1]) +
                              " do not match input channels " + std::to_string(g.c));
    if (stride < 1 || pad < 0) throw parameter_error("conv2d: stride must be >=1 and padding >=0");
    if (g.kh > g.h + 2 * pad || g.kw > g.w + 2 * pad)
        throw dimension_error("conv2d: kernel " + shape_str(ker) +
                              " larger than padded input " + shape_str(in));
    if ((g.h + 2 * pad - g.kh) % stride != 0 || (g.w + 2 * pad - g.kw) % stride != 0)
        throw config_error("conv2d: non-integral output extent for input " + shape_str(in) +
                           ", kernel " + shape_str(ker) + ", stride " + std::to_string(stride) +
                           ", padding " + std::to_string(pad));
    g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
    g.wo = (g.w + 2 * pad - g.kw) / stride + 1;
    g.cols_per_image = g.ho * g.wo;
    g.col_rows = g.c * g.kh * g.kw;
    return g;
}

// Column layout: row k = (c*kh+i)*kw+j, column = n*ho*wo + oh*wo + ow.
inline void im2col(const ConvGeom& g, const double* x, double* col) {
    const std::int64_t total_cols = g.n * g.cols_per_image;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(thread_count()) if (thread_count() > 1 && g.n > 1)
#endif
    for (std::int64_t n = 0; n < g.n; ++n) {
        const double* img = x + n * g.c * g.h * g.w;
        for (std::int64_t c = 0; c < g.c; ++c)
            for (std::int64_t ki = 0; ki < g.kh; ++ki)
                for (std::int64_t kj = 0; kj < g.kw; ++kj) {
                    double* row = col + ((c * g.kh + ki) * g.kw + kj) * total_cols +
                                  n * g.cols_per_image;
                    for (std::int64_t oh = 0; oh < g.ho; ++oh) {
                        const std::int64_t ih = oh * g.stride - g.pad + ki;
                        for (std::int64_t ow = 0; ow < g.wo; ++ow) {
                            const std::int64_t iw = ow * g.stride - g.pad + kj;
                            const bool inside = ih >= 0 && ih < g.h && iw >= 0 && iw < g.w;
                            row[oh * g.wo + ow] =
                                inside ? img[(c * g.h + ih) * g.w + iw] : 0.0;
                        }
                    }
                }
    }
}

inline void col2im_add(const ConvGeom& g, const double* col, double* x) {
    const std::int64_t total_cols = g.n * g.cols_per_image;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(thread_count()) if (thread_count() > 1 && g.n > 1)
#endif
    for (std::int64_t n = 0; n < g.n; ++n) {
        double* img = x + n * g.c * g.h * g.w;
        for (std::int64_t c = 0; c < g.c; ++c)
            for (std::int64_t ki = 0; ki < g.kh; ++ki)
                for (std::int64_t kj = 0; kj < g.kw; ++kj) {
                    const double* row = col + ((c * g.kh + ki) * g.kw + kj) * total_cols +
                                        n * g.cols_per_image;
                    for (std::int64_t oh = 0; oh < g.ho; ++oh) {
                        const std::int64_t ih = oh * g.stride - g.pad + ki;
                        if (ih < 0 || ih >= g.h) continue;
                        for (std::int64_t ow = 0; ow < g.wo; ++ow) {
                            const std::int64_t iw = ow * g.stride - g.pad + kj;
                            if (iw < 0 || iw >= g.w) continue;
                            img[(c * g.h + ih) * g.w + iw] += row[oh * g.wo + ow];
                        }
                    }
                }
    }
}

// Direct stride-1 kernels. They touch each array once per tap instead of
// materializing the 9x-inflated column matrix; on low-bandwidth hosts that
// is the difference that matters. Accumulation per output element runs over
// (c, ki, kj) ascending, and gradient accumulation over (n, oh, ow)
// ascending, fixed regardless of thread count.

inline void conv_fwd_direct(const ConvGeom& g, const double* x, const double* w,
                            const double* bias, double* out) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(thread_count()) if (thread_count() > 1 && g.n > 1)
#endif
    for (std::int64_t n = 0; n < g.n; ++n) {
        const double* xn = x + n * g.c * g.h * g.w;
        double* on = out + n * g.f * g.ho * g.wo;
        for (std::int64_t f = 0; f < g.f; ++f) {
            double* oplane = on + f * g.ho * g.wo;
            const double b = bias ? bias[f] : 0.0;
            for (std::int64_t i = 0; i < g.ho * g.wo; ++i) oplane[i] = b;
            for (std::int64_t c = 0; c < g.c; ++c) {
                const double* xplane = xn + c * g.h * g.w;
                const double* wf = w + (f * g.c + c) * g.kh * g.kw;
                for (std::int64_t ki = 0; ki < g.kh; ++ki)
                    for (std::int64_t kj = 0; kj < g.kw; ++kj) {
                        const double wv = wf[ki * g.kw + kj];
                        const std::int64_t oh_lo = std::max<std::int64_t>(0, g.pad - ki);
                        const std::int64_t oh_hi = std::min(g.ho, g.h + g.pad - ki);
                        const std::int64_t ow_lo = std::max<std::int64_t>(0, g.pad - kj);
                        const std::int64_t ow_hi = std::min(g.wo, g.w + g.pad - kj);
                        for (std::int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                            const double* src = xplane + (oh + ki - g.pad) * g.w + (kj - g.pad);
                            double* dst = oplane + oh * g.wo;
                            for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow)
                                dst[ow] += wv * src[ow];
                        }
                    }
            }
        }
    }
}

inline void conv_bwd_input_direct(const ConvGeom& g, const double* gout, const double* w,
                                  double* gx) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(thread_count()) if (thread_count() > 1 && g.n > 1)
#endif
    for (std::int64_t n = 0; n < g.n; ++n) {
        const double* gn = gout + n * g.f * g.ho * g.wo;
        double* gxn = gx + n * g.c * g.h * g.w;
        for (std::int64_t c = 0; c < g.c; ++c) {
            double* gxplane = gxn + c * g.h * g.w;
            for (std::int64_t i = 0; i < g.h * g.w; ++i) gxplane[i] = 0.0;
            for (std::int64_t f = 0; f < g.f; ++f) {
                const double* gplane = gn + f * g.ho * g.wo;
                const double* wf = w + (f * g.c + c) * g.kh * g.kw;
                for (std::int64_t ki = 0; ki < g.kh; ++ki)
                    for (std::int64_t kj = 0; kj < g.kw; ++kj) {
                        const double wv = wf[ki * g.kw + kj];
                        if (wv == 0.0) continue;
                        const std::int64_t oh_lo = std::max<std::int64_t>(0, g.pad - ki);
                        const std::int64_t oh_hi = std::min(g.ho, g.h + g.pad - ki);
                        const std::int64_t ow_lo = std::max<std::int64_t>(0, g.pad - kj);
                        const std::int64_t ow_hi = std::min(g.wo, g.w + g.pad - kj);
                        for (std::int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                            const double* src = gplane + oh * g.wo;
                            double* dst = gxplane + (oh + ki - g.pad) * g.w + (kj - g.pad);
                            for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow)
                                dst[ow] += wv * src[ow];
                        }
                    }
            }
        }
    }
}

// Dot product with four fixed-order lanes; deterministic for a given length.
inline double row_dot(const double* a, const double* b, std::int64_t len) {
    double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
    std::int64_t i = 0;
    for (; i + 4 <= len; i += 4) {
        l0 += a[i] * b[i];
        l1 += a[i + 1] * b[i + 1];
        l2 += a[i + 2] * b[i + 2];
        l3 += a[i + 3] * b[i + 3];
    }
    double s = (l0 + l1) + (l2 + l3);
    for (; i < len; ++i) s += a[i] * b[i];
    return s;
}

inline void conv_bwd_kernel_direct(const ConvGeom& g, const double* x, const double* gout,
                                   double* gw) {
#ifdef _OPENMP
#pragma omp parallel num_threads(thread_count()) if (thread_count() > 1 && g.f > 1)
#endif
    {
#ifdef _OPENMP
        const int nt = omp_get_num_threads();
        const int tid = omp_get_thread_num();
#else
        const int nt = 1, tid = 0;
#endif
        const std::int64_t per = (g.f + nt - 1) / nt;
        const std::int64_t f_lo = tid * per;
        const std::int64_t f_hi = std::min<std::int64_t>(g.f, f_lo + per);
        for (std::int64_t i = f_lo * g.c * g.kh * g.kw; i < f_hi * g.c * g.kh * g.kw; ++i)
            gw[i] = 0.0;
        for (std::int64_t n = 0; n < g.n; ++n) {
            const double* xn = x + n * g.c * g.h * g.w;
            const double* gn = gout + n * g.f * g.ho * g.wo;
            for (std::int64_t c = 0; c < g.c; ++c) {
                const double* xplane = xn + c * g.h * g.w;
                for (std::int64_t f = f_lo; f < f_hi; ++f) {
                    const double* gplane = gn + f * g.ho * g.wo;
                    double* gwf = gw + (f * g.c + c) * g.kh * g.kw;
                    for (std::int64_t ki = 0; ki < g.kh; ++ki)
                        for (std::int64_t kj = 0; kj < g.kw; ++kj) {
                            const std::int64_t oh_lo = std::max<std::int64_t>(0, g.pad - ki);
                            const std::int64_t oh_hi = std::min(g.ho, g.h + g.pad - ki);
                            const std::int64_t ow_lo = std::max<std::int64_t>(0, g.pad - kj);
                            const std::int64_t ow_hi = std::min(g.wo, g.w + g.pad - kj);
                            double acc = 0.0;
                            for (std::int64_t oh = oh_lo; oh < oh_hi; ++oh)
                                acc += row_dot(
                                    gplane + oh * g.wo + ow_lo,
                                    xplane + (oh + ki - g.pad) * g.w + (kj - g.pad) + ow_lo,
                                    ow_hi - ow_lo);
                            gwf[ki * g.kw + kj] += acc;
                        }
                }
            }
        }
    }
}

// [F][n*S] channel-major <-> [n][F][S] example-major
inline void scatter_fmajor_to_nchw(std::int64_t n, std::int64_t f, std::int64_t s,
                                   const double* src, double* dst) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(thread_count()) if (thread_count() > 1 && n > 1)
#endif
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < f; ++j)
            std::copy(src + j * n * s + i * s, src + j * n * s + (i + 1) * s,
                      dst + (i * f + j) * s);
}

inline void gather_nchw_to_fmajor(std::int64_t n, std::int64_t f, std::int64_t s,
                                  const double* src, double* dst) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(thread_count()) if (thread_count() > 1 && n > 1)
#endif
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < f; ++j)
            std::copy(src + (i * f + j) * s, src + (i * f + j + 1) * s,
                      dst + j * n * s + i * s);
}

} // namespace detail

namespace detail {

/// Shared conv implementation with an optionally fused channel bias.
/// Stride-1 convolutions run the direct kernels; other strides fall back to
/// im2col + GEMM. The backward rule captures the input only when the kernel
/// gradient is actually needed (it is not during attacks).
inline Tensor conv2d_impl(const Tensor& input, const Tensor& kernels, const Tensor* bias,
                          std::int64_t stride, std::int64_t padding, Tape* tape) {
    const auto g = conv_geometry(input.shape, kernels.shape, stride, padding);
    if (bias && bias->shape != Shape{g.f})
        throw dimension_error("conv2d: bias shape " + shape_str(bias->shape) +
                              " does not match " + std::to_string(g.f) + " filters");
    Tensor out = Tensor::zeros({g.n, g.f, g.ho, g.wo});
    const bool direct = stride == 1;
    if (direct) {
        conv_fwd_direct(g, input.data.data(), kernels.data.data(),
                        bias ? bias->data.data() : nullptr, out.data.data());
    } else {
        const std::int64_t total_cols = g.n * g.cols_per_image;
        RawVec col(static_cast<std::size_t>(g.col_rows * total_cols));
        im2col(g, input.data.data(), col.data());
        RawVec out_fmajor(static_cast<std::size_t>(g.f * total_cols));
        gemm(false, false, g.f, total_cols, g.col_rows, kernels.data.data(), col.data(), 0.0,
             out_fmajor.data());
        scatter_fmajor_to_nchw(g.n, g.f, g.cols_per_image, out_fmajor.data(), out.data.data());
        if (bias)
            for (std::int64_t n = 0; n < g.n; ++n)
                for (std::int64_t f = 0; f < g.f; ++f) {
                    double* p = out.data.data() + (n * g.f + f) * g.ho * g.wo;
                    for (std::int64_t i = 0; i < g.ho * g.wo; ++i) p[i] += bias->data[f];
                }
    }

    const int in_node = input.node, k_node = kernels.node;
    const int b_node = bias ? bias->node : -1;
    if (tape && (in_node >= 0 || k_node >= 0 || b_node >= 0)) {
        auto kk = std::make_shared<Tensor>(kernels);
        // the input is only needed for the kernel gradient
        auto xin = k_node >= 0 ? std::make_shared<Tensor>(input) : nullptr;
        out.node = tape->record(
            out.shape, [g, kk, xin, in_node, k_node, b_node](const Tensor& grad, Tape& t) {
                if (k_node >= 0) {
                    Tensor gk = Tensor::zeros(kk->shape);
                    if (g.stride == 1) {
                        conv_bwd_kernel_direct(g, xin->data.data(), grad.data.data(),
                                               gk.data.data());
                    } else {
                        const std::int64_t total = g.n * g.cols_per_image;
                        RawVec col(static_cast<std::size_t>(g.col_rows * total));
                        im2col(g, xin->data.data(), col.data());
                        RawVec g_fmajor(static_cast<std::size_t>(g.f * total));
                        gather_nchw_to_fmajor(g.n, g.f, g.cols_per_image, grad.data.data(),
                                              g_fmajor.data());
                        gemm(false, true, g.f, g.col_rows, total, g_fmajor.data(), col.data(),
                             0.0, gk.data.data());
                    }
                    t.accumulate(k_node, gk);
                }
                if (in_node >= 0) {
                    Tensor gx = Tensor::zeros({g.n, g.c, g.h, g.w});
                    if (g.stride == 1) {
                        conv_bwd_input_direct(g, grad.data.data(), kk->data.data(),
                                              gx.data.data());
                    } else {
                        const std::int64_t total = g.n * g.cols_per_image;
                        RawVec g_fmajor(static_cast<std::size_t>(g.f * total));
                        gather_nchw_to_fmajor(g.n, g.f, g.cols_per_image, grad.data.data(),
                                              g_fmajor.data());
                        RawVec gcol(static_cast<std::size_t>(g.col_rows * total));
                        gemm(true, false, g.col_rows, total, g.f, kk->data.data(),
                             g_fmajor.data(), 0.0, gcol.data());
                        col2im_add(g, gcol.data(), gx.data.data());
                    }
                    t.accumulate(in_node, gx);
                }
                if (b_node >= 0) {
                    Tensor gb = Tensor::zeros({g.f});
                    for (std::int64_t n = 0; n < g.n; ++n)
                        for (std::int64_t f = 0; f < g.f; ++f) {
                            const double* p =
                                grad.data.data() + (n * g.f + f) * g.ho * g.wo;
                            double s = 0.0;
                            for (std::int64_t i = 0; i < g.ho * g.wo; ++i) s += p[i];
                            gb(f) += s;
                        }
                    t.accumulate(b_node, gb);
                }
            });
    }
    return out;
}

} // namespace detail

/// 2-D cross-correlation (no kernel flip) with zero padding.
inline Tensor conv2d(const Tensor& input, const Tensor& kernels, std::int64_t stride = 1,
                     std::int64_t padding = 0, Tape* tape = nullptr) {
    return detail::conv2d_impl(input, kernels, nullptr, stride, padding, tape);
}

/// conv2d with the channel bias fused into the output pass.
inline Tensor conv2d_bias(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                          std::int64_t stride = 1, std::int64_t padding = 0,
                          Tape* tape = nullptr) {
    return detail::conv2d_impl(input, kernels, &bias, stride, padding, tape);
}

inline Tensor relu(Tensor&& x, Tape* tape = nullptr) {
    const int xn = x.node;
    Tensor out = std::move(x);
    out.node = -1;
    if (tape && xn >= 0) {
        auto mask = std::make_shared<std::vector<std::uint8_t>>(out.data.size());
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            (*mask)[i] = out.data[i] > 0.0 ? 1 : 0;
            if (out.data[i] < 0.0) out.data[i] = 0.0;
        }
        out.node = tape->record(out.shape, [mask, xn](const Tensor& g, Tape& t) {
            Tensor gx = g;
            gx.node = -1;
            for (std::size_t i = 0; i < gx.data.size(); ++i)
                if (!(*mask)[i]) gx.data[i] = 0.0;
            t.accumulate(xn, gx);
        });
    } else {
        for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
    }
    return out;
}

inline Tensor relu(const Tensor& x, Tape* tape = nullptr) {
    Tensor copy = x;
    return relu(std::move(copy), tape);
}

/// 2x2 max pooling with stride 2. Spatial extents must be even; gradient
/// routes to the argmax position (first occurrence in row-major scan).
inline Tensor maxpool2d(const Tensor& x, Tape* tape = nullptr) {
    if (x.shape.size() != 4)
        throw dimension_error("maxpool2d: expected NCHW input, got " + shape_str(x.shape));
    const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    if (h % 2 != 0 || w % 2 != 0)
        throw config_error("maxpool2d: spatial extents must be even, got " + shape_str(x.shape));
    const std::int64_t ho = h / 2, wo = w / 2;
    Tensor out = Tensor::zeros({n, c, ho, wo});
    auto arg = std::make_shared<std::vector<std::int32_t>>(out.data.size());
    for (std::int64_t i = 0; i < n * c; ++i) {
        const double* plane = x.data.data() + i * h * w;
        double* oplane = out.data.data() + i * ho * wo;
        std::int32_t* aplane = arg->data() + i * ho * wo;
        for (std::int64_t oh = 0; oh < ho; ++oh)
            for (std::int64_t ow = 0; ow < wo; ++ow) {
                std::int64_t best = (2 * oh) * w + 2 * ow;
                double bv = plane[best];
                for (int di = 0; di < 2; ++di)
                    for (int dj = 0; dj < 2; ++dj) {
                        const std::int64_t idx = (2 * oh + di) * w + (2 * ow + dj);
                        if (plane[idx] > bv) {
                            bv = plane[idx];
                            best = idx;
                        }
                    }
                oplane[oh * wo + ow] = bv;
                aplane[oh * wo + ow] = static_cast<std::int32_t>(best);
            }
    }
    if (tape && x.node >= 0) {
        const int xn = x.node;
        const Shape xs = x.shape;
        out.node = tape->record(out.shape, [arg, xn, xs, n, c, h, w, ho, wo](const Tensor& g,
                                                                             Tape& t) {
            Tensor gx = Tensor::zeros(xs);
            for (std::int64_t i = 0; i < n * c; ++i) {
                const double* gplane = g.data.data() + i * ho * wo;
                const std::int32_t* aplane = arg->data() + i * ho * wo;
                double* xplane = gx.data.data() + i * h * w;
                for (std::int64_t j = 0; j < ho * wo; ++j) xplane[aplane[j]] += gplane[j];
            }
            t.accumulate(xn, gx);
        });
    }
    return out;
}

/// N x C x H x W -> N x (C*H*W); also accepts any rank >= 2.
inline Tensor flatten(Tensor&& x, Tape* tape = nullptr) {
    if (x.shape.size() < 2)
        throw dimension_error("flatten: expected rank >= 2, got " + shape_str(x.shape));
    const std::int64_t n = x.shape[0];
    const std::int64_t rest = numel(x.shape) / n;
    const Shape xs = x.shape;
    const int xn = x.node;
    Tensor out(Shape{n, rest}, std::move(x.data));
    if (tape && xn >= 0) {
        out.node = tape->record(out.shape, [xn, xs](const Tensor& g, Tape& t) {
            Tensor gx(xs, g.data);
            t.accumulate(xn, gx);
        });
    }
    return out;
}

inline Tensor flatten(const Tensor& x, Tape* tape = nullptr) {
    Tensor copy = x;
    return flatten(std::move(copy), tape);
}

/// Broadcast add along dimension 1 (channels of NCHW or columns of N x C).
inline Tensor add_bias(Tensor&& x, const Tensor& bias, Tape* tape = nullptr) {
    if (x.shape.size() < 2 || bias.shape.size() != 1 || bias.shape[0] != x.shape[1])
        throw dimension_error("add_bias: bias " + shape_str(bias.shape) +
                              " does not broadcast over " + shape_str(x.shape));
    const std::int64_t n = x.shape[0], c = x.shape[1];
    const std::int64_t inner = numel(x.shape) / (n * c);
    const int moved_node = x.node;
    Tensor out = std::move(x);
    out.node = moved_node;
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < c; ++j) {
            double* p = out.data.data() + (i * c + j) * inner;
            const double b = bias(j);
            for (std::int64_t s = 0; s < inner; ++s) p[s] += b;
        }
    if (tape && (x.node >= 0 || bias.node >= 0)) {
        const int xn = x.node, bn = bias.node;
        out.node = tape->record(out.shape, [xn, bn, n, c, inner](const Tensor& g, Tape& t) {
            if (xn >= 0) {
                Tensor gx = g;
                gx.node = -1;
                t.accumulate(xn, gx);
            }
            if (bn >= 0) {
                Tensor gb = Tensor::zeros({c});
                for (std::int64_t i = 0; i < n; ++i)
                    for (std::int64_t j = 0; j < c; ++j) {
                        const double* p = g.data.data() + (i * c + j) * inner;
                        double s = 0.0;
                        for (std::int64_t k = 0; k < inner; ++k) s += p[k];
                        gb(j) += s;
                    }
                t.accumulate(bn, gb);
            }
        });
    }
    return out;
}

namespace detail {

// Row-wise stable log-sum-exp of z/tau; also fills probs = softmax(z/tau).
inline void softmax_rows_scaled(const Tensor& logits, double tau, Tensor& probs) {
    const std::int64_t n = logits.shape[0], c = logits.shape[1];
    for (std::int64_t r = 0; r < n; ++r) {
        double mx = logits(r, 0) / tau;
        for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, logits(r, j) / tau);
        double sum = 0.0;
        for (std::int64_t j = 0; j < c; ++j) {
            const double e = std::exp(logits(r, j) / tau - mx);
            probs(r, j) = e;
            sum += e;
        }
        for (std::int64_t j = 0; j < c; ++j) probs(r, j) /= sum;
    }
}

} // namespace detail

/// Temperature-scaled softmax: row r, class c -> softmax(z_r / tau)_c,
/// computed with per-row max subtraction.
inline Tensor softmax_t(const Tensor& logits, double tau, Tape* tape = nullptr) {
    if (logits.shape.size() != 2)
        throw dimension_error("softmax_t: expected N x C logits, got " + shape_str(logits.shape));
    if (!(tau > 0.0)) throw parameter_error("softmax_t: temperature must be positive");
    if (!logits.all_finite()) throw numeric_error("softmax_t: non-finite logits");
    Tensor out = Tensor::zeros(logits.shape);
    detail::softmax_rows_scaled(logits, tau, out);
    if (tape && logits.node >= 0) {
        auto p = std::make_shared<Tensor>(out);
        const int zn = logits.node;
        out.node = tape->record(out.shape, [p, zn, tau](const Tensor& g, Tape& t) {
            const std::int64_t n = p->shape[0], c = p->shape[1];
            Tensor gz = Tensor::zeros(p->shape);
            for (std::int64_t r = 0; r < n; ++r) {
                double dot = 0.0;
                for (std::int64_t j = 0; j < c; ++j) dot += g(r, j) * (*p)(r, j);
                for (std::int64_t j = 0; j < c; ++j)
                    gz(r, j) = (g(r, j) - dot) * (*p)(r, j) / tau;
            }
            t.accumulate(zn, gz);
        });
    }
    return out;
}

inline Tensor softmax(const Tensor& logits, Tape* tape = nullptr) {
    return softmax_t(logits, 1.0, tape);
}

/// Mean over rows of -sum_c target * log_softmax(logits). Targets are
/// treated as constants; rows must be valid distributions.
inline Tensor soft_cross_entropy(const Tensor& logits, const Tensor& target,
                                 Tape* tape = nullptr) {
    check_same_shape(logits, target, "soft_cross_entropy");
    if (logits.shape.size() != 2)
        throw dimension_error("soft_cross_entropy: expected N x C, got " +
                              shape_str(logits.shape));
    const std::int64_t n = logits.shape[0], c = logits.shape[1];
    for (std::int64_t r = 0; r < n; ++r) {
        double sum = 0.0;
        for (std::int64_t j = 0; j < c; ++j) {
            const double tv = target(r, j);
            if (tv < 0.0)
                throw parameter_error("soft_cross_entropy: negative target entry at row " +
                                      std::to_string(r));
            sum += tv;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw parameter_error("soft_cross_entropy: target row " + std::to_string(r) +
                                  " sums to " + std::to_string(sum));
    }
    Tensor probs = Tensor::zeros(logits.shape);
    detail::softmax_rows_scaled(logits, 1.0, probs);
    double loss = 0.0;
    for (std::int64_t r = 0; r < n; ++r) {
        // lse via the already-normalized probs: log p = z - lse
        double mx = logits(r, 0);
        for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, logits(r, j));
        double se = 0.0;
        for (std::int64_t j = 0; j < c; ++j) se += std::exp(logits(r, j) - mx);
        const double lse = mx + std::log(se);
        for (std::int64_t j = 0; j < c; ++j) loss += target(r, j) * (lse - logits(r, j));
    }
    Tensor out = Tensor::scalar(loss / static_cast<double>(n));
    if (tape && logits.node >= 0) {
        auto p = std::make_shared<Tensor>(std::move(probs));
        auto tk = std::make_shared<Tensor>(target);
        const int zn = logits.node;
        out.node = tape->record(out.shape, [p, tk, zn, n, c](const Tensor& g, Tape& t) {
            const double go = g.data[0] / static_cast<double>(n);
            Tensor gz = Tensor::zeros(p->shape);
            for (std::int64_t r = 0; r < n; ++r) {
                double trow = 0.0;
                for (std::int64_t j = 0; j < c; ++j) trow += (*tk)(r, j);
                for (std::int64_t j = 0; j < c; ++j)
                    gz(r, j) = go * ((*p)(r, j) * trow - (*tk)(r, j));
            }
            t.accumulate(zn, gz);
        });
    }
    return out;
}

/// Mean over rows of KL(softmax(q) || softmax(p)): q is the clean-output
/// distribution, p the adversarial one. Differentiable w.r.t. both.
inline Tensor kl_divergence(const Tensor& p_logits, const Tensor& q_logits,
                            Tape* tape = nullptr) {
    check_same_shape(p_logits, q_logits, "kl_divergence");
    if (p_logits.shape.size() != 2)
        throw dimension_error("kl_divergence: expected N x C, got " + shape_str(p_logits.shape));
    if (!p_logits.all_finite() || !q_logits.all_finite())
        throw numeric_error("kl_divergence: non-finite logits");
    const std::int64_t n = p_logits.shape[0], c = p_logits.shape[1];
    auto log_softmax_rows = [c](const Tensor& z, std::int64_t r, std::vector<double>& out_row) {
        double mx = z(r, 0);
        for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, z(r, j));
        double se = 0.0;
        for (std::int64_t j = 0; j < c; ++j) se += std::exp(z(r, j) - mx);
        const double lse = mx + std::log(se);
        for (std::int64_t j = 0; j < c; ++j) out_row[static_cast<std::size_t>(j)] = z(r, j) - lse;
    };
    auto psm = std::make_shared<Tensor>(Tensor::zeros(p_logits.shape));
    auto qsm = std::make_shared<Tensor>(Tensor::zeros(q_logits.shape));
    auto arow = std::make_shared<Tensor>(Tensor::zeros(p_logits.shape)); // log q - log p
    auto row_kl = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
    std::vector<double> lp(static_cast<std::size_t>(c)), lq(static_cast<std::size_t>(c));
    double total = 0.0;
    for (std::int64_t r = 0; r < n; ++r) {
        log_softmax_rows(p_logits, r, lp);
        log_softmax_rows(q_logits, r, lq);
        double v = 0.0;
        for (std::int64_t j = 0; j < c; ++j) {
            const double q = std::exp(lq[static_cast<std::size_t>(j)]);
            const double a = lq[static_cast<std::size_t>(j)] - lp[static_cast<std::size_t>(j)];
            (*psm)(r, j) = std::exp(lp[static_cast<std::size_t>(j)]);
            (*qsm)(r, j) = q;
            (*arow)(r, j) = a;
            v += q * a;
        }
        (*row_kl)[static_cast<std::size_t>(r)] = v;
        total += v;
    }
    Tensor out = Tensor::scalar(total / static_cast<double>(n));
    if (tape && (p_logits.node >= 0 || q_logits.node >= 0)) {
        const int pn = p_logits.node, qn = q_logits.node;
        out.node = tape->record(out.shape,
                                [psm, qsm, arow, row_kl, pn, qn, n, c](const Tensor& g, Tape& t) {
            const double go = g.data[0] / static_cast<double>(n);
            if (pn >= 0) {
                Tensor gp = Tensor::zeros(psm->shape);
                for (std::int64_t r = 0; r < n; ++r)
                    for (std::int64_t j = 0; j < c; ++j)
                        gp(r, j) = go * ((*psm)(r, j) - (*qsm)(r, j));
                t.accumulate(pn, gp);
            }
            if (qn >= 0) {
                Tensor gq = Tensor::zeros(qsm->shape);
                for (std::int64_t r = 0; r < n; ++r) {
                    const double kl_r = (*row_kl)[static_cast<std::size_t>(r)];
                    for (std::int64_t j = 0; j < c; ++j)
                        gq(r, j) = go * (*qsm)(r, j) * ((*arow)(r, j) - kl_r);
                }
                t.accumulate(qn, gq);
            }
        });
    }
    return out;
}

} // namespace adr
