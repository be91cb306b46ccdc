#pragma once

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif
#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace adr {

namespace detail {

// Large scratch buffers churn every batch; keep them on the heap (not mmap)
// so freed blocks are reused instead of refaulted.
inline const bool allocator_tuned = [] {
#ifdef __GLIBC__
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    return true;
}();

// Allocator that skips value-initialization; for scratch buffers that are
// fully overwritten before being read.
template <typename T>
struct NoInitAlloc : std::allocator<T> {
    template <typename U>
    struct rebind {
        using other = NoInitAlloc<U>;
    };
    template <typename U>
    void construct(U* p) noexcept {
        ::new (static_cast<void*>(p)) U;
    }
    template <typename U, typename... Args>
    void construct(U* p, Args&&... args) {
        ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
};

using RawVec = std::vector<double, NoInitAlloc<double>>;

} // namespace detail

/// Worker-thread budget for batched kernels. Results are bitwise identical
/// across runs for a fixed thread count: every output element is owned by
/// exactly one thread and accumulated in plain ascending-k order.
inline int& thread_count() {
    static int n = 1;
    return n;
}

inline void set_thread_count(int n) { thread_count() = n < 1 ? 1 : n; }

namespace detail {

constexpr std::int64_t kGemmNB = 512; // columns per packed panel
constexpr std::int64_t kGemmKB = 192; // k rows per packed panel

#if defined(__GNUC__) && (defined(__x86_64__) || defined(__aarch64__))
#define ADR_GEMM_SIMD 1
typedef double v4df __attribute__((vector_size(32), aligned(8)));

inline v4df load4(const double* p) {
    v4df v;
    __builtin_memcpy(&v, p, sizeof(v));
    return v;
}
inline void store4(double* p, v4df v) { __builtin_memcpy(p, &v, sizeof(v)); }
#endif

// Row-major kernel for one thread's column range [jlo, jhi) of
// C[M x N] = A*B (+C when accumulating). A is indexed
// a[i*a_row_step + kk*a_col_step], which covers both layouts.
//
// Panels of B are packed chunk-major (8 columns x klen, zero-padded on the
// column tail) so the 4x8 register micro-kernel streams the panel strictly
// sequentially; the original large row strides alias to the same cache sets.
// Zero padding is numerically inert: padded lanes are never stored back.
// Per output element the accumulation order is plain ascending k, identical
// in the vector, scalar-tail and packed paths.
inline void gemm_slice(bool a_transposed, std::int64_t m, std::int64_t jlo, std::int64_t jhi,
                       std::int64_t k, const double* a, std::int64_t lda, const double* b,
                       std::int64_t ldb, bool accumulate, double* c, std::int64_t ldc) {
    const std::int64_t a_row_step = a_transposed ? 1 : lda;
    const std::int64_t a_col_step = a_transposed ? lda : 1;
    RawVec pack(static_cast<std::size_t>(kGemmKB) * (kGemmNB + 8));
    for (std::int64_t j0 = jlo; j0 < jhi; j0 += kGemmNB) {
        const std::int64_t j1 = j0 + kGemmNB < jhi ? j0 + kGemmNB : jhi;
        const std::int64_t nchunks = (j1 - j0 + 7) / 8;
        for (std::int64_t k0 = 0; k0 < k; k0 += kGemmKB) {
            const std::int64_t k1 = k0 + kGemmKB < k ? k0 + kGemmKB : k;
            const std::int64_t klen = k1 - k0;
            const bool fresh = k0 == 0 && !accumulate;
            for (std::int64_t chunk = 0; chunk < nchunks; ++chunk) {
                const std::int64_t jbase = j0 + chunk * 8;
                const std::int64_t valid = j1 - jbase < 8 ? j1 - jbase : 8;
                double* dst = pack.data() + chunk * klen * 8;
                if (valid == 8) {
                    for (std::int64_t kk = k0; kk < k1; ++kk, dst += 8)
                        std::memcpy(dst, b + kk * ldb + jbase, 8 * sizeof(double));
                } else {
                    for (std::int64_t kk = k0; kk < k1; ++kk, dst += 8) {
                        const double* src = b + kk * ldb + jbase;
                        for (std::int64_t l = 0; l < valid; ++l) dst[l] = src[l];
                        for (std::int64_t l = valid; l < 8; ++l) dst[l] = 0.0;
                    }
                }
            }
            std::int64_t i = 0;
#ifdef ADR_GEMM_SIMD
            for (; i + 4 <= m; i += 4) {
                const double* a0p = a + (i + 0) * a_row_step + k0 * a_col_step;
                const double* a1p = a + (i + 1) * a_row_step + k0 * a_col_step;
                const double* a2p = a + (i + 2) * a_row_step + k0 * a_col_step;
                const double* a3p = a + (i + 3) * a_row_step + k0 * a_col_step;
                double* c0 = c + (i + 0) * ldc;
                double* c1 = c + (i + 1) * ldc;
                double* c2 = c + (i + 2) * ldc;
                double* c3 = c + (i + 3) * ldc;
                for (std::int64_t chunk = 0; chunk < nchunks; ++chunk) {
                    const std::int64_t jb = j0 + chunk * 8;
                    const std::int64_t valid = j1 - jb < 8 ? j1 - jb : 8;
                    const double* pb = pack.data() + chunk * klen * 8;
                    if (valid == 8) {
                        v4df p00{}, p01{}, p10{}, p11{}, p20{}, p21{}, p30{}, p31{};
                        if (!fresh) {
                            p00 = load4(c0 + jb);
                            p01 = load4(c0 + jb + 4);
                            p10 = load4(c1 + jb);
                            p11 = load4(c1 + jb + 4);
                            p20 = load4(c2 + jb);
                            p21 = load4(c2 + jb + 4);
                            p30 = load4(c3 + jb);
                            p31 = load4(c3 + jb + 4);
                        }
                        for (std::int64_t kk = 0; kk < klen; ++kk, pb += 8) {
                            const v4df b0 = load4(pb), b1 = load4(pb + 4);
                            const double a0 = a0p[kk * a_col_step];
                            const double a1 = a1p[kk * a_col_step];
                            const double a2 = a2p[kk * a_col_step];
                            const double a3 = a3p[kk * a_col_step];
                            p00 += a0 * b0;
                            p01 += a0 * b1;
                            p10 += a1 * b0;
                            p11 += a1 * b1;
                            p20 += a2 * b0;
                            p21 += a2 * b1;
                            p30 += a3 * b0;
                            p31 += a3 * b1;
                        }
                        store4(c0 + jb, p00);
                        store4(c0 + jb + 4, p01);
                        store4(c1 + jb, p10);
                        store4(c1 + jb + 4, p11);
                        store4(c2 + jb, p20);
                        store4(c2 + jb + 4, p21);
                        store4(c3 + jb, p30);
                        store4(c3 + jb + 4, p31);
                    } else {
                        for (std::int64_t l = 0; l < valid; ++l) {
                            double s0 = fresh ? 0.0 : c0[jb + l];
                            double s1 = fresh ? 0.0 : c1[jb + l];
                            double s2 = fresh ? 0.0 : c2[jb + l];
                            double s3 = fresh ? 0.0 : c3[jb + l];
                            for (std::int64_t kk = 0; kk < klen; ++kk) {
                                const double bv = pb[kk * 8 + l];
                                s0 += a0p[kk * a_col_step] * bv;
                                s1 += a1p[kk * a_col_step] * bv;
                                s2 += a2p[kk * a_col_step] * bv;
                                s3 += a3p[kk * a_col_step] * bv;
                            }
                            c0[jb + l] = s0;
                            c1[jb + l] = s1;
                            c2[jb + l] = s2;
                            c3[jb + l] = s3;
                        }
                    }
                }
            }
#endif
            for (; i < m; ++i) {
                const double* arow = a + i * a_row_step + k0 * a_col_step;
                double* crow = c + i * ldc;
                for (std::int64_t chunk = 0; chunk < nchunks; ++chunk) {
                    const std::int64_t jb = j0 + chunk * 8;
                    const std::int64_t valid = j1 - jb < 8 ? j1 - jb : 8;
                    const double* pb = pack.data() + chunk * klen * 8;
                    for (std::int64_t l = 0; l < valid; ++l) {
                        double s = fresh ? 0.0 : crow[jb + l];
                        for (std::int64_t kk = 0; kk < klen; ++kk)
                            s += arow[kk * a_col_step] * pb[kk * 8 + l];
                        crow[jb + l] = s;
                    }
                }
            }
        }
    }
}

inline void gemm_core(bool a_transposed, std::int64_t m, std::int64_t n, std::int64_t k,
                      const double* a, std::int64_t lda, const double* b, std::int64_t ldb,
                      bool accumulate, double* c, std::int64_t ldc) {
#ifdef _OPENMP
    const int want = thread_count();
    if (want > 1 && n > 1 && m * n * k > 1 << 14) {
#pragma omp parallel num_threads(want)
        {
            const int nt = omp_get_num_threads();
            const int tid = omp_get_thread_num();
            const std::int64_t chunk = (n + nt - 1) / nt;
            const std::int64_t jlo = tid * chunk;
            const std::int64_t jhi = jlo + chunk < n ? jlo + chunk : n;
            if (jlo < jhi)
                gemm_slice(a_transposed, m, jlo, jhi, k, a, lda, b, ldb, accumulate, c, ldc);
        }
        return;
    }
#endif
    gemm_slice(a_transposed, m, 0, n, k, a, lda, b, ldb, accumulate, c, ldc);
}

inline void transpose(std::int64_t rows, std::int64_t cols,
                      const double* src, std::int64_t lds, double* dst) {
    constexpr std::int64_t tb = 64;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(thread_count()) if (thread_count() > 1 && rows > tb)
#endif
    for (std::int64_t i0 = 0; i0 < rows; i0 += tb)
        for (std::int64_t j0 = 0; j0 < cols; j0 += tb) {
            const std::int64_t i1 = i0 + tb < rows ? i0 + tb : rows;
            const std::int64_t j1 = j0 + tb < cols ? j0 + tb : cols;
            for (std::int64_t i = i0; i < i1; ++i)
                for (std::int64_t j = j0; j < j1; ++j)
                    dst[j * rows + i] = src[i * lds + j];
        }
}

} // namespace detail

/// Row-major dgemm: C = op(A)*op(B) + beta*C with beta in {0, 1}. A
/// transposed B is materialized once so the panel packing stays contiguous.
inline void gemm(bool trans_a, bool trans_b,
                 std::int64_t m, std::int64_t n, std::int64_t k,
                 const double* a, const double* b,
                 double beta, double* c) {
    const std::int64_t lda = trans_a ? m : k;
    detail::RawVec bt;
    const double* bp = b;
    if (trans_b) {
        bt.resize(static_cast<std::size_t>(k) * n);
        detail::transpose(n, k, b, k, bt.data());
        bp = bt.data();
    }
    detail::gemm_core(trans_a, m, n, k, a, lda, bp, n, beta != 0.0, c, n);
}

} // namespace adr
