// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable ops over rank-1 and rank-2 tensors. Rank-2 tensors are
// [rows x cols] row-major; a rank-1 tensor of length d acts as a single row
// where an op works row-wise.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "looplab/autodiff/kernels.hpp"
#include "looplab/autodiff/tensor.hpp"

namespace looplab {

namespace detail {

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

inline void require_rank2(const char* op, const Tensor& a) {
    if (a.rank() != 2) throw std::invalid_argument(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

inline void accumulate(std::vector<double>* dst, const std::vector<double>& src, double scale = 1.0) {
    if (!dst) return;
    for (std::size_t i = 0; i < src.size(); ++i) (*dst)[i] += scale * src[i];
}

}  // namespace detail

/// Numerically stable softplus; shared by the tape and by the pure dynamics code.
inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape("add", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return detail::make_result("add", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        detail::accumulate(detail::grad_of(self, 0), self.grad);
        detail::accumulate(detail::grad_of(self, 1), self.grad);
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape("sub", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return detail::make_result("sub", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        detail::accumulate(detail::grad_of(self, 0), self.grad);
        detail::accumulate(detail::grad_of(self, 1), self.grad, -1.0);
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape("mul", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return detail::make_result("mul", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        const auto& va = self.parents[0]->value;
        const auto& vb = self.parents[1]->value;
        if (auto* ga = detail::grad_of(self, 0))
            for (std::size_t i = 0; i < va.size(); ++i) (*ga)[i] += self.grad[i] * vb[i];
        if (auto* gb = detail::grad_of(self, 1))
            for (std::size_t i = 0; i < va.size(); ++i) (*gb)[i] += self.grad[i] * va[i];
    });
}

inline Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * a[i];
    return detail::make_result("scale", a.shape(), std::move(out), {a}, [s](detail::Node& self) {
        detail::accumulate(detail::grad_of(self, 0), self.grad, s);
    });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

inline Tensor exp(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a[i]);
    return detail::make_result("exp", a.shape(), std::move(out), {a}, [](detail::Node& self) {
        if (auto* g = detail::grad_of(self, 0))
            for (std::size_t i = 0; i < self.value.size(); ++i) (*g)[i] += self.grad[i] * self.value[i];
    });
}

/// exp(-x) kept inside the open interval (0, 1) for x > 0, where rounding would
/// otherwise return exactly 1 (x below ~1e-16) or 0 (x above ~745).
inline double decay_factor(double x) {
    constexpr double lo = std::numeric_limits<double>::denorm_min();
    const double hi = std::nextafter(1.0, 0.0);
    return std::clamp(std::exp(-x), lo, hi);
}

/// Elementwise decay_factor; the gradient is that of exp(-x).
inline Tensor decay(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = decay_factor(a[i]);
    return detail::make_result("decay", a.shape(), std::move(out), {a}, [](detail::Node& self) {
        if (auto* g = detail::grad_of(self, 0))
            for (std::size_t i = 0; i < self.value.size(); ++i) (*g)[i] -= self.grad[i] * self.value[i];
    });
}

inline Tensor softplus(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = softplus(a[i]);
    return detail::make_result("softplus", a.shape(), std::move(out), {a}, [](detail::Node& self) {
        const auto& x = self.parents[0]->value;
        if (auto* g = detail::grad_of(self, 0))
            for (std::size_t i = 0; i < x.size(); ++i) (*g)[i] += self.grad[i] * sigmoid(x[i]);
    });
}

inline Tensor relu_squared(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double r = a[i] > 0.0 ? a[i] : 0.0;
        out[i] = r * r;
    }
    return detail::make_result("relu_squared", a.shape(), std::move(out), {a}, [](detail::Node& self) {
        const auto& x = self.parents[0]->value;
        if (auto* g = detail::grad_of(self, 0))
            for (std::size_t i = 0; i < x.size(); ++i)
                if (x[i] > 0.0) (*g)[i] += self.grad[i] * 2.0 * x[i];
    });
}

// ---------------------------------------------------------------------------
// Row broadcasting
// ---------------------------------------------------------------------------

/// a[r, c] + v[c]
inline Tensor add_row(const Tensor& a, const Tensor& v) {
    const std::size_t cols = a.cols();
    if (v.size() != cols) throw std::invalid_argument("add_row: vector length does not match columns");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + v[i % cols];
    return detail::make_result("add_row", a.shape(), std::move(out), {a, v}, [cols](detail::Node& self) {
        detail::accumulate(detail::grad_of(self, 0), self.grad);
        if (auto* gv = detail::grad_of(self, 1))
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*gv)[i % cols] += self.grad[i];
    });
}

/// a[r, c] * v[c]
inline Tensor mul_row(const Tensor& a, const Tensor& v) {
    const std::size_t cols = a.cols();
    if (v.size() != cols) throw std::invalid_argument("mul_row: vector length does not match columns");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * v[i % cols];
    return detail::make_result("mul_row", a.shape(), std::move(out), {a, v}, [cols](detail::Node& self) {
        const auto& va = self.parents[0]->value;
        const auto& vv = self.parents[1]->value;
        if (auto* ga = detail::grad_of(self, 0))
            for (std::size_t i = 0; i < va.size(); ++i) (*ga)[i] += self.grad[i] * vv[i % cols];
        if (auto* gv = detail::grad_of(self, 1))
            for (std::size_t i = 0; i < va.size(); ++i) (*gv)[i % cols] += self.grad[i] * va[i];
    });
}

/// m[r, c] * v[r]
inline Tensor scale_rows(const Tensor& m, const Tensor& v) {
    detail::require_rank2("scale_rows", m);
    const std::size_t rows = m.rows(), cols = m.cols();
    if (v.size() != rows) throw std::invalid_argument("scale_rows: vector length does not match rows");
    std::vector<double> out(m.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i / cols] * m[i];
    return detail::make_result("scale_rows", m.shape(), std::move(out), {m, v}, [cols](detail::Node& self) {
        const auto& vm = self.parents[0]->value;
        const auto& vv = self.parents[1]->value;
        if (auto* gm = detail::grad_of(self, 0))
            for (std::size_t i = 0; i < vm.size(); ++i) (*gm)[i] += self.grad[i] * vv[i / cols];
        if (auto* gv = detail::grad_of(self, 1))
            for (std::size_t i = 0; i < vm.size(); ++i) (*gv)[i / cols] += self.grad[i] * vm[i];
    });
}

// ---------------------------------------------------------------------------
// Products
// ---------------------------------------------------------------------------

/// a[m x k] * b[k x n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_rank2("matmul", a);
    detail::require_rank2("matmul", b);
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k)
        throw std::invalid_argument("matmul: inner extents differ " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    std::vector<double> out(m * n, 0.0);
    kernels::gemm_nn_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
    detail::count_forward(2 * m * k * n);
    return detail::make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
        const auto& va = self.parents[0]->value;
        const auto& vb = self.parents[1]->value;
        if (auto* ga = detail::grad_of(self, 0)) {
            kernels::gemm_nt_acc(self.grad.data(), vb.data(), ga->data(), m, n, k);
            detail::count_backward(2 * m * k * n);
        }
        if (auto* gb = detail::grad_of(self, 1)) {
            kernels::gemm_tn_acc(va.data(), self.grad.data(), gb->data(), m, k, n);
            detail::count_backward(2 * m * k * n);
        }
    });
}

/// x[n x in] * W[out x in]^T, the usual dense layer with weights stored output-major.
inline Tensor linear(const Tensor& x, const Tensor& w) {
    detail::require_rank2("linear", w);
    const std::size_t n = x.rows(), in = x.cols(), out_dim = w.rows();
    if (w.cols() != in)
        throw std::invalid_argument("linear: input width " + std::to_string(in) + " vs weight " +
                                    shape_str(w.shape()));
    std::vector<double> out(n * out_dim, 0.0);
    kernels::gemm_nt_acc(x.data().data(), w.data().data(), out.data(), n, in, out_dim);
    detail::count_forward(2 * n * in * out_dim);
    Shape shape = x.rank() == 1 ? Shape{out_dim} : Shape{n, out_dim};
    return detail::make_result("linear", std::move(shape), std::move(out), {x, w},
                               [n, in, out_dim](detail::Node& self) {
                                   const auto& vx = self.parents[0]->value;
                                   const auto& vw = self.parents[1]->value;
                                   if (auto* gx = detail::grad_of(self, 0)) {
                                       kernels::gemm_nn_acc(self.grad.data(), vw.data(), gx->data(), n, out_dim, in);
                                       detail::count_backward(2 * n * in * out_dim);
                                   }
                                   if (auto* gw = detail::grad_of(self, 1)) {
                                       kernels::gemm_tn_acc(self.grad.data(), vx.data(), gw->data(), n, out_dim, in);
                                       detail::count_backward(2 * n * in * out_dim);
                                   }
                               });
}

// ---------------------------------------------------------------------------
// Shape plumbing
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.size())
        throw std::invalid_argument("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
    std::vector<double> out(a.data().begin(), a.data().end());
    return detail::make_result("reshape", std::move(shape), std::move(out), {a}, [](detail::Node& self) {
        detail::accumulate(detail::grad_of(self, 0), self.grad);
    });
}

/// [a | b] along columns.
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    detail::require_rank2("concat_cols", a);
    detail::require_rank2("concat_cols", b);
    if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols: row counts differ");
    const std::size_t rows = a.rows(), ca = a.cols(), cb = b.cols(), c = ca + cb;
    std::vector<double> out(rows * c);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(a.data().begin() + r * ca, ca, out.begin() + r * c);
        std::copy_n(b.data().begin() + r * cb, cb, out.begin() + r * c + ca);
    }
    return detail::make_result("concat_cols", {rows, c}, std::move(out), {a, b},
                               [rows, ca, cb, c](detail::Node& self) {
                                   if (auto* ga = detail::grad_of(self, 0))
                                       for (std::size_t r = 0; r < rows; ++r)
                                           for (std::size_t j = 0; j < ca; ++j) (*ga)[r * ca + j] += self.grad[r * c + j];
                                   if (auto* gb = detail::grad_of(self, 1))
                                       for (std::size_t r = 0; r < rows; ++r)
                                           for (std::size_t j = 0; j < cb; ++j)
                                               (*gb)[r * cb + j] += self.grad[r * c + ca + j];
                               });
}

/// Row r of the result is row r of `when_true` if mask[r], else row r of `when_false`.
inline Tensor where_rows(const std::vector<bool>& mask, const Tensor& when_true, const Tensor& when_false) {
    detail::require_same_shape("where_rows", when_true, when_false);
    const std::size_t rows = when_true.rows(), cols = when_true.cols();
    if (mask.size() != rows) throw std::invalid_argument("where_rows: mask length does not match rows");
    std::vector<double> out(when_true.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const auto& src = mask[r] ? when_true : when_false;
        std::copy_n(src.data().begin() + r * cols, cols, out.begin() + r * cols);
    }
    return detail::make_result("where_rows", when_true.shape(), std::move(out), {when_true, when_false},
                               [mask, cols](detail::Node& self) {
                                   auto* gt = detail::grad_of(self, 0);
                                   auto* gf = detail::grad_of(self, 1);
                                   for (std::size_t r = 0; r < mask.size(); ++r) {
                                       auto* dst = mask[r] ? gt : gf;
                                       if (!dst) continue;
                                       for (std::size_t j = 0; j < cols; ++j) (*dst)[r * cols + j] += self.grad[r * cols + j];
                                   }
                               });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data()) s += x;
    return detail::make_result("sum", {1}, {s}, {a}, [](detail::Node& self) {
        if (auto* g = detail::grad_of(self, 0))
            for (auto& x : *g) x += self.grad[0];
    });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// y = gain * x / sqrt(mean(x^2) + eps) along the last axis. An undefined gain means unit gain.
inline Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps) {
    const std::size_t d = x.cols(), rows = x.size() / d;
    if (gain.defined() && gain.size() != d) throw std::invalid_argument("rms_norm: gain length does not match width");
    std::vector<double> inv(rows), out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * d;
        double ss = 0.0;
        for (std::size_t j = 0; j < d; ++j) ss += xr[j] * xr[j];
        inv[r] = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xr[j] * inv[r] * (gain.defined() ? gain[j] : 1.0);
    }
    std::vector<Tensor> inputs{x};
    const bool has_gain = gain.defined();
    if (has_gain) inputs.push_back(gain);
    return detail::make_result(
        "rms_norm", x.shape(), std::move(out), std::move(inputs),
        [inv = std::move(inv), d, rows, has_gain](detail::Node& self) {
            const auto& vx = self.parents[0]->value;
            const double* g = has_gain ? self.parents[1]->value.data() : nullptr;
            auto* gx = detail::grad_of(self, 0);
            auto* gg = has_gain ? detail::grad_of(self, 1) : nullptr;
            std::vector<double> dxh(d);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* xr = vx.data() + r * d;
                const double* dy = self.grad.data() + r * d;
                double dot = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double xh = xr[j] * inv[r];
                    dxh[j] = dy[j] * (g ? g[j] : 1.0);
                    dot += dxh[j] * xh;
                    if (gg) (*gg)[j] += dy[j] * xh;
                }
                if (!gx) continue;
                dot /= static_cast<double>(d);
                for (std::size_t j = 0; j < d; ++j) (*gx)[r * d + j] += inv[r] * (dxh[j] - xr[j] * inv[r] * dot);
            }
        });
}

// ---------------------------------------------------------------------------
// Embedding and loss
// ---------------------------------------------------------------------------

/// Rows of `table` [V x d] selected by token ids.
inline Tensor embedding(const Tensor& table, const std::vector<int>& tokens) {
    detail::require_rank2("embedding", table);
    const std::size_t vocab = table.rows(), d = table.cols();
    std::vector<double> out(tokens.size() * d);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= vocab)
            throw std::out_of_range("embedding: token " + std::to_string(tokens[i]) + " outside vocabulary of " +
                                    std::to_string(vocab));
        std::copy_n(table.data().begin() + tokens[i] * d, d, out.begin() + i * d);
    }
    return detail::make_result("embedding", {tokens.size(), d}, std::move(out), {table},
                               [tokens, d](detail::Node& self) {
                                   if (auto* g = detail::grad_of(self, 0))
                                       for (std::size_t i = 0; i < tokens.size(); ++i)
                                           for (std::size_t j = 0; j < d; ++j)
                                               (*g)[tokens[i] * d + j] += self.grad[i * d + j];
                               });
}

/// Mean negative log-softmax of logits [n x V] at the target ids.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
    const std::size_t vocab = logits.cols(), n = logits.size() / vocab;
    if (targets.size() != n) throw std::invalid_argument("cross_entropy: one target per row required");
    std::vector<double> probs(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= vocab)
            throw std::out_of_range("cross_entropy: target " + std::to_string(targets[i]) + " outside vocabulary of " +
                                    std::to_string(vocab));
        const double* li = logits.data().data() + i * vocab;
        const double mx = *std::max_element(li, li + vocab);
        double z = 0.0;
        for (std::size_t j = 0; j < vocab; ++j) {
            probs[i * vocab + j] = std::exp(li[j] - mx);
            z += probs[i * vocab + j];
        }
        for (std::size_t j = 0; j < vocab; ++j) probs[i * vocab + j] /= z;
        total += (std::log(z) + mx) - li[targets[i]];
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    return detail::make_result("cross_entropy", {1}, {total * inv_n}, {logits},
                               [probs = std::move(probs), targets, vocab, inv_n](detail::Node& self) {
                                   auto* g = detail::grad_of(self, 0);
                                   if (!g) return;
                                   const double s = self.grad[0] * inv_n;
                                   for (std::size_t i = 0; i < targets.size(); ++i) {
                                       for (std::size_t j = 0; j < vocab; ++j) (*g)[i * vocab + j] += s * probs[i * vocab + j];
                                       (*g)[i * vocab + targets[i]] -= s;
                                   }
                               });
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

namespace detail {

/// Interleaved-pair rotary tables: angle(p, i) = p * theta^(-2i / d_head).
struct RopeTable {
    std::size_t half = 0;
    std::vector<double> cos, sin;  // [seq_len x half]

    RopeTable(std::size_t seq_len, std::size_t d_head, double theta) : half(d_head / 2) {
        cos.resize(seq_len * half);
        sin.resize(seq_len * half);
        for (std::size_t p = 0; p < seq_len; ++p)
            for (std::size_t i = 0; i < half; ++i) {
                const double freq = std::pow(theta, -2.0 * static_cast<double>(i) / static_cast<double>(d_head));
                const double ang = static_cast<double>(p) * freq;
                cos[p * half + i] = std::cos(ang);
                sin[p * half + i] = std::sin(ang);
            }
    }

    void rotate(double* x, std::size_t pos, bool inverse) const {
        for (std::size_t i = 0; i < half; ++i) {
            const double c = cos[pos * half + i];
            const double s = inverse ? -sin[pos * half + i] : sin[pos * half + i];
            const double x0 = x[2 * i], x1 = x[2 * i + 1];
            x[2 * i] = x0 * c - x1 * s;
            x[2 * i + 1] = x0 * s + x1 * c;
        }
    }
};

}  // namespace detail

/// Multi-head causal self-attention over consecutive segments of `seq_len` rows.
///
/// q, k, v are [rows x width] with heads laid out as contiguous column blocks
/// of width / n_heads. Each segment of seq_len rows is an independent sequence.
/// Rotary position rotation (interleaved pairs) is applied to q and k when
/// rope_theta > 0. FLOPs are tallied for the causal triangle only:
/// 2 * s(s+1)/2 * width MACs per segment forward, twice that backward.
inline Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads,
                               std::size_t seq_len, double rope_theta) {
    detail::require_same_shape("causal_attention", q, k);
    detail::require_same_shape("causal_attention", q, v);
    const std::size_t rows = q.rows(), width = q.cols();
    if (n_heads == 0 || width % n_heads != 0)
        throw std::invalid_argument("causal_attention: width not divisible by head count");
    if (seq_len == 0 || rows % seq_len != 0)
        throw std::invalid_argument("causal_attention: rows not a multiple of seq_len");
    const std::size_t dh = width / n_heads;
    const bool rope = rope_theta > 0.0;
    if (rope && dh % 2 != 0) throw std::invalid_argument("causal_attention: rotary needs an even head width");
    const std::size_t segs = rows / seq_len;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<double> qr(q.data().begin(), q.data().end());
    std::vector<double> kr(k.data().begin(), k.data().end());
    std::shared_ptr<const detail::RopeTable> table;
    if (rope) {
        table = std::make_shared<detail::RopeTable>(seq_len, dh, rope_theta);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t h = 0; h < n_heads; ++h) {
                table->rotate(qr.data() + r * width + h * dh, r % seq_len, false);
                table->rotate(kr.data() + r * width + h * dh, r % seq_len, false);
            }
    }

    // probs[(seg * n_heads + h) * L * L + i * L + j], zero above the diagonal.
    std::vector<double> probs(segs * n_heads * seq_len * seq_len, 0.0);
    std::vector<double> out(rows * width, 0.0);
    const auto& vv = v.data();
    for (std::size_t s = 0; s < segs; ++s)
        for (std::size_t h = 0; h < n_heads; ++h) {
            double* P = probs.data() + (s * n_heads + h) * seq_len * seq_len;
            for (std::size_t i = 0; i < seq_len; ++i) {
                const double* qi = qr.data() + (s * seq_len + i) * width + h * dh;
                double* Pi = P + i * seq_len;
                double mx = -INFINITY;
                for (std::size_t j = 0; j <= i; ++j) {
                    const double* kj = kr.data() + (s * seq_len + j) * width + h * dh;
                    double dot = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) dot += qi[c] * kj[c];
                    Pi[j] = dot * inv_sqrt;
                    mx = std::max(mx, Pi[j]);
                }
                double z = 0.0;
                for (std::size_t j = 0; j <= i; ++j) {
                    Pi[j] = std::exp(Pi[j] - mx);
                    z += Pi[j];
                }
                double* oi = out.data() + (s * seq_len + i) * width + h * dh;
                for (std::size_t j = 0; j <= i; ++j) {
                    Pi[j] /= z;
                    const double* vj = vv.data() + (s * seq_len + j) * width + h * dh;
                    for (std::size_t c = 0; c < dh; ++c) oi[c] += Pi[j] * vj[c];
                }
            }
        }
    const std::uint64_t tri = static_cast<std::uint64_t>(segs) * seq_len * (seq_len + 1) / 2;
    detail::count_forward(2 * 2 * tri * width);

    return detail::make_result(
        "causal_attention", q.shape(), std::move(out), {q, k, v},
        [qr = std::move(qr), kr = std::move(kr), probs = std::move(probs), table, segs, n_heads, seq_len, width, dh,
         inv_sqrt, tri](detail::Node& self) {
            const auto& vv = self.parents[2]->value;
            auto* gq = detail::grad_of(self, 0);
            auto* gk = detail::grad_of(self, 1);
            auto* gv = detail::grad_of(self, 2);
            const std::size_t rows = segs * seq_len;
            std::vector<double> dqr(rows * width, 0.0), dkr(rows * width, 0.0);
            std::vector<double> dP(seq_len);
            for (std::size_t s = 0; s < segs; ++s)
                for (std::size_t h = 0; h < n_heads; ++h) {
                    const double* P = probs.data() + (s * n_heads + h) * seq_len * seq_len;
                    for (std::size_t i = 0; i < seq_len; ++i) {
                        const double* Pi = P + i * seq_len;
                        const double* doi = self.grad.data() + (s * seq_len + i) * width + h * dh;
                        double wsum = 0.0;
                        for (std::size_t j = 0; j <= i; ++j) {
                            const std::size_t rj = (s * seq_len + j) * width + h * dh;
                            double dot = 0.0;
                            for (std::size_t c = 0; c < dh; ++c) dot += doi[c] * vv[rj + c];
                            dP[j] = dot;
                            wsum += Pi[j] * dot;
                            if (gv)
                                for (std::size_t c = 0; c < dh; ++c) (*gv)[rj + c] += Pi[j] * doi[c];
                        }
                        const std::size_t ri = (s * seq_len + i) * width + h * dh;
                        for (std::size_t j = 0; j <= i; ++j) {
                            const double ds = Pi[j] * (dP[j] - wsum) * inv_sqrt;
                            const std::size_t rj = (s * seq_len + j) * width + h * dh;
                            for (std::size_t c = 0; c < dh; ++c) {
                                dqr[ri + c] += ds * kr[rj + c];
                                dkr[rj + c] += ds * qr[ri + c];
                            }
                        }
                    }
                }
            detail::count_backward(4 * 2 * tri * width);
            if (table)
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t h = 0; h < n_heads; ++h) {
                        table->rotate(dqr.data() + r * width + h * dh, r % seq_len, true);
                        table->rotate(dkr.data() + r * width + h * dh, r % seq_len, true);
                    }
            detail::accumulate(gq, dqr);
            detail::accumulate(gk, dkr);
        });
}

}  // namespace looplab
