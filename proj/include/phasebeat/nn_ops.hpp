#pragma once
// Network building blocks on top of the autodiff core: GEMM-backed dilated
// convolutions (im2col lowering, OpenBLAS sgemm/dgemm), pooling, linear, and
// the differentiable zero-padded periodogram.
//
// Convolutions are cross-correlations (no kernel flip). Padding is explicit
// zero padding; "same" padding for odd kernels is dilation * (k - 1) / 2.

#include <array>
#include <cblas.h>
#include <complex>
#include <cstdint>
#include <vector>

#include "phasebeat/fft.hpp"
#include "phasebeat/tensor.hpp"

namespace phasebeat {

namespace detail {

template <typename S>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          S alpha, const S* a, std::int64_t lda, const S* b, std::int64_t ldb,
          S beta, S* c, std::int64_t ldc) {
    if constexpr (std::is_same_v<S, float>) {
        cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                    trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
                    static_cast<int>(n), static_cast<int>(k), alpha, a,
                    static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
                    static_cast<int>(ldc));
    } else if constexpr (std::is_same_v<S, double>) {
        cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                    trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
                    static_cast<int>(n), static_cast<int>(k), alpha, a,
                    static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
                    static_cast<int>(ldc));
    } else {
        // Reference path for non-BLAS scalar types.
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < n; ++j) {
                S acc = S(0);
                for (std::int64_t p = 0; p < k; ++p) {
                    const S av = trans_a ? a[p * lda + i] : a[i * lda + p];
                    const S bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
                    acc += av * bv;
                }
                c[i * ldc + j] = alpha * acc + beta * c[i * ldc + j];
            }
    }
}

inline std::int64_t conv_out_len(std::int64_t in, std::int64_t k, std::int64_t dil,
                                 std::int64_t pad, std::int64_t stride) {
    const std::int64_t eff = dil * (k - 1) + 1;
    const std::int64_t out = (in + 2 * pad - eff) / stride + 1;
    require(out > 0, "conv: kernel does not fit input");
    return out;
}

}  // namespace detail

inline std::int64_t same_pad(std::int64_t k, std::int64_t dil) {
    require(k % 2 == 1, "same_pad: kernel must be odd");
    return dil * (k - 1) / 2;
}

// ---- conv1d -------------------------------------------------------------------

// x: [C_in, T], w: [C_out, C_in, k], b: [C_out]. Output [C_out, T_out].
template <typename S>
tensor<S> conv1d(const tensor<S>& x, const tensor<S>& w, const tensor<S>& b,
                 std::int64_t dilation, std::int64_t pad, std::int64_t stride = 1) {
    require(x.shape().size() == 2 && w.shape().size() == 3, "conv1d: bad ranks");
    const auto c_in = x.shape()[0], t_in = x.shape()[1];
    const auto c_out = w.shape()[0], k = w.shape()[2];
    require(w.shape()[1] == c_in, "conv1d: channel mismatch");
    require(b.shape() == std::vector<std::int64_t>{c_out}, "conv1d: bad bias shape");
    const auto t_out = detail::conv_out_len(t_in, k, dilation, pad, stride);
    const auto kk = c_in * k;

    auto build_col = [=](const std::vector<S>& xv, std::vector<S>& col) {
        col.assign(static_cast<std::size_t>(kk * t_out), S(0));
        for (std::int64_t ci = 0; ci < c_in; ++ci)
            for (std::int64_t j = 0; j < k; ++j) {
                S* row = col.data() + (ci * k + j) * t_out;
                for (std::int64_t to = 0; to < t_out; ++to) {
                    const std::int64_t ti = to * stride - pad + j * dilation;
                    if (ti >= 0 && ti < t_in) row[to] = xv[static_cast<std::size_t>(ci * t_in + ti)];
                }
            }
    };

    std::vector<S> col;
    build_col(x.value(), col);
    std::vector<S> out(static_cast<std::size_t>(c_out * t_out), S(0));
    detail::gemm<S>(false, false, c_out, t_out, kk, S(1), w.value().data(), kk,
                    col.data(), t_out, S(0), out.data(), t_out);
    for (std::int64_t co = 0; co < c_out; ++co)
        for (std::int64_t to = 0; to < t_out; ++to)
            out[static_cast<std::size_t>(co * t_out + to)] += b.value()[static_cast<std::size_t>(co)];

    return detail::make_op<S>(
        {c_out, t_out}, std::move(out), {x, w, b},
        [=](detail::tnode<S>& n) {
            auto& px = *n.parents[0];
            auto& pw = *n.parents[1];
            auto& pb = *n.parents[2];
            std::vector<S> col2;
            build_col(px.value, col2);
            if (pw.requires_grad) {
                pw.ensure_grad();
                detail::gemm<S>(false, true, c_out, kk, t_out, S(1), n.grad.data(), t_out,
                                col2.data(), t_out, S(1), pw.grad.data(), kk);
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (std::int64_t co = 0; co < c_out; ++co)
                    for (std::int64_t to = 0; to < t_out; ++to)
                        pb.grad[static_cast<std::size_t>(co)] += n.grad[static_cast<std::size_t>(co * t_out + to)];
            }
            if (px.requires_grad) {
                px.ensure_grad();
                std::vector<S> dcol(static_cast<std::size_t>(kk * t_out), S(0));
                detail::gemm<S>(true, false, kk, t_out, c_out, S(1), pw.value.data(), kk,
                                n.grad.data(), t_out, S(0), dcol.data(), t_out);
                for (std::int64_t ci = 0; ci < c_in; ++ci)
                    for (std::int64_t j = 0; j < k; ++j) {
                        const S* row = dcol.data() + (ci * k + j) * t_out;
                        for (std::int64_t to = 0; to < t_out; ++to) {
                            const std::int64_t ti = to * stride - pad + j * dilation;
                            if (ti >= 0 && ti < t_in)
                                px.grad[static_cast<std::size_t>(ci * t_in + ti)] += row[to];
                        }
                    }
            }
        });
}

// Depthwise conv: x [C, T], w [C, k], b [C]. Channel c convolves only with w[c].
template <typename S>
tensor<S> depthwise_conv1d(const tensor<S>& x, const tensor<S>& w, const tensor<S>& b,
                           std::int64_t dilation, std::int64_t pad) {
    require(x.shape().size() == 2 && w.shape().size() == 2, "depthwise_conv1d: bad ranks");
    const auto c = x.shape()[0], t_in = x.shape()[1], k = w.shape()[1];
    require(w.shape()[0] == c && b.shape() == std::vector<std::int64_t>{c},
            "depthwise_conv1d: shape mismatch");
    const auto t_out = detail::conv_out_len(t_in, k, dilation, pad, 1);
    std::vector<S> out(static_cast<std::size_t>(c * t_out), S(0));
    for (std::int64_t ci = 0; ci < c; ++ci)
        for (std::int64_t to = 0; to < t_out; ++to) {
            S acc = b.value()[static_cast<std::size_t>(ci)];
            for (std::int64_t j = 0; j < k; ++j) {
                const std::int64_t ti = to - pad + j * dilation;
                if (ti >= 0 && ti < t_in)
                    acc += w.value()[static_cast<std::size_t>(ci * k + j)] *
                           x.value()[static_cast<std::size_t>(ci * t_in + ti)];
            }
            out[static_cast<std::size_t>(ci * t_out + to)] = acc;
        }
    return detail::make_op<S>(
        {c, t_out}, std::move(out), {x, w, b},
        [=](detail::tnode<S>& n) {
            auto& px = *n.parents[0];
            auto& pw = *n.parents[1];
            auto& pb = *n.parents[2];
            if (px.requires_grad) px.ensure_grad();
            if (pw.requires_grad) pw.ensure_grad();
            if (pb.requires_grad) pb.ensure_grad();
            for (std::int64_t ci = 0; ci < c; ++ci)
                for (std::int64_t to = 0; to < t_out; ++to) {
                    const S g = n.grad[static_cast<std::size_t>(ci * t_out + to)];
                    if (pb.requires_grad) pb.grad[static_cast<std::size_t>(ci)] += g;
                    for (std::int64_t j = 0; j < k; ++j) {
                        const std::int64_t ti = to - pad + j * dilation;
                        if (ti < 0 || ti >= t_in) continue;
                        if (pw.requires_grad)
                            pw.grad[static_cast<std::size_t>(ci * k + j)] +=
                                g * px.value[static_cast<std::size_t>(ci * t_in + ti)];
                        if (px.requires_grad)
                            px.grad[static_cast<std::size_t>(ci * t_in + ti)] +=
                                g * pw.value[static_cast<std::size_t>(ci * k + j)];
                    }
                }
        });
}

// ---- conv3d -------------------------------------------------------------------

struct conv3d_geom {
    std::array<std::int64_t, 3> stride{1, 1, 1};
    std::array<std::int64_t, 3> dilation{1, 1, 1};
    std::array<std::int64_t, 3> pad{0, 0, 0};
};

namespace detail {

// Frame-chunked im2col keeps the column buffer bounded (a full-profile clip
// would otherwise need a multi-GB buffer).
inline constexpr std::int64_t conv3d_col_budget = 16ll << 20;  // elements per chunk

struct conv3d_dims {
    std::int64_t c_in, t_in, h_in, w_in;
    std::int64_t c_out, kt, kh, kw;
    std::int64_t t_out, h_out, w_out;
    std::int64_t kk;  // c_in * kt * kh * kw
};

// Columns for output frames [t0, t0+tn): layout [kk, tn * h_out * w_out].
template <typename S>
void im2col_frames(const conv3d_dims& d, const conv3d_geom& g, const std::vector<S>& xv,
                   std::int64_t t0, std::int64_t tn, std::vector<S>& col) {
    const std::int64_t n = tn * d.h_out * d.w_out;
    col.assign(static_cast<std::size_t>(d.kk * n), S(0));
    const std::int64_t hw_in = d.h_in * d.w_in;
    std::int64_t row = 0;
    for (std::int64_t ci = 0; ci < d.c_in; ++ci)
        for (std::int64_t it = 0; it < d.kt; ++it)
            for (std::int64_t ih = 0; ih < d.kh; ++ih)
                for (std::int64_t iw = 0; iw < d.kw; ++iw, ++row) {
                    S* out_row = col.data() + row * n;
                    for (std::int64_t tl = 0; tl < tn; ++tl) {
                        const std::int64_t ti = (t0 + tl) * g.stride[0] - g.pad[0] + it * g.dilation[0];
                        if (ti < 0 || ti >= d.t_in) continue;
                        const S* src = xv.data() + (ci * d.t_in + ti) * hw_in;
                        S* dst = out_row + tl * d.h_out * d.w_out;
                        for (std::int64_t oh = 0; oh < d.h_out; ++oh) {
                            const std::int64_t hi = oh * g.stride[1] - g.pad[1] + ih * g.dilation[1];
                            if (hi < 0 || hi >= d.h_in) continue;
                            for (std::int64_t ow = 0; ow < d.w_out; ++ow) {
                                const std::int64_t wi = ow * g.stride[2] - g.pad[2] + iw * g.dilation[2];
                                if (wi >= 0 && wi < d.w_in)
                                    dst[oh * d.w_out + ow] = src[hi * d.w_in + wi];
                            }
                        }
                    }
                }
}

template <typename S>
void col2im_frames_add(const conv3d_dims& d, const conv3d_geom& g, const std::vector<S>& col,
                       std::int64_t t0, std::int64_t tn, std::vector<S>& dx) {
    const std::int64_t n = tn * d.h_out * d.w_out;
    const std::int64_t hw_in = d.h_in * d.w_in;
    std::int64_t row = 0;
    for (std::int64_t ci = 0; ci < d.c_in; ++ci)
        for (std::int64_t it = 0; it < d.kt; ++it)
            for (std::int64_t ih = 0; ih < d.kh; ++ih)
                for (std::int64_t iw = 0; iw < d.kw; ++iw, ++row) {
                    const S* in_row = col.data() + row * n;
                    for (std::int64_t tl = 0; tl < tn; ++tl) {
                        const std::int64_t ti = (t0 + tl) * g.stride[0] - g.pad[0] + it * g.dilation[0];
                        if (ti < 0 || ti >= d.t_in) continue;
                        S* dst = dx.data() + (ci * d.t_in + ti) * hw_in;
                        const S* src = in_row + tl * d.h_out * d.w_out;
                        for (std::int64_t oh = 0; oh < d.h_out; ++oh) {
                            const std::int64_t hi = oh * g.stride[1] - g.pad[1] + ih * g.dilation[1];
                            if (hi < 0 || hi >= d.h_in) continue;
                            for (std::int64_t ow = 0; ow < d.w_out; ++ow) {
                                const std::int64_t wi = ow * g.stride[2] - g.pad[2] + iw * g.dilation[2];
                                if (wi >= 0 && wi < d.w_in)
                                    dst[hi * d.w_in + wi] += src[oh * d.w_out + ow];
                            }
                        }
                    }
                }
}

}  // namespace detail

// x: [C_in, T, H, W], w: [C_out, C_in, kT, kH, kW], b: [C_out].
template <typename S>
tensor<S> conv3d(const tensor<S>& x, const tensor<S>& w, const tensor<S>& b,
                 const conv3d_geom& g) {
    require(x.shape().size() == 4 && w.shape().size() == 5, "conv3d: bad ranks");
    detail::conv3d_dims d;
    d.c_in = x.shape()[0]; d.t_in = x.shape()[1]; d.h_in = x.shape()[2]; d.w_in = x.shape()[3];
    d.c_out = w.shape()[0]; d.kt = w.shape()[2]; d.kh = w.shape()[3]; d.kw = w.shape()[4];
    require(w.shape()[1] == d.c_in, "conv3d: channel mismatch");
    require(b.shape() == std::vector<std::int64_t>{d.c_out}, "conv3d: bad bias shape");
    d.t_out = detail::conv_out_len(d.t_in, d.kt, g.dilation[0], g.pad[0], g.stride[0]);
    d.h_out = detail::conv_out_len(d.h_in, d.kh, g.dilation[1], g.pad[1], g.stride[1]);
    d.w_out = detail::conv_out_len(d.w_in, d.kw, g.dilation[2], g.pad[2], g.stride[2]);
    d.kk = d.c_in * d.kt * d.kh * d.kw;

    const std::int64_t frame = d.h_out * d.w_out;
    const std::int64_t chunk = std::max<std::int64_t>(
        1, std::min(d.t_out, detail::conv3d_col_budget / std::max<std::int64_t>(1, d.kk * frame)));

    std::vector<S> out(static_cast<std::size_t>(d.c_out * d.t_out * frame));
    std::vector<S> col, tmp;
    for (std::int64_t t0 = 0; t0 < d.t_out; t0 += chunk) {
        const std::int64_t tn = std::min(chunk, d.t_out - t0);
        const std::int64_t n = tn * frame;
        detail::im2col_frames(d, g, x.value(), t0, tn, col);
        tmp.assign(static_cast<std::size_t>(d.c_out * n), S(0));
        detail::gemm<S>(false, false, d.c_out, n, d.kk, S(1), w.value().data(), d.kk,
                        col.data(), n, S(0), tmp.data(), n);
        for (std::int64_t co = 0; co < d.c_out; ++co) {
            const S bias = b.value()[static_cast<std::size_t>(co)];
            for (std::int64_t i = 0; i < n; ++i)
                out[static_cast<std::size_t>((co * d.t_out + t0) * frame + i)] =
                    tmp[static_cast<std::size_t>(co * n + i)] + bias;
        }
    }

    return detail::make_op<S>(
        {d.c_out, d.t_out, d.h_out, d.w_out}, std::move(out), {x, w, b},
        [d, g, chunk, frame](detail::tnode<S>& n_) {
            auto& px = *n_.parents[0];
            auto& pw = *n_.parents[1];
            auto& pb = *n_.parents[2];
            if (px.requires_grad) px.ensure_grad();
            if (pw.requires_grad) pw.ensure_grad();
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (std::int64_t co = 0; co < d.c_out; ++co) {
                    S acc = S(0);
                    for (std::int64_t i = 0; i < d.t_out * frame; ++i)
                        acc += n_.grad[static_cast<std::size_t>(co * d.t_out * frame + i)];
                    pb.grad[static_cast<std::size_t>(co)] += acc;
                }
            }
            std::vector<S> col, dout, dcol;
            for (std::int64_t t0 = 0; t0 < d.t_out; t0 += chunk) {
                const std::int64_t tn = std::min(chunk, d.t_out - t0);
                const std::int64_t n = tn * frame;
                dout.resize(static_cast<std::size_t>(d.c_out * n));
                for (std::int64_t co = 0; co < d.c_out; ++co)
                    std::copy_n(n_.grad.begin() + (co * d.t_out + t0) * frame, n,
                                dout.begin() + co * n);
                if (pw.requires_grad) {
                    detail::im2col_frames(d, g, px.value, t0, tn, col);
                    detail::gemm<S>(false, true, d.c_out, d.kk, n, S(1), dout.data(), n,
                                    col.data(), n, S(1), pw.grad.data(), d.kk);
                }
                if (px.requires_grad) {
                    dcol.assign(static_cast<std::size_t>(d.kk * n), S(0));
                    detail::gemm<S>(true, false, d.kk, n, d.c_out, S(1), pw.value.data(), d.kk,
                                    dout.data(), n, S(0), dcol.data(), n);
                    detail::col2im_frames_add(d, g, dcol, t0, tn, px.grad);
                }
            }
        });
}

// ---- pooling ------------------------------------------------------------------

// Spatial-only max pooling on [C,T,H,W] with stride == kernel; gradient routes
// to the first maximum in scan order.
template <typename S>
tensor<S> maxpool_hw(const tensor<S>& x, std::int64_t kh, std::int64_t kw) {
    require(x.shape().size() == 4, "maxpool_hw: expects rank-4 input");
    const auto C = x.shape()[0], T = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    require(kh >= 1 && kw >= 1 && kh <= H && kw <= W, "maxpool_hw: bad kernel");
    const auto ho = H / kh, wo = W / kw;
    std::vector<S> out(static_cast<std::size_t>(C * T * ho * wo));
    std::vector<std::int64_t> arg(out.size());
    const auto& v = x.value();
    for (std::int64_t ct = 0; ct < C * T; ++ct)
        for (std::int64_t oh = 0; oh < ho; ++oh)
            for (std::int64_t ow = 0; ow < wo; ++ow) {
                std::int64_t best = -1;
                S bv = S(0);
                for (std::int64_t ih = oh * kh; ih < (oh + 1) * kh; ++ih)
                    for (std::int64_t iw = ow * kw; iw < (ow + 1) * kw; ++iw) {
                        const std::int64_t i = ct * H * W + ih * W + iw;
                        if (best < 0 || v[static_cast<std::size_t>(i)] > bv) {
                            bv = v[static_cast<std::size_t>(i)];
                            best = i;
                        }
                    }
                const std::int64_t o = ct * ho * wo + oh * wo + ow;
                out[static_cast<std::size_t>(o)] = bv;
                arg[static_cast<std::size_t>(o)] = best;
            }
    return detail::make_op<S>({C, T, ho, wo}, std::move(out), {x},
                              [arg = std::move(arg)](detail::tnode<S>& n) {
                                  auto& p = *n.parents[0];
                                  p.ensure_grad();
                                  for (std::size_t o = 0; o < n.grad.size(); ++o)
                                      p.grad[static_cast<std::size_t>(arg[o])] += n.grad[o];
                              });
}

template <typename S>
tensor<S> avgpool_hw(const tensor<S>& x, std::int64_t kh, std::int64_t kw) {
    require(x.shape().size() == 4, "avgpool_hw: expects rank-4 input");
    const auto C = x.shape()[0], T = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    require(kh >= 1 && kw >= 1 && kh <= H && kw <= W, "avgpool_hw: bad kernel");
    const auto ho = H / kh, wo = W / kw;
    std::vector<S> out(static_cast<std::size_t>(C * T * ho * wo), S(0));
    const auto& v = x.value();
    const S inv = S(1) / S(kh * kw);
    for (std::int64_t ct = 0; ct < C * T; ++ct)
        for (std::int64_t oh = 0; oh < ho; ++oh)
            for (std::int64_t ow = 0; ow < wo; ++ow) {
                S acc = S(0);
                for (std::int64_t ih = oh * kh; ih < (oh + 1) * kh; ++ih)
                    for (std::int64_t iw = ow * kw; iw < (ow + 1) * kw; ++iw)
                        acc += v[static_cast<std::size_t>(ct * H * W + ih * W + iw)];
                out[static_cast<std::size_t>(ct * ho * wo + oh * wo + ow)] = acc * inv;
            }
    return detail::make_op<S>(
        {C, T, ho, wo}, std::move(out), {x}, [=](detail::tnode<S>& n) {
            auto& p = *n.parents[0];
            p.ensure_grad();
            for (std::int64_t ct = 0; ct < C * T; ++ct)
                for (std::int64_t oh = 0; oh < ho; ++oh)
                    for (std::int64_t ow = 0; ow < wo; ++ow) {
                        const S g = n.grad[static_cast<std::size_t>(ct * ho * wo + oh * wo + ow)] * inv;
                        for (std::int64_t ih = oh * kh; ih < (oh + 1) * kh; ++ih)
                            for (std::int64_t iw = ow * kw; iw < (ow + 1) * kw; ++iw)
                                p.grad[static_cast<std::size_t>(ct * H * W + ih * W + iw)] += g;
                    }
        });
}

// ---- linear ---------------------------------------------------------------------

// x: [N], w: [M, N], b: [M] -> [M].
template <typename S>
tensor<S> linear(const tensor<S>& x, const tensor<S>& w, const tensor<S>& b) {
    require(x.shape().size() == 1 && w.shape().size() == 2, "linear: bad ranks");
    const auto n = x.shape()[0], m = w.shape()[0];
    require(w.shape()[1] == n && b.shape() == std::vector<std::int64_t>{m},
            "linear: shape mismatch");
    std::vector<S> out(static_cast<std::size_t>(m));
    for (std::int64_t i = 0; i < m; ++i) {
        S acc = b.value()[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < n; ++j)
            acc += w.value()[static_cast<std::size_t>(i * n + j)] * x.value()[static_cast<std::size_t>(j)];
        out[static_cast<std::size_t>(i)] = acc;
    }
    return detail::make_op<S>({m}, std::move(out), {x, w, b}, [m, n](detail::tnode<S>& nd) {
        auto& px = *nd.parents[0];
        auto& pw = *nd.parents[1];
        auto& pb = *nd.parents[2];
        if (px.requires_grad) px.ensure_grad();
        if (pw.requires_grad) pw.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (std::int64_t i = 0; i < m; ++i) {
            const S g = nd.grad[static_cast<std::size_t>(i)];
            if (pb.requires_grad) pb.grad[static_cast<std::size_t>(i)] += g;
            for (std::int64_t j = 0; j < n; ++j) {
                if (pw.requires_grad)
                    pw.grad[static_cast<std::size_t>(i * n + j)] += g * px.value[static_cast<std::size_t>(j)];
                if (px.requires_grad)
                    px.grad[static_cast<std::size_t>(j)] += g * pw.value[static_cast<std::size_t>(i * n + j)];
            }
        }
    });
}

// ---- periodogram -----------------------------------------------------------------

// One-sided periodogram of a zero-padded signal: P_k = |X_k|^2 / (T * rate) for
// k = 0 .. pad/2. Forward and backward accumulate in double regardless of S.
// Backward uses dP_k/dx_n = (2 / (T * rate)) * Re{X_k * exp(+2*pi*i*k*n/M)}.
template <typename S>
tensor<S> periodogram(const tensor<S>& x, std::int64_t pad_to, double sample_rate) {
    require(x.shape().size() == 1, "periodogram: expects rank-1 input");
    const std::int64_t t = x.shape()[0];
    require(pad_to >= t, "periodogram: pad_to shorter than signal");
    require(is_pow2(static_cast<std::size_t>(pad_to)), "periodogram: pad_to must be a power of two");
    require(sample_rate > 0, "periodogram: bad sample rate");
    const std::int64_t bins = pad_to / 2 + 1;
    const double scale = 1.0 / (double(t) * sample_rate);

    std::vector<std::complex<double>> spec(static_cast<std::size_t>(pad_to), {0.0, 0.0});
    for (std::int64_t i = 0; i < t; ++i)
        spec[static_cast<std::size_t>(i)] = {double(x.value()[static_cast<std::size_t>(i)]), 0.0};
    fft_pow2(spec);
    std::vector<S> out(static_cast<std::size_t>(bins));
    for (std::int64_t k = 0; k < bins; ++k)
        out[static_cast<std::size_t>(k)] = S(std::norm(spec[static_cast<std::size_t>(k)]) * scale);

    return detail::make_op<S>(
        {bins}, std::move(out), {x},
        [spec = std::move(spec), pad_to, bins, t, scale](detail::tnode<S>& n) {
            auto& p = *n.parents[0];
            p.ensure_grad();
            std::vector<std::complex<double>> y(static_cast<std::size_t>(pad_to), {0.0, 0.0});
            for (std::int64_t k = 0; k < bins; ++k)
                y[static_cast<std::size_t>(k)] =
                    spec[static_cast<std::size_t>(k)] * double(n.grad[static_cast<std::size_t>(k)]);
            fft_pow2(y, /*inverse=*/true);  // unnormalized: sum_k y_k exp(+2 pi i k n / M)
            for (std::int64_t i = 0; i < t; ++i)
                p.grad[static_cast<std::size_t>(i)] += S(2.0 * scale * y[static_cast<std::size_t>(i)].real());
        });
}

}  // namespace phasebeat
