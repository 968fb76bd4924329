#pragma once

// Dense numeric kernels. All pure, single-allocation, bit-deterministic for a
// fixed precision; parallel splits are over disjoint output ranges only.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "itsrn/tensor.hpp"
#include "itsrn/threading.hpp"

namespace itsrn {

enum class Act { relu, sigmoid, tanh, sin };

inline const char* act_name(Act a) {
    switch (a) {
        case Act::relu: return "relu";
        case Act::sigmoid: return "sigmoid";
        case Act::tanh: return "tanh";
        case Act::sin: return "sin";
    }
    return "?";
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw shape_error("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                          shape_str(b.shape()));
    const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> c({m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
    parallel_for(m, [&](std::int64_t r0, std::int64_t r1) {
        for (std::int64_t i = r0; i < r1; ++i) {
            T* row = pc + i * n;
            for (std::int64_t t = 0; t < k; ++t) {
                const T av = pa[i * k + t];
                if (av == T{0}) continue;
                const T* brow = pb + t * n;
                for (std::int64_t j = 0; j < n; ++j) row[j] += av * brow[j];
            }
        }
    }, 64);
    debug_check_finite(c, "matmul");
    return c;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    if (axis < 0 || axis >= x.rank()) throw shape_error("softmax: axis out of range");
    const std::int64_t len = x.dim(axis);
    std::int64_t inner = 1;
    for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    const std::int64_t outer = x.numel() / (len * inner);
    Tensor<T> y(x.shape());
    const T* px = x.data();
    T* py = y.data();
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * len * inner + in;
            T mx = px[base];
            for (std::int64_t i = 1; i < len; ++i) mx = std::max(mx, px[base + i * inner]);
            T sum{0};
            for (std::int64_t i = 0; i < len; ++i) {
                T e = std::exp(px[base + i * inner] - mx);
                py[base + i * inner] = e;
                sum += e;
            }
            for (std::int64_t i = 0; i < len; ++i) py[base + i * inner] /= sum;
        }
    }
    return y;
}

// Per-position normalization over the trailing channel axis, then affine.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    const std::int64_t c = x.dim(x.rank() - 1);
    if (gamma.numel() != c || beta.numel() != c)
        throw shape_error("layer_norm: affine params do not match channel extent");
    const std::int64_t rows = x.numel() / c;
    Tensor<T> y(x.shape());
    const T* px = x.data();
    T* py = y.data();
    const T* pg = gamma.data();
    const T* pb = beta.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* xr = px + r * c;
        T* yr = py + r * c;
        T mean{0};
        for (std::int64_t i = 0; i < c; ++i) mean += xr[i];
        mean /= static_cast<T>(c);
        T var{0};
        for (std::int64_t i = 0; i < c; ++i) {
            T d = xr[i] - mean;
            var += d * d;
        }
        var /= static_cast<T>(c);
        const T inv = T{1} / std::sqrt(var + eps);
        for (std::int64_t i = 0; i < c; ++i) yr[i] = (xr[i] - mean) * inv * pg[i] + pb[i];
    }
    debug_check_finite(y, "layer_norm");
    return y;
}

// Cross-correlation, zero padding (k-1)/2, spatial extents preserved.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.rank() != 3 || w.rank() != 4 || w.dim(1) != x.dim(0) || w.dim(2) != w.dim(3))
        throw shape_error("conv2d: incompatible shapes " + shape_str(x.shape()) + " and " +
                          shape_str(w.shape()));
    const std::int64_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const std::int64_t cout = w.dim(0), k = w.dim(2);
    if (k % 2 == 0) throw shape_error("conv2d: kernel extent must be odd");
    if (b.numel() != cout) throw shape_error("conv2d: bias does not match output channels");
    const std::int64_t pad = (k - 1) / 2;
    Tensor<T> y({cout, h, wd});
    const T* px = x.data();
    const T* pw = w.data();
    const T* pb = b.data();
    T* py = y.data();
    parallel_for(cout * h, [&](std::int64_t q0, std::int64_t q1) {
        for (std::int64_t q = q0; q < q1; ++q) {
            const std::int64_t oc = q / h, oy = q % h;
            T* row = py + (oc * h + oy) * wd;
            for (std::int64_t ox = 0; ox < wd; ++ox) {
                T acc = pb[oc];
                for (std::int64_t ic = 0; ic < cin; ++ic) {
                    const T* wk = pw + ((oc * cin + ic) * k) * k;
                    const T* xc = px + ic * h * wd;
                    for (std::int64_t ky = 0; ky < k; ++ky) {
                        const std::int64_t iy = oy + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        for (std::int64_t kx = 0; kx < k; ++kx) {
                            const std::int64_t ix = ox + kx - pad;
                            if (ix < 0 || ix >= wd) continue;
                            acc += wk[ky * k + kx] * xc[iy * wd + ix];
                        }
                    }
                }
                row[ox] = acc;
            }
        }
    }, 8);
    debug_check_finite(y, "conv2d");
    return y;
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.rank() != 3 || w.rank() != 3 || w.dim(0) != x.dim(0) || w.dim(1) != w.dim(2))
        throw shape_error("depthwise_conv2d: incompatible shapes " + shape_str(x.shape()) +
                          " and " + shape_str(w.shape()));
    const std::int64_t c = x.dim(0), h = x.dim(1), wd = x.dim(2), k = w.dim(1);
    if (k % 2 == 0) throw shape_error("depthwise_conv2d: kernel extent must be odd");
    if (b.numel() != c) throw shape_error("depthwise_conv2d: bias does not match channels");
    const std::int64_t pad = (k - 1) / 2;
    Tensor<T> y({c, h, wd});
    const T* px = x.data();
    const T* pw = w.data();
    const T* pb = b.data();
    T* py = y.data();
    parallel_for(c * h, [&](std::int64_t q0, std::int64_t q1) {
        for (std::int64_t q = q0; q < q1; ++q) {
            const std::int64_t ch = q / h, oy = q % h;
            const T* wk = pw + ch * k * k;
            const T* xc = px + ch * h * wd;
            T* row = py + (ch * h + oy) * wd;
            for (std::int64_t ox = 0; ox < wd; ++ox) {
                T acc = pb[ch];
                for (std::int64_t ky = 0; ky < k; ++ky) {
                    const std::int64_t iy = oy + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    for (std::int64_t kx = 0; kx < k; ++kx) {
                        const std::int64_t ix = ox + kx - pad;
                        if (ix < 0 || ix >= wd) continue;
                        acc += wk[ky * k + kx] * xc[iy * wd + ix];
                    }
                }
                row[ox] = acc;
            }
        }
    }, 16);
    debug_check_finite(y, "depthwise_conv2d");
    return y;
}

template <typename T>
inline T apply_act(T v, Act fn) {
    switch (fn) {
        case Act::relu: return v > T{0} ? v : T{0};
        case Act::sigmoid: return T{1} / (T{1} + std::exp(-v));
        case Act::tanh: return std::tanh(v);
        case Act::sin: return std::sin(v);
    }
    return v;
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Act fn) {
    Tensor<T> y(x.shape());
    const T* px = x.data();
    T* py = y.data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) py[i] = apply_act(px[i], fn);
    return y;
}

// --- elementwise helpers shared by the tape and tests ---

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw shape_error("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> y(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] + b[i];
    return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw shape_error("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> y(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] * b[i];
    return y;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    Tensor<T> y(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] * s;
    return y;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
    if (a.rank() != 2) throw shape_error("transpose2d: rank != 2");
    Tensor<T> y({a.dim(1), a.dim(0)});
    for (std::int64_t i = 0; i < a.dim(0); ++i)
        for (std::int64_t j = 0; j < a.dim(1); ++j) y.at2(j, i) = a.at2(i, j);
    return y;
}

// Generic data-movement plan over flat storage: out[i] = in[src[i]], with
// src < 0 meaning a structural zero. One plan type covers padding, cyclic
// shifts, window (un)partitioning, crops, unfolds, layout transposes and row
// gathers; its transpose (scatter-add) is the shared backward.
struct IndexMap {
    Shape out_shape;
    std::vector<std::int64_t> src;
};

template <typename T>
Tensor<T> gather(const Tensor<T>& x, const IndexMap& m) {
    Tensor<T> y(m.out_shape);
    for (std::int64_t i = 0; i < y.numel(); ++i) {
        const std::int64_t s = m.src[static_cast<std::size_t>(i)];
        y[i] = s < 0 ? T{0} : x[s];
    }
    return y;
}

template <typename T>
Tensor<T> add_rows(const Tensor<T>& x, const Tensor<T>& b) {
    const std::int64_t c = x.dim(x.rank() - 1);
    if (b.numel() != c) throw shape_error("add_rows: bias does not match trailing extent");
    Tensor<T> y(x.shape());
    const std::int64_t rows = x.numel() / c;
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t i = 0; i < c; ++i) y[r * c + i] = x[r * c + i] + b[i];
    return y;
}

template <typename T>
Tensor<T> mul_rows(const Tensor<T>& x, const Tensor<T>& s) {
    const std::int64_t c = x.dim(x.rank() - 1);
    if (s.numel() != c) throw shape_error("mul_rows: scale does not match trailing extent");
    Tensor<T> y(x.shape());
    const std::int64_t rows = x.numel() / c;
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t i = 0; i < c; ++i) y[r * c + i] = x[r * c + i] * s[i];
    return y;
}

template <typename T>
Tensor<T> scale_rows(const Tensor<T>& x, const std::vector<T>& w) {
    const std::int64_t rows = x.dim(0);
    const std::int64_t c = x.numel() / rows;
    if (static_cast<std::int64_t>(w.size()) != rows)
        throw shape_error("scale_rows: weight count does not match rows");
    Tensor<T> y(x.shape());
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t i = 0; i < c; ++i) y[r * c + i] = x[r * c + i] * w[static_cast<std::size_t>(r)];
    return y;
}

template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x) {
    const std::int64_t c = x.dim(x.rank() - 1);
    const std::int64_t rows = x.numel() / c;
    Tensor<T> y({1, c});
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t i = 0; i < c; ++i) y[i] += x[r * c + i];
    for (std::int64_t i = 0; i < c; ++i) y[i] /= static_cast<T>(rows);
    return y;
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
        throw shape_error("concat_cols: row counts differ");
    const std::int64_t rows = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    Tensor<T> y({rows, ca + cb});
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t i = 0; i < ca; ++i) y.at2(r, i) = a.at2(r, i);
        for (std::int64_t i = 0; i < cb; ++i) y.at2(r, ca + i) = b.at2(r, i);
    }
    return y;
}

// --- window attention ---

template <typename T>
struct AttnPlan {
    std::int64_t num_windows = 0;
    std::int64_t tokens = 0;  // M*M per window
    std::int64_t heads = 1;
    std::vector<std::int32_t> bias_index;  // tokens*tokens, rows into the bias table
    Tensor<T> mask;                        // [num_windows, tokens, tokens] or empty
};

// softmax(QK^T/sqrt(D) + B [+ mask])V per window and head, heads concatenated
// along channels. Tokens arrive as [num_windows*tokens, C]; projections stay
// outside. When probs_out is given the post-softmax rows are captured for a
// backward pass.
template <typename T>
Tensor<T> window_attention_forward(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                   const Tensor<T>& bias_table, const AttnPlan<T>& plan,
                                   Tensor<T>* probs_out = nullptr) {
    const std::int64_t c = q.dim(1);
    if (c % plan.heads != 0) throw shape_error("window_attention: channels not divisible by heads");
    const std::int64_t nw = plan.num_windows, m2 = plan.tokens, hd = plan.heads, d = c / hd;
    const T inv_sqrt_d = T{1} / std::sqrt(static_cast<T>(d));
    const bool masked = !plan.mask.empty();
    if (probs_out) *probs_out = Tensor<T>({nw * hd, m2, m2});

    Tensor<T> out({nw * m2, c});
    parallel_for(nw, [&](std::int64_t w0, std::int64_t w1) {
        std::vector<T> row(static_cast<std::size_t>(m2));
        for (std::int64_t w = w0; w < w1; ++w) {
            for (std::int64_t h = 0; h < hd; ++h) {
                T* pw = probs_out ? probs_out->data() + ((w * hd + h) * m2) * m2 : nullptr;
                for (std::int64_t i = 0; i < m2; ++i) {
                    const T* qi = q.data() + (w * m2 + i) * c + h * d;
                    T mx = -std::numeric_limits<T>::infinity();
                    for (std::int64_t j = 0; j < m2; ++j) {
                        const T* kj = k.data() + (w * m2 + j) * c + h * d;
                        T s{0};
                        for (std::int64_t e = 0; e < d; ++e) s += qi[e] * kj[e];
                        s = s * inv_sqrt_d +
                            bias_table.at2(plan.bias_index[static_cast<std::size_t>(i * m2 + j)], h);
                        if (masked) s += plan.mask[(w * m2 + i) * m2 + j];
                        row[static_cast<std::size_t>(j)] = s;
                        mx = std::max(mx, s);
                    }
                    T sum{0};
                    for (std::int64_t j = 0; j < m2; ++j) {
                        T e = std::exp(row[static_cast<std::size_t>(j)] - mx);
                        row[static_cast<std::size_t>(j)] = e;
                        sum += e;
                    }
                    T* oi = out.data() + (w * m2 + i) * c + h * d;
                    for (std::int64_t j = 0; j < m2; ++j) {
                        const T p = row[static_cast<std::size_t>(j)] / sum;
                        if (pw) pw[i * m2 + j] = p;
                        const T* vj = v.data() + (w * m2 + j) * c + h * d;
                        for (std::int64_t e = 0; e < d; ++e) oi[e] += p * vj[e];
                    }
                }
            }
        }
    }, 1);
    debug_check_finite(out, "window_attention");
    return out;
}

// --- bicubic resampling ---

namespace detail {

// Keys cubic, a = -0.5. Exactly 1 at 0 and 0 at integer offsets.
inline double keys_cubic(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return (((t - 5.0) * t + 8.0) * t - 4.0) * a;
    return 0.0;
}

struct ResampleTap {
    std::int64_t first = 0;
    std::vector<double> weights;
};

// Per-output-index taps for one axis: cell-center alignment, edge clamping,
// kernel widened by the scale factor when downscaling (antialias prefilter).
inline std::vector<ResampleTap> bicubic_taps(std::int64_t in, std::int64_t out) {
    std::vector<ResampleTap> taps(static_cast<std::size_t>(out));
    const double step = static_cast<double>(in) / static_cast<double>(out);
    const double support_scale = std::max(1.0, step);
    const double support = 2.0 * support_scale;
    for (std::int64_t o = 0; o < out; ++o) {
        const double u = (static_cast<double>(o) + 0.5) * step - 0.5;
        std::int64_t lo = static_cast<std::int64_t>(std::ceil(u - support));
        std::int64_t hi = static_cast<std::int64_t>(std::floor(u + support));
        ResampleTap tap;
        tap.first = lo;
        tap.weights.resize(static_cast<std::size_t>(hi - lo + 1));
        double sum = 0.0;
        for (std::int64_t i = lo; i <= hi; ++i) {
            double w = keys_cubic((u - static_cast<double>(i)) / support_scale);
            tap.weights[static_cast<std::size_t>(i - lo)] = w;
            sum += w;
        }
        for (double& w : tap.weights) w /= sum;
        taps[static_cast<std::size_t>(o)] = std::move(tap);
    }
    return taps;
}

}  // namespace detail

// Separable Keys-cubic resize; accumulation in double so constants survive
// the float path bit-exactly.
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& img, std::int64_t out_h, std::int64_t out_w) {
    if (img.rank() != 3) throw shape_error("bicubic_resize: expected [C,H,W]");
    if (out_h < 1 || out_w < 1) throw contract_error("bicubic_resize: output extents must be >= 1");
    const std::int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (out_h == h && out_w == w) return img;

    const auto taps_h = detail::bicubic_taps(h, out_h);
    const auto taps_w = detail::bicubic_taps(w, out_w);

    // Pass 1: rows (H -> out_h), kept in double.
    std::vector<double> mid(static_cast<std::size_t>(c * out_h * w));
    parallel_for(c * out_h, [&](std::int64_t q0, std::int64_t q1) {
        for (std::int64_t q = q0; q < q1; ++q) {
            const std::int64_t ch = q / out_h, oy = q % out_h;
            const auto& tap = taps_h[static_cast<std::size_t>(oy)];
            double* row = mid.data() + (ch * out_h + oy) * w;
            for (std::int64_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (std::size_t t = 0; t < tap.weights.size(); ++t) {
                    std::int64_t iy = std::clamp<std::int64_t>(tap.first + static_cast<std::int64_t>(t), 0, h - 1);
                    acc += tap.weights[t] * static_cast<double>(img[(ch * h + iy) * w + x]);
                }
                row[x] = acc;
            }
        }
    }, 32);

    Tensor<T> out({c, out_h, out_w});
    parallel_for(c * out_h, [&](std::int64_t q0, std::int64_t q1) {
        for (std::int64_t q = q0; q < q1; ++q) {
            const std::int64_t ch = q / out_h, oy = q % out_h;
            const double* row = mid.data() + (ch * out_h + oy) * w;
            T* orow = out.data() + (ch * out_h + oy) * out_w;
            for (std::int64_t ox = 0; ox < out_w; ++ox) {
                const auto& tap = taps_w[static_cast<std::size_t>(ox)];
                double acc = 0.0;
                for (std::size_t t = 0; t < tap.weights.size(); ++t) {
                    std::int64_t ix = std::clamp<std::int64_t>(tap.first + static_cast<std::int64_t>(t), 0, w - 1);
                    acc += tap.weights[t] * row[ix];
                }
                orow[ox] = static_cast<T>(acc);
            }
        }
    }, 32);
    debug_check_finite(out, "bicubic_resize");
    return out;
}

// --- 2-D spectrum ---

namespace detail {

inline void dft1d(std::vector<std::complex<double>>& v) {
    const std::size_t n = v.size();
    const bool pow2 = n > 0 && (n & (n - 1)) == 0;
    if (pow2 && n > 1) {
        // Iterative radix-2 Cooley-Tukey.
        std::size_t j = 0;
        for (std::size_t i = 1; i < n; ++i) {
            std::size_t bit = n >> 1;
            for (; j & bit; bit >>= 1) j ^= bit;
            j ^= bit;
            if (i < j) std::swap(v[i], v[j]);
        }
        for (std::size_t len = 2; len <= n; len <<= 1) {
            const double ang = -2.0 * M_PI / static_cast<double>(len);
            const std::complex<double> wl(std::cos(ang), std::sin(ang));
            for (std::size_t i = 0; i < n; i += len) {
                std::complex<double> w(1.0);
                for (std::size_t b = 0; b < len / 2; ++b) {
                    auto u = v[i + b];
                    auto t = v[i + b + len / 2] * w;
                    v[i + b] = u + t;
                    v[i + b + len / 2] = u - t;
                    w *= wl;
                }
            }
        }
        return;
    }
    // Direct DFT fallback for non-power-of-two extents.
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double ang = -2.0 * M_PI * static_cast<double>(k * i) / static_cast<double>(n);
            acc += v[i] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    v = std::move(out);
}

}  // namespace detail

// Magnitude of the 2-D DFT with the DC bin shifted to (floor(H/2), floor(W/2)).
template <typename T>
Tensor<T> fft2_magnitude(const Tensor<T>& x) {
    if (x.rank() != 2) throw shape_error("fft2_magnitude: expected [H,W]");
    const std::int64_t h = x.dim(0), w = x.dim(1);
    std::vector<std::complex<double>> grid(static_cast<std::size_t>(h * w));
    for (std::int64_t i = 0; i < h * w; ++i) grid[static_cast<std::size_t>(i)] = static_cast<double>(x[i]);

    std::vector<std::complex<double>> line;
    for (std::int64_t r = 0; r < h; ++r) {
        line.assign(grid.begin() + r * w, grid.begin() + (r + 1) * w);
        detail::dft1d(line);
        std::copy(line.begin(), line.end(), grid.begin() + r * w);
    }
    for (std::int64_t c = 0; c < w; ++c) {
        line.resize(static_cast<std::size_t>(h));
        for (std::int64_t r = 0; r < h; ++r) line[static_cast<std::size_t>(r)] = grid[static_cast<std::size_t>(r * w + c)];
        detail::dft1d(line);
        for (std::int64_t r = 0; r < h; ++r) grid[static_cast<std::size_t>(r * w + c)] = line[static_cast<std::size_t>(r)];
    }

    Tensor<T> mag({h, w});
    for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < w; ++c) {
            const std::int64_t sr = (r + h / 2) % h;
            const std::int64_t sc = (c + w / 2) % w;
            mag[sr * w + sc] = static_cast<T>(std::abs(grid[static_cast<std::size_t>(r * w + c)]));
        }
    return mag;
}

}  // namespace itsrn
