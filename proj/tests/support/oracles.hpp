#pragma once

// Brute-force twins used only by tests. Each is written as directly as
// possible (straight loops over the definition) and must stay independent of
// the library implementations it checks.

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "itsrn/tensor.hpp"

namespace oracle {

using itsrn::Tensor;

inline Tensor<double> matmul_triple_loop(const Tensor<double>& a, const Tensor<double>& b) {
    const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<double> c({m, n});
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::int64_t t = 0; t < k; ++t) acc += a.at2(i, t) * b.at2(t, j);
            c.at2(i, j) = acc;
        }
    return c;
}

inline Tensor<double> conv2d_six_loops(const Tensor<double>& x, const Tensor<double>& w,
                                       const Tensor<double>& b) {
    const std::int64_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const std::int64_t cout = w.dim(0), k = w.dim(2), pad = (k - 1) / 2;
    Tensor<double> y({cout, h, wd});
    for (std::int64_t oc = 0; oc < cout; ++oc)
        for (std::int64_t oy = 0; oy < h; ++oy)
            for (std::int64_t ox = 0; ox < wd; ++ox) {
                double acc = b[oc];
                for (std::int64_t ic = 0; ic < cin; ++ic)
                    for (std::int64_t ky = 0; ky < k; ++ky)
                        for (std::int64_t kx = 0; kx < k; ++kx) {
                            const std::int64_t iy = oy + ky - pad;
                            const std::int64_t ix = ox + kx - pad;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                            acc += w[((oc * cin + ic) * k + ky) * k + kx] * x[(ic * h + iy) * wd + ix];
                        }
                y[(oc * h + oy) * wd + ox] = acc;
            }
    return y;
}

// Direct O(N^4) DFT magnitude with the DC bin moved to (H/2, W/2).
inline Tensor<double> dft2_magnitude_naive(const Tensor<double>& x) {
    const std::int64_t h = x.dim(0), w = x.dim(1);
    Tensor<double> mag({h, w});
    for (std::int64_t u = 0; u < h; ++u)
        for (std::int64_t v = 0; v < w; ++v) {
            std::complex<double> acc(0.0);
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t xx = 0; xx < w; ++xx) {
                    const double ang = -2.0 * M_PI * (static_cast<double>(u * y) / h +
                                                      static_cast<double>(v * xx) / w);
                    acc += x.at2(y, xx) * std::complex<double>(std::cos(ang), std::sin(ang));
                }
            mag.at2((u + h / 2) % h, (v + w / 2) % w) = std::abs(acc);
        }
    return mag;
}

// Window attention by the book: one token pair at a time, one head at a
// time, softmax written out longhand.
inline Tensor<double> window_attention_pairs(const Tensor<double>& q, const Tensor<double>& k,
                                             const Tensor<double>& v,
                                             const Tensor<double>& bias_table,
                                             const std::vector<std::int32_t>& bias_index,
                                             const Tensor<double>& mask, std::int64_t num_windows,
                                             std::int64_t tokens, std::int64_t heads) {
    const std::int64_t c = q.dim(1);
    const std::int64_t d = c / heads;
    Tensor<double> out({num_windows * tokens, c});
    for (std::int64_t w = 0; w < num_windows; ++w)
        for (std::int64_t h = 0; h < heads; ++h)
            for (std::int64_t i = 0; i < tokens; ++i) {
                std::vector<double> score(static_cast<std::size_t>(tokens));
                for (std::int64_t j = 0; j < tokens; ++j) {
                    double s = 0.0;
                    for (std::int64_t e = 0; e < d; ++e)
                        s += q.at2(w * tokens + i, h * d + e) * k.at2(w * tokens + j, h * d + e);
                    s /= std::sqrt(static_cast<double>(d));
                    s += bias_table.at2(bias_index[static_cast<std::size_t>(i * tokens + j)], h);
                    if (!mask.empty()) s += mask[(w * tokens + i) * tokens + j];
                    score[static_cast<std::size_t>(j)] = s;
                }
                double mx = score[0];
                for (double sv : score) mx = std::max(mx, sv);
                double denom = 0.0;
                for (double sv : score) denom += std::exp(sv - mx);
                for (std::int64_t e = 0; e < d; ++e) {
                    double acc = 0.0;
                    for (std::int64_t j = 0; j < tokens; ++j)
                        acc += std::exp(score[static_cast<std::size_t>(j)] - mx) / denom *
                               v.at2(w * tokens + j, h * d + e);
                    out.at2(w * tokens + i, h * d + e) = acc;
                }
            }
    return out;
}

// SSIM straight from the definition: per valid center pixel, one 11x11
// Gaussian-weighted window at a time.
inline double ssim_sliding_window(const Tensor<double>& a, const Tensor<double>& b) {
    const std::int64_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
    constexpr int kRadius = 5;
    constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
    double win[11][11];
    double wsum = 0.0;
    for (int dy = -kRadius; dy <= kRadius; ++dy)
        for (int dx = -kRadius; dx <= kRadius; ++dx) {
            win[dy + kRadius][dx + kRadius] =
                std::exp(-0.5 * (dy * dy) / 2.25) * std::exp(-0.5 * (dx * dx) / 2.25);
            wsum += win[dy + kRadius][dx + kRadius];
        }
    for (auto& row : win)
        for (double& v : row) v /= wsum;

    double total = 0.0;
    for (std::int64_t ch = 0; ch < c; ++ch) {
        double mean = 0.0;
        std::int64_t count = 0;
        for (std::int64_t y = kRadius; y < h - kRadius; ++y)
            for (std::int64_t x = kRadius; x < w - kRadius; ++x) {
                double m1 = 0, m2 = 0, s11 = 0, s22 = 0, s12 = 0;
                for (int dy = -kRadius; dy <= kRadius; ++dy)
                    for (int dx = -kRadius; dx <= kRadius; ++dx) {
                        const double wv = win[dy + kRadius][dx + kRadius];
                        const double va = a[(ch * h + y + dy) * w + x + dx];
                        const double vb = b[(ch * h + y + dy) * w + x + dx];
                        m1 += wv * va;
                        m2 += wv * vb;
                        s11 += wv * va * va;
                        s22 += wv * vb * vb;
                        s12 += wv * va * vb;
                    }
                const double v1 = s11 - m1 * m1, v2 = s22 - m2 * m2, cov = s12 - m1 * m2;
                mean += ((2 * m1 * m2 + kC1) * (2 * cov + kC2)) /
                        ((m1 * m1 + m2 * m2 + kC1) * (v1 + v2 + kC2));
                ++count;
            }
        total += mean / static_cast<double>(count);
    }
    return total / static_cast<double>(c);
}

template <typename T>
Tensor<T> random_tensor(itsrn::Shape shape, itsrn::Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

}  // namespace oracle
