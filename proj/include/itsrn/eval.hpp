#pragma once

// Fidelity metrics (PSNR / SSIM on full RGB in [0,1], no border crop), the
// desk-scale ablation runner, and the branch-spectrum diagnostic of the
// dual-branch blocks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "itsrn/data.hpp"
#include "itsrn/model.hpp"
#include "itsrn/train.hpp"

namespace itsrn::evalm {

// 10*log10(1/MSE); identical images report the +inf sentinel.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw shape_error("psnr: shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    double mse = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

namespace detail {

inline std::vector<double> gaussian_window(int radius, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        w[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += w[static_cast<std::size_t>(i + radius)];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Separable valid-region Gaussian filter of one channel plane.
inline std::vector<double> gauss_valid(const std::vector<double>& img, std::int64_t h,
                                       std::int64_t w, const std::vector<double>& win) {
    const int radius = static_cast<int>(win.size() / 2);
    const std::int64_t oh = h - 2 * radius, ow = w - 2 * radius;
    std::vector<double> rows(static_cast<std::size_t>(oh * w));
    for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::size_t t = 0; t < win.size(); ++t)
                acc += win[t] * img[static_cast<std::size_t>((y + static_cast<std::int64_t>(t)) * w + x)];
            rows[static_cast<std::size_t>(y * w + x)] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(oh * ow));
    for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t t = 0; t < win.size(); ++t)
                acc += win[t] * rows[static_cast<std::size_t>(y * w + x + static_cast<std::int64_t>(t))];
            out[static_cast<std::size_t>(y * ow + x)] = acc;
        }
    return out;
}

}  // namespace detail

// Gaussian window 11, sigma 1.5, K1=0.01, K2=0.03, L=1; computed per channel
// over the valid interior and averaged.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw shape_error("ssim: shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    const std::int64_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
    if (h < 11 || w < 11) throw contract_error("ssim: image smaller than the 11x11 window");
    constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
    const auto win = detail::gaussian_window(5, 1.5);

    double total = 0.0;
    for (std::int64_t ch = 0; ch < c; ++ch) {
        std::vector<double> pa(static_cast<std::size_t>(h * w)), pb(static_cast<std::size_t>(h * w));
        std::vector<double> paa(pa.size()), pbb(pa.size()), pab(pa.size());
        for (std::int64_t i = 0; i < h * w; ++i) {
            const double va = a[ch * h * w + i], vb = b[ch * h * w + i];
            pa[static_cast<std::size_t>(i)] = va;
            pb[static_cast<std::size_t>(i)] = vb;
            paa[static_cast<std::size_t>(i)] = va * va;
            pbb[static_cast<std::size_t>(i)] = vb * vb;
            pab[static_cast<std::size_t>(i)] = va * vb;
        }
        const auto mu1 = detail::gauss_valid(pa, h, w, win);
        const auto mu2 = detail::gauss_valid(pb, h, w, win);
        const auto s11 = detail::gauss_valid(paa, h, w, win);
        const auto s22 = detail::gauss_valid(pbb, h, w, win);
        const auto s12 = detail::gauss_valid(pab, h, w, win);
        double mean = 0.0;
        for (std::size_t i = 0; i < mu1.size(); ++i) {
            const double m1 = mu1[i], m2 = mu2[i];
            const double v1 = s11[i] - m1 * m1;
            const double v2 = s22[i] - m2 * m2;
            const double cov = s12[i] - m1 * m2;
            mean += ((2.0 * m1 * m2 + kC1) * (2.0 * cov + kC2)) /
                    ((m1 * m1 + m2 * m2 + kC1) * (v1 + v2 + kC2));
        }
        total += mean / static_cast<double>(mu1.size());
    }
    return total / static_cast<double>(c);
}

// --- dataset evaluation ---

struct MetricReport {
    std::string variant, reweight, branch_mode;
    double scale = 0.0;
    std::vector<double> psnr_per_image, ssim_per_image;

    double mean_psnr() const {
        double s = 0.0;
        for (double v : psnr_per_image) s += v;
        return psnr_per_image.empty() ? 0.0 : s / static_cast<double>(psnr_per_image.size());
    }
    double mean_ssim() const {
        double s = 0.0;
        for (double v : ssim_per_image) s += v;
        return ssim_per_image.empty() ? 0.0 : s / static_cast<double>(ssim_per_image.size());
    }
};

template <typename T>
MetricReport evaluate(const Model<T>& model, const std::vector<data::Image<T>>& pool, double scale) {
    MetricReport rep;
    rep.scale = scale;
    rep.variant = variant_name(model.config.upsampler.variant);
    rep.reweight = reweight_name(model.config.upsampler.reweight);
    rep.branch_mode = branch_mode_name(model.config.backbone.branch_mode);
    for (const auto& hr : pool) {
        auto pair = data::make_pair(hr, scale);
        auto sr = forward(model, pair.lr, scale);
        rep.psnr_per_image.push_back(psnr(sr, pair.hr));
        rep.ssim_per_image.push_back(ssim(sr, pair.hr));
    }
    return rep;
}

// --- ablation runner ---

struct AblationRow {
    std::string axis;  // "variant" | "reweight" | "branch_mode"
    std::string id;
    double psnr = 0.0, ssim = 0.0;
};

struct AblationOptions {
    std::int64_t steps = 120;
    std::int64_t batch = 2;
    std::int64_t patch = 16;
    double scale_min = 1.0, scale_max = 2.0;
    double eval_scale = 2.0;
    std::uint64_t seed = 7;
};

// Trains and evaluates every configuration on one axis grid with a shared
// seed: upsampler variants, reweight functions, and branch modes.
template <typename T>
std::vector<AblationRow> run_ablation(const ModelConfig& base,
                                      const std::vector<data::Image<T>>& pool,
                                      const AblationOptions& opt) {
    if (pool.empty()) throw contract_error("run_ablation: empty image pool");
    std::vector<AblationRow> rows;
    auto run_one = [&](const ModelConfig& cfg, const std::string& axis, const std::string& id) {
        Model<T> model = Model<T>::init(cfg, opt.seed);
        train::TrainConfig tc;
        tc.steps = opt.steps;
        tc.batch = opt.batch;
        tc.patch = opt.patch;
        tc.scale_min = opt.scale_min;
        tc.scale_max = opt.scale_max;
        tc.seed = opt.seed;
        tc.checkpoint_every = 0;
        train::train_loop(model, pool, tc);
        auto rep = evaluate(model, pool, opt.eval_scale);
        rows.push_back(AblationRow{axis, id, rep.mean_psnr(), rep.mean_ssim()});
    };

    for (auto var : {UpsamplerVariant::modulation, UpsamplerVariant::liif_concat,
                     UpsamplerVariant::bilinear_only, UpsamplerVariant::itsrn_offset}) {
        ModelConfig cfg = base;
        cfg.upsampler.variant = var;
        run_one(cfg, "variant", variant_name(var));
    }
    for (auto rw : {Reweight::sin, Reweight::tanh, Reweight::sigmoid, Reweight::softmax}) {
        ModelConfig cfg = base;
        cfg.upsampler.reweight = rw;
        run_one(cfg, "reweight", reweight_name(rw));
    }
    for (auto mode : {BranchMode::parallel, BranchMode::sequential, BranchMode::attention_only,
                      BranchMode::conv_only}) {
        ModelConfig cfg = base;
        cfg.backbone.branch_mode = mode;
        run_one(cfg, "branch_mode", branch_mode_name(mode));
    }
    return rows;
}

// --- branch spectrum diagnostic ---

template <typename T>
struct SpectrumReport {
    Tensor<T> conv_mag, attn_mag;  // centered magnitude maps [H, W]
    double conv_hf_ratio = 0.0, attn_hf_ratio = 0.0;
};

namespace detail {

template <typename T>
double hf_energy_ratio(const Tensor<T>& mag) {
    const std::int64_t h = mag.dim(0), w = mag.dim(1);
    const std::int64_t ch = h / 2, cw = w / 2;
    const std::int64_t y0 = (h - ch) / 2, x0 = (w - cw) / 2;
    double total = 0.0, central = 0.0;
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            const double e = static_cast<double>(mag.at2(y, x)) * static_cast<double>(mag.at2(y, x));
            total += e;
            if (y >= y0 && y < y0 + ch && x >= x0 && x < x0 + cw) central += e;
        }
    return total == 0.0 ? 0.0 : (total - central) / total;
}

template <typename T>
Tensor<T> channel_mean_map(const Tensor<T>& maps) {
    const std::int64_t c = maps.dim(0), h = maps.dim(1), w = maps.dim(2);
    Tensor<T> mean({h, w});
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < h * w; ++i) mean[i] += maps[ch * h * w + i];
    for (std::int64_t i = 0; i < h * w; ++i) mean[i] /= static_cast<T>(c);
    return mean;
}

}  // namespace detail

// Channel-averaged centered spectra of the conv and attention branch outputs
// of one addressed DBB, with high-frequency energy ratios (energy outside
// the central H/2 x W/2 block over total).
template <typename T>
SpectrumReport<T> branch_spectrum(const Model<T>& model, const data::Image<T>& img,
                                  std::int64_t stage, std::int64_t block) {
    const auto& stages = model.backbone.stages;
    if (stage < 0 || stage >= static_cast<std::int64_t>(stages.size()))
        throw contract_error("branch_spectrum: stage out of range");
    const auto& blocks = stages[static_cast<std::size_t>(stage)].blocks;
    if (block < 0 || block >= static_cast<std::int64_t>(blocks.size()))
        throw contract_error("branch_spectrum: block out of range");
    if (!blocks[static_cast<std::size_t>(block)].is_dbb)
        throw contract_error("branch_spectrum: addressed block is an SBB (no attention branch)");
    if (model.config.backbone.branch_mode != BranchMode::parallel)
        throw contract_error("branch_spectrum: requires the parallel branch mode");

    BranchProbe<T> probe;
    probe.stage = stage;
    probe.block = block;
    extract_features(img, model.backbone, model.config.backbone, &probe);
    if (!probe.captured) throw contract_error("branch_spectrum: probe did not fire");

    SpectrumReport<T> rep;
    rep.conv_mag = fft2_magnitude(detail::channel_mean_map(probe.f_conv));
    rep.attn_mag = fft2_magnitude(detail::channel_mean_map(probe.f_attn));
    rep.conv_hf_ratio = detail::hf_energy_ratio(rep.conv_mag);
    rep.attn_hf_ratio = detail::hf_energy_ratio(rep.attn_mag);
    return rep;
}

}  // namespace itsrn::evalm
