#pragma once

// End-to-end assembly: configuration presets, parameter construction, and
// the eager full-image forward (backbone features -> continuous upsampling).

#include <cstdint>
#include <string>
#include <utility>

#include "itsrn/backbone.hpp"
#include "itsrn/coords.hpp"
#include "itsrn/upsampler.hpp"

namespace itsrn {

struct UpsamplerConfig {
    std::int64_t c_up = 256;
    std::int64_t phi_hidden = 256;
    UpsamplerVariant variant = UpsamplerVariant::modulation;
    Reweight reweight = Reweight::sin;
};

struct ModelConfig {
    std::string preset = "custom";
    std::string precision = "f32";  // f32 | f64
    BackboneConfig backbone;
    UpsamplerConfig upsampler;

    // Full-scale configuration: 4 stages of 2/8/8/16 blocks at 64/64/128/192
    // channels, DBB ratios 0/0.25/0.25/0.75, window 16, 8 heads.
    static ModelConfig paper() {
        ModelConfig cfg;
        cfg.preset = "paper";
        return cfg;
    }

    // Scaled-down profile for CPU property tests and sanity training.
    static ModelConfig desk() {
        ModelConfig cfg;
        cfg.preset = "desk";
        cfg.backbone.shallow_channels = 16;
        cfg.backbone.blocks = {1, 2};
        cfg.backbone.channels = {16, 16};
        cfg.backbone.alphas = {0.0, 1.0};
        cfg.backbone.window = 4;
        cfg.backbone.heads = 2;
        cfg.upsampler.c_up = 32;
        cfg.upsampler.phi_hidden = 32;
        return cfg;
    }

    void validate() const {
        backbone.validate();
        if (backbone.channels[0] != backbone.shallow_channels)
            throw format_error("model config: stage-1 channels must equal the shallow width");
        if (upsampler.c_up < 1 || upsampler.phi_hidden < 1)
            throw format_error("model config: upsampler widths must be positive");
        if (precision != "f32" && precision != "f64")
            throw format_error("model config: precision must be f32 or f64");
    }
};

inline constexpr double kMinScale = 1.0;
inline constexpr double kMaxScale = 64.0;

template <typename T>
struct Model {
    ModelConfig config;
    BackboneParams<T> backbone;
    UpsamplerParams<T> upsampler;

    static Model init(const ModelConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        Model m;
        m.config = cfg;
        Rng rng(seed);
        m.backbone.init(cfg.backbone, rng);
        m.upsampler.init(cfg.backbone.shallow_channels, cfg.upsampler.c_up,
                         cfg.upsampler.phi_hidden, cfg.upsampler.variant, cfg.upsampler.reweight,
                         rng);
        return m;
    }

    template <typename V>
    void visit(V&& v) {
        backbone.visit("backbone", v);
        upsampler.visit("upsampler", v);
    }

    std::int64_t param_count() {
        std::int64_t n = 0;
        visit([&](const std::string&, Tensor<T>& t) { n += t.numel(); });
        return n;
    }
};

// lr [3,H,W] in [0,1] -> [3, floor(r*H), floor(r*W)]. Deterministic given
// the parameters.
template <typename T>
Tensor<T> forward(const Model<T>& model, const Tensor<T>& lr, double r,
                  BranchProbe<T>* probe = nullptr) {
    if (!(r >= kMinScale && r <= kMaxScale))
        throw contract_error("forward: scale must lie in [1, 64]");
    if (lr.rank() != 3 || lr.dim(0) != 3) throw shape_error("forward: expected [3,H,W] input");
    const auto [h_hr, w_hr] = coords::output_shape(lr.dim(1), lr.dim(2), r);
    Tensor<T> feats = extract_features(lr, model.backbone, model.config.backbone, probe);
    return upsample(feats, h_hr, w_hr, model.upsampler);
}

}  // namespace itsrn
