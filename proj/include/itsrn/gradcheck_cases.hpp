#pragma once

// The registered gradient-check cases behind the gradcheck command: every
// parameterized op plus the model-level composites (sin-modulation path,
// masked window attention, DBB/SBB, channel attention, the render MLP, the
// full upsampler query path and a one-block backbone). Cases re-randomize
// their parameters to U(-0.4, 0.4) so ReLU pre-activations sit away from
// the finite-difference step.

#include <functional>
#include <memory>
#include <vector>

#include "itsrn/backbone.hpp"
#include "itsrn/gradcheck.hpp"
#include "itsrn/model.hpp"
#include "itsrn/upsampler.hpp"

namespace itsrn {

namespace gradcases {

inline void fill_uniform(Tensor<double>& t, Rng& rng, double lo = -0.4, double hi = 0.4) {
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
}

class FnCase : public GradCase {
public:
    FnCase(std::string name, std::vector<Shape> shapes,
           std::function<Var(Tape<double>&, std::vector<Tensor<double>>&)> fn)
        : name_(std::move(name)), shapes_(std::move(shapes)), fn_(std::move(fn)) {}

    std::string name() const override { return name_; }

    void init(std::uint64_t seed) override {
        Rng rng(seed);
        tensors_.clear();
        for (const auto& s : shapes_) {
            Tensor<double> t(s);
            fill_uniform(t, rng);
            tensors_.push_back(std::move(t));
        }
    }

    std::vector<Tensor<double>*> params() override {
        std::vector<Tensor<double>*> out;
        for (auto& t : tensors_) out.push_back(&t);
        return out;
    }

    Var build(Tape<double>& tape) override { return fn_(tape, tensors_); }

private:
    std::string name_;
    std::vector<Shape> shapes_;
    std::function<Var(Tape<double>&, std::vector<Tensor<double>>&)> fn_;
    std::vector<Tensor<double>> tensors_;
};

class UpsamplerCase : public GradCase {
public:
    explicit UpsamplerCase(UpsamplerVariant var) : var_(var) {}

    std::string name() const override {
        return std::string("upsampler_") + variant_name(var_);
    }

    void init(std::uint64_t seed) override {
        Rng rng(seed);
        p_.init(3, 4, 4, var_, Reweight::sin, rng);
        p_.visit("u", [&](const std::string&, Tensor<double>& t) { fill_uniform(t, rng); });
        feats_ = Tensor<double>({3, 3, 3});
        fill_uniform(feats_, rng);
        qs_ = grid_queries<double>(3, 3, 5, 5, 0, 5);
        target_ = Tensor<double>({25, 3});
        fill_uniform(target_, rng);
    }

    std::vector<Tensor<double>*> params() override {
        std::vector<Tensor<double>*> out{&feats_};
        p_.visit("u", [&](const std::string&, Tensor<double>& t) { out.push_back(&t); });
        return out;
    }

    Var build(Tape<double>& tape) override {
        TapeCtx<double> ctx(tape);
        auto prep = prepare_features(ctx, p_, ctx.use(feats_), 3, 3);
        auto rgb = upsample_queries(ctx, p_, prep, qs_);
        return tape.l1_loss(rgb, target_);
    }

private:
    UpsamplerVariant var_;
    UpsamplerParams<double> p_;
    Tensor<double> feats_, target_;
    QuerySet<double> qs_;
};

class BlockCase : public GradCase {
public:
    BlockCase(std::string name, bool dbb, bool shifted, BranchMode mode)
        : name_(std::move(name)), dbb_(dbb), shifted_(shifted) {
        cfg_.shallow_channels = 4;
        cfg_.blocks = {1};
        cfg_.channels = {4};
        cfg_.alphas = {dbb ? 1.0 : 0.0};
        cfg_.window = 2;
        cfg_.heads = 2;
        cfg_.branch_mode = mode;
    }

    std::string name() const override { return name_; }

    void init(std::uint64_t seed) override {
        Rng rng(seed);
        block_.init(4, dbb_, shifted_, cfg_, rng);
        block_.visit("b", [&](const std::string&, Tensor<double>& t) { fill_uniform(t, rng); });
        x_ = Tensor<double>({4, 5, 5});
        fill_uniform(x_, rng);
        target_ = Tensor<double>({4, 5, 5});
        fill_uniform(target_, rng);
    }

    std::vector<Tensor<double>*> params() override {
        std::vector<Tensor<double>*> out{&x_};
        block_.visit("b", [&](const std::string&, Tensor<double>& t) { out.push_back(&t); });
        return out;
    }

    Var build(Tape<double>& tape) override {
        TapeCtx<double> ctx(tape);
        auto y = detail::block_forward(ctx, block_, cfg_, ctx.use(x_), 4, 5, 5, false,
                                       static_cast<BranchProbe<double>*>(nullptr));
        return tape.l1_loss(y, target_);
    }

private:
    std::string name_;
    bool dbb_, shifted_;
    BackboneConfig cfg_;
    BlockParams<double> block_;
    Tensor<double> x_, target_;
};

class BackboneCase : public GradCase {
public:
    BackboneCase() {
        cfg_.shallow_channels = 4;
        cfg_.blocks = {1};
        cfg_.channels = {4};
        cfg_.alphas = {1.0};
        cfg_.window = 2;
        cfg_.heads = 2;
    }

    std::string name() const override { return "backbone_one_block"; }

    void init(std::uint64_t seed) override {
        Rng rng(seed);
        bb_.init(cfg_, rng);
        bb_.visit("bb", [&](const std::string&, Tensor<double>& t) { fill_uniform(t, rng); });
        img_ = Tensor<double>({3, 5, 5});
        fill_uniform(img_, rng, 0.0, 1.0);
        target_ = Tensor<double>({4, 5, 5});
        fill_uniform(target_, rng);
    }

    std::vector<Tensor<double>*> params() override {
        std::vector<Tensor<double>*> out;
        bb_.visit("bb", [&](const std::string&, Tensor<double>& t) { out.push_back(&t); });
        return out;
    }

    Var build(Tape<double>& tape) override {
        TapeCtx<double> ctx(tape);
        auto f = backbone_forward(ctx, bb_, cfg_, ctx.constant(img_), 5, 5);
        return tape.l1_loss(f, target_);
    }

private:
    BackboneConfig cfg_;
    BackboneParams<double> bb_;
    Tensor<double> img_, target_;
};

}  // namespace gradcases

inline std::vector<std::unique_ptr<GradCase>> standard_grad_cases() {
    using gradcases::FnCase;
    std::vector<std::unique_ptr<GradCase>> cases;
    auto add = [&](std::string name, std::vector<Shape> shapes,
                   std::function<Var(Tape<double>&, std::vector<Tensor<double>>&)> fn) {
        cases.push_back(std::make_unique<FnCase>(std::move(name), std::move(shapes), std::move(fn)));
    };

    add("identity", {{3, 3}}, [](Tape<double>& t, auto& p) { return t.sum_all(t.param(p[0])); });
    add("matmul", {{3, 4}, {4, 2}}, [](Tape<double>& t, auto& p) {
        return t.sum_all(t.act(t.matmul(t.param(p[0]), t.param(p[1])), Act::tanh));
    });
    add("conv2d", {{2, 4, 4}, {3, 2, 3, 3}, {3}}, [](Tape<double>& t, auto& p) {
        return t.l1_loss(t.conv2d(t.param(p[0]), t.param(p[1]), t.param(p[2])),
                         Tensor<double>::full({3, 4, 4}, 0.1));
    });
    add("depthwise_conv2d", {{3, 4, 4}, {3, 5, 5}, {3}}, [](Tape<double>& t, auto& p) {
        return t.sum_all(t.act(t.depthwise_conv2d(t.param(p[0]), t.param(p[1]), t.param(p[2])),
                               Act::sigmoid));
    });
    add("softmax", {{4, 5}}, [](Tape<double>& t, auto& p) {
        return t.l1_loss(t.softmax_rows(t.param(p[0])), Tensor<double>::full({4, 5}, 0.2));
    });
    add("layer_norm", {{5, 4}, {4}, {4}}, [](Tape<double>& t, auto& p) {
        return t.sum_all(t.act(
            t.layer_norm_rows(t.param(p[0]), t.param(p[1]), t.param(p[2]), 1e-5), Act::tanh));
    });
    for (Act a : {Act::relu, Act::sigmoid, Act::tanh, Act::sin}) {
        add(std::string("act_") + act_name(a), {{4, 4}},
            [a](Tape<double>& t, auto& p) { return t.sum_all(t.act(t.param(p[0]), a)); });
    }
    add("l1_loss", {{4, 4}}, [](Tape<double>& t, auto& p) {
        return t.l1_loss(t.param(p[0]), Tensor<double>::full({4, 4}, 0.05));
    });
    // Eq.-style sin modulation: sigma(K*Q + s) * V summed.
    add("modulate_sin", {{6, 4}, {6, 4}, {6, 4}, {1, 4}}, [](Tape<double>& t, auto& p) {
        Var pre = t.add_rows(t.mul(t.param(p[1]), t.param(p[0])), t.param(p[3]));
        Var vp = t.mul(t.act(pre, Act::sin), t.param(p[2]));
        return t.sum_all(vp);
    });
    // Channel attention gate over tokens.
    add("channel_attention", {{6, 4}, {4, 2}, {2}, {2, 4}, {4}}, [](Tape<double>& t, auto& p) {
        Var tok = t.param(p[0]);
        Var z = t.act(t.add_rows(t.matmul(t.mean_rows(tok), t.param(p[1])), t.param(p[2])), Act::relu);
        Var gate = t.act(t.add_rows(t.matmul(z, t.param(p[3])), t.param(p[4])), Act::sigmoid);
        return t.sum_all(t.act(t.mul_rows(tok, gate), Act::tanh));
    });
    // Render MLP (4 linears, ReLU between).
    add("render_phi", {{5, 4}, {4, 4}, {4}, {4, 4}, {4}, {4, 4}, {4}, {4, 3}, {3}},
        [](Tape<double>& t, auto& p) {
            Var x = t.param(p[0]);
            for (int l = 0; l < 4; ++l) {
                x = t.add_rows(t.matmul(x, t.param(p[1 + 2 * l])), t.param(p[2 + 2 * l]));
                if (l < 3) x = t.act(x, Act::relu);
            }
            return t.l1_loss(x, Tensor<double>::full({5, 3}, 0.1));
        });

    // Window attention core, with and without a shift mask (the mask grid
    // matches a 4x4 padded map of 2x2 windows shifted by 1).
    for (bool masked : {false, true}) {
        const std::int64_t m = 2, m2 = 4, heads = 2, c = 4;
        const std::int64_t nw = 4;
        AttnPlan<double> plan;
        plan.num_windows = nw;
        plan.tokens = m2;
        plan.heads = heads;
        plan.bias_index = winutil::relative_position_index(m);
        if (masked) plan.mask = winutil::shift_attention_mask<double>(4, 4, m, 1);
        add(masked ? "window_attention_masked" : "window_attention",
            {{nw * m2, c}, {nw * m2, c}, {nw * m2, c}, {9, heads}},
            [plan](Tape<double>& t, auto& p) {
                Var y = t.window_attention(t.param(p[0]), t.param(p[1]), t.param(p[2]),
                                           t.param(p[3]), plan);
                return t.sum_all(t.act(y, Act::tanh));
            });
    }

    cases.push_back(std::make_unique<gradcases::UpsamplerCase>(UpsamplerVariant::modulation));
    cases.push_back(std::make_unique<gradcases::UpsamplerCase>(UpsamplerVariant::liif_concat));
    cases.push_back(std::make_unique<gradcases::BlockCase>("dbb_parallel", true, false,
                                                           BranchMode::parallel));
    cases.push_back(std::make_unique<gradcases::BlockCase>("dbb_shifted", true, true,
                                                           BranchMode::parallel));
    cases.push_back(std::make_unique<gradcases::BlockCase>("sbb", false, false,
                                                           BranchMode::parallel));
    cases.push_back(std::make_unique<gradcases::BackboneCase>());
    return cases;
}

}  // namespace itsrn
