#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "itsrn/gradcheck.hpp"
#include "itsrn/model.hpp"
#include "itsrn/upsampler.hpp"
#include "support/oracles.hpp"

using itsrn::Rng;
using itsrn::Tensor;
using itsrn::UpsamplerParams;
using itsrn::UpsamplerVariant;
using oracle::max_abs_diff;
using oracle::random_tensor;

namespace {

UpsamplerParams<double> make_params(std::int64_t c_feat, std::int64_t c_up, std::int64_t hidden,
                                    UpsamplerVariant var, itsrn::Reweight rw, std::uint64_t seed) {
    UpsamplerParams<double> p;
    Rng rng(seed);
    p.init(c_feat, c_up, hidden, var, rw, rng);
    return p;
}

// Eq. 4 one scalar at a time, followed by the 4-layer MLP as plain loops.
std::vector<double> scalar_oracle_rgb(const UpsamplerParams<double>& p,
                                      const std::vector<double>& q, const std::vector<double>& k,
                                      const std::vector<double>& v, double s_h, double s_w) {
    const std::int64_t c = p.c_up;
    std::vector<double> vp(static_cast<std::size_t>(c));
    for (std::int64_t i = 0; i < c; ++i) {
        const double s_term = s_h * p.w_s.w.at2(0, i) + s_w * p.w_s.w.at2(1, i) + p.w_s.b[i];
        vp[static_cast<std::size_t>(i)] =
            std::sin(k[static_cast<std::size_t>(i)] * q[static_cast<std::size_t>(i)] + s_term) *
            v[static_cast<std::size_t>(i)];
    }
    std::vector<double> cur = vp;
    for (int layer = 0; layer < 4; ++layer) {
        const auto& lp = p.phi[static_cast<std::size_t>(layer)];
        const std::int64_t in = lp.w.dim(0), out = lp.w.dim(1);
        std::vector<double> next(static_cast<std::size_t>(out));
        for (std::int64_t o = 0; o < out; ++o) {
            double acc = lp.b[o];
            for (std::int64_t i = 0; i < in; ++i) acc += cur[static_cast<std::size_t>(i)] * lp.w.at2(i, o);
            next[static_cast<std::size_t>(o)] = layer < 3 ? std::max(0.0, acc) : acc;
        }
        cur = std::move(next);
    }
    return cur;
}

}  // namespace

TEST_CASE("project_qkv: zero offsets give zero Q, shared cells share K/V") {
    auto p = make_params(4, 8, 8, UpsamplerVariant::modulation, itsrn::Reweight::sin, 3);
    Rng rng(5);
    auto feats = random_tensor<double>({4, 3, 3}, rng);

    // Scale 1: all offsets are exactly zero and biases init to zero.
    auto field = itsrn::coords::project_queries(3, 3, 3, 3);
    auto qkv = itsrn::project_qkv(field, feats, p);
    for (std::int64_t i = 0; i < qkv.q.numel(); ++i) CHECK(qkv.q[i] == 0.0);

    // Scale 3: queries in the same LR cell gather identical K and V.
    auto field3 = itsrn::coords::project_queries(3, 3, 9, 9);
    auto qkv3 = itsrn::project_qkv(field3, feats, p);
    for (std::int64_t a = 0; a < 3; ++a)
        for (std::int64_t b = 0; b < 3; ++b) {
            const std::int64_t q0 = (0 * 9 + a), q1 = (0 * 9 + b);
            if (field3.nn_col[static_cast<std::size_t>(q0)] != field3.nn_col[static_cast<std::size_t>(q1)]) continue;
            for (std::int64_t c = 0; c < 8; ++c) {
                CHECK(qkv3.k.at2(q0, c) == qkv3.k.at2(q1, c));
                CHECK(qkv3.v.at2(q0, c) == qkv3.v.at2(q1, c));
            }
        }
}

TEST_CASE("project_qkv gather matches a per-query loop") {
    auto p = make_params(3, 6, 6, UpsamplerVariant::modulation, itsrn::Reweight::sin, 11);
    Rng rng(13);
    auto feats = random_tensor<double>({3, 4, 5}, rng);
    auto field = itsrn::coords::project_queries(4, 5, 9, 11);
    auto qkv = itsrn::project_qkv(field, feats, p);
    for (std::int64_t q = 0; q < 9 * 11; ++q) {
        const std::int64_t iy = field.nn_row[static_cast<std::size_t>(q)];
        const std::int64_t ix = field.nn_col[static_cast<std::size_t>(q)];
        for (std::int64_t o = 0; o < 6; ++o) {
            double k_expect = p.w_k.b[o];
            double v_expect = p.w_v.b[o];
            for (std::int64_t c = 0; c < 3; ++c) {
                k_expect += feats[(c * 4 + iy) * 5 + ix] * p.w_k.w.at2(c, o);
                v_expect += feats[(c * 4 + iy) * 5 + ix] * p.w_v.w.at2(c, o);
            }
            CHECK(qkv.k.at2(q, o) == Catch::Approx(k_expect).margin(1e-12));
            CHECK(qkv.v.at2(q, o) == Catch::Approx(v_expect).margin(1e-12));
        }
    }
}

TEST_CASE("modulate: sin of zero pre-activation kills the value") {
    auto p = make_params(4, 8, 8, UpsamplerVariant::modulation, itsrn::Reweight::sin, 7);
    // Zero Q and zero scale-bias weights force the pre-activation to zero.
    for (std::int64_t i = 0; i < p.w_s.w.numel(); ++i) p.w_s.w[i] = 0.0;
    Rng rng(17);
    auto k = random_tensor<double>({5, 8}, rng);
    auto v = random_tensor<double>({5, 8}, rng);
    auto vp = itsrn::modulate(Tensor<double>({5, 8}), k, v, {0.5, 0.5}, p);
    for (std::int64_t i = 0; i < vp.numel(); ++i) CHECK(vp[i] == 0.0);
}

TEST_CASE("modulate: sigmoid saturates to the raw value") {
    auto p = make_params(4, 8, 8, UpsamplerVariant::modulation, itsrn::Reweight::sigmoid, 7);
    for (std::int64_t i = 0; i < p.w_s.w.numel(); ++i) p.w_s.w[i] = 0.0;
    Rng rng(19);
    auto v = random_tensor<double>({4, 8}, rng, 0.5, 2.0);
    auto q = Tensor<double>::full({4, 8}, 1.0);
    auto k = Tensor<double>::full({4, 8}, 20.0);  // pre-activation = 20 everywhere
    auto vp = itsrn::modulate(q, k, v, {0.1, 0.1}, p);
    for (std::int64_t i = 0; i < vp.numel(); ++i)
        CHECK(std::abs(vp[i] - v[i]) <= 1e-6 * std::abs(v[i]));
}

TEST_CASE("modulate: sin path is 2-pi periodic") {
    auto p = make_params(4, 8, 8, UpsamplerVariant::modulation, itsrn::Reweight::sin, 7);
    Rng rng(23);
    auto q = Tensor<double>::full({6, 8}, 1.0);  // K*Q == K
    auto k = random_tensor<double>({6, 8}, rng, -3.0, 3.0);
    auto v = random_tensor<double>({6, 8}, rng);
    auto k_shift = k;
    for (std::int64_t i = 0; i < k.numel(); ++i) k_shift[i] += 2.0 * M_PI;
    auto a = itsrn::modulate(q, k, v, {0.3, 0.3}, p);
    auto b = itsrn::modulate(q, k_shift, v, {0.3, 0.3}, p);
    CHECK(max_abs_diff(a, b) < 1e-5);
}

TEST_CASE("render: zero input with zero biases is zero; matches loop oracle") {
    auto p = make_params(4, 8, 8, UpsamplerVariant::modulation, itsrn::Reweight::sin, 29);
    auto zero_rgb = itsrn::render(p, Tensor<double>({3, 8}));
    for (std::int64_t i = 0; i < zero_rgb.numel(); ++i) CHECK(zero_rgb[i] == 0.0);

    Rng rng(31);
    auto q = random_tensor<double>({5, 8}, rng);
    auto k = random_tensor<double>({5, 8}, rng);
    auto v = random_tensor<double>({5, 8}, rng);
    const itsrn::coords::CellSize cell{0.25, 0.125};
    auto rgb = itsrn::render(p, itsrn::modulate(q, k, v, cell, p));
    for (std::int64_t row = 0; row < 5; ++row) {
        std::vector<double> qr(8), kr(8), vr(8);
        for (int i = 0; i < 8; ++i) {
            qr[i] = q.at2(row, i);
            kr[i] = k.at2(row, i);
            vr[i] = v.at2(row, i);
        }
        auto expect = scalar_oracle_rgb(p, qr, kr, vr, cell.s_h, cell.s_w);
        for (int c = 0; c < 3; ++c) CHECK(rgb.at2(row, c) == Catch::Approx(expect[c]).margin(1e-6));
    }
}

TEST_CASE("render respects the operator-norm Lipschitz bound") {
    auto p = make_params(4, 8, 8, UpsamplerVariant::modulation, itsrn::Reweight::sin, 37);
    double bound = 1.0;
    for (const auto& lp : p.phi) {
        double fro = 0.0;
        for (std::int64_t i = 0; i < lp.w.numel(); ++i) fro += lp.w[i] * lp.w[i];
        bound *= std::sqrt(fro);
    }
    Rng rng(41);
    for (int round = 0; round < 20; ++round) {
        auto v = random_tensor<double>({1, 8}, rng);
        auto delta = random_tensor<double>({1, 8}, rng, -0.1, 0.1);
        auto vd = itsrn::add(v, delta);
        auto a = itsrn::render(p, v);
        auto b = itsrn::render(p, vd);
        double dn = 0.0, deltan = 0.0;
        for (int c = 0; c < 3; ++c) dn += (a[c] - b[c]) * (a[c] - b[c]);
        for (int i = 0; i < 8; ++i) deltan += delta[i] * delta[i];
        CHECK(std::sqrt(dn) <= bound * std::sqrt(deltan) + 1e-12);
    }
}

TEST_CASE("upsample at scale 1 equals the single-neighbor path") {
    auto p = make_params(4, 8, 8, UpsamplerVariant::modulation, itsrn::Reweight::sin, 43);
    Rng rng(47);
    auto feats = random_tensor<double>({4, 5, 6}, rng);
    auto out = itsrn::upsample(feats, 5, 6, p);

    auto field = itsrn::coords::project_queries(5, 6, 5, 6);
    auto qkv = itsrn::project_qkv(field, feats, p);
    auto rgb = itsrn::render(p, itsrn::modulate(qkv.q, qkv.k, qkv.v, field.cell, p));
    for (std::int64_t q = 0; q < 30; ++q)
        for (int c = 0; c < 3; ++c)
            CHECK(out[(c * 5 + q / 6) * 6 + q % 6] == Catch::Approx(rgb.at2(q, c)).margin(1e-12));
}

TEST_CASE("constant features: output is translation invariant over interior phases") {
    auto p = make_params(3, 8, 8, UpsamplerVariant::modulation, itsrn::Reweight::sin, 53);
    Tensor<double> feats({3, 6, 6});
    for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t i = 0; i < 36; ++i) feats[c * 36 + i] = 0.25 * static_cast<double>(c + 1);
    const std::int64_t r = 2, hr = 12;
    auto out = itsrn::upsample(feats, hr, hr, p);
    // Interior queries sharing the fractional phase see identical geometry.
    for (int c = 0; c < 3; ++c)
        for (std::int64_t y = 2; y + r < hr - 2; ++y)
            for (std::int64_t x = 2; x + r < hr - 2; ++x)
                CHECK(out[(c * hr + y) * hr + x] ==
                      Catch::Approx(out[(c * hr + y + r) * hr + x + r]).margin(1e-12));
}

TEST_CASE("perturbing one LR cell only moves outputs whose stencil touches it") {
    auto p = make_params(3, 8, 8, UpsamplerVariant::modulation, itsrn::Reweight::sin, 59);
    Rng rng(61);
    auto feats = random_tensor<double>({3, 8, 8}, rng);
    const std::int64_t hr = 17;
    auto base = itsrn::upsample(feats, hr, hr, p);

    const std::int64_t py = 3, px = 4;
    auto poked = feats;
    for (std::int64_t c = 0; c < 3; ++c) poked[(c * 8 + py) * 8 + px] += 0.5;
    auto moved = itsrn::upsample(poked, hr, hr, p);

    auto ew = itsrn::coords::ensemble_weights(8, 8, hr, hr);
    for (std::int64_t q = 0; q < hr * hr; ++q) {
        bool touches = false;
        for (int k = 0; k < 4; ++k)
            touches = touches || (ew.row[k][static_cast<std::size_t>(q)] == py &&
                                  ew.col[k][static_cast<std::size_t>(q)] == px);
        double diff = 0.0;
        for (int c = 0; c < 3; ++c)
            diff = std::max(diff, std::abs(base[(c * hr + q / hr) * hr + q % hr] -
                                           moved[(c * hr + q / hr) * hr + q % hr]));
        if (!touches) CHECK(diff == 0.0);
    }
}

TEST_CASE("variant output shapes agree; reweight swap keeps shape and finiteness") {
    Rng rng(67);
    auto feats = random_tensor<double>({4, 5, 5}, rng);
    for (auto var : {UpsamplerVariant::modulation, UpsamplerVariant::liif_concat,
                     UpsamplerVariant::bilinear_only, UpsamplerVariant::itsrn_offset}) {
        auto p = make_params(4, 8, 8, var, itsrn::Reweight::sin, 71);
        auto out = itsrn::upsample(feats, 11, 13, p);
        CHECK(out.shape() == itsrn::Shape{3, 11, 13});
        CHECK(out.all_finite());
    }
    Tensor<double> ref;
    for (auto rw : {itsrn::Reweight::sin, itsrn::Reweight::tanh, itsrn::Reweight::sigmoid,
                    itsrn::Reweight::softmax}) {
        auto p = make_params(4, 8, 8, UpsamplerVariant::modulation, rw, 73);
        // Boost K/Q so pre-activations reach magnitudes where the reweight
        // functions actually differ.
        for (std::int64_t i = 0; i < p.w_k.w.numel(); ++i) p.w_k.w[i] *= 50.0;
        for (std::int64_t i = 0; i < p.w_q.w.numel(); ++i) p.w_q.w[i] *= 50.0;
        auto out = itsrn::upsample(feats, 9, 9, p);
        CHECK(out.shape() == itsrn::Shape{3, 9, 9});
        CHECK(out.all_finite());
        if (rw != itsrn::Reweight::sin) CHECK(max_abs_diff(out, ref) > 1e-9);
        ref = out;
    }
}

TEST_CASE("bilinear_only at scale 1 reduces to rendering the value tokens") {
    auto p = make_params(4, 8, 8, UpsamplerVariant::bilinear_only, itsrn::Reweight::sin, 79);
    Rng rng(83);
    auto feats = random_tensor<double>({4, 4, 4}, rng);
    auto out = itsrn::upsample(feats, 4, 4, p);

    itsrn::EagerCtx<double> ctx;
    auto tokens = ctx.gather(feats, itsrn::chw_to_tokens_map(4, 4, 4));
    auto v_tok = itsrn::linear_fwd(ctx, tokens, p.w_v);
    auto rgb = itsrn::render(p, v_tok);
    for (std::int64_t q = 0; q < 16; ++q)
        for (int c = 0; c < 3; ++c)
            CHECK(out[(c * 4 + q / 4) * 4 + q % 4] == Catch::Approx(rgb.at2(q, c)).margin(1e-12));
}

TEST_CASE("liif_concat with a zeroed query path renders the unfolded values") {
    auto p = make_params(4, 6, 8, UpsamplerVariant::liif_concat, itsrn::Reweight::sin, 89);
    for (std::int64_t i = 0; i < p.w_q.w.numel(); ++i) p.w_q.w[i] = 0.0;
    Rng rng(97);
    auto feats = random_tensor<double>({4, 4, 4}, rng);
    auto out = itsrn::upsample(feats, 4, 4, p);

    itsrn::EagerCtx<double> ctx;
    auto tokens = ctx.gather(feats, itsrn::chw_to_tokens_map(4, 4, 4));
    auto v_tok = itsrn::linear_fwd(ctx, tokens, p.w_v);
    auto v_unf = ctx.gather(v_tok, itsrn::unfold3x3_map(4, 4, 6));
    auto both = ctx.concat_cols(Tensor<double>({16, 6}), v_unf);
    auto rgb = itsrn::render(p, both);
    for (std::int64_t q = 0; q < 16; ++q)
        for (int c = 0; c < 3; ++c)
            CHECK(out[(c * 4 + q / 4) * 4 + q % 4] == Catch::Approx(rgb.at2(q, c)).margin(1e-12));
}

TEST_CASE("eager and taped upsampling agree bit-exactly") {
    auto pd = make_params(3, 8, 8, UpsamplerVariant::modulation, itsrn::Reweight::sin, 101);
    Rng rng(103);
    auto feats = random_tensor<double>({3, 4, 4}, rng);
    auto qs = itsrn::grid_queries<double>(4, 4, 9, 9, 0, 9);

    itsrn::EagerCtx<double> ectx;
    auto eprep = itsrn::prepare_features(ectx, pd, ectx.use(feats), 4, 4);
    auto eager = itsrn::upsample_queries(ectx, pd, eprep, qs);

    itsrn::Tape<double> tape;
    itsrn::TapeCtx<double> tctx(tape);
    auto tprep = itsrn::prepare_features(tctx, pd, tctx.use(feats), 4, 4);
    auto taped = itsrn::upsample_queries(tctx, pd, tprep, qs);

    REQUIRE(eager.vec() == tape.value(taped).vec());
}

TEST_CASE("upsampler gradients pass the finite-difference check") {
    // Full query path: W_q, W_k, W_v, W_s and Phi all receive gradients.
    struct UpsampleCase : itsrn::GradCase {
        UpsamplerParams<double> p;
        Tensor<double> feats;
        itsrn::QuerySet<double> qs;
        Tensor<double> target;

        std::string name() const override { return "upsampler_modulation"; }
        void init(std::uint64_t seed) override {
            Rng rng(seed);
            p.init(3, 4, 4, UpsamplerVariant::modulation, itsrn::Reweight::sin, rng);
            // Keep ReLU pre-activations in Phi clear of the FD step.
            p.visit("u", [&](const std::string&, Tensor<double>& t) {
                for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-0.4, 0.4);
            });
            feats = random_tensor<double>({3, 3, 3}, rng);
            qs = itsrn::grid_queries<double>(3, 3, 5, 5, 0, 5);
            target = random_tensor<double>({25, 3}, rng);
        }
        std::vector<Tensor<double>*> params() override {
            std::vector<Tensor<double>*> out{&feats};
            p.visit("u", [&](const std::string&, Tensor<double>& t) { out.push_back(&t); });
            return out;
        }
        itsrn::Var build(itsrn::Tape<double>& tape) override {
            itsrn::TapeCtx<double> ctx(tape);
            auto prep = itsrn::prepare_features(ctx, p, ctx.use(feats), 3, 3);
            auto rgb = itsrn::upsample_queries(ctx, p, prep, qs);
            return tape.l1_loss(rgb, target);
        }
    };
    std::vector<std::unique_ptr<itsrn::GradCase>> cases;
    cases.push_back(std::make_unique<UpsampleCase>());
    auto report = itsrn::check_gradients(cases, 3);
    CHECK(report.rows[0].max_rel_err <= 1e-4);
}
