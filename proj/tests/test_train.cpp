#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "itsrn/eval.hpp"
#include "itsrn/train.hpp"
#include "support/oracles.hpp"

namespace train = itsrn::train;
using itsrn::Model;
using itsrn::ModelConfig;
using itsrn::Rng;
using itsrn::Tensor;
using oracle::random_tensor;

namespace {

ModelConfig micro_config() {
    ModelConfig cfg;
    cfg.backbone.shallow_channels = 4;
    cfg.backbone.blocks = {1};
    cfg.backbone.channels = {4};
    cfg.backbone.alphas = {1.0};
    cfg.backbone.window = 2;
    cfg.backbone.heads = 2;
    cfg.upsampler.c_up = 8;
    cfg.upsampler.phi_hidden = 8;
    return cfg;
}

// Metrics log without the trailing wall-clock field, which is the one
// physically nondeterministic column.
std::string log_without_walltime(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in);
    std::string out, line;
    while (std::getline(in, line)) {
        const auto tab = line.rfind('\t');
        out += line.substr(0, tab);
        out += '\n';
    }
    return out;
}

std::filesystem::path fresh_dir(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("l1 loss basics") {
    Rng rng(3);
    auto a = random_tensor<float>({4, 5}, rng);
    CHECK(train::l1_loss(a, a) == 0.0f);
    auto b = a;
    for (std::int64_t i = 0; i < b.numel(); ++i) b[i] += 0.5f;
    CHECK(train::l1_loss(b, a) == Catch::Approx(0.5).margin(1e-6));
    CHECK_THROWS_AS(train::l1_loss(a, Tensor<float>({4, 4})), itsrn::shape_error);
}

TEST_CASE("adam first step moves by at most the learning rate") {
    Rng rng(5);
    Tensor<double> p = random_tensor<double>({6}, rng);
    const Tensor<double> orig = p;
    Tensor<double> g = random_tensor<double>({6}, rng, -2.0, 2.0);
    std::vector<Tensor<double>*> params{&p};
    std::vector<Tensor<double>> grads{g};
    train::OptimState<double> st;
    st.reset(params);
    const double lr = 2e-4;
    train::adam_step(params, grads, st, lr);
    for (std::int64_t i = 0; i < 6; ++i) {
        const double delta = p[i] - orig[i];
        CHECK(std::abs(delta) <= lr + 1e-9);
        if (std::abs(g[i]) > 1e-6)
            CHECK(delta == Catch::Approx(-lr * (g[i] > 0 ? 1.0 : -1.0)).margin(lr * 1e-2));
    }
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
    Rng rng(7);
    Tensor<double> p = random_tensor<double>({5}, rng);
    const Tensor<double> orig = p;
    std::vector<Tensor<double>*> params{&p};
    std::vector<Tensor<double>> grads{Tensor<double>({5})};
    train::OptimState<double> st;
    st.reset(params);
    for (int i = 0; i < 3; ++i) train::adam_step(params, grads, st, 1e-3);
    REQUIRE(p.vec() == orig.vec());
}

TEST_CASE("adam is deterministic across identical runs") {
    auto run = []() {
        Rng rng(11);
        Tensor<float> p = random_tensor<float>({8}, rng);
        std::vector<Tensor<float>*> params{&p};
        train::OptimState<float> st;
        st.reset(params);
        for (int i = 0; i < 10; ++i) {
            std::vector<Tensor<float>> grads{random_tensor<float>({8}, rng)};
            train::adam_step(params, grads, st, 1e-3);
        }
        return p;
    };
    REQUIRE(run().vec() == run().vec());
}

TEST_CASE("schedule halves at the configured fractions and never increases") {
    train::Schedule s;
    s.total_steps = 1000;
    CHECK(s.lr_at(0) == 2e-4);
    CHECK(s.lr_at(399) == 2e-4);
    CHECK(s.lr_at(400) == Catch::Approx(1e-4));
    CHECK(s.lr_at(800) == Catch::Approx(5e-5));
    CHECK(s.lr_at(900) == Catch::Approx(2.5e-5));
    CHECK(s.lr_at(950) == Catch::Approx(1.25e-5));
    double prev = s.lr_at(0);
    for (std::int64_t t = 1; t < 1000; ++t) {
        CHECK(s.lr_at(t) <= prev);
        prev = s.lr_at(t);
    }
}

TEST_CASE("training loop runs, logs and reproduces byte-identically") {
    std::vector<itsrn::data::Image<float>> pool{itsrn::data::synth_sci<float>(1, 32, 32)};
    auto run = [&](const char* dirname) {
        auto dir = fresh_dir(dirname);
        auto model = Model<float>::init(micro_config(), 5);
        train::TrainConfig cfg;
        cfg.steps = 6;
        cfg.batch = 2;
        cfg.patch = 8;
        cfg.seed = 99;
        cfg.checkpoint_every = 3;
        cfg.out_dir = dir.string();
        auto result = train::train_loop(model, pool, cfg);
        REQUIRE(result.losses.size() == 6);
        for (double l : result.losses) CHECK(std::isfinite(l));
        return dir;
    };
    auto d1 = run("itsrn_train_a");
    auto d2 = run("itsrn_train_b");
    CHECK(log_without_walltime((d1 / "metrics.log").string()) ==
          log_without_walltime((d2 / "metrics.log").string()));
    CHECK(std::filesystem::exists(d1 / "ckpt_000003.itsr"));
    CHECK(std::filesystem::exists(d1 / "final.itsr"));
    std::filesystem::remove_all(d1);
    std::filesystem::remove_all(d2);
}

TEST_CASE("resume continues bit-identically to an uninterrupted run") {
    std::vector<itsrn::data::Image<float>> pool{itsrn::data::synth_sci<float>(2, 32, 32)};
    auto make_cfg = [](const std::filesystem::path& dir) {
        train::TrainConfig cfg;
        cfg.steps = 6;
        cfg.batch = 1;
        cfg.patch = 8;
        cfg.seed = 1234;
        cfg.checkpoint_every = 3;
        cfg.out_dir = dir.string();
        return cfg;
    };

    auto d_full = fresh_dir("itsrn_resume_full");
    auto full_model = Model<float>::init(micro_config(), 8);
    train::train_loop(full_model, pool, make_cfg(d_full));

    // Restart from the run's own mid checkpoint and replay steps 4..6.
    auto d_rest = fresh_dir("itsrn_resume_rest");
    auto rest_model = Model<float>::init(micro_config(), 8);
    auto rest_cfg = make_cfg(d_rest);
    rest_cfg.resume_from = (d_full / "ckpt_000003.itsr").string();
    train::train_loop(rest_model, pool, rest_cfg);

    std::vector<Tensor<float>*> a, b;
    full_model.visit([&](const std::string&, Tensor<float>& t) { a.push_back(&t); });
    rest_model.visit([&](const std::string&, Tensor<float>& t) { b.push_back(&t); });
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i]->vec() == b[i]->vec());

    for (auto d : {d_full, d_rest}) std::filesystem::remove_all(d);
}

TEST_CASE("overfit loss is non-increasing under a 50-step moving average") {
    // Exact-overfit mode: the patch equals the pool image, the scale is
    // fixed at 1 and augmentation is off, so every step sees one sample.
    std::vector<itsrn::data::Image<float>> pool{itsrn::data::synth_sci<float>(3, 16, 16)};
    auto model = Model<float>::init(micro_config(), 21);
    train::TrainConfig cfg;
    cfg.steps = 150;
    cfg.batch = 1;
    cfg.patch = 16;
    cfg.scale_min = 1.0;
    cfg.scale_max = 1.0;
    cfg.base_lr = 1e-4;
    cfg.augment_prob = 0.0;
    cfg.seed = 77;
    cfg.checkpoint_every = 0;
    auto result = train::train_loop(model, pool, cfg);
    const int window = 50;
    auto ma = [&](int start) {
        double s = 0.0;
        for (int i = start; i < start + window; ++i) s += result.losses[static_cast<std::size_t>(i)];
        return s / window;
    };
    double prev = ma(0);
    for (int start = 1; start + window <= 150; ++start) {
        const double cur = ma(start);
        CHECK(cur <= prev + 1e-6);
        prev = cur;
    }
}
