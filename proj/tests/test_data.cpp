#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "itsrn/data.hpp"
#include "support/oracles.hpp"

namespace data = itsrn::data;
using itsrn::Rng;
using itsrn::Tensor;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("ppm round trip of a u8-grid image is lossless") {
    Rng rng(3);
    Tensor<float> img({3, 9, 7});
    for (std::int64_t i = 0; i < img.numel(); ++i)
        img[i] = static_cast<float>(rng.below(256)) / 255.0f;
    const std::string path = temp_path("itsrn_rt.ppm");
    data::save_ppm(img, path);
    auto back = data::load_ppm<float>(path);
    REQUIRE(back.vec() == img.vec());
    std::remove(path.c_str());
}

TEST_CASE("1x1 white image serializes to the exact byte sequence") {
    auto img = Tensor<float>::full({3, 1, 1}, 1.0f);
    const std::string path = temp_path("itsrn_white.ppm");
    data::save_ppm(img, path);
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    REQUIRE(bytes == std::string("P6\n1 1\n255\n\xFF\xFF\xFF", 14));
    std::remove(path.c_str());
}

TEST_CASE("ppm loader rejects bad magic, high maxval and truncation") {
    const std::string path = temp_path("itsrn_bad.ppm");
    {
        std::ofstream out(path, std::ios::binary);
        out << "P5\n2 2\n255\n";
    }
    CHECK_THROWS_AS(data::load_ppm<float>(path), itsrn::format_error);
    {
        std::ofstream out(path, std::ios::binary);
        out << "P6\n2 2\n65535\n";
    }
    CHECK_THROWS_AS(data::load_ppm<float>(path), itsrn::format_error);
    {
        std::ofstream out(path, std::ios::binary);
        out << "P6\n2 2\n255\n";
        out.write("\0\0\0", 3);  // needs 12 bytes
    }
    CHECK_THROWS_AS(data::load_ppm<float>(path), itsrn::format_error);
    std::remove(path.c_str());
}

TEST_CASE("synthetic screen content is deterministic per seed") {
    auto a = data::synth_sci<float>(42, 32, 48);
    auto b = data::synth_sci<float>(42, 32, 48);
    REQUIRE(a.vec() == b.vec());
}

TEST_CASE("synthetic screen content contains a full-contrast 1-px edge") {
    for (std::uint64_t seed : {1ull, 7ull, 99ull}) {
        auto img = data::synth_sci<float>(seed, 48, 48);
        bool found = false;
        for (std::int64_t y = 0; y < 48 && !found; ++y)
            for (std::int64_t x = 1; x + 1 < 48 && !found; ++x) {
                const float l = img[(0 * 48 + y) * 48 + x - 1];
                const float c = img[(0 * 48 + y) * 48 + x];
                const float r = img[(0 * 48 + y) * 48 + x + 1];
                found = std::abs(l - c) == 1.0f && std::abs(r - c) == 1.0f;
            }
        CHECK(found);
    }
}

TEST_CASE("distinct seeds give distinct images") {
    std::set<std::size_t> hashes;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto img = data::synth_sci<float>(seed, 16, 16);
        std::size_t h = 1469598103934665603ull;
        for (std::int64_t i = 0; i < img.numel(); ++i) {
            h ^= static_cast<std::size_t>(img[i] * 255.0f);
            h *= 1099511628211ull;
        }
        hashes.insert(h);
    }
    CHECK(hashes.size() == 100);
}

TEST_CASE("make_pair honors the output-shape convention") {
    auto hr = data::synth_sci<float>(5, 96, 96);
    auto same = data::make_pair(hr, 1.0);
    REQUIRE(same.lr.vec() == hr.vec());

    auto half = data::make_pair(hr, 2.0);
    CHECK(half.lr.shape() == itsrn::Shape{3, 48, 48});
    CHECK(half.hr.shape() == itsrn::Shape{3, 96, 96});

    auto odd_hr = data::synth_sci<float>(6, 100, 100);
    auto odd = data::make_pair(odd_hr, 2.5);
    CHECK(odd.lr.shape() == itsrn::Shape{3, 40, 40});
    CHECK(odd.hr.shape() == itsrn::Shape{3, 100, 100});

    CHECK_THROWS_AS(data::make_pair(data::synth_sci<float>(7, 16, 16), 3.0),
                    itsrn::contract_error);
}

TEST_CASE("batches are reproducible and respect the patch contract") {
    std::vector<data::Image<float>> pool{data::synth_sci<float>(11, 64, 64)};
    Rng a(123), b(123);
    auto ba = data::make_batch(pool, 3, 12, 12, 1.0, 2.0, a);
    auto bb = data::make_batch(pool, 3, 12, 12, 1.0, 2.0, b);
    for (std::size_t s = 0; s < 3; ++s) {
        REQUIRE(ba.lr_patches[s].shape() == itsrn::Shape{3, 12, 12});
        REQUIRE(ba.lr_patches[s].vec() == bb.lr_patches[s].vec());
        REQUIRE(ba.gt_pixels[s].vec() == bb.gt_pixels[s].vec());
        REQUIRE(ba.gt_coords[s] == bb.gt_coords[s]);
        CHECK(ba.scales[s] >= 1.0);
        CHECK(ba.scales[s] <= 2.0);
        CHECK(ba.gt_pixels[s].shape() == itsrn::Shape{144, 3});
    }
}

TEST_CASE("at scale 1 the GT pixels equal the LR patch at matching centers") {
    std::vector<data::Image<float>> pool{data::synth_sci<float>(13, 48, 48)};
    Rng rng(7);
    auto batch = data::make_batch(pool, 2, 10, 10, 1.0, 1.0, rng, /*augment_prob=*/0.0);
    for (std::size_t s = 0; s < 2; ++s) {
        const auto& lr = batch.lr_patches[s];
        for (std::size_t qi = 0; qi < batch.gt_coords[s].size(); ++qi) {
            const auto [cy, cx] = batch.gt_coords[s][qi];
            const auto py = static_cast<std::int64_t>(std::llround((cy + 1.0) * 10.0 / 2.0 - 0.5));
            const auto px = static_cast<std::int64_t>(std::llround((cx + 1.0) * 10.0 / 2.0 - 0.5));
            for (int c = 0; c < 3; ++c)
                CHECK(batch.gt_pixels[s].at2(static_cast<std::int64_t>(qi), c) ==
                      lr[(c * 10 + py) * 10 + px]);
        }
    }
}

TEST_CASE("sampled coordinates are distinct and cover the crop bounds") {
    std::vector<data::Image<float>> pool{data::synth_sci<float>(17, 64, 64)};
    Rng rng(29);
    double lo = 1.0, hi = -1.0;
    for (int round = 0; round < 100; ++round) {
        auto batch = data::make_batch(pool, 1, 8, 8, 1.0, 2.0, rng);
        std::set<std::pair<double, double>> seen;
        for (const auto& yx : batch.gt_coords[0]) {
            CHECK(yx.first >= -1.0);
            CHECK(yx.first <= 1.0);
            seen.insert(yx);
            lo = std::min(lo, yx.first);
            hi = std::max(hi, yx.first);
        }
        CHECK(seen.size() == batch.gt_coords[0].size());
    }
    CHECK(lo < -0.85);
    CHECK(hi > 0.85);
}

TEST_CASE("gt coordinates reconstruct their pixel through the center formula") {
    std::vector<data::Image<float>> pool{data::synth_sci<float>(19, 64, 64)};
    Rng rng(31);
    auto batch = data::make_batch(pool, 1, 8, 8, 1.4, 1.4, rng, /*augment_prob=*/0.0);
    // Crop is floor(1.4*8) = 11 pixels per side.
    auto centers = itsrn::coords::center_coords(11);
    for (std::size_t qi = 0; qi < batch.gt_coords[0].size(); ++qi) {
        const auto [cy, cx] = batch.gt_coords[0][qi];
        std::int64_t py = -1, px = -1;
        for (std::int64_t i = 0; i < 11; ++i) {
            if (centers[i] == cy) py = i;
            if (centers[i] == cx) px = i;
        }
        REQUIRE(py >= 0);
        REQUIRE(px >= 0);
    }
    CHECK(batch.cells[0].s_h == Catch::Approx(2.0 / 11.0));
}

TEST_CASE("dataset directory loader reads flat folders and manifests") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "itsrn_pool";
    fs::create_directories(dir);
    data::save_ppm(data::synth_sci<float>(1, 16, 16), (dir / "a.ppm").string());
    data::save_ppm(data::synth_sci<float>(2, 16, 16), (dir / "b.ppm").string());
    auto pool = data::load_pool<float>(dir.string());
    CHECK(pool.size() == 2);

    const auto manifest = dir / "split.txt";
    {
        std::ofstream out(manifest);
        out << "b.ppm\n";
    }
    auto split = data::load_pool<float>(dir.string(), manifest.string());
    CHECK(split.size() == 1);
    fs::remove_all(dir);
}
