#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "itsrn/coords.hpp"

namespace coords = itsrn::coords;

TEST_CASE("center_coords formula") {
    auto c1 = coords::center_coords(1);
    CHECK(c1[0] == 0.0);

    auto c2 = coords::center_coords(2);
    CHECK(c2[0] == -0.5);
    CHECK(c2[1] == 0.5);

    auto c4 = coords::center_coords(4);
    const double expect[4] = {-0.75, -0.25, 0.25, 0.75};
    for (int i = 0; i < 4; ++i) CHECK(c4[i] == Catch::Approx(expect[i]).margin(1e-15));

    CHECK_THROWS_AS(coords::center_coords(0), itsrn::contract_error);
}

TEST_CASE("output_shape matches the arbitrary-ratio rows") {
    CHECK(coords::output_shape(180, 320, 2.1) == std::pair<std::int64_t, std::int64_t>{378, 672});
    CHECK(coords::output_shape(180, 320, 1.0) == std::pair<std::int64_t, std::int64_t>{180, 320});
    CHECK(coords::output_shape(180, 320, 4.2) == std::pair<std::int64_t, std::int64_t>{756, 1344});
    CHECK_THROWS_AS(coords::output_shape(8, 8, 0.5), itsrn::contract_error);
}

TEST_CASE("project_queries at scale 1 gives exactly zero offsets") {
    auto f = coords::project_queries(5, 7, 5, 7);
    for (std::int64_t i = 0; i < f.offsets.numel(); ++i) CHECK(f.offsets[i] == 0.0);
    for (std::int64_t q = 0; q < 35; ++q) {
        CHECK(f.nn_row[static_cast<std::size_t>(q)] == q / 7);
        CHECK(f.nn_col[static_cast<std::size_t>(q)] == q % 7);
    }
    CHECK(f.cell.s_h == Catch::Approx(2.0 / 5.0));
    CHECK(f.cell.s_w == Catch::Approx(2.0 / 7.0));
}

TEST_CASE("project_queries hand case 2 -> 4") {
    auto f = coords::project_queries(2, 2, 4, 4);
    // Along each axis the cell-normalized offsets alternate -0.5, +0.5.
    const double expect[4] = {-0.5, 0.5, -0.5, 0.5};
    for (std::int64_t y = 0; y < 4; ++y)
        for (std::int64_t x = 0; x < 4; ++x) {
            CHECK(f.offsets[(y * 4 + x) * 2 + 0] == Catch::Approx(expect[y]).margin(1e-12));
            CHECK(f.offsets[(y * 4 + x) * 2 + 1] == Catch::Approx(expect[x]).margin(1e-12));
        }
}

TEST_CASE("nearest index is monotone along each axis") {
    for (std::int64_t h_lr = 1; h_lr <= 8; ++h_lr)
        for (std::int64_t h_hr = h_lr; h_hr <= 32; ++h_hr) {
            auto plan = coords::axis_plan(h_lr, h_hr);
            for (std::size_t i = 1; i < plan.size(); ++i) CHECK(plan[i].nn >= plan[i - 1].nn);
        }
}

TEST_CASE("offset magnitudes stay within one half-cell unit") {
    for (auto [lr, hr] : {std::pair<int, int>{1, 13}, {3, 7}, {4, 17}, {8, 9}, {5, 80}}) {
        auto plan = coords::axis_plan(lr, hr);
        for (const auto& p : plan) CHECK(std::abs(p.off_nn) <= 1.0 + 1e-9);
    }
}

TEST_CASE("offsets are antisymmetric under horizontal flip") {
    for (auto [lr, hr] : {std::pair<int, int>{3, 8}, {4, 11}, {5, 5}, {2, 9}}) {
        auto plan = coords::axis_plan(lr, hr);
        for (std::int64_t x = 0; x < hr; ++x) {
            const auto& a = plan[static_cast<std::size_t>(x)];
            const auto& b = plan[static_cast<std::size_t>(hr - 1 - x)];
            if (std::abs(std::abs(a.off_nn) - 1.0) < 1e-12) continue;  // tie-break cell
            CHECK(b.off_nn == Catch::Approx(-a.off_nn).margin(1e-12));
        }
    }
}

TEST_CASE("integer-scale offset pattern is periodic with period r") {
    for (int r : {2, 3, 4}) {
        const std::int64_t lr = 5, hr = lr * r;
        auto plan = coords::axis_plan(lr, hr);
        for (std::int64_t x = 0; x + r < hr; ++x)
            CHECK(plan[static_cast<std::size_t>(x)].off_nn ==
                  Catch::Approx(plan[static_cast<std::size_t>(x + r)].off_nn).margin(1e-12));
    }
}

TEST_CASE("ensemble weights: coincident query concentrates on one neighbor") {
    auto e = coords::ensemble_weights(3, 3, 3, 3);
    for (std::int64_t q = 0; q < 9; ++q) {
        int ones = 0;
        for (int k = 0; k < 4; ++k) {
            const double w = e.w[k][q];
            if (w == 1.0) ++ones;
            CHECK((w == 0.0 || w == 1.0));
        }
        CHECK(ones == 1);
    }
}

TEST_CASE("ensemble weights: central query of 2->3 splits evenly") {
    auto e = coords::ensemble_weights(2, 2, 3, 3);
    const std::int64_t q = 1 * 3 + 1;  // center query sits midway between all four centers
    for (int k = 0; k < 4; ++k) CHECK(e.w[k][q] == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("ensemble weights always sum to one") {
    for (auto [lr, hr] : {std::pair<int, int>{1, 4}, {2, 5}, {3, 10}, {6, 7}, {4, 23}}) {
        auto e = coords::ensemble_weights(lr, lr, hr, hr);
        for (std::int64_t q = 0; q < hr * hr; ++q) {
            double sum = 0.0;
            for (int k = 0; k < 4; ++k) {
                CHECK(e.w[k][q] >= 0.0);
                sum += e.w[k][q];
            }
            CHECK(std::abs(sum - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("grid preconditions") {
    CHECK_THROWS_AS(coords::project_queries(4, 4, 3, 4), itsrn::contract_error);
    CHECK_THROWS_AS(coords::ensemble_weights(0, 4, 4, 4), itsrn::contract_error);
}
