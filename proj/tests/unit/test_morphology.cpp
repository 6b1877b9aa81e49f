/*
 * Copyright 2026 The matedit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <doctest.h>

#include <random>

#include "core/morphology.hpp"
#include "support/edit_oracle.hpp"

using namespace matedit;

namespace {

Mask random_mask(int w, int h, double density, std::mt19937_64& rng) {
    std::bernoulli_distribution b(density);
    Mask m(w, h);
    for (auto& v : m.values()) v = b(rng);
    return m;
}

}  // namespace

TEST_CASE("disc half widths") {
    CHECK(disc_half_widths(1) == std::vector<int>{0, 1, 0});
    CHECK(disc_half_widths(2) == std::vector<int>{0, 1, 2, 1, 0});
    CHECK(disc_half_widths(4) == std::vector<int>{0, 2, 3, 3, 4, 3, 3, 2, 0});
}

TEST_CASE("erode of an all-ones frame clears the border") {
    const Mask ones(9, 7, 1, 1);
    const Mask e = erode(ones, 1);
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 9; ++x) {
            const bool border = x == 0 || y == 0 || x == 8 || y == 6;
            CHECK(e.at(x, y) == (border ? 0 : 1));
        }
}

TEST_CASE("opening removes an isolated pixel") {
    Mask m(11, 11);
    m.at(5, 5) = 1;
    CHECK(popcount(open(m, 1)) == 0);
    CHECK(popcount(dilate(m, 1)) == 5);
}

TEST_CASE("random masks match the sliding-window oracle") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 12; ++trial) {
        const Mask m = random_mask(32, 32, 0.3 + 0.05 * trial, rng);
        for (int r : {1, 2, 3, 4}) {
            CAPTURE(trial);
            CAPTURE(r);
            CHECK(erode(m, r) == oracle::naive_morph(m, r, true));
            CHECK(dilate(m, r) == oracle::naive_morph(m, r, false));
            CHECK(open(m, r) == oracle::naive_open(m, r));
            CHECK(erode(m, r, MorphBoundary::Foreground) == oracle::naive_morph(m, r, true, true));
            CHECK(dilate(m, r, MorphBoundary::Foreground) == oracle::naive_morph(m, r, false, true));
        }
    }
}

TEST_CASE("erosion and dilation are dual under complementary boundaries") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const Mask m = random_mask(29, 23, 0.5, rng);
        for (int r : {1, 3}) {
            CHECK(erode(mask_not(m), r, MorphBoundary::Foreground) == mask_not(dilate(m, r)));
            CHECK(dilate(mask_not(m), r, MorphBoundary::Foreground) == mask_not(erode(m, r)));
        }
    }
}

TEST_CASE("opening is idempotent and anti-extensive") {
    std::mt19937_64 rng(9);
    const Mask m = random_mask(40, 40, 0.6, rng);
    const Mask o = open(m, 2);
    CHECK(open(o, 2) == o);
    CHECK(popcount(mask_minus(o, m)) == 0);
}

TEST_CASE("morphology dispatch and errors") {
    Mask m(8, 8);
    m.at(3, 3) = 1;
    CHECK(morphology(m, parse_morph_op("dilate"), 1) == dilate(m, 1));
    CHECK(morphology(m, parse_morph_op("erode"), 1) == erode(m, 1));
    CHECK(morphology(m, parse_morph_op("open"), 1) == open(m, 1));
    CHECK_THROWS_AS(parse_morph_op("close"), Error);
    CHECK_THROWS_AS(erode(m, 0), Error);
}
