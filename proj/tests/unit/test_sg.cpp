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

#include "core/sg.hpp"
#include "support/oracles.hpp"

using namespace matedit;

namespace {
// Frozen from the analytic formula 2*pi*mu*(1 - exp(-2 lambda)) / lambda,
// cross-checked against scipy dblquad when these values were generated.
constexpr double kIntegralLambda1 = 5.432848644004314;
constexpr double kIntegralLambda50 = 0.12566370614359174;
constexpr double kSelfInnerLambda1 = 3.084052377011142;
constexpr double kOrthogonalInnerLambda5 = 0.04749801559347653;  // scipy dblquad
}  // namespace

TEST_CASE("eval_sg basic values") {
    const SphericalGaussian g({0, 0, 1}, 1.0, 1.0);
    CHECK(eval_sg(g, {0, 0, 1}).x == doctest::Approx(1.0));
    CHECK(eval_sg(g, {0, 0, -1}).x == doctest::Approx(std::exp(-2.0)));
    CHECK(eval_sg(g, {1, 0, 0}).x == doctest::Approx(0.36787944117144233).epsilon(1e-12));

    const SphericalGaussian rgb({0, 1, 0}, 3.0, Vec3{0.1, 0.2, 0.3});
    const Vec3 v = eval_sg(rgb, {0, -1, 0});
    CHECK(v.z == doctest::Approx(0.3 * std::exp(-6.0)));
}

TEST_CASE("eval_sg rejects non-unit directions") {
    const SphericalGaussian g({0, 0, 1}, 1.0, 1.0);
    CHECK_THROWS_AS(eval_sg(g, {0, 0, 2}), Error);
}

TEST_CASE("lobe invariants are enforced") {
    CHECK_THROWS_AS(SphericalGaussian({0, 0, 1.1}, 1.0, 1.0), Error);
    CHECK_THROWS_AS(SphericalGaussian({0, 0, 1}, 0.0, 1.0), Error);
    CHECK_THROWS_AS(SphericalGaussian({0, 0, 1}, 1.0, -0.5), Error);
    const double two[] = {1.0, 2.0};
    CHECK_THROWS_AS(SphericalGaussian({0, 0, 1}, 1.0, std::span<const double>(two)), Error);
    const double four[] = {1.0, 2.0, 3.0, 4.0};
    CHECK_THROWS_AS(SphericalGaussian({0, 0, 1}, 1.0, std::span<const double>(four)), Error);
}

TEST_CASE("aligned product adds sharpness and multiplies amplitude") {
    const SphericalGaussian a({0, 0, 1}, 2.0, 0.5);
    const SphericalGaussian b({0, 0, 1}, 3.0, 4.0);
    const SphericalGaussian p = sg_product(a, b);
    CHECK(p.sharpness() == doctest::Approx(5.0));
    CHECK(p.amplitude().x == doctest::Approx(2.0));
    CHECK(p.axis().z == doctest::Approx(1.0));

    const SphericalGaussian unit({1, 0, 0}, 1.0, 1.0);
    const SphericalGaussian sq = sg_product(unit, unit);
    CHECK(sq.sharpness() == doctest::Approx(2.0));
    CHECK(sq.amplitude().x == doctest::Approx(1.0));
}

TEST_CASE("orthogonal product axis and sharpness") {
    const SphericalGaussian a({0, 0, 1}, 2.0, 1.0);
    const SphericalGaussian b({1, 0, 0}, 2.0, 1.0);
    const SphericalGaussian p = sg_product(a, b);
    CHECK(p.axis().x == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(p.axis().z == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(p.sharpness() == doctest::Approx(2.0 * std::sqrt(2.0)));
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i) {
        const Vec3 v = oracle::random_unit(rng);
        const double expect = oracle::sg_value({0, 0, 1}, 2.0, 1.0, v) * oracle::sg_value({1, 0, 0}, 2.0, 1.0, v);
        CHECK(eval_sg(p, v).x == doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("product is pointwise exact for random pairs") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> logl(std::log(0.01), std::log(500.0));
    std::uniform_real_distribution<double> amp(0.0, 3.0);
    double worst = 0;
    for (int pair = 0; pair < 50; ++pair) {
        const Vec3 xa = oracle::random_unit(rng), xb = oracle::random_unit(rng);
        const double la = std::exp(logl(rng)), lb = std::exp(logl(rng));
        const Vec3 ma{amp(rng), amp(rng), amp(rng)};
        const double mb = amp(rng);
        const SphericalGaussian a(xa, la, ma), b(xb, lb, mb);
        const SphericalGaussian p = sg_product(a, b);
        CHECK(p.channels() == 3);
        for (int i = 0; i < 100; ++i) {
            const Vec3 v = oracle::random_unit(rng);
            for (int c = 0; c < 3; ++c) {
                const double expect = oracle::sg_value(xa, la, ma[c], v) * oracle::sg_value(xb, lb, mb, v);
                const double got = eval_sg(p, v)[c];
                worst = std::max(worst, std::abs(got - expect) / std::max(expect, 1e-12));
            }
        }
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("antipodal equal-sharpness product is a constant lobe") {
    const SphericalGaussian a({0, 1, 0}, 3.0, 2.0);
    const SphericalGaussian b({0, -1, 0}, 3.0, 0.5);
    const SgProduct p = multiply(a, b);
    REQUIRE(std::holds_alternative<ConstantLobe>(p));
    CHECK(std::get<ConstantLobe>(p).value.x == doctest::Approx(std::exp(-6.0)));
    try {
        (void)sg_product(a, b);
        FAIL("expected DegenerateLobeError");
    } catch (const DegenerateLobeError& e) {
        CHECK(e.code() == ErrorCode::DegenerateLobe);
        CHECK(e.constant().value.x == doctest::Approx(std::exp(-6.0)));
    }
    CHECK(sg_inner_product(a, b).x == doctest::Approx(4.0 * kPi * std::exp(-6.0)));
}

TEST_CASE("sphere integral closed form") {
    CHECK(sg_integral(SphericalGaussian({0, 0, 1}, 1.0, 1.0)).x == doctest::Approx(kIntegralLambda1).epsilon(1e-14));
    CHECK(sg_integral(SphericalGaussian({0, 0, 1}, 50.0, 1.0)).x == doctest::Approx(kIntegralLambda50).epsilon(1e-14));
    CHECK(sg_integral(SphericalGaussian({0, 0, 1}, 5.0, 0.0)).x == 0.0);
}

TEST_CASE("sphere integral agrees with quadrature across sharpness range") {
    std::mt19937_64 rng(3);
    for (double lambda : {0.01, 0.1, 1.0, 10.0, 100.0, 500.0}) {
        const Vec3 xi = oracle::random_unit(rng);
        const double quad = oracle::sphere_quadrature([&](const Vec3& v) { return oracle::sg_value(xi, lambda, 1.0, v); });
        const double closed = sg_integral(SphericalGaussian(xi, lambda, 1.0)).x;
        CAPTURE(lambda);
        CHECK(std::abs(closed - quad) / quad < 1e-3);
    }
}

TEST_CASE("inner product values") {
    const SphericalGaussian a({0, 0, 1}, 1.0, 1.0);
    CHECK(sg_inner_product(a, a).x == doctest::Approx(kSelfInnerLambda1).epsilon(1e-14));

    const SphericalGaussian p({0, 0, 1}, 5.0, 1.0), q({1, 0, 0}, 5.0, 1.0);
    const double closed = sg_inner_product(p, q).x;
    CHECK(closed == doctest::Approx(kOrthogonalInnerLambda5).epsilon(1e-12));
    const double quad = oracle::sphere_quadrature([&](const Vec3& v) {
        return oracle::sg_value({0, 0, 1}, 5.0, 1.0, v) * oracle::sg_value({1, 0, 0}, 5.0, 1.0, v);
    });
    CHECK(std::abs(closed - quad) / quad < 1e-3);

    const SphericalGaussian zero({0, 0, 1}, 2.0, 0.0);
    CHECK(sg_inner_product(zero, a).x == 0.0);
}

TEST_CASE("product_integral gradient matches finite differences") {
    std::mt19937_64 rng(5);
    for (double scale : {1e-3, 0.05, 0.7, 4.0, 40.0}) {
        const Vec3 u = oracle::random_unit(rng) * scale;
        const double s = scale + 0.3;
        const ProductIntegralGrad g = product_integral_grad(u, s);
        for (int a = 0; a < 3; ++a) {
            const double h = 1e-6 * std::max(1.0, scale);
            Vec3 up = u, um = u;
            up[a] += h;
            um[a] -= h;
            const double fd = (product_integral(up, s) - product_integral(um, s)) / (2 * h);
            CAPTURE(scale);
            CHECK(g.d_u[a] == doctest::Approx(fd).epsilon(1e-6).scale(g.value));
        }
        CHECK(g.d_s == doctest::Approx(-g.value));
    }
}

TEST_CASE("mixture evaluation is linear") {
    std::mt19937_64 rng(9);
    std::vector<SphericalGaussian> lobes;
    for (int k = 0; k < 3; ++k) lobes.emplace_back(oracle::random_unit(rng), 1.0 + k * 4.0, Vec3{0.5, 1.0 + k, 2.0});
    const SGMixture env(lobes);
    const Vec3 w = oracle::random_unit(rng);
    Vec3 expect;
    for (const auto& l : lobes)
        for (int c = 0; c < 3; ++c) expect[c] += oracle::sg_value(l.axis(), l.sharpness(), l.amplitude()[c], w);
    const Vec3 got = eval_mixture(env, w);
    for (int c = 0; c < 3; ++c) CHECK(got[c] == doctest::Approx(expect[c]).epsilon(1e-12));

    const SGMixture single({lobes[0]});
    CHECK(eval_mixture(single, lobes[0].axis()).y == doctest::Approx(1.0));
    const SGMixture twice({lobes[0], lobes[0]});
    CHECK(eval_mixture(twice, w).y == 2.0 * eval_mixture(single, w).y);

    const SGMixture a({lobes[0], lobes[1]}), b({lobes[2]});
    const Vec3 joined = eval_mixture(a.concat(b), w);
    const Vec3 parts = eval_mixture(a, w) + eval_mixture(b, w);
    CHECK(joined == parts);
}

TEST_CASE("mixture rejects mixed channel counts and empty input") {
    CHECK_THROWS_AS(SGMixture(std::vector<SphericalGaussian>{}), Error);
    CHECK_THROWS_AS(SGMixture({SphericalGaussian({0, 0, 1}, 1, 1.0), SphericalGaussian({0, 0, 1}, 1, Vec3{1, 1, 1})}),
                    Error);
}

TEST_CASE("SGMIX text round trip") {
    std::mt19937_64 rng(21);
    std::vector<SphericalGaussian> lobes;
    for (int k = 0; k < 5; ++k) lobes.emplace_back(oracle::random_unit(rng), 0.5 + k, Vec3{0.1 * k, 1.0, 2.5});
    const SGMixture env(lobes);
    const std::string text = to_sgmix_text(env);
    CHECK(text.rfind("SGMIX v1\n", 0) == 0);
    const SGMixture back = parse_sgmix_text(text);
    REQUIRE(back.size() == env.size());
    for (size_t k = 0; k < env.size(); ++k) {
        CHECK(back.lobes()[k].sharpness() == env.lobes()[k].sharpness());
        CHECK(back.lobes()[k].amplitude() == env.lobes()[k].amplitude());
    }
    CHECK_THROWS_AS(parse_sgmix_text("SGMIX v2\n0 0 1 1 1 1 1\n"), Error);
    CHECK_THROWS_AS(parse_sgmix_text("SGMIX v1\n0 0 1 1 1\n"), Error);
}

TEST_CASE("lat-long pixels tile the sphere") {
    double total = 0;
    for (int y = 0; y < 16; ++y) total += 32 * latlong_solid_angle(y, 32, 16);
    CHECK(total == doctest::Approx(4.0 * kPi));
    const Vec3 top = latlong_direction(0, 0, 64, 32);
    CHECK(top.y > 0.99);
}

TEST_CASE("fibonacci sphere points are unit and spread") {
    const auto pts = fibonacci_sphere(32);
    REQUIRE(pts.size() == 32);
    Vec3 mean;
    for (const auto& p : pts) {
        CHECK(norm(p) == doctest::Approx(1.0));
        mean += p;
    }
    CHECK(norm(mean / 32.0) < 0.05);
}
