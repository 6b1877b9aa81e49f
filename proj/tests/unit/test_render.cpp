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

#include "core/render.hpp"
#include "core/texture.hpp"
#include "support/oracles.hpp"

using namespace matedit;

namespace {

std::shared_ptr<const MaterialModel> flat_material(const Vec3& albedo, int labels = 1) {
    return std::make_shared<const MaterialModel>(
        MaterialModel::uniform(16, 8, albedo, SemanticMaterialTable(labels, 30.0, Vec3{0.2, 0.2, 0.2})));
}

std::shared_ptr<const SGMixture> random_env(std::mt19937_64& rng, int lobes) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<SphericalGaussian> v;
    for (int k = 0; k < lobes; ++k)
        v.emplace_back(oracle::random_unit(rng), 1.0 + 20.0 * u(rng), Vec3{u(rng), u(rng), u(rng)} * 2.0);
    return std::make_shared<const SGMixture>(std::move(v));
}

Vec3 tilt(const Vec3& n, double theta, double phi) {
    Vec3 t, b;
    make_frame(n, t, b);
    return normalize(n * std::cos(theta) + (t * std::cos(phi) + b * std::sin(phi)) * std::sin(theta));
}

SurfaceSample sample_at(const Vec3& n) {
    SurfaceSample s;
    s.normal = n;
    s.uv = {0.3, 0.7};
    return s;
}

}  // namespace

TEST_CASE("bilinear read at texel centers and midpoints") {
    Image tex(4, 2, 1);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 4; ++x) tex.at(x, y) = x + 10 * y;
    CHECK(sample_uv(tex, {(2 + 0.5) / 4, (1 + 0.5) / 2}) == doctest::Approx(12.0));
    CHECK(sample_uv(tex, {0.5, 0.5}) == doctest::Approx((1 + 2 + 11 + 12) / 4.0));
    CHECK(sample_uv(tex, {0.0, 0.0}) == 0.0);  // clamped corner
    CHECK(sample_uv(tex, {1.0, 1.0}) == 13.0);
}

TEST_CASE("splat is the adjoint of the bilinear read") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image tex(7, 5, 3);
    for (auto& v : tex.values()) v = u(rng);
    for (int trial = 0; trial < 200; ++trial) {
        const Vec2 uv{u(rng), u(rng)};
        const Vec3 g{u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5};
        const double lhs = dot(sample_uv_rgb(tex, uv), g);
        Image grad(7, 5, 3);
        splat_uv_rgb(grad, uv, g);
        double rhs = 0;
        for (size_t i = 0; i < tex.values().size(); ++i) rhs += tex.values()[i] * grad.values()[i];
        CHECK(std::abs(lhs - rhs) < 1e-12);
    }
}

TEST_CASE("nearest texel label lookup") {
    LabelImage labels(2, 2, 1);
    labels.at(1, 0) = 3;
    CHECK(sample_label(labels, {0.9, 0.1}) == 3);
    CHECK(sample_label(labels, {0.1, 0.9}) == 0);
    CHECK(sample_label(labels, {1.0, 0.0}) == 3);
}

TEST_CASE("OBJ parsing triangulates and cleans up") {
    const std::string text =
        "# quad plus a degenerate triangle\n"
        "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 2 2 0\n"
        "vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\n"
        "f 1/1 2/2 3/3 4/4\n"
        "f -1 -1 -1\n";
    const TriangleMesh m = parse_obj(text);
    CHECK(m.triangles.size() == 2);
    CHECK(m.has_uvs);
    for (const auto& n : m.normals) CHECK(std::abs(n.z) == doctest::Approx(1.0));
    const TriangleMesh back = parse_obj(to_obj_text(m));
    CHECK(back.triangles.size() == 2);
    CHECK_THROWS_AS(parse_obj("v 0 0 0\nf 1 2 3\n"), Error);
}

TEST_CASE("BVH agrees with brute-force triangle intersection") {
    const TriangleMesh mesh = make_uv_sphere(1.0, 24, 12);
    const Bvh bvh(mesh);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int i = 0; i < 300; ++i) {
        Ray ray{Vec3{u(rng), u(rng), 3.0}, normalize(Vec3{u(rng) * 0.3, u(rng) * 0.3, -1.0})};
        double best = 1e300;
        for (size_t t = 0; t < mesh.triangles.size(); ++t) {
            const auto& tri = mesh.triangles[t];
            const Vec3 a = mesh.positions[tri[0]], b = mesh.positions[tri[1]], c = mesh.positions[tri[2]];
            const Vec3 e1 = b - a, e2 = c - a, p = cross(ray.direction, e2);
            const double det = dot(e1, p);
            if (std::abs(det) < 1e-14) continue;
            const Vec3 s = ray.origin - a;
            const double bu = dot(s, p) / det;
            const Vec3 q = cross(s, e1);
            const double bv = dot(ray.direction, q) / det;
            const double tt = dot(e2, q) / det;
            if (bu >= 0 && bv >= 0 && bu + bv <= 1 && tt > 1e-9) best = std::min(best, tt);
        }
        const auto hit = bvh.intersect(mesh, ray);
        if (best == 1e300) {
            CHECK(!hit);
        } else {
            REQUIRE(hit);
            CHECK(hit->t == doctest::Approx(best).epsilon(1e-9));
        }
    }
}

TEST_CASE("empty mesh is rejected") {
    try {
        Scene s(TriangleMesh{}, flat_material({0.5, 0.5, 0.5}), nullptr);
        FAIL("expected empty scene");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyScene);
    }
}

TEST_CASE("albedo, semantic and coverage passes") {
    std::mt19937_64 rng(8);
    Scene scene(make_uv_sphere(1.0, 32, 16), flat_material({0.5, 0.5, 0.5}), random_env(rng, 4));
    const Camera cam = Camera::orbit({0, 0, 0}, 4.0, 30, 20, 40, 48, 40);
    const RenderPass albedo = render(scene, cam, RenderMode::Albedo);
    REQUIRE(albedo.stats.hits > 100);
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            const Vec3 v = rgb_at(albedo.pixels, x, y);
            if (albedo.coverage.at(x, y)) {
                for (int c = 0; c < 3; ++c) CHECK(v[c] == doctest::Approx(0.5).epsilon(1e-14));
            } else {
                CHECK(v == Vec3{0, 0, 0});
            }
        }
    const RenderPass semantic = render(scene, cam, RenderMode::Semantic);
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x)
            if (semantic.coverage.at(x, y)) CHECK(semantic.pixels.at(x, y) == 0.0);

    // Coverage is identical across modes and the albedo pass ignores lighting.
    Image mask_tex(16, 8, 1);
    RenderOptions opts;
    opts.mask_texture = &mask_tex;
    for (RenderMode mode : {RenderMode::Shaded, RenderMode::Normal, RenderMode::Depth, RenderMode::Mask})
        CHECK(render(scene, cam, mode, opts).coverage == albedo.coverage);
    scene.set_environment(random_env(rng, 7));
    CHECK(render(scene, cam, RenderMode::Albedo).pixels == albedo.pixels);
}

TEST_CASE("camera facing away sees nothing") {
    Scene scene(make_uv_sphere(1.0, 16, 8), flat_material({0.5, 0.5, 0.5}), nullptr);
    Camera cam;
    cam.position = {0, 0, 3};
    cam.look_at = {0, 0, 6};
    cam.width = 16;
    cam.height = 16;
    const RenderPass p = render(scene, cam, RenderMode::Albedo);
    CHECK(popcount(p.coverage) == 0);
    for (double v : p.pixels.values()) CHECK(v == 0.0);
    CHECK(p.stats.hits == 0);
}

TEST_CASE("mask pass thresholds the UV texture") {
    Scene scene(make_uv_sphere(1.0, 32, 16), flat_material({0.5, 0.5, 0.5}), nullptr);
    Image tex(16, 8, 1);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 16; ++x) tex.at(x, y) = y < 4 ? 1.0 : 0.0;  // upper hemisphere
    RenderOptions opts;
    opts.mask_texture = &tex;
    const Camera cam = Camera::orbit({0, 0, 0}, 4.0, 0, 0, 40, 32, 32);
    const RenderPass p = render(scene, cam, RenderMode::Mask, opts);
    const GBuffer g = trace_gbuffer(scene, cam);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            if (!p.coverage.at(x, y)) continue;
            const double expect = sample_uv(tex, g.at(x, y).uv) >= 0.5 ? 1.0 : 0.0;
            CHECK(p.pixels.at(x, y) == expect);
        }
    CHECK_THROWS_AS(render(scene, cam, RenderMode::NegMask, opts), Error);
}

TEST_CASE("render stats serialize") {
    std::mt19937_64 rng(3);
    Scene scene(make_uv_sphere(1.0, 16, 8), flat_material({0.5, 0.5, 0.5}), random_env(rng, 2));
    const RenderPass p = render(scene, Camera::orbit({0, 0, 0}, 4, 0, 0, 40, 16, 16), RenderMode::Shaded);
    const std::string json = p.stats.to_json();
    CHECK(json.find("\"hits\"") != std::string::npos);
    CHECK(json.find("\"clamped\"") != std::string::npos);
}

TEST_CASE("zero environment shades black") {
    const SGMixture env({SphericalGaussian({0, 1, 0}, 3.0, 0.0), SphericalGaussian({1, 0, 0}, 8.0, 0.0)});
    const SurfaceSample s = sample_at({0, 1, 0});
    const MaterialValues m{Vec3{0.7, 0.7, 0.7}, 40.0, Vec3{0.5, 0.5, 0.5}};
    CHECK(shade_point_sg(s, tilt(s.normal, 0.4, 0.0), m, env).radiance == Vec3{0, 0, 0});
    const McEstimate mc = mc_shade_point(s, tilt(s.normal, 0.4, 0.0), m, env, 1000, 1);
    CHECK(mc.mean == Vec3{0, 0, 0});
    CHECK(mc.std_error == Vec3{0, 0, 0});
}

TEST_CASE("pure diffuse shading matches hand-composed lobe integrals") {
    std::mt19937_64 rng(12);
    const Vec3 n = oracle::random_unit(rng);
    const SurfaceSample s = sample_at(n);
    const SphericalGaussian light(tilt(n, 0.5, 1.0), 3.0, Vec3{1.0, 2.0, 0.5});
    const MaterialValues m{Vec3{0.6, 0.4, 0.2}, 40.0, Vec3{0, 0, 0}};
    const Vec3 got = shade_point_sg(s, tilt(n, 0.3, 2.0), m, SGMixture({light})).radiance;
    const CosineLobe c = cosine_sg(n);
    const Vec3 expect = m.albedo / kPi * (sg_inner_product(light, c.lobe) + sg_integral(light) * c.offset);
    for (int ch = 0; ch < 3; ++ch) CHECK(got[ch] == doctest::Approx(expect[ch]).epsilon(1e-12));
}

TEST_CASE("specular shading matches hand-composed lobe integrals") {
    std::mt19937_64 rng(14);
    const Vec3 n = oracle::random_unit(rng);
    const SurfaceSample s = sample_at(n);
    const Vec3 wo = tilt(n, 0.6, 0.4);
    const SphericalGaussian light(tilt(n, 0.4, 3.5), 6.0, Vec3{1.0, 0.5, 2.0});
    const MaterialValues m{Vec3{0, 0, 0}, 60.0, Vec3{0.3, 0.5, 0.7}};
    const Vec3 got = shade_point_sg(s, wo, m, SGMixture({light})).radiance;
    const SphericalGaussian lit = sg_product(light, specular_sg(wo, s, m.sharpness, m.specular));
    const CosineLobe c = cosine_sg(n);
    const Vec3 expect = sg_inner_product(lit, c.lobe) + sg_integral(lit) * c.offset;
    for (int ch = 0; ch < 3; ++ch) CHECK(got[ch] == doctest::Approx(expect[ch]).epsilon(1e-10));
}

TEST_CASE("shading rejects back-facing views") {
    const SurfaceSample s = sample_at({0, 0, 1});
    const MaterialValues m{Vec3{0.5, 0.5, 0.5}, 30.0, Vec3{0.1, 0.1, 0.1}};
    const SGMixture env({SphericalGaussian({0, 0, 1}, 2.0, 1.0)});
    CHECK_THROWS_AS(shade_point_sg(s, {0, 0, -1}, m, env), Error);
}

TEST_CASE("clamped radiance is counted") {
    // A sharp light just below the horizon makes the cosine lobe negative.
    const SurfaceSample s = sample_at({0, 0, 1});
    const MaterialValues m{Vec3{0.5, 0.5, 0.5}, 30.0, Vec3{0, 0, 0}};
    const SGMixture env({SphericalGaussian(normalize(Vec3{1, 0, -0.2}), 200.0, 1.0)});
    const ShadeResult r = shade_point_sg(s, {0, 0, 1}, m, env);
    CHECK(r.radiance == Vec3{0, 0, 0});
    CHECK(r.clamped_channels == 3);
}

TEST_CASE("white furnace: Monte-Carlo diffuse converges to albedo times radiance") {
    const SurfaceSample s = sample_at(normalize(Vec3{0.2, 1.0, -0.3}));
    const MaterialValues m{Vec3{0.8, 0.5, 0.25}, 30.0, Vec3{0, 0, 0}};
    // A nearly flat lobe is constant to within 2e-6 over the sphere.
    const SGMixture env({SphericalGaussian({0, 1, 0}, 1e-6, Vec3{2.0, 2.0, 2.0})});
    const McEstimate mc = mc_shade_point(s, s.normal, m, env, 20000, 99);
    for (int c = 0; c < 3; ++c) {
        const double expect = m.albedo[c] * 2.0;
        CHECK(std::abs(mc.mean[c] - expect) <= 3 * mc.std_error[c] + 1e-5);
        CHECK(mc.mean[c] <= expect * (1 + 1e-5) + 3 * mc.std_error[c]);
    }
}

TEST_CASE("Monte-Carlo variance halves when samples double") {
    std::mt19937_64 rng(21);
    const Vec3 n{0, 1, 0};
    const SurfaceSample s = sample_at(n);
    const MaterialValues m{Vec3{0.5, 0.5, 0.5}, 40.0, Vec3{0.3, 0.3, 0.3}};
    const auto env = random_env(rng, 6);
    // Empirical variance of the mean over repeated runs.
    auto spread = [&](int samples) {
        std::vector<double> means;
        for (int r = 0; r < 400; ++r) means.push_back(mc_shade_point(s, tilt(n, 0.5, 0), m, *env, samples, 1000 + r).mean.y);
        double mean = 0;
        for (double v : means) mean += v;
        mean /= means.size();
        double var = 0;
        for (double v : means) var += (v - mean) * (v - mean);
        return var / (means.size() - 1);
    };
    const double ratio = spread(200) / spread(400);
    CHECK(ratio > 2.0 * 0.8);
    CHECK(ratio < 2.0 * 1.2);
}

TEST_CASE("shading gradient matches central finite differences") {
    std::mt19937_64 rng(31);
    const Vec3 n = oracle::random_unit(rng);
    const SurfaceSample s = sample_at(n);
    const Vec3 wo = tilt(n, 0.5, 0.7);
    std::vector<SphericalGaussian> lobes = {SphericalGaussian(tilt(n, 0.3, 1.0), 4.0, Vec3{1.0, 0.8, 0.6}),
                                            SphericalGaussian(tilt(n, 1.0, 2.5), 12.0, Vec3{0.4, 0.9, 1.2}),
                                            SphericalGaussian(tilt(wo, 0.2, 0.1), 25.0, Vec3{0.7, 0.2, 0.5})};
    const MaterialValues m{Vec3{0.6, 0.3, 0.45}, 35.0, Vec3{0.25, 0.5, 0.4}};
    const Vec3 up{0.7, -0.4, 1.1};
    ShadeGradient grad;
    const ShadeResult base = shade_point_sg_grad(s, wo, m, SGMixture(lobes), up, grad);
    REQUIRE(base.clamped_channels == 0);

    auto objective = [&](const MaterialValues& mm, const std::vector<SphericalGaussian>& ll) {
        return dot(up, shade_point_sg(s, wo, mm, SGMixture(ll)).radiance);
    };
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1e-8, std::max(std::abs(a), std::abs(b))); };
    const double h = 1e-6;
    double worst = 0;
    for (int c = 0; c < 3; ++c) {
        MaterialValues p = m, q = m;
        p.albedo[c] += h;
        q.albedo[c] -= h;
        worst = std::max(worst, rel(grad.d_albedo[c], (objective(p, lobes) - objective(q, lobes)) / (2 * h)));
        p = m;
        q = m;
        p.specular[c] += h;
        q.specular[c] -= h;
        worst = std::max(worst, rel(grad.d_specular[c], (objective(p, lobes) - objective(q, lobes)) / (2 * h)));
    }
    {
        MaterialValues p = m, q = m;
        p.sharpness += 1e-4;
        q.sharpness -= 1e-4;
        worst = std::max(worst, rel(grad.d_sharpness, (objective(p, lobes) - objective(q, lobes)) / 2e-4));
    }
    for (size_t k = 0; k < lobes.size(); ++k) {
        const auto& l = lobes[k];
        auto with = [&](const SphericalGaussian& g) {
            auto copy = lobes;
            copy[k] = g;
            return objective(m, copy);
        };
        const double fd_l = (with(SphericalGaussian(l.axis(), l.sharpness() + 1e-5, l.amplitude())) -
                             with(SphericalGaussian(l.axis(), l.sharpness() - 1e-5, l.amplitude()))) /
                            2e-5;
        worst = std::max(worst, rel(grad.d_lobe_sharpness[k], fd_l));
        for (int c = 0; c < 3; ++c) {
            Vec3 ap = l.amplitude(), am = l.amplitude();
            ap[c] += h;
            am[c] -= h;
            const double fd = (with(SphericalGaussian(l.axis(), l.sharpness(), ap)) -
                               with(SphericalGaussian(l.axis(), l.sharpness(), am))) /
                              (2 * h);
            worst = std::max(worst, rel(grad.d_lobe_amplitude[k][c], fd));
        }
        // Tangential axis directions: renormalization is second order there.
        Vec3 t, b;
        make_frame(l.axis(), t, b);
        for (const Vec3& dir : {t, b}) {
            const double fd = (with(SphericalGaussian(normalize(l.axis() + dir * h), l.sharpness(), l.amplitude())) -
                               with(SphericalGaussian(normalize(l.axis() - dir * h), l.sharpness(), l.amplitude()))) /
                              (2 * h);
            worst = std::max(worst, rel(dot(grad.d_lobe_axis[k], dir), fd));
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("soft texture render is linear in the texture") {
    Scene scene(make_uv_sphere(1.0, 24, 12), flat_material({0.5, 0.5, 0.5}), nullptr);
    const GBuffer g = trace_gbuffer(scene, Camera::orbit({0, 0, 0}, 4, 10, 10, 40, 24, 24));
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image a(16, 8, 1), b(16, 8, 1), sum(16, 8, 1);
    for (size_t i = 0; i < a.values().size(); ++i) {
        a.values()[i] = u(rng);
        b.values()[i] = u(rng);
        sum.values()[i] = a.values()[i] + b.values()[i];
    }
    const Image ra = render_texture(g, a), rb = render_texture(g, b), rs = render_texture(g, sum);
    for (size_t i = 0; i < rs.values().size(); ++i)
        CHECK(rs.values()[i] == doctest::Approx(ra.values()[i] + rb.values()[i]).epsilon(1e-12));
}
