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

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "core/optimize.hpp"
#include "core/texture.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace matedit;

namespace {

// Blur-then-mean written as explicit 2D kernels per pixel.
double la_direct(const Image& a, const LabelImage& labels, const std::vector<Vec3>& lib, double sigma) {
    const int r = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
    double loss = 0;
    for (size_t l = 0; l < lib.size(); ++l) {
        Vec3 mean;
        int count = 0;
        for (int y = 0; y < a.height(); ++y)
            for (int x = 0; x < a.width(); ++x) {
                if (labels.at(x, y) != l) continue;
                Vec3 num;
                double den = 0;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        const int xx = x + dx, yy = y + dy;
                        if (xx < 0 || yy < 0 || xx >= a.width() || yy >= a.height()) continue;
                        if (labels.at(xx, yy) != l) continue;
                        const double g = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
                        num += rgb_at(a, xx, yy) * g;
                        den += g;
                    }
                mean += num / den;
                ++count;
            }
        const Vec3 d = mean / count - lib[l];
        loss += dot(d, d);
    }
    return loss;
}

struct RandomLabels {
    Image albedo;
    LabelImage labels;
    AlbedoLibrary lib;
};

RandomLabels random_label_problem(std::mt19937_64& rng, int w, int h, int n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RandomLabels p;
    p.albedo = Image(w, h, 3);
    for (double& v : p.albedo.values()) v = u(rng);
    p.labels = LabelImage(w, h);
    // Random seeds, nearest-seed regions, a few unlabeled pixels.
    std::vector<std::pair<double, double>> seeds;
    for (int i = 0; i < n; ++i) seeds.emplace_back(u(rng) * w, u(rng) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int best = 0;
            double bd = 1e30;
            for (int i = 0; i < n; ++i) {
                const double d = std::hypot(x - seeds[i].first, y - seeds[i].second);
                if (d < bd) bd = d, best = i;
            }
            p.labels.at(x, y) = u(rng) < 0.1 ? kUnlabeled : static_cast<std::uint16_t>(best);
        }
    for (int i = 0; i < n; ++i) p.lib.entries.push_back({u(rng), u(rng), u(rng)});
    for (int i = 0; i < n; ++i) {
        p.labels.at(static_cast<int>(seeds[i].first), static_cast<int>(seeds[i].second)) = static_cast<std::uint16_t>(i);
    }
    return p;
}

struct SmallScene {
    std::shared_ptr<Scene> scene;
    std::vector<Observation> views;
};

SmallScene small_scene(int px) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MaterialModel m = fixture::sector_material(8, 4, {{0.7, 0.3, 0.2}, {0.2, 0.6, 0.3}},
                                               {20.0, 40.0}, {{0.3, 0.3, 0.3}, {0.5, 0.4, 0.4}});
    for (double& v : m.albedo.values()) v = 0.2 + 0.6 * u(rng);
    for (double& v : m.roughness_offset.values()) v = 0.2 * (u(rng) - 0.5);
    for (double& v : m.specular_offset.values()) v = 0.1 * (u(rng) - 0.5);
    std::vector<SphericalGaussian> lobes = {{normalize(Vec3{0.3, 0.8, 0.5}), 6.0, {1.5, 1.2, 1.0}},
                                            {normalize(Vec3{-0.6, 0.2, 0.7}), 3.0, {0.4, 0.5, 0.7}}};
    auto scene = std::make_shared<Scene>(make_uv_sphere(1.0, 24, 12), std::make_shared<const MaterialModel>(m),
                                         std::make_shared<const SGMixture>(lobes));
    SmallScene s{scene, {}};
    // Observations from a perturbed truth so residuals are non-zero.
    MaterialModel truth = m;
    for (double& v : truth.albedo.values()) v = std::clamp(v + 0.1 * (u(rng) - 0.5), 0.0, 1.0);
    Scene truth_scene(make_uv_sphere(1.0, 24, 12), std::make_shared<const MaterialModel>(truth),
                      std::make_shared<const SGMixture>(lobes));
    const std::vector<Camera> cams = {Camera::orbit({0, 0, 0}, 2.4, 90, 10, 40, px, px),
                                      Camera::orbit({0, 0, 0}, 2.4, 230, -15, 40, px, px)};
    s.views = fixture::synth_observations(truth_scene, cams, true, false);
    return s;
}

double group_norm(const FitParameters& g) {
    double s = 0;
    for (auto grp : FitParameters::kGroups)
        for (double v : g.group(grp)) s += v * v;
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("L_a examples") {
    LabelImage labels(4, 3, 1, 0);
    Image a(4, 3, 3);
    AlbedoLibrary lib;
    lib.entries = {{0, 0, 0}};
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x) set_rgb(a, x, y, {0.3, 0, 0});
    CHECK(albedo_regularization(a, labels, lib, 3.0) == doctest::Approx(0.09).epsilon(1e-12));

    for (int x = 2; x < 4; ++x)
        for (int y = 0; y < 3; ++y) labels.at(x, y) = 1;
    lib.entries = {{0.3, 0, 0}, {0.3, 0, 0}};
    CHECK(albedo_regularization(a, labels, lib, 3.0) < 1e-24);
    CHECK(albedo_regularization(a, labels, lib, 3.0, nullptr, AlbedoRegMode::RegionMean) < 1e-24);
}

TEST_CASE("L_a matches explicit per-pixel Gaussian kernels") {
    std::mt19937_64 rng(3);
    double worst = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const double sigma = 0.7 + 0.3 * trial;
        RandomLabels p = random_label_problem(rng, 17, 13, 1 + trial % 4);
        const double got = albedo_regularization(p.albedo, p.labels, p.lib, sigma);
        const double want = la_direct(p.albedo, p.labels, p.lib.entries, sigma);
        worst = std::max(worst, std::abs(got - want) / std::max(want, 1e-12));
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("L_a gradient against finite differences") {
    std::mt19937_64 rng(4);
    for (auto mode : {AlbedoRegMode::BlurThenMean, AlbedoRegMode::RegionMean}) {
        RandomLabels p = random_label_problem(rng, 9, 7, 3);
        LossFunction f = [&](std::span<const double> x, std::vector<double>* g) {
            Image a = p.albedo;
            std::copy(x.begin(), x.end(), a.values().begin());
            Image grad;
            const double v = albedo_regularization(a, p.labels, p.lib, 1.5, g ? &grad : nullptr, mode);
            if (g) g->assign(grad.values().begin(), grad.values().end());
            return v;
        };
        std::vector<size_t> coords(p.albedo.values().size());
        std::iota(coords.begin(), coords.end(), 0);
        const std::vector<double> x(p.albedo.values().begin(), p.albedo.values().end());
        CHECK(gradient_check(f, x, coords, 1e-5) < 1e-6);
    }
}

TEST_CASE("L_a empty region") {
    LabelImage labels(3, 3, 1, 0);
    AlbedoLibrary lib;
    lib.entries = {{0, 0, 0}, {1, 1, 1}};
    const Image a(3, 3, 3);
    CHECK_THROWS_AS(albedo_regularization(a, labels, lib, 1.0), Error);
    CHECK(albedo_regularization(a, labels, lib, 1.0, nullptr, AlbedoRegMode::BlurThenMean, false) == 0.0);
    CHECK_THROWS_AS(albedo_regularization(Image(2, 3, 3), labels, lib, 1.0), Error);
}

TEST_CASE("albedo library EMA") {
    LabelImage labels(2, 1, 1, 0);
    labels.at(1, 0) = 1;
    Image ref(2, 1, 3);
    set_rgb(ref, 0, 0, {1, 1, 1});
    set_rgb(ref, 1, 0, {0.2, 0.4, 0.6});
    AlbedoLibrary lib;
    lib.entries = {{0.5, 0.5, 0.5}, {0.2, 0.4, 0.6}};
    lib.ema_decay = 0.9;
    const AlbedoLibrary next = update_albedo_library(lib, ref, labels);
    CHECK(next.entries[0].x == doctest::Approx(0.55).epsilon(1e-15));
    CHECK(next.entries[1] == lib.entries[1]);

    lib.ema_decay = 0;
    CHECK(update_albedo_library(lib, ref, labels).entries[0] == Vec3{1, 1, 1});

    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0;
    for (int i = 0; i < 200; ++i) {
        lib.ema_decay = u(rng);
        lib.entries = {{u(rng), u(rng), u(rng)}, {u(rng), u(rng), u(rng)}};
        set_rgb(ref, 0, 0, {u(rng), u(rng), u(rng)});
        const AlbedoLibrary n = update_albedo_library(lib, ref, labels);
        for (int c = 0; c < 3; ++c) {
            const double before = lib.entries[0][c] - rgb_at(ref, 0, 0)[c];
            const double after = n.entries[0][c] - rgb_at(ref, 0, 0)[c];
            worst = std::max(worst, std::abs(std::abs(after) - lib.ema_decay * std::abs(before)));
        }
    }
    CHECK(worst < 1e-15);

    LabelImage missing(2, 1, 1, 0);
    CHECK_THROWS_AS(update_albedo_library(lib, ref, missing), Error);
}

TEST_CASE("gradient_check on a quadratic") {
    LossFunction f = [](std::span<const double> x, std::vector<double>* g) {
        double v = 0;
        if (g) g->assign(x.size(), 0.0);
        for (size_t i = 0; i < x.size(); ++i) {
            v += (i + 1.0) * x[i] * x[i] + x[i];
            if (g) (*g)[i] = 2 * (i + 1.0) * x[i] + 1;
        }
        return v;
    };
    CHECK(gradient_check(f, {0.3, -1.2, 2.0, 0.01}, {0, 1, 2, 3}, 1e-4) < 1e-7);
}

TEST_CASE("fit gradients for every parameter group") {
    SmallScene s = small_scene(6);
    FitConfig cfg;
    cfg.sigma_gauss = 1.0;
    FitProblem problem(*s.scene, s.views, cfg);
    REQUIRE(problem.has_albedo_regularizer());
    const FitParameters p = FitParameters::from(*s.scene->material(), *s.scene->environment());
    for (auto g : FitParameters::kGroups) {
        CAPTURE(group_name(g));
        CHECK(gradient_check(problem, p, g, 1e-4) < 1e-3);
    }
}

TEST_CASE("fit gradients on a larger view, blur and region-mean regularizers") {
    SmallScene s = small_scene(12);
    for (auto mode : {AlbedoRegMode::BlurThenMean, AlbedoRegMode::RegionMean}) {
        FitConfig cfg;
        cfg.albedo_reg_mode = mode;
        cfg.w_off = 0.5;
        FitProblem problem(*s.scene, s.views, cfg);
        const FitParameters p = FitParameters::from(*s.scene->material(), *s.scene->environment());
        for (auto g : FitParameters::kGroups) {
            CAPTURE(group_name(g));
            CHECK(gradient_check(problem, p, g, 1e-5, 24) < 1e-3);
        }
    }
}

TEST_CASE("observations rendered by the current parameters are a stationary point") {
    SmallScene s = small_scene(16);
    const std::vector<Camera> cams = fixture::ring_cameras(3, 3.0, 16, 16);
    const auto views = fixture::synth_observations(*s.scene, cams, false, false);
    FitConfig cfg;
    cfg.w_a = cfg.w_ref = cfg.w_off = 0;
    FitProblem problem(*s.scene, views, cfg);
    FitParameters grad;
    const FitParameters p = FitParameters::from(*s.scene->material(), *s.scene->environment());
    const LossBreakdown loss = problem.evaluate(p, &grad);
    CHECK(loss.total < 1e-20);
    CHECK(group_norm(grad) < 1e-6);
}

TEST_CASE("regularizer-dominated albedo follows the library") {
    // Observations come from albedo shifted by 0.1; the library (pinned by a
    // constant reference albedo) sits at the unshifted band colors.
    const std::vector<Vec3> bands = {{0.6, 0.3, 0.2}, {0.25, 0.5, 0.35}};
    const MaterialModel start = fixture::sector_material(16, 8, bands, {30, 30}, {{0.2, 0.2, 0.2}, {0.2, 0.2, 0.2}});
    MaterialModel shifted = start;
    for (double& v : shifted.albedo.values()) v += 0.1;
    auto env = std::make_shared<const SGMixture>(
        std::vector<SphericalGaussian>{{normalize(Vec3{0.2, 1, 0.4}), 2.0, {1.5, 1.5, 1.5}}});
    const std::vector<Camera> cams = fixture::ring_cameras(2, 3.0, 24, 24);
    Scene truth(make_uv_sphere(1, 32, 16), std::make_shared<const MaterialModel>(shifted), env);
    Scene init(make_uv_sphere(1, 32, 16), std::make_shared<const MaterialModel>(start), env);
    auto views = fixture::synth_observations(truth, cams, true, true);
    views[0].reference_albedo = render(init, cams[0], RenderMode::Albedo).pixels;

    FitConfig cfg;
    cfg.iterations = 300;
    cfg.w_a = 10;
    cfg.w_ref = 0;
    cfg.lr_env = cfg.lr_tables = cfg.lr_offsets = 0;
    cfg.lr_albedo = 1e-2;
    const FitResult r = fit(init, views, cfg);
    Scene fitted(make_uv_sphere(1, 32, 16), std::make_shared<const MaterialModel>(r.material), env);
    const Image albedo = render(fitted, cams[0], RenderMode::Albedo).pixels;
    const auto avg = region_average(albedo, views[0].label_map->labels, 2);
    const auto lib = region_average(*views[0].reference_albedo, views[0].label_map->labels, 2);
    for (int l = 0; l < 2; ++l)
        for (int c = 0; c < 3; ++c) {
            CHECK(std::abs(r.library.entries[l][c] - lib[l][c]) < 1e-9);
            CHECK(std::abs(avg[l][c] - lib[l][c]) < 0.02);
        }
}

TEST_CASE("fit trace, divergence and config") {
    SmallScene s = small_scene(8);
    FitConfig cfg;
    cfg.iterations = 5;
    std::vector<int> seen;
    cfg.log_every = 2;
    const FitResult r = fit(*s.scene, s.views, cfg, [&](const LossRecord& rec) { seen.push_back(rec.iteration); });
    CHECK(r.trace.size() == 6);
    CHECK(seen == std::vector<int>{0, 2, 4, 5});
    const std::string csv = loss_trace_csv(r.trace);
    CHECK(csv.rfind("iter,data,L_a,ref,offset,total\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);

    auto broken = s.views;
    broken[1].image.values()[broken[1].image.values().size() / 2 + 1] = std::nan("");
    try {
        fit(*s.scene, broken, cfg);
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Divergence);
        CHECK(std::string(e.what()).find("iteration 0") != std::string::npos);
    }

    auto no_ref = s.views;
    for (auto& v : no_ref) v.reference = false;
    CHECK_THROWS_AS(FitProblem(*s.scene, no_ref, cfg), Error);

    cfg.w_a = 0.25;
    cfg.albedo_reg_mode = AlbedoRegMode::RegionMean;
    const FitConfig back = FitConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
    CHECK(FitConfig::from_json("{}").to_json() == FitConfig{}.to_json());
    CHECK_THROWS_AS(FitConfig::from_json("{\"w_a\": -1}"), Error);
    CHECK_THROWS_AS(FitConfig::from_json("{\"sigma_gauss\": 0}"), Error);
    CHECK_THROWS_AS(FitConfig::from_json("{\"bogus\": 1}"), Error);
    CHECK_THROWS_AS(FitConfig::from_json("[1"), Error);
}

TEST_CASE("observations round trip on disk") {
    SmallScene s = small_scene(6);
    const auto dir = std::filesystem::temp_directory_path() / "matedit_test_obs";
    std::filesystem::remove_all(dir);
    save_observations(dir, s.views);
    const auto back = load_observations(dir);
    REQUIRE(back.size() == s.views.size());
    for (size_t v = 0; v < back.size(); ++v) {
        double worst = 0;
        for (size_t i = 0; i < back[v].image.values().size(); ++i)
            worst = std::max(worst, std::abs(back[v].image.values()[i] - s.views[v].image.values()[i]));
        CHECK(worst < 1e-6);  // float32 container
        CHECK(back[v].reference == s.views[v].reference);
        CHECK(back[v].camera.position == s.views[v].camera.position);
        CHECK(back[v].reference_albedo.has_value() == s.views[v].reference_albedo.has_value());
        CHECK(back[v].label_map.has_value() == s.views[v].label_map.has_value());
    }
    CHECK(back[0].label_map->labels == s.views[0].label_map->labels);
    std::filesystem::remove_all(dir);
}

TEST_CASE("environment map fitting") {
    SUBCASE("four-lobe round trip") {
        const SGMixture truth(std::vector<SphericalGaussian>{{normalize(Vec3{0, 1, 0.2}), 8.0, {2.0, 1.8, 1.5}},
                                                              {normalize(Vec3{1, -0.2, 0.3}), 20.0, {1.0, 0.3, 0.2}},
                                                              {normalize(Vec3{-0.5, 0.1, -1}), 4.0, {0.2, 0.4, 0.9}},
                                                              {normalize(Vec3{0.1, -1, -0.2}), 2.0, {0.3, 0.3, 0.3}}});
        const EnvFitResult r = fit_env_map(rasterize_latlong(truth, 128, 64), 4, 200);
        CHECK(r.residual_rms < 0.01 * r.mean_radiance);
    }
    SUBCASE("constant white") {
        Image white(64, 32, 3, 1.0);
        const EnvFitResult r = fit_env_map(white, 1);
        double mean = 0, total = 0;
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 128; ++x) {
                const double om = latlong_solid_angle(y, 128, 64);
                mean += om * eval_mixture(r.environment, latlong_direction(x, y, 128, 64)).y;
                total += om;
            }
        CHECK(std::abs(mean / total - 1.0) < 0.02);
        CHECK(r.environment.lobes()[0].sharpness() < 0.1);
    }
    SUBCASE("black") {
        const EnvFitResult r = fit_env_map(Image(32, 16, 3), 6);
        for (const auto& l : r.environment.lobes()) CHECK(max_component(l.amplitude()) < 1e-6);
        CHECK(r.residual_rms < 1e-12);
    }
    CHECK_THROWS_AS(fit_env_map(Image(32, 16, 3), 0), Error);
}
