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

#include "core/synth.hpp"

#include <fstream>

#include "core/scene_io.hpp"

namespace matedit::synth {

MaterialModel sector_material(int width, int height, const std::vector<Vec3>& albedo,
                              const std::vector<double>& sharpness, const std::vector<Vec3>& specular) {
    const int n = static_cast<int>(albedo.size());
    require(n >= 1 && sharpness.size() == albedo.size() && specular.size() == albedo.size(),
            "sector_material needs one albedo, sharpness and specular per sector");
    MaterialModel m = MaterialModel::uniform(width, height, {0, 0, 0}, SemanticMaterialTable(n, 1.0, {0, 0, 0}));
    for (int l = 0; l < n; ++l) {
        m.table.log_sharpness[l] = std::log(sharpness[l]);
        m.table.specular[l] = specular[l];
    }
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const int l = std::min(n - 1, x * n / width);
            m.label_atlas.at(x, y) = static_cast<std::uint16_t>(l);
            set_rgb(m.albedo, x, y, albedo[l]);
        }
    return m;
}

SemanticLabelMap view_label_map(const GBuffer& g, const Image& image, int label_count,
                                const std::vector<Feature>* library) {
    SemanticLabelMap map;
    map.label_count = label_count;
    map.labels = LabelImage(g.width, g.height, 1, kUnlabeled);
    map.areas.assign(label_count, 0);
    for (size_t i = 0; i < g.samples.size(); ++i)
        if (g.coverage[i]) {
            map.labels[i] = g.samples[i].label;
            ++map.areas[g.samples[i].label];
        }
    if (library) {
        map.library = *library;
        return map;
    }
    const auto avg = region_average(image, map.labels, label_count);
    for (const auto& a : avg) map.library.push_back(color_feature({a[0], a[1], a[2]}));
    return map;
}

std::vector<Camera> ring_cameras(int count, double distance, int width, int height, double yaw0) {
    std::vector<Camera> cams;
    for (int k = 0; k < count; ++k) {
        const double pitch = k == 0 ? 60.0 : (k % 2 ? -25.0 : 25.0);
        cams.push_back(Camera::orbit({0, 0, 0}, distance, yaw0 + 360.0 * k / count, pitch, 40, width, height));
    }
    return cams;
}

std::vector<Observation> synth_observations(const Scene& scene, const std::vector<Camera>& cams,
                                            bool reference_albedo, bool label_maps_everywhere) {
    std::vector<Observation> out;
    for (size_t v = 0; v < cams.size(); ++v) {
        Observation o;
        o.camera = cams[v];
        o.image = render(scene, cams[v], RenderMode::Shaded).pixels;
        o.reference = v == 0;
        if (v == 0 && reference_albedo) o.reference_albedo = render(scene, cams[v], RenderMode::Albedo).pixels;
        if (v == 0 || label_maps_everywhere)
            o.label_map = view_label_map(trace_gbuffer(scene, cams[v]), o.image, scene.material()->table.size(),
                                         v == 0 ? nullptr : &out.front().label_map->library);
        out.push_back(std::move(o));
    }
    return out;
}

SelfReconstruction self_reconstruction(int view_pixels, int iterations) {
    require(view_pixels >= 8, "view_pixels must be >= 8");
    const std::vector<Vec3> albedo = {{0.8, 0.3, 0.2}, {0.25, 0.6, 0.3}, {0.3, 0.35, 0.75}};
    const std::vector<double> sharpness = {20, 40, 80};
    const std::vector<Vec3> specular = {{0.2, 0.2, 0.2}, {0.5, 0.5, 0.5}, {0.8, 0.8, 0.8}};
    auto env = std::make_shared<const SGMixture>(
        std::vector<SphericalGaussian>{{Vec3{0, 1, 0}, 1.0, {0.8, 0.8, 0.8}},
                                       {normalize(Vec3{0.5, 1, 0.3}), 40.0, {4.0, 3.8, 3.4}},
                                       {normalize(Vec3{-0.6, 0.8, 0.5}), 30.0, {2.4, 2.0, 1.8}},
                                       {normalize(Vec3{0.1, 0.6, -0.8}), 20.0, {1.2, 1.4, 1.8}}});
    const auto mesh = make_uv_sphere(1, 48, 24);

    SelfReconstruction f;
    f.truth = std::make_shared<Scene>(
        mesh, std::make_shared<const MaterialModel>(sector_material(128, 64, albedo, sharpness, specular)), env);
    const Vec3 grey{0.5, 0.5, 0.5};
    f.initial = std::make_shared<Scene>(
        mesh, std::make_shared<const MaterialModel>(sector_material(128, 64, {grey, grey, grey}, {30, 30, 30},
                                                                    {grey, grey, grey})),
        env);
    f.cameras = ring_cameras(8, 3.0, view_pixels, view_pixels);
    f.views = synth_observations(*f.truth, f.cameras, true, true);
    f.config.iterations = iterations;
    f.config.warmup_iterations = 200;
    f.config.lr_env = 0;
    f.config.lr_tables = 2.0;
    return f;
}

void write_self_reconstruction(const std::filesystem::path& dir, const SelfReconstruction& f) {
    std::filesystem::create_directories(dir);
    save_scene_bundle(dir / "scene.json", *f.initial, f.cameras);
    std::filesystem::create_directories(dir / "truth");
    save_scene_bundle(dir / "truth" / "scene.json", *f.truth, f.cameras);
    save_observations(dir / "observations", f.views);
    std::ofstream out(dir / "fit.json");
    out << f.config.to_json() << "\n";
    if (!out) fail(ErrorCode::Io, "cannot write " + (dir / "fit.json").string());
}

}  // namespace matedit::synth
