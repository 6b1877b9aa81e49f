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

// Synthetic sphere scenes generated by the forward model.

#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "core/optimize.hpp"
#include "core/render.hpp"
#include "core/semantics.hpp"

namespace matedit::synth {

/// Sphere material split into longitudinal sectors, one semantic label per
/// sector (sector i covers u in [i/n, (i+1)/n)).
MaterialModel sector_material(int width, int height, const std::vector<Vec3>& albedo,
                              const std::vector<double>& sharpness, const std::vector<Vec3>& specular);

/// Label map for one view: ground-truth ids from the G-buffer. The library
/// is `library` when given, else the view's own region colors.
SemanticLabelMap view_label_map(const GBuffer& g, const Image& image, int label_count,
                                const std::vector<Feature>* library = nullptr);

/// Ring of orbit cameras alternating above and below the equator. The first
/// camera looks down from 60 degrees so that it sees every sector.
std::vector<Camera> ring_cameras(int count, double distance, int width, int height, double yaw0 = -90.0);

/// Renders observations of `scene`; view 0 is the reference and carries the
/// albedo render and a label map.
std::vector<Observation> synth_observations(const Scene& scene, const std::vector<Camera>& cams,
                                            bool reference_albedo, bool label_maps_everywhere);

/// Three-label sphere lit from above, observed from eight views.
struct SelfReconstruction {
    std::shared_ptr<Scene> truth;
    std::shared_ptr<Scene> initial;  // flat grey albedo, mid roughness and specular
    std::vector<Camera> cameras;
    std::vector<Observation> views;
    FitConfig config;
};

SelfReconstruction self_reconstruction(int view_pixels = 48, int iterations = 4000);

/// Writes scene.json (initial state), truth/scene.json, observations/ and
/// fit.json under `dir`.
void write_self_reconstruction(const std::filesystem::path& dir, const SelfReconstruction& f);

}  // namespace matedit::synth
