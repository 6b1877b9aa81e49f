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

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/render.hpp"

namespace matedit {

nlohmann::json camera_to_json(const Camera& camera);
/// Accepts either explicit {"position", "look_at", "up", "fov_deg", "width",
/// "height"} or {"orbit": {"yaw", "pitch", "distance", "target"}, ...}.
Camera camera_from_json(const nlohmann::json& j);

/// Scene description file:
/// {"mesh": "mesh.obj", "material": "material", "environment": "env.sgmix",
///  "cameras": [{...}, ...]} with paths relative to the file.
struct SceneBundle {
    std::filesystem::path root;
    std::shared_ptr<Scene> scene;
    std::vector<Camera> presets;
};

SceneBundle load_scene_bundle(const std::filesystem::path& scene_json);
void save_scene_bundle(const std::filesystem::path& scene_json, const Scene& scene, const std::vector<Camera>& presets);

/// Orbit camera framing the scene's bounding sphere.
Camera framing_camera(const Scene& scene, double yaw_deg, double pitch_deg, int width, int height,
                      double fov_deg = 40.0);

nlohmann::json parse_json_text(const std::string& text, const char* what);

}  // namespace matedit
