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

#include "core/scene_io.hpp"

#include <cmath>

namespace matedit {

namespace {

Vec3 vec3_from(const nlohmann::json& j, const char* key) {
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 3) fail(ErrorCode::InvalidArgument, std::string("'") + key + "' must be [x, y, z]");
    return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

nlohmann::json vec3_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

}  // namespace

nlohmann::json parse_json_text(const std::string& text, const char* what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string(what) + ": " + e.what());
    }
}

nlohmann::json camera_to_json(const Camera& c) {
    return {{"position", vec3_json(c.position)},
            {"look_at", vec3_json(c.look_at)},
            {"up", vec3_json(c.up)},
            {"fov_deg", c.fov_deg},
            {"width", c.width},
            {"height", c.height}};
}

Camera camera_from_json(const nlohmann::json& j) {
    try {
        Camera c;
        c.fov_deg = j.value("fov_deg", c.fov_deg);
        c.width = j.value("width", c.width);
        c.height = j.value("height", c.height);
        if (j.contains("orbit")) {
            const auto& o = j["orbit"];
            const Vec3 target = o.contains("target") ? vec3_from(o, "target") : Vec3{};
            c = Camera::orbit(target, o.value("distance", 3.0), o.value("yaw", 0.0), o.value("pitch", 0.0), c.fov_deg,
                              c.width, c.height);
        } else {
            c.position = vec3_from(j, "position");
            c.look_at = vec3_from(j, "look_at");
            if (j.contains("up")) c.up = vec3_from(j, "up");
        }
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("camera: ") + e.what());
    }
}

SceneBundle load_scene_bundle(const std::filesystem::path& scene_json) {
    const auto j = parse_json_text(read_file(scene_json), "scene file");
    SceneBundle b;
    b.root = scene_json.parent_path();
    try {
        TriangleMesh mesh = load_obj(b.root / j.at("mesh").get<std::string>());
        std::shared_ptr<const MaterialModel> material;
        if (j.contains("material"))
            material = std::make_shared<const MaterialModel>(load_material(b.root / j["material"].get<std::string>()));
        std::shared_ptr<const SGMixture> env;
        if (j.contains("environment"))
            env = std::make_shared<const SGMixture>(load_sgmix(b.root / j["environment"].get<std::string>()));
        b.scene = std::make_shared<Scene>(std::move(mesh), material, env);
        if (j.contains("cameras"))
            for (const auto& c : j["cameras"]) b.presets.push_back(camera_from_json(c));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("scene file: ") + e.what());
    }
    return b;
}

void save_scene_bundle(const std::filesystem::path& scene_json, const Scene& scene, const std::vector<Camera>& presets) {
    const auto root = scene_json.parent_path();
    if (!root.empty()) std::filesystem::create_directories(root);
    nlohmann::json j;
    j["mesh"] = "mesh.obj";
    save_obj(root / "mesh.obj", scene.mesh());
    if (scene.material()) {
        j["material"] = "material";
        save_material(root / "material", *scene.material());
    }
    if (scene.environment()) {
        j["environment"] = "env.sgmix";
        save_sgmix(root / "env.sgmix", *scene.environment());
    }
    j["cameras"] = nlohmann::json::array();
    for (const auto& c : presets) j["cameras"].push_back(camera_to_json(c));
    write_file(scene_json, j.dump(2) + "\n");
}

Camera framing_camera(const Scene& scene, double yaw_deg, double pitch_deg, int width, int height, double fov_deg) {
    const double half = 0.5 * fov_deg * kPi / 180.0;
    const double distance = 1.15 * scene.radius() / std::sin(half);
    return Camera::orbit(scene.center(), distance, yaw_deg, pitch_deg, fov_deg, width, height);
}

}  // namespace matedit
