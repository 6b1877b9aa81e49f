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

#include "matedit/matedit.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include <json.hpp>

#include "core/editing.hpp"
#include "core/metrics.hpp"
#include "core/optimize.hpp"
#include "core/scene_io.hpp"
#include "core/semantics.hpp"
#include "core/service.hpp"
#include "core/synth.hpp"

using namespace matedit;
using nlohmann::json;

struct matedit_scene {
    SceneBundle bundle;
};

struct matedit_server {
    std::unique_ptr<SessionService> service;
};

namespace {

thread_local std::string g_last_error;

template <class F>
matedit_status guard(F&& f) {
    try {
        g_last_error.clear();
        f();
        return MATEDIT_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return static_cast<matedit_status>(static_cast<int>(e.code()));
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
    } catch (const std::exception& e) {
        g_last_error = e.what();
    } catch (...) {
        g_last_error = "unknown error";
    }
    return MATEDIT_ERR_RUNTIME;
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void emit(char** out, const json& j) {
    if (out) *out = dup_string(j.dump(2));
}

std::string str(const char* s, const char* what) {
    require(s != nullptr, std::string(what) + " is null");
    return s;
}

// Inline JSON when it starts with '{', otherwise a path to a JSON file.
std::string json_text_or_file(const char* s) {
    std::string text(s);
    size_t i = text.find_first_not_of(" \t\r\n");
    if (i != std::string::npos && text[i] == '{') return text;
    return read_file(text);
}

Camera camera_for(const SceneBundle& b, const std::string& text) {
    const json j = parse_json_text(text, "camera");
    require(j.is_object(), "camera must be a JSON object");
    if (j.contains("preset")) {
        require(j["preset"].is_number_integer(), "'preset' must be an integer");
        const int i = j["preset"].get<int>();
        require(i >= 0 && i < static_cast<int>(b.presets.size()), "camera preset " + std::to_string(i) +
                                                                      " out of range (scene has " +
                                                                      std::to_string(b.presets.size()) + ")");
        return b.presets[i];
    }
    if (j.contains("yaw") || j.contains("pitch")) {
        try {
            return framing_camera(*b.scene, j.value("yaw", 0.0), j.value("pitch", 0.0), j.value("width", 256),
                                  j.value("height", 256), j.value("fov_deg", 40.0));
        } catch (const json::exception& e) {
            fail(ErrorCode::InvalidArgument, std::string("camera: ") + e.what());
        }
    }
    return camera_from_json(j);
}

json loss_json(const LossBreakdown& l) {
    return {{"data", l.data}, {"albedo_reg", l.albedo_reg}, {"reference", l.reference}, {"offset", l.offset},
            {"total", l.total}};
}

PointPromptSet prompts_of(const json& stroke) {
    json p = {{"points", stroke.value("points", json::array())}, {"labels", stroke.value("labels", json::array())}};
    return prompts_from_json(p);
}

}  // namespace

extern "C" {

const char* matedit_version(void) { return "0.1.0"; }

const char* matedit_status_name(matedit_status status) {
    if (status == MATEDIT_OK) return "ok";
    if (status < MATEDIT_ERR_INVALID_ARGUMENT || status > MATEDIT_ERR_RUNTIME) return "unknown";
    return error_code_name(static_cast<ErrorCode>(static_cast<int>(status)));
}

int matedit_status_is_validation(matedit_status status) {
    switch (status) {
        case MATEDIT_ERR_INVALID_ARGUMENT:
        case MATEDIT_ERR_EMPTY_INPUT:
        case MATEDIT_ERR_EMPTY_REGION:
        case MATEDIT_ERR_UNKNOWN_LABEL:
        case MATEDIT_ERR_ZERO_COVERAGE:
        case MATEDIT_ERR_EMPTY_SCENE:
        case MATEDIT_ERR_CONTRACT_VIOLATION:
        case MATEDIT_ERR_RESOLUTION_MISMATCH: return 1;
        default: return 0;
    }
}

const char* matedit_last_error(void) { return g_last_error.c_str(); }

void matedit_string_free(char* s) { std::free(s); }

matedit_status matedit_scene_load(const char* scene_json, matedit_scene** out) {
    return guard([&] {
        require(out != nullptr, "out is null");
        *out = nullptr;
        auto s = std::make_unique<matedit_scene>();
        s->bundle = load_scene_bundle(str(scene_json, "scene_json"));
        *out = s.release();
    });
}

void matedit_scene_free(matedit_scene* scene) { delete scene; }

matedit_status matedit_scene_info(const matedit_scene* scene, char** out_json) {
    return guard([&] {
        require(scene != nullptr, "scene is null");
        const Scene& s = *scene->bundle.scene;
        json j;
        j["vertices"] = s.mesh().positions.size();
        j["triangles"] = s.mesh().triangles.size();
        j["center"] = {s.center().x, s.center().y, s.center().z};
        j["radius"] = s.radius();
        j["labels"] = s.material() ? s.material()->table.size() : 0;
        j["environment_lobes"] = s.environment() ? s.environment()->lobes().size() : 0;
        j["presets"] = scene->bundle.presets.size();
        emit(out_json, j);
    });
}

matedit_status matedit_render(const matedit_scene* scene, const char* camera_json, const char* mode,
                              const char* out_path) {
    return guard([&] {
        require(scene != nullptr, "scene is null");
        const Camera cam = camera_for(scene->bundle, str(camera_json, "camera_json"));
        const RenderMode m = parse_render_mode(mode ? mode : "shaded");
        write_image(str(out_path, "out_path"), render(*scene->bundle.scene, cam, m).pixels);
    });
}

matedit_status matedit_fit(matedit_scene* scene, const char* obs_dir, const char* config_json, const char* out_dir,
                           matedit_progress_fn progress, void* user, char** out_summary_json) {
    return guard([&] {
        require(scene != nullptr, "scene is null");
        const FitConfig cfg = config_json ? FitConfig::from_json(json_text_or_file(config_json)) : FitConfig{};
        const auto views = load_observations(str(obs_dir, "obs_dir"));
        const std::filesystem::path out = str(out_dir, "out_dir");
        Scene& s = *scene->bundle.scene;
        FitProgress cb;
        if (progress)
            cb = [&](const LossRecord& r) { progress(r.iteration, r.loss.data, r.loss.albedo_reg, r.loss.total, user); };
        FitResult r = fit(s, views, cfg, cb);
        s.set_material(std::make_shared<const MaterialModel>(r.material));
        s.set_environment(std::make_shared<const SGMixture>(r.environment));
        std::filesystem::create_directories(out);
        save_scene_bundle(out / "scene.json", s, scene->bundle.presets);
        write_file(out / "loss_trace.csv", loss_trace_csv(r.trace));
        json j;
        j["iterations"] = cfg.iterations;
        j["views"] = views.size();
        j["initial"] = r.trace.empty() ? json() : loss_json(r.trace.front().loss);
        j["final"] = r.trace.empty() ? json() : loss_json(r.trace.back().loss);
        j["labels"] = json::array();
        for (int l = 0; l < r.material.table.size(); ++l) {
            const Vec3 sp = r.material.table.specular[l];
            j["labels"].push_back({{"sharpness", std::exp(r.material.table.log_sharpness[l])},
                                   {"specular", {sp.x, sp.y, sp.z}}});
        }
        write_file(out / "summary.json", j.dump(2) + "\n");
        emit(out_summary_json, j);
    });
}

matedit_status matedit_cluster(const char* manifest, double threshold, const char* out_stem, char** out_summary_json) {
    return guard([&] {
        require(threshold > 0 && threshold <= 1, "threshold must be in (0, 1]");
        const SegmentSet set = load_segment_manifest(str(manifest, "manifest"));
        const SemanticLabelMap map = cluster_segments(set, threshold);
        save_label_map(str(out_stem, "out_stem"), map);
        emit(out_summary_json, {{"segments", set.segments.size()}, {"labels", map.label_count}, {"areas", map.areas}});
    });
}

matedit_status matedit_edit_script(matedit_scene* scene, const char* script_path, const char* out_dir,
                                   char** out_summary_json) {
    return guard([&] {
        require(scene != nullptr, "scene is null");
        const json script = parse_json_text(read_file(str(script_path, "script_path")), "edit script");
        require(script.is_object() && script.contains("strokes") && script["strokes"].is_array() &&
                    !script["strokes"].empty(),
                "edit script needs a non-empty 'strokes' array");
        const std::filesystem::path out = str(out_dir, "out_dir");
        const EditConfig cfg = EditConfig::from_json(script.value("config", json::object()));
        const int w = script.value("width", 256), h = script.value("height", 256);
        const double fov = script.value("fov_deg", 40.0);
        require(w >= 1 && h >= 1, "render size must be positive");

        EditSession session(scene->bundle.scene, cfg);
        std::filesystem::create_directories(out);
        json summary;
        summary["strokes"] = json::array();
        int k = 0;
        for (const auto& stroke : script["strokes"]) {
            require(stroke.is_object(), "each stroke must be an object");
            require(stroke.contains("yaw") && stroke.contains("pitch"), "each stroke needs 'yaw' and 'pitch'");
            const Camera view = framing_camera(*scene->bundle.scene, stroke["yaw"].get<double>(),
                                               stroke["pitch"].get<double>(), w, h, fov);
            const MaskPair sel = session.segment_view(view, prompts_of(stroke));
            const MaskProjection proj = session.project_selection(view, sel);
            json s = {{"L_t", proj.result.loss}, {"iou", proj.iou}, {"selected_pixels", popcount(sel.mask)}};
            if (stroke.contains("tag")) {
                const PaintResult paint = session.paint(view, stroke["tag"].get<std::string>());
                write_image(out / ("stroke_" + std::to_string(k) + ".pfm"), paint.edited_view);
                s["partition"] = {{"new", popcount(paint.partition.fresh)},
                                  {"keep", popcount(paint.partition.keep)},
                                  {"refine", popcount(paint.partition.refine)}};
                s["texels_painted"] = paint.texels_painted;
            }
            summary["strokes"].push_back(s);
            ++k;
        }
        session.save(out / "session");
        save_scene_bundle(out / "scene" / "scene.json", *scene->bundle.scene, scene->bundle.presets);
        write_file(out / "summary.json", summary.dump(2) + "\n");
        emit(out_summary_json, summary);
    });
}

matedit_status matedit_eval_cd(const char* gt_path, const char* pred_path, size_t samples, uint64_t seed,
                               const char* align, char** out_json) {
    return guard([&] {
        const std::string mode = align ? align : "none";
        require(mode == "none" || mode == "icp", "align must be 'none' or 'icp'");
        require(samples >= 1, "samples must be >= 1");
        const PointCloud gt = load_point_cloud(str(gt_path, "gt_path"), samples, seed);
        PointCloud pred = load_point_cloud(str(pred_path, "pred_path"), samples, seed);
        json j;
        if (mode == "icp") {
            const IcpResult icp = icp_align(pred, gt);
            pred = transformed(pred, icp.transform);
            j["icp"] = {{"iterations", icp.iterations}, {"rms", icp.rms}, {"matrix", icp.transform.matrix}};
        }
        j["cd_full"] = chamfer_full(gt, pred);
        j["cd_partial"] = chamfer_partial(gt, pred);
        j["samples"] = samples;
        j["seed"] = seed;
        j["align"] = mode;
        emit(out_json, j);
    });
}

matedit_status matedit_synth_fixture(const char* out_dir, int view_pixels, int iterations) {
    return guard([&] {
        require(iterations >= 0, "iterations must be >= 0");
        synth::write_self_reconstruction(str(out_dir, "out_dir"), synth::self_reconstruction(view_pixels, iterations));
    });
}

matedit_status matedit_server_create(matedit_scene* scene, const char* options_json, matedit_server** out) {
    return guard([&] {
        require(scene != nullptr && out != nullptr, "scene and out must be non-null");
        *out = nullptr;
        ServiceOptions opt;
        if (options_json) {
            const json j = parse_json_text(json_text_or_file(options_json), "server options");
            require(j.is_object(), "server options must be a JSON object");
            try {
                opt.render_width = j.value("width", opt.render_width);
                opt.render_height = j.value("height", opt.render_height);
                opt.fov_deg = j.value("fov_deg", opt.fov_deg);
                if (j.contains("edit")) opt.edit = EditConfig::from_json(j["edit"]);
                if (j.contains("session_dir")) opt.session_dir = j["session_dir"].get<std::string>();
            } catch (const json::exception& e) {
                fail(ErrorCode::InvalidArgument, std::string("server options: ") + e.what());
            }
            require(opt.render_width >= 1 && opt.render_height >= 1, "render size must be positive");
        }
        auto s = std::make_unique<matedit_server>();
        s->service = std::make_unique<SessionService>(scene->bundle.scene, scene->bundle.presets, opt);
        *out = s.release();
    });
}

matedit_status matedit_server_bind(matedit_server* server, const char* host, int port, int* out_port) {
    return guard([&] {
        require(server != nullptr, "server is null");
        require(port >= 0 && port <= 65535, "port must be in 0..65535");
        const int bound = server->service->bind(str(host, "host"), port);
        if (out_port) *out_port = bound;
    });
}

matedit_status matedit_server_run(matedit_server* server) {
    return guard([&] {
        require(server != nullptr, "server is null");
        server->service->run();
    });
}

void matedit_server_stop(matedit_server* server) {
    if (server) server->service->stop();
}

void matedit_server_free(matedit_server* server) { delete server; }

}  // extern "C"
