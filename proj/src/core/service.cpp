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

#include "core/service.hpp"

#include <httplib.h>

#include <mutex>
#include <optional>
#include <shared_mutex>

#include "core/scene_io.hpp"

namespace matedit {

namespace {

struct HttpError {
    int status;
    std::string code;
    std::string message;
};

int status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument:
        case ErrorCode::ResolutionMismatch:
        case ErrorCode::ZeroCoverage:
        case ErrorCode::EmptyRegion: return 400;
        case ErrorCode::Busy: return 409;
        case ErrorCode::SegmenterUnavailable: return 503;
        default: return 500;
    }
}

void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
}

nlohmann::json body_json(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    auto j = parse_json_text(req.body, "request body");
    require(j.is_object(), "request body must be a JSON object");
    return j;
}

std::optional<double> number_param(const httplib::Request& req, const nlohmann::json& body, const char* key) {
    if (req.has_param(key)) {
        try {
            return std::stod(req.get_param_value(key));
        } catch (const std::exception&) {
            fail(ErrorCode::InvalidArgument, std::string("query parameter '") + key + "' is not a number");
        }
    }
    if (body.contains(key)) {
        require(body[key].is_number(), std::string("'") + key + "' must be a number");
        return body[key].get<double>();
    }
    return std::nullopt;
}

std::string b64_mask(const Mask& m) { return base64_encode(encode_pgm_mask(m)); }

size_t count_at_least(const Image& t, double level) {
    size_t n = 0;
    for (double v : t.values()) n += v >= level;
    return n;
}

}  // namespace

struct SessionService::Impl {
    std::shared_ptr<Scene> scene;
    std::vector<Camera> presets;
    ServiceOptions options;
    std::unique_ptr<EditSession> session;

    std::mutex transaction;         // one mutation in flight
    std::shared_mutex state;        // readers vs the mutation's writes
    std::optional<Camera> pending_view;
    std::optional<MaskPair> pending;
    std::optional<MaskProjection> last_projection;

    httplib::Server server;

    Impl(std::shared_ptr<Scene> s, std::vector<Camera> p, ServiceOptions o)
        : scene(std::move(s)), presets(std::move(p)), options(std::move(o)) {
        if (!options.session_dir.empty() && std::filesystem::exists(options.session_dir / "session.json"))
            session = std::make_unique<EditSession>(EditSession::load(options.session_dir, scene));
        else
            session = std::make_unique<EditSession>(scene, options.edit);
        routes();
    }

    Camera view_from(const httplib::Request& req, const nlohmann::json& body, bool required) {
        const auto yaw = number_param(req, body, "yaw");
        const auto pitch = number_param(req, body, "pitch");
        if (!yaw || !pitch) {
            if (!required && pending_view) return *pending_view;
            fail(ErrorCode::InvalidArgument, "'yaw' and 'pitch' are required");
        }
        int w = options.render_width, h = options.render_height;
        if (const auto v = number_param(req, body, "width")) w = static_cast<int>(*v);
        if (const auto v = number_param(req, body, "height")) h = static_cast<int>(*v);
        require(w >= 1 && h >= 1 && w <= 4096 && h <= 4096, "render size must be within 1..4096");
        return framing_camera(*scene, *yaw, *pitch, w, h, options.fov_deg);
    }

    void persist() {
        if (!options.session_dir.empty()) session->save(options.session_dir);
    }

    // Wraps a handler: maps library errors onto HTTP statuses.
    template <class F>
    httplib::Server::Handler guarded(F&& f) {
        return [this, f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Origin", "*");
            try {
                f(req, res);
            } catch (const HttpError& e) {
                send_json(res, {{"error", e.code}, {"message", e.message}}, e.status);
            } catch (const Error& e) {
                send_json(res, {{"error", error_code_name(e.code())}, {"message", e.what()}}, status_for(e.code()));
            } catch (const std::exception& e) {
                send_json(res, {{"error", "runtime"}, {"message", e.what()}}, 500);
            }
        };
    }

    // Wraps a session mutation: 409 when another one is running.
    template <class F>
    httplib::Server::Handler mutation(F&& f) {
        return guarded([this, f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
            std::unique_lock busy(transaction, std::try_to_lock);
            if (!busy.owns_lock()) throw HttpError{409, "busy", "a session transaction is in flight"};
            std::unique_lock write(state);
            f(req, res);
        });
    }

    void routes() {
        server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Origin", "*");
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });

        server.Get("/v1/scene", guarded([this](const httplib::Request&, httplib::Response& res) {
            std::shared_lock read(state);
            const auto& mesh = scene->mesh();
            nlohmann::json j;
            j["vertices"] = mesh.positions.size();
            j["triangles"] = mesh.triangles.size();
            j["center"] = {scene->center().x, scene->center().y, scene->center().z};
            j["radius"] = scene->radius();
            j["has_material"] = scene->material() != nullptr;
            j["has_environment"] = scene->environment() != nullptr;
            j["labels"] = scene->material() ? scene->material()->table.size() : 0;
            j["render"] = {{"width", options.render_width}, {"height", options.render_height},
                           {"fov_deg", options.fov_deg}};
            j["presets"] = nlohmann::json::array();
            for (const auto& c : presets) j["presets"].push_back(camera_to_json(c));
            j["modes"] = {"shaded", "albedo", "normal", "semantic", "mask", "negmask", "depth"};
            send_json(res, j);
        }));

        server.Get("/v1/render", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const RenderMode mode = parse_render_mode(req.has_param("mode") ? req.get_param_value("mode") : "shaded");
            const std::string encoding = req.has_param("encoding") ? req.get_param_value("encoding") : "pfm";
            require(encoding == "pfm" || encoding == "ppm", "encoding must be 'pfm' or 'ppm'");
            std::shared_lock read(state);
            const Camera cam = view_from(req, nlohmann::json::object(), true);
            RenderOptions opt;
            opt.mask_texture = &session->masks().mask;
            opt.negmask_texture = &session->masks().negmask;
            const RenderPass pass = render(*scene, cam, mode, opt);
            nlohmann::json j;
            j["mode"] = render_mode_name(mode);
            j["width"] = cam.width;
            j["height"] = cam.height;
            j["channels"] = pass.pixels.channels();
            j["encoding"] = encoding;
            j["image"] = base64_encode(encoding == "pfm" ? encode_pfm(pass.pixels) : encode_pnm8(pass.pixels));
            j["coverage"] = popcount(pass.coverage);
            send_json(res, j);
        }));

        server.Post("/v1/session/prompts", mutation([this](const httplib::Request& req, httplib::Response& res) {
            const auto body = body_json(req);
            const PointPromptSet prompts = prompts_from_json(body);
            if (prompts.empty()) throw HttpError{400, "invalid-argument", "at least one prompt point is required"};
            const Camera cam = view_from(req, body, true);
            const MaskPair sel = session->segment_view(cam, prompts);
            pending_view = cam;
            pending = sel;
            send_json(res, {{"mask", b64_mask(sel.mask)},
                            {"negmask", b64_mask(sel.negmask)},
                            {"mask_pixels", popcount(sel.mask)},
                            {"negmask_pixels", popcount(sel.negmask)},
                            {"width", cam.width},
                            {"height", cam.height}});
        }));

        server.Post("/v1/session/project", mutation([this](const httplib::Request&, httplib::Response& res) {
            if (!pending || popcount(pending->mask) == 0)
                throw HttpError{400, "invalid-argument", "no segmentation to project; post prompts first"};
            const MaskProjection p = session->project_selection(*pending_view, *pending);
            last_projection = p;
            persist();
            send_json(res, {{"L_t", p.result.loss},
                            {"iou", p.iou},
                            {"steps", p.result.steps},
                            {"texels_touched", p.result.texels_touched},
                            {"mask_texels", count_at_least(session->masks().mask, 0.5)}});
        }));

        server.Post("/v1/session/partition", mutation([this](const httplib::Request& req, httplib::Response& res) {
            const auto body = body_json(req);
            const Camera cam = view_from(req, body, false);
            const ViewPartition p = session->partition_view(cam);
            send_json(res, {{"new", b64_mask(p.fresh)},
                            {"keep", b64_mask(p.keep)},
                            {"refine", b64_mask(p.refine)},
                            {"counts", {{"new", popcount(p.fresh)}, {"keep", popcount(p.keep)},
                                        {"refine", popcount(p.refine)}}},
                            {"width", cam.width},
                            {"height", cam.height}});
        }));

        server.Post("/v1/session/paint", mutation([this](const httplib::Request& req, httplib::Response& res) {
            const auto body = body_json(req);
            if (!body.contains("tag") || !body["tag"].is_string())
                throw HttpError{400, "invalid-argument", "'tag' (string) is required"};
            const Camera cam = view_from(req, body, false);
            const PaintResult r = session->paint(cam, body["tag"].get<std::string>());
            persist();
            send_json(res, {{"image", base64_encode(encode_pfm(r.edited_view))},
                            {"width", cam.width},
                            {"height", cam.height},
                            {"texels_painted", r.texels_painted},
                            {"counts", {{"new", popcount(r.partition.fresh)}, {"keep", popcount(r.partition.keep)},
                                        {"refine", popcount(r.partition.refine)}}},
                            {"history", session->history().size()}});
        }));

        server.Get("/v1/session/state", guarded([this](const httplib::Request& req, httplib::Response& res) {
            std::shared_lock read(state);
            const auto& m = session->masks();
            nlohmann::json j;
            j["mask_texels"] = count_at_least(m.mask, 0.5);
            j["negmask_texels"] = count_at_least(m.negmask, 0.5);
            j["painted_texels"] = count_at_least(session->painted(), 0.5);
            j["texels"] = m.mask.pixel_count();
            j["mask_coverage"] = static_cast<double>(count_at_least(m.mask, 0.5)) / m.mask.pixel_count();
            j["history"] = session->history().size();
            j["pending"] = pending.has_value();
            j["segmenter"] = session->segmenter().id();
            j["painter"] = session->painter().id();
            if (last_projection) j["last_projection"] = {{"L_t", last_projection->result.loss},
                                                         {"iou", last_projection->iou}};
            if (req.has_param("yaw") && req.has_param("pitch")) {
                const PromptCache c = session->render_prompt_cache(view_from(req, nlohmann::json::object(), true));
                j["view"] = {{"mask_pixels", popcount(c.q_mask)},
                             {"negmask_pixels", popcount(c.q_negmask)},
                             {"coverage_pixels", popcount(c.coverage)}};
            }
            send_json(res, j);
        }));

        server.Post("/v1/session/reset", mutation([this](const httplib::Request&, httplib::Response& res) {
            session = std::make_unique<EditSession>(scene, options.edit);
            pending.reset();
            pending_view.reset();
            last_projection.reset();
            persist();
            send_json(res, {{"ok", true}});
        }));
    }
};

SessionService::SessionService(std::shared_ptr<Scene> scene, std::vector<Camera> presets, ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(scene), std::move(presets), std::move(options))) {}

SessionService::~SessionService() = default;

int SessionService::bind(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) fail(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void SessionService::run() { impl_->server.listen_after_bind(); }
void SessionService::stop() { impl_->server.stop(); }
void SessionService::wait_until_ready() { impl_->server.wait_until_ready(); }
EditSession& SessionService::session() { return *impl_->session; }

}  // namespace matedit
