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
#include <httplib.h>

#include <condition_variable>
#include <filesystem>
#include <future>
#include <thread>

#include "core/scene_io.hpp"
#include "core/service.hpp"

using namespace matedit;

namespace {

// Two-colored sphere: the u < 0.5 half is red, the rest blue.
std::shared_ptr<Scene> two_tone_sphere() {
    MaterialModel m = MaterialModel::uniform(128, 64, {0.2, 0.3, 0.8}, SemanticMaterialTable(1, std::log(20.0), {0.1, 0.1, 0.1}));
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) set_rgb(m.albedo, x, y, {0.85, 0.2, 0.15});
    auto env = std::make_shared<const SGMixture>(std::vector<SphericalGaussian>{{Vec3{0, 1, 0}, 1.0, {1, 1, 1}}});
    return std::make_shared<Scene>(make_uv_sphere(1.0, 64, 32), std::make_shared<const MaterialModel>(m), env);
}

struct Running {
    std::unique_ptr<SessionService> service;
    std::thread thread;
    int port = 0;

    explicit Running(std::shared_ptr<Scene> scene, ServiceOptions opt = {}) {
        opt.render_width = opt.render_height = 64;
        service = std::make_unique<SessionService>(std::move(scene), std::vector<Camera>{Camera{}}, opt);
        port = service->bind("127.0.0.1", 0);
        thread = std::thread([this] { service->run(); });
        service->wait_until_ready();
    }
    ~Running() {
        service->stop();
        thread.join();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(std::chrono::seconds(60));
        return c;
    }
};

nlohmann::json json_of(const httplib::Result& r) {
    REQUIRE(r);
    return nlohmann::json::parse(r->body);
}

const std::string kJson = "application/json";

// yaw 0 looks at u = 0.25, the middle of the red half.
const nlohmann::json kClick = {{"yaw", 0}, {"pitch", 0}, {"points", {{32, 32}}}, {"labels", {1}}};

class GatedPainter final : public Painter {
public:
    std::string id() const override { return "gated"; }
    Image paint(const PaintRequest& req, const BlendStep& blend) override {
        {
            std::unique_lock lock(m);
            entered = true;
            cv.notify_all();
            cv.wait(lock, [&] { return released; });
        }
        return blend(*req.view);
    }
    std::mutex m;
    std::condition_variable cv;
    bool entered = false, released = false;
};

}  // namespace

TEST_CASE("scene and render endpoints") {
    Running s(two_tone_sphere());
    auto c = s.client();
    const auto scene = json_of(c.Get("/v1/scene"));
    CHECK(scene["triangles"].get<int>() > 0);
    CHECK(scene["presets"].size() == 1);

    const auto a = c.Get("/v1/render?yaw=30&pitch=10&mode=albedo");
    const auto b = c.Get("/v1/render?yaw=30&pitch=10&mode=albedo");
    REQUIRE(a);
    REQUIRE(b);
    CHECK(a->status == 200);
    CHECK(a->body == b->body);
    const auto j = nlohmann::json::parse(a->body);
    const Image img = decode_pfm(base64_decode(j["image"].get<std::string>()));
    CHECK(img.width() == 64);
    CHECK(img.channels() == 3);
    CHECK(json_of(c.Get("/v1/render?yaw=0&pitch=0&mode=shaded&encoding=ppm"))["encoding"] == "ppm");

    CHECK(c.Get("/v1/render?yaw=0&pitch=0&mode=glossy")->status == 400);
    CHECK(c.Get("/v1/render?yaw=abc&pitch=0")->status == 400);
    CHECK(c.Get("/v1/render?mode=albedo")->status == 400);
}

TEST_CASE("prompt validation") {
    Running s(two_tone_sphere());
    auto c = s.client();
    nlohmann::json none = {{"yaw", 0}, {"pitch", 0}, {"points", nlohmann::json::array()},
                           {"labels", nlohmann::json::array()}};
    CHECK(c.Post("/v1/session/prompts", none.dump(), kJson)->status == 400);
    CHECK(c.Post("/v1/session/prompts", "{not json", kJson)->status == 400);
    nlohmann::json outside = kClick;
    outside["points"] = {{500, 3}};
    CHECK(c.Post("/v1/session/prompts", outside.dump(), kJson)->status == 400);
    CHECK(c.Post("/v1/session/project", "", kJson)->status == 400);
    CHECK(c.Post("/v1/session/paint", "{}", kJson)->status == 400);
}

TEST_CASE("prompts, project and state agree") {
    Running s(two_tone_sphere());
    auto c = s.client();
    const auto seg = json_of(c.Post("/v1/session/prompts", kClick.dump(), kJson));
    const Mask preview = decode_pgm_mask(base64_decode(seg["mask"].get<std::string>()));
    CHECK(seg["mask_pixels"].get<size_t>() == popcount(preview));
    CHECK(popcount(preview) > 200);

    const auto proj = json_of(c.Post("/v1/session/project", "", kJson));
    CHECK(proj["iou"].get<double>() > 0.9);
    CHECK(proj["L_t"].get<double>() < 0.05);

    const auto state = json_of(c.Get("/v1/session/state?yaw=0&pitch=0"));
    CHECK(state["mask_texels"].get<size_t>() > 0);
    CHECK(state["mask_texels"] == proj["mask_texels"]);

    // Fresh render-and-count of T_mask.
    const Image& tmask = s.service->session().masks().mask;
    size_t count = 0;
    for (double v : tmask.values()) count += v >= 0.5;
    CHECK(state["mask_texels"].get<size_t>() == count);
    const auto render = json_of(c.Get("/v1/render?yaw=0&pitch=0&mode=mask"));
    const Image mask_view = decode_pfm(base64_decode(render["image"].get<std::string>()));
    size_t lit = 0;
    for (double v : mask_view.values()) lit += v >= 0.5;
    CHECK(state["view"]["mask_pixels"].get<size_t>() == lit);
}

TEST_CASE("partition and paint confine the edit to the selection") {
    Running s(two_tone_sphere());
    auto c = s.client();
    REQUIRE(c.Post("/v1/session/prompts", kClick.dump(), kJson)->status == 200);
    REQUIRE(c.Post("/v1/session/project", "", kJson)->status == 200);
    const auto part = json_of(c.Post("/v1/session/partition?yaw=0&pitch=0", "", kJson));
    const Mask fresh = decode_pgm_mask(base64_decode(part["new"].get<std::string>()));
    CHECK(part["counts"]["new"].get<size_t>() == popcount(fresh));
    CHECK(part["counts"]["refine"] == 0);

    const auto before = json_of(c.Get("/v1/render?yaw=0&pitch=0&mode=albedo"));
    const Image z = decode_pfm(base64_decode(before["image"].get<std::string>()));
    const auto painted = json_of(c.Post("/v1/session/paint", nlohmann::json{{"tag", "green"}}.dump(), kJson));
    CHECK(painted["texels_painted"].get<size_t>() > 0);
    const Image edited = decode_pfm(base64_decode(painted["image"].get<std::string>()));
    size_t changed = 0, changed_outside = 0;
    for (size_t i = 0; i < fresh.pixel_count(); ++i) {
        bool diff = false;
        for (int ch = 0; ch < 3; ++ch) diff = diff || edited[3 * i + ch] != z[3 * i + ch];
        changed += diff;
        changed_outside += diff && !fresh[i];
    }
    CHECK(changed > 0);
    CHECK(changed_outside == 0);
    CHECK(json_of(c.Get("/v1/session/state"))["history"] == 1);
    CHECK(json_of(c.Get("/v1/session/state"))["painted_texels"].get<size_t>() > 0);
    CHECK(json_of(c.Post("/v1/session/reset", "", kJson))["ok"] == true);
    CHECK(json_of(c.Get("/v1/session/state"))["mask_texels"] == 0);
}

TEST_CASE("concurrent mutation gets 409") {
    Running s(two_tone_sphere());
    auto gate = std::make_unique<GatedPainter>();
    GatedPainter* g = gate.get();
    s.service->session().use_painter(std::move(gate));
    auto c = s.client();
    REQUIRE(c.Post("/v1/session/prompts", kClick.dump(), kJson)->status == 200);
    REQUIRE(c.Post("/v1/session/project", "", kJson)->status == 200);

    auto paint = std::async(std::launch::async, [&] {
        auto c2 = s.client();
        return c2.Post("/v1/session/paint", nlohmann::json{{"tag", "red"}}.dump(), kJson)->status;
    });
    {
        std::unique_lock lock(g->m);
        g->cv.wait(lock, [&] { return g->entered; });
    }
    const auto busy = c.Post("/v1/session/prompts", kClick.dump(), kJson);
    REQUIRE(busy);
    CHECK(busy->status == 409);
    CHECK(nlohmann::json::parse(busy->body)["error"] == "busy");
    {
        std::lock_guard lock(g->m);
        g->released = true;
    }
    g->cv.notify_all();
    CHECK(paint.get() == 200);
    CHECK(c.Post("/v1/session/prompts", kClick.dump(), kJson)->status == 200);
}

TEST_CASE("session directory persists across service restarts") {
    const auto dir = std::filesystem::temp_directory_path() / "matedit_service_session";
    std::filesystem::remove_all(dir);
    ServiceOptions opt;
    opt.session_dir = dir;
    size_t texels = 0;
    {
        Running s(two_tone_sphere(), opt);
        auto c = s.client();
        REQUIRE(c.Post("/v1/session/prompts", kClick.dump(), kJson)->status == 200);
        texels = json_of(c.Post("/v1/session/project", "", kJson))["mask_texels"].get<size_t>();
    }
    REQUIRE(std::filesystem::exists(dir / "session.json"));
    Running again(two_tone_sphere(), opt);
    CHECK(json_of(again.client().Get("/v1/session/state"))["mask_texels"].get<size_t>() == texels);
    std::filesystem::remove_all(dir);
}
