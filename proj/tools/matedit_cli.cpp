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

// matedit command-line tool. Links only the C API.
//
// Exit codes: 0 success, 2 usage or validation error, 1 runtime error.

#include <csignal>
#include <cstdio>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "matedit/matedit.h"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;

int report(matedit_status st) {
    if (st == MATEDIT_OK) return 0;
    std::fprintf(stderr, "matedit: %s: %s\n", matedit_status_name(st), matedit_last_error());
    return matedit_status_is_validation(st) ? kExitValidation : kExitRuntime;
}

// Prints and releases a string returned by the library.
void print_owned(char* s) {
    if (!s) return;
    std::printf("%s\n", s);
    matedit_string_free(s);
}

struct SceneHandle {
    matedit_scene* ptr = nullptr;
    ~SceneHandle() { matedit_scene_free(ptr); }
};

void progress(int iteration, double data, double albedo_reg, double total, void*) {
    std::fprintf(stderr, "iter %6d  data %.6e  L_a %.6e  total %.6e\n", iteration, data, albedo_reg, total);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"matedit: semantic-aware material estimation and texture editing"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);
    app.set_version_flag("--version", matedit_version());

    std::string scene_path, out, mode = "shaded", camera, config, obs_dir, manifest, script, gt, pred;
    std::string align = "none", host = "127.0.0.1", options, session_dir;
    int preset = -1, width = 256, height = 256, port = 8080, pixels = 48, iterations = 4000;
    double yaw = 0, pitch = 0, fov = 40, threshold = 0.92;
    size_t samples = 30000;
    std::uint64_t seed = 0;
    bool quiet = false, as_json = false;

    auto* render = app.add_subcommand("render", "render a view of a scene");
    render->add_option("--scene", scene_path, "scene description (scene.json)")->required();
    auto* preset_opt = render->add_option("--preset", preset, "camera preset index");
    auto* camera_opt = render->add_option("--camera", camera, "camera JSON object");
    auto* yaw_opt = render->add_option("--yaw", yaw, "orbit yaw in degrees");
    render->add_option("--pitch", pitch, "orbit pitch in degrees");
    render->add_option("--width", width)->check(CLI::Range(1, 8192));
    render->add_option("--height", height)->check(CLI::Range(1, 8192));
    render->add_option("--fov", fov)->check(CLI::Range(1.0, 179.0));
    render->add_option("--mode", mode, "shaded|albedo|normal|semantic|mask|negmask|depth");
    render->add_option("--out", out, "output image (.pfm, .ppm, .pgm)")->required();
    preset_opt->excludes(camera_opt)->excludes(yaw_opt);
    camera_opt->excludes(yaw_opt);

    auto* fit = app.add_subcommand("fit", "fit materials and lighting to observations");
    fit->add_option("--scene", scene_path)->required();
    fit->add_option("--observations", obs_dir, "directory with observations.json")->required();
    fit->add_option("--config", config, "fit configuration (JSON file)");
    fit->add_option("--out", out, "output directory")->required();
    fit->add_flag("--quiet", quiet, "no progress output");

    auto* cluster = app.add_subcommand("cluster", "cluster segments into semantic labels");
    cluster->add_option("--manifest", manifest)->required();
    cluster->add_option("--threshold", threshold)->check(CLI::Range(0.0, 1.0));
    cluster->add_option("--out", out, "output stem (.pgm and .json are appended)")->required();

    auto* edit = app.add_subcommand("edit", "run a scripted edit session");
    edit->add_option("--scene", scene_path)->required();
    edit->add_option("--script", script, "edit script (JSON)")->required();
    edit->add_option("--out", out, "output directory")->required();

    auto* eval = app.add_subcommand("eval-cd", "chamfer distance between two meshes or point clouds");
    eval->add_option("gt", gt, "ground truth (.obj, .xyz)")->required();
    eval->add_option("pred", pred, "prediction (.obj, .xyz)")->required();
    eval->add_option("--samples", samples, "points sampled per mesh")->check(CLI::PositiveNumber);
    eval->add_option("--seed", seed);
    eval->add_option("--align", align, "pre-alignment of pred onto gt")->check(CLI::IsMember({"none", "icp"}));
    eval->add_flag("--json", as_json, "print the full JSON report");

    auto* serve = app.add_subcommand("serve", "start the editing session service");
    serve->add_option("--scene", scene_path)->required();
    serve->add_option("--host", host);
    serve->add_option("--port", port)->check(CLI::Range(0, 65535));
    serve->add_option("--options", options, "service options (JSON file or object)");
    serve->add_option("--session-dir", session_dir, "persist the session here");

    auto* info = app.add_subcommand("info", "print a scene summary");
    info->add_option("--scene", scene_path)->required();

    auto* synth = app.add_subcommand("synth", "write the synthetic self-reconstruction fixture");
    synth->add_option("--out", out)->required();
    synth->add_option("--pixels", pixels, "view resolution")->check(CLI::Range(8, 4096));
    synth->add_option("--iterations", iterations, "iterations written to fit.json")->check(CLI::NonNegativeNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    auto load = [&](SceneHandle& h) { return matedit_scene_load(scene_path.c_str(), &h.ptr); };

    if (*render) {
        SceneHandle h;
        if (auto st = load(h)) return report(st);
        std::string cam = camera;
        if (preset >= 0)
            cam = nlohmann::json{{"preset", preset}}.dump();
        else if (cam.empty())
            cam = nlohmann::json{{"yaw", yaw}, {"pitch", pitch}, {"width", width}, {"height", height}, {"fov_deg", fov}}
                      .dump();
        return report(matedit_render(h.ptr, cam.c_str(), mode.c_str(), out.c_str()));
    }
    if (*fit) {
        SceneHandle h;
        if (auto st = load(h)) return report(st);
        char* summary = nullptr;
        const auto st = matedit_fit(h.ptr, obs_dir.c_str(), config.empty() ? nullptr : config.c_str(), out.c_str(),
                                    quiet ? nullptr : progress, nullptr, &summary);
        print_owned(summary);
        return report(st);
    }
    if (*cluster) {
        char* summary = nullptr;
        const auto st = matedit_cluster(manifest.c_str(), threshold, out.c_str(), &summary);
        print_owned(summary);
        return report(st);
    }
    if (*edit) {
        SceneHandle h;
        if (auto st = load(h)) return report(st);
        char* summary = nullptr;
        const auto st = matedit_edit_script(h.ptr, script.c_str(), out.c_str(), &summary);
        print_owned(summary);
        return report(st);
    }
    if (*eval) {
        char* result = nullptr;
        const auto st = matedit_eval_cd(gt.c_str(), pred.c_str(), samples, seed, align.c_str(), &result);
        if (st != MATEDIT_OK) return report(st);
        if (as_json) {
            print_owned(result);
            return 0;
        }
        const auto j = nlohmann::json::parse(result);
        matedit_string_free(result);
        std::printf("CD_full %.10g\nCD_partial %.10g\n", j["cd_full"].get<double>(), j["cd_partial"].get<double>());
        return 0;
    }
    if (*info) {
        SceneHandle h;
        if (auto st = load(h)) return report(st);
        char* j = nullptr;
        const auto st = matedit_scene_info(h.ptr, &j);
        print_owned(j);
        return report(st);
    }
    if (*synth) return report(matedit_synth_fixture(out.c_str(), pixels, iterations));
    if (*serve) {
        SceneHandle h;
        if (auto st = load(h)) return report(st);
        std::string opts = options;
        if (!session_dir.empty()) {
            if (!opts.empty()) {
                std::fprintf(stderr, "matedit: --session-dir and --options cannot be combined; put session_dir in the options\n");
                return kExitValidation;
            }
            opts = nlohmann::json{{"session_dir", session_dir}}.dump();
        }
        matedit_server* server = nullptr;
        if (auto st = matedit_server_create(h.ptr, opts.empty() ? nullptr : opts.c_str(), &server)) return report(st);
        int bound = 0;
        if (auto st = matedit_server_bind(server, host.c_str(), port, &bound)) {
            matedit_server_free(server);
            return report(st);
        }
        sigset_t signals;
        sigemptyset(&signals);
        sigaddset(&signals, SIGINT);
        sigaddset(&signals, SIGTERM);
        pthread_sigmask(SIG_BLOCK, &signals, nullptr);
        std::thread watcher([&] {
            int sig = 0;
            sigwait(&signals, &sig);
            matedit_server_stop(server);
        });
        std::printf("listening on http://%s:%d/v1\n", host.c_str(), bound);
        std::fflush(stdout);
        const auto st = matedit_server_run(server);
        // Wake the watcher if the server stopped on its own.
        pthread_kill(watcher.native_handle(), SIGTERM);
        watcher.join();
        matedit_server_free(server);
        return report(st);
    }
    return kExitValidation;
}
