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

// JSON-over-HTTP session service. Routes (all under /v1):
//
//   GET  /scene                     geometry summary and camera presets
//   GET  /render?yaw&pitch&mode     image (base64 PFM, or PPM with encoding=ppm)
//   POST /session/prompts           {yaw, pitch, points, labels} -> preview masks
//   POST /session/project           projects the preview -> {L_t, iou, ...}
//   POST /session/partition?yaw&pitch
//   POST /session/paint             {tag[, yaw, pitch]} -> edited render
//   GET  /session/state[?yaw&pitch] mask coverage statistics
//   POST /session/reset
//
// Session mutations run one at a time; a mutation arriving while another is
// in flight gets 409.

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "core/editing.hpp"

namespace matedit {

struct ServiceOptions {
    int render_width = 256;
    int render_height = 256;
    double fov_deg = 40;
    EditConfig edit;
    std::filesystem::path session_dir;  // saved after every mutation when set
};

class SessionService {
public:
    SessionService(std::shared_ptr<Scene> scene, std::vector<Camera> presets, ServiceOptions options = {});
    ~SessionService();
    SessionService(const SessionService&) = delete;
    SessionService& operator=(const SessionService&) = delete;

    /// Binds the listening socket; port 0 picks a free port. Returns the port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    void run();
    void stop();
    void wait_until_ready();

    /// Direct access for setup before run(); not synchronized.
    EditSession& session();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace matedit
