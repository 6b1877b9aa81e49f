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

// Segmenter and painter backends reached over HTTP.

#include <httplib.h>

#include "core/editing.hpp"
#include "core/scene_io.hpp"

namespace matedit {

namespace {

struct Endpoint {
    std::string base;  // scheme://host:port
    std::string path;
};

Endpoint split_url(const std::string& url) {
    const auto scheme = url.find("://");
    require(scheme != std::string::npos, "backend url needs a scheme: '" + url + "'");
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

nlohmann::json post_json(const std::string& url, double timeout_s, const nlohmann::json& body, ErrorCode on_fail,
                         const char* what) {
    const Endpoint ep = split_url(url);
    httplib::Client cli(ep.base);
    const auto t = std::chrono::duration<double>(timeout_s);
    cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
    cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
    auto res = cli.Post(ep.path, body.dump(), "application/json");
    if (!res) fail(on_fail, std::string(what) + " at " + url + " is unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200)
        fail(on_fail, std::string(what) + " at " + url + " answered HTTP " + std::to_string(res->status));
    return parse_json_text(res->body, what);
}

Mask mask_field(const nlohmann::json& j, const char* key) {
    try {
        return decode_pgm_mask(base64_decode(j.at(key).get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ContractViolation, std::string("backend reply field '") + key + "': " + e.what());
    }
}

}  // namespace

HttpSegmenter::HttpSegmenter(std::string url, double timeout_s) : url_(std::move(url)), timeout_s_(timeout_s) {
    split_url(url_);
}

MaskPair HttpSegmenter::segment(const Image& image, const PointPromptSet& prompts) {
    nlohmann::json body = prompts_to_json(prompts);
    body["width"] = image.width();
    body["height"] = image.height();
    body["image"] = base64_encode(encode_pfm(image));
    const auto reply = post_json(url_, timeout_s_, body, ErrorCode::SegmenterUnavailable, "segmenter");
    return {mask_field(reply, "mask"), mask_field(reply, "negmask")};
}

HttpPainter::HttpPainter(std::string url, double timeout_s) : url_(std::move(url)), timeout_s_(timeout_s) {
    split_url(url_);
}

Image HttpPainter::paint(const PaintRequest& req, const BlendStep& blend) {
    require(req.view && req.normal && req.partition, "paint request is incomplete");
    nlohmann::json body;
    body["width"] = req.view->width();
    body["height"] = req.view->height();
    body["view"] = base64_encode(encode_pfm(*req.view));
    body["normal"] = base64_encode(encode_pfm(*req.normal));
    body["partition"] = {{"new", base64_encode(encode_pgm_mask(req.partition->fresh))},
                         {"keep", base64_encode(encode_pgm_mask(req.partition->keep))},
                         {"refine", base64_encode(encode_pgm_mask(req.partition->refine))}};
    body["tag"] = req.tag;
    const auto reply = post_json(url_, timeout_s_, body, ErrorCode::Runtime, "painter");
    Image img;
    try {
        img = decode_pfm(base64_decode(reply.at("image").get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ContractViolation, std::string("painter reply: ") + e.what());
    }
    if (!img.same_shape(*req.view) || img.channels() != 3)
        fail(ErrorCode::ContractViolation, "painter returned an image of the wrong shape");
    return blend(img);
}

}  // namespace matedit
