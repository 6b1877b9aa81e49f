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

#include "core/editing.hpp"

#include <cstdint>
#include <limits>

#include "core/morphology.hpp"
#include "core/scene_io.hpp"
#include "core/texture.hpp"

namespace matedit {

void MaskTexturePair::validate() const {
    require(mask.channels() == 1 && negmask.channels() == 1, "mask textures must have one channel");
    require(mask.same_shape(negmask), "mask and negmask textures differ in resolution");
    for (const auto* t : {&mask, &negmask})
        for (double v : t->values()) require(v >= 0.0 && v <= 1.0, "mask texture values must lie in [0, 1]");
}

size_t PointPromptSet::positives() const {
    size_t n = 0;
    for (const auto& p : points) n += p.positive;
    return n;
}

void PointPromptSet::validate(int width, int height) const {
    for (const auto& p : points)
        if (p.x < 0 || p.y < 0 || p.x >= width || p.y >= height)
            fail(ErrorCode::InvalidArgument, "prompt (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                                                 ") lies outside the " + std::to_string(width) + "x" +
                                                 std::to_string(height) + " view");
}

nlohmann::json prompts_to_json(const PointPromptSet& prompts) {
    nlohmann::json points = nlohmann::json::array(), labels = nlohmann::json::array();
    for (const auto& p : prompts.points) {
        points.push_back({p.x, p.y});
        labels.push_back(p.positive ? 1 : 0);
    }
    return {{"points", points}, {"labels", labels}};
}

PointPromptSet prompts_from_json(const nlohmann::json& j) {
    try {
        const auto& pts = j.at("points");
        const auto& labels = j.at("labels");
        require(pts.is_array() && labels.is_array(), "'points' and 'labels' must be arrays");
        require(pts.size() == labels.size(), "'points' and 'labels' differ in length");
        PointPromptSet out;
        for (size_t i = 0; i < pts.size(); ++i) {
            require(pts[i].is_array() && pts[i].size() == 2, "each point must be [x, y]");
            PointPrompt p;
            p.x = pts[i][0].get<int>();
            p.y = pts[i][1].get<int>();
            const auto& l = labels[i];
            p.positive = l.is_boolean() ? l.get<bool>() : l.get<int>() != 0;
            out.points.push_back(p);
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("prompts: ") + e.what());
    }
}

Mask ViewPartition::paint_mask() const { return mask_or(fresh, refine); }

void ViewPartition::validate(const Mask& coverage) const {
    require(fresh.same_shape(coverage) && keep.same_shape(coverage) && refine.same_shape(coverage),
            "partition masks differ in resolution");
    for (size_t i = 0; i < coverage.pixel_count(); ++i) {
        const int n = (fresh[i] != 0) + (keep[i] != 0) + (refine[i] != 0);
        if (n > 1) fail(ErrorCode::ContractViolation, "partition masks overlap");
        if ((n == 1) != (coverage[i] != 0)) fail(ErrorCode::ContractViolation, "partition does not cover m_t");
    }
}

// ---------------------------------------------------------------------------
// Segmenters.

namespace {

double color_distance(const Image& img, size_t a, size_t b) {
    const int ch = std::min(img.channels(), 3);
    double s = 0;
    for (int c = 0; c < ch; ++c) {
        const double d = img[a * img.channels() + c] - img[b * img.channels() + c];
        s += d * d;
    }
    return std::sqrt(s);
}

// 4-connected flood from `seed` over pixels within `tol` of the seed color
// that are not blocked. Marks `out`.
void flood(const Image& img, int seed_x, int seed_y, double tol, const Mask* blocked, Mask& out) {
    const int w = img.width(), h = img.height();
    const size_t seed = static_cast<size_t>(seed_y) * w + seed_x;
    if (blocked && (*blocked)[seed]) return;
    Mask seen(w, h);
    std::vector<size_t> stack{seed};
    seen[seed] = 1;
    while (!stack.empty()) {
        const size_t i = stack.back();
        stack.pop_back();
        out[i] = 1;
        const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
        const int nx[4] = {x - 1, x + 1, x, x};
        const int ny[4] = {y, y, y - 1, y + 1};
        for (int k = 0; k < 4; ++k) {
            if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
            const size_t j = static_cast<size_t>(ny[k]) * w + nx[k];
            if (seen[j] || (blocked && (*blocked)[j])) continue;
            seen[j] = 1;
            if (color_distance(img, j, seed) <= tol) stack.push_back(j);
        }
    }
}

}  // namespace

MaskPair RegionGrowSegmenter::segment(const Image& image, const PointPromptSet& prompts) {
    MaskPair out{Mask(image.width(), image.height()), Mask(image.width(), image.height())};
    for (const auto& p : prompts.points)
        if (!p.positive) flood(image, p.x, p.y, tolerance_, nullptr, out.negmask);
    for (const auto& p : prompts.points)
        if (p.positive) flood(image, p.x, p.y, tolerance_, &out.negmask, out.mask);
    return out;
}

MaskPair segment(Segmenter& segmenter, const Image& image, const PointPromptSet& prompts) {
    require(!prompts.empty(), "segmentation needs at least one prompt");
    prompts.validate(image.width(), image.height());
    MaskPair out = segmenter.segment(image, prompts);
    if (!out.mask.same_shape(image) || !out.negmask.same_shape(image))
        fail(ErrorCode::ContractViolation, "segmenter '" + segmenter.id() + "' returned masks of the wrong size");
    for (size_t i = 0; i < out.mask.pixel_count(); ++i) {
        out.mask[i] = out.mask[i] ? 1 : 0;
        out.negmask[i] = out.negmask[i] ? 1 : 0;
        if (out.mask[i] && out.negmask[i])
            fail(ErrorCode::ContractViolation, "segmenter '" + segmenter.id() + "' returned overlapping masks");
    }
    return out;
}

std::unique_ptr<Segmenter> make_segmenter(const std::string& id) {
    if (id == "region_grow") return std::make_unique<RegionGrowSegmenter>();
    if (id.rfind("region_grow:", 0) == 0) {
        double tol = 0;
        try {
            tol = std::stod(id.substr(12));
        } catch (const std::exception&) {
            fail(ErrorCode::InvalidArgument, "bad region_grow tolerance in '" + id + "'");
        }
        require(tol >= 0, "region_grow tolerance must be >= 0");
        return std::make_unique<RegionGrowSegmenter>(tol);
    }
    if (id.rfind("http://", 0) == 0) return std::make_unique<HttpSegmenter>(id);
    fail(ErrorCode::SegmenterUnavailable, "unknown segmenter '" + id + "'");
}

// ---------------------------------------------------------------------------
// Painters.

namespace {

Vec3 hsv_to_rgb(double h, double s, double v) {
    const double c = v * s;
    const double hp = std::fmod(h * 6.0, 6.0);
    const double x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
    Vec3 rgb;
    if (hp < 1) rgb = {c, x, 0};
    else if (hp < 2) rgb = {x, c, 0};
    else if (hp < 3) rgb = {0, c, x};
    else if (hp < 4) rgb = {0, x, c};
    else if (hp < 5) rgb = {x, 0, c};
    else rgb = {c, 0, x};
    return rgb + Vec3::splat(v - c);
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

Vec3 ProceduralPainter::tag_color(const std::string& tag) {
    static const std::pair<const char*, Vec3> kNamed[] = {
        {"red", {0.80, 0.12, 0.10}},   {"green", {0.15, 0.62, 0.20}}, {"blue", {0.12, 0.25, 0.80}},
        {"yellow", {0.90, 0.80, 0.15}}, {"orange", {0.92, 0.48, 0.10}}, {"purple", {0.50, 0.20, 0.65}},
        {"pink", {0.92, 0.55, 0.70}},  {"white", {0.92, 0.92, 0.92}}, {"black", {0.05, 0.05, 0.05}},
        {"gray", {0.50, 0.50, 0.50}},  {"grey", {0.50, 0.50, 0.50}},  {"brown", {0.45, 0.28, 0.14}},
        {"gold", {0.83, 0.66, 0.22}},  {"silver", {0.75, 0.75, 0.78}}, {"cyan", {0.10, 0.75, 0.80}},
        {"magenta", {0.80, 0.15, 0.70}},
    };
    const std::string t = lower(tag);
    const auto hash_pos = t.find('#');
    if (hash_pos != std::string::npos && hash_pos + 7 <= t.size()) {
        const std::string hex = t.substr(hash_pos + 1, 6);
        if (hex.find_first_not_of("0123456789abcdef") == std::string::npos) {
            const unsigned long v = std::stoul(hex, nullptr, 16);
            return Vec3{double((v >> 16) & 0xFF), double((v >> 8) & 0xFF), double(v & 0xFF)} / 255.0;
        }
    }
    // Earliest color word in the tag.
    size_t best = std::string::npos;
    Vec3 color;
    for (const auto& [name, rgb] : kNamed) {
        const size_t at = t.find(name);
        if (at < best) {
            best = at;
            color = rgb;
        }
    }
    if (best != std::string::npos) return color;
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : t) h = (h ^ c) * 1099511628211ull;
    return hsv_to_rgb(static_cast<double>(h % 360) / 360.0, 0.65, 0.8);
}

Image ProceduralPainter::paint(const PaintRequest& req, const BlendStep& blend) {
    require(req.view && req.normal && req.partition, "paint request is incomplete");
    const Image& view = *req.view;
    require(view.channels() == 3 && req.normal->same_shape(view), "paint request images differ in shape");
    const Vec3 base = tag_color(req.tag);
    const std::string t = lower(req.tag);
    const bool stripes = t.find("stripe") != std::string::npos;
    const bool checker = t.find("checker") != std::string::npos;
    Image fill(view.width(), view.height(), 3);
    for (int y = 0; y < view.height(); ++y)
        for (int x = 0; x < view.width(); ++x) {
            const Vec3 n = rgb_at(*req.normal, x, y);
            int parity = 0;
            if (stripes || checker) parity += static_cast<int>(std::floor((n.y + 1.0) * 4.0));
            if (checker) parity += static_cast<int>(std::floor((std::atan2(n.z, n.x) + kPi) / (kPi / 4)));
            set_rgb(fill, x, y, parity % 2 ? base * 0.45 : base);
        }
    Image current = view;
    for (int k = 0; k < steps_; ++k) {
        const double a = 1.0 / (steps_ - k);
        Image proposal = current;
        for (size_t i = 0; i < proposal.values().size(); ++i) proposal[i] += a * (fill[i] - current[i]);
        current = blend(proposal);
    }
    return current;
}

std::unique_ptr<Painter> make_painter(const std::string& id) {
    if (id == "procedural") return std::make_unique<ProceduralPainter>();
    if (id.rfind("procedural:", 0) == 0) {
        int steps = 0;
        try {
            steps = std::stoi(id.substr(11));
        } catch (const std::exception&) {
            fail(ErrorCode::InvalidArgument, "bad procedural step count in '" + id + "'");
        }
        require(steps >= 1, "procedural painter needs at least one step");
        return std::make_unique<ProceduralPainter>(steps);
    }
    if (id.rfind("http://", 0) == 0) return std::make_unique<HttpPainter>(id);
    fail(ErrorCode::InvalidArgument, "unknown painter '" + id + "'");
}

// ---------------------------------------------------------------------------
// Pure operations.

namespace {

void sample_patches(const Mask& m, PatchGrid grid, int theta, bool positive, PointPromptSet& out) {
    require(grid.cols >= 1 && grid.rows >= 1, "patch grid must be at least 1x1");
    const int w = m.width(), h = m.height();
    for (int gy = 0; gy < grid.rows; ++gy)
        for (int gx = 0; gx < grid.cols; ++gx) {
            const int x0 = gx * w / grid.cols, x1 = (gx + 1) * w / grid.cols;
            const int y0 = gy * h / grid.rows, y1 = (gy + 1) * h / grid.rows;
            long count = 0;
            double sx = 0, sy = 0;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x)
                    if (m.at(x, y)) {
                        ++count;
                        sx += x;
                        sy += y;
                    }
            if (count < theta) continue;
            const double cx = sx / count, cy = sy / count;
            double best = std::numeric_limits<double>::infinity();
            PointPrompt pick{0, 0, positive};
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    if (!m.at(x, y)) continue;
                    const double d = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                    if (d < best) {
                        best = d;
                        pick.x = x;
                        pick.y = y;
                    }
                }
            out.points.push_back(pick);
        }
}

}  // namespace

PointPromptSet patch_sample_prompts(const Mask& q_mask, const Mask& q_negmask, PatchGrid pos_grid,
                                    PatchGrid neg_grid, int theta) {
    require(theta >= 1, "patch threshold must be >= 1");
    require(q_mask.same_shape(q_negmask), "prompt cache masks differ in resolution");
    PointPromptSet out;
    sample_patches(q_mask, pos_grid, theta, true, out);
    sample_patches(q_negmask, neg_grid, theta, false, out);
    return out;
}

Image blend_paint(const Image& z_hat, const Image& z, const ViewPartition& partition) {
    if (!z_hat.same_shape(z) || z_hat.channels() != z.channels() || !partition.fresh.same_shape(z) ||
        !partition.refine.same_shape(z))
        fail(ErrorCode::ResolutionMismatch, "blend_paint inputs differ in resolution");
    Image out = z;
    const int ch = z.channels();
    for (size_t i = 0; i < z.pixel_count(); ++i)
        if (partition.fresh[i] || partition.refine[i])
            for (int c = 0; c < ch; ++c) out[i * ch + c] = z_hat[i * ch + c];
    return out;
}

ViewPartition partition_masks(const Mask& candidate, const Mask& coverage, const Mask& painted, int r_open,
                              int r_ring) {
    require(candidate.same_shape(coverage) && painted.same_shape(coverage), "partition inputs differ in resolution");
    ViewPartition p;
    p.fresh = mask_and(open(mask_minus(mask_and(candidate, coverage), painted), r_open), coverage);
    const Mask ring = mask_minus(dilate(p.fresh, r_ring), erode(p.fresh, r_ring));
    p.refine = mask_minus(mask_and(mask_and(ring, painted), coverage), p.fresh);
    p.keep = mask_minus(mask_minus(coverage, p.fresh), p.refine);
    return p;
}

ProjectionResult project_texture(const GBuffer& g, const Image& target, Image& texture, int steps, double lr,
                                 double lo, double hi) {
    require(target.same_shape(g.width, g.height), "projection target and view differ in resolution");
    require(target.channels() == texture.channels(), "projection target and texture differ in channel count");
    require(steps >= 0 && lr > 0, "projection needs steps >= 0 and lr > 0");
    const int ch = texture.channels();
    const size_t covered = popcount(g.coverage);
    if (covered == 0) fail(ErrorCode::ZeroCoverage, "the view does not see the mesh");

    std::vector<size_t> pixels;
    std::vector<BilinearTaps> taps;
    for (size_t i = 0; i < g.samples.size(); ++i)
        if (g.coverage[i]) {
            pixels.push_back(i);
            taps.push_back(bilinear_taps(texture.width(), texture.height(), g.samples[i].uv));
        }
    // Row sums of J^T J: each pixel's weights sum to one.
    Image rowsum(texture.width(), texture.height(), 1);
    for (const auto& t : taps)
        for (int k = 0; k < 4; ++k) rowsum.at(t.x[k], t.y[k]) += t.w[k];

    ProjectionResult res;
    for (double v : rowsum.values()) res.texels_touched += v > 0;
    Image grad(texture.width(), texture.height(), ch);
    auto residual_pass = [&](bool accumulate) {
        double loss = 0;
        for (size_t k = 0; k < pixels.size(); ++k) {
            const auto& t = taps[k];
            for (int c = 0; c < ch; ++c) {
                double v = 0;
                for (int j = 0; j < 4; ++j) v += t.w[j] * texture.at(t.x[j], t.y[j], c);
                const double r = v - target[pixels[k] * ch + c];
                loss += r * r;
                if (accumulate)
                    for (int j = 0; j < 4; ++j) grad.at(t.x[j], t.y[j], c) += t.w[j] * r;
            }
        }
        return loss / static_cast<double>(covered);
    };
    for (int s = 0; s < steps; ++s) {
        std::fill(grad.values().begin(), grad.values().end(), 0.0);
        residual_pass(true);
        for (int y = 0; y < texture.height(); ++y)
            for (int x = 0; x < texture.width(); ++x) {
                const double d = rowsum.at(x, y);
                if (d <= 0) continue;
                for (int c = 0; c < ch; ++c) {
                    double& v = texture.at(x, y, c);
                    v = std::clamp(v - lr * grad.at(x, y, c) / d, lo, hi);
                }
            }
        ++res.steps;
    }
    res.loss = residual_pass(false);
    return res;
}

// ---------------------------------------------------------------------------
// Config.

nlohmann::json EditConfig::to_json() const {
    return {{"mask_width", mask_width},
            {"mask_height", mask_height},
            {"pos_grid", {pos_grid.cols, pos_grid.rows}},
            {"neg_grid", {neg_grid.cols, neg_grid.rows}},
            {"theta", theta},
            {"r_open", r_open},
            {"r_ring", r_ring},
            {"project_steps", project_steps},
            {"project_lr", project_lr},
            {"segmenter", segmenter},
            {"painter", painter}};
}

EditConfig EditConfig::from_json(const nlohmann::json& j) {
    require(j.is_object(), "edit config must be a JSON object");
    EditConfig c;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "mask_width") c.mask_width = v.get<int>();
            else if (key == "mask_height") c.mask_height = v.get<int>();
            else if (key == "pos_grid" || key == "neg_grid") {
                require(v.is_array() && v.size() == 2, "'" + key + "' must be [cols, rows]");
                (key == "pos_grid" ? c.pos_grid : c.neg_grid) = {v[0].get<int>(), v[1].get<int>()};
            } else if (key == "theta") c.theta = v.get<int>();
            else if (key == "r_open") c.r_open = v.get<int>();
            else if (key == "r_ring") c.r_ring = v.get<int>();
            else if (key == "project_steps") c.project_steps = v.get<int>();
            else if (key == "project_lr") c.project_lr = v.get<double>();
            else if (key == "segmenter") c.segmenter = v.get<std::string>();
            else if (key == "painter") c.painter = v.get<std::string>();
            else fail(ErrorCode::InvalidArgument, "unknown edit config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("edit config: ") + e.what());
    }
    require(c.mask_width >= 1 && c.mask_height >= 1, "mask texture must be at least 1x1");
    require(c.pos_grid.cols >= 1 && c.pos_grid.rows >= 1 && c.neg_grid.cols >= 1 && c.neg_grid.rows >= 1,
            "patch grids must be at least 1x1");
    require(c.theta >= 1, "theta must be >= 1");
    require(c.r_open >= 1 && c.r_ring >= 1, "morphology radii must be >= 1");
    require(c.project_steps >= 0 && c.project_lr > 0, "projection needs steps >= 0 and lr > 0");
    return c;
}

// ---------------------------------------------------------------------------
// Session.

EditSession::EditSession(std::shared_ptr<Scene> scene, EditConfig config)
    : scene_(std::move(scene)), config_(std::move(config)) {
    require(scene_ != nullptr, "edit session needs a scene");
    if (scene_->mesh().triangles.empty()) fail(ErrorCode::EmptyScene, "edit session needs a non-empty mesh");
    masks_ = MaskTexturePair(config_.mask_width, config_.mask_height);
    painted_ = Image(config_.mask_width, config_.mask_height, 1);
    segmenter_ = make_segmenter(config_.segmenter);
    painter_ = make_painter(config_.painter);
}

void EditSession::set_masks(MaskTexturePair masks) {
    masks.validate();
    masks_ = std::move(masks);
}

void EditSession::set_painted(Image painted) {
    require(painted.channels() == 1 && painted.same_shape(masks_.mask), "painted coverage must match the mask texture");
    painted_ = std::move(painted);
}

Segmenter& EditSession::segmenter() { return *segmenter_; }
Painter& EditSession::painter() { return *painter_; }
void EditSession::use_segmenter(std::unique_ptr<Segmenter> s) {
    require(s != nullptr, "null segmenter");
    segmenter_ = std::move(s);
}
void EditSession::use_painter(std::unique_ptr<Painter> p) {
    require(p != nullptr, "null painter");
    painter_ = std::move(p);
}

PromptCache EditSession::render_prompt_cache(const Camera& view) const {
    const GBuffer g = trace_gbuffer(*scene_, view);
    RenderOptions opt;
    opt.mask_texture = &masks_.mask;
    opt.negmask_texture = &masks_.negmask;
    PromptCache cache;
    cache.coverage = g.coverage;
    cache.q_mask = threshold(render_from_gbuffer(*scene_, g, RenderMode::Mask, opt).pixels, 0.5);
    cache.q_negmask = threshold(render_from_gbuffer(*scene_, g, RenderMode::NegMask, opt).pixels, 0.5);
    cache.q_mask = mask_and(cache.q_mask, g.coverage);
    cache.q_negmask = mask_and(cache.q_negmask, g.coverage);
    return cache;
}

Image EditSession::view_image(const Camera& view) const {
    if (!scene_->material()) fail(ErrorCode::InvalidArgument, "scene has no material to edit");
    return render(*scene_, view, RenderMode::Albedo).pixels;
}

MaskPair EditSession::segment_view(const Camera& view, const PointPromptSet& user_prompts) {
    const PromptCache cache = render_prompt_cache(view);
    PointPromptSet prompts = user_prompts;
    const auto sampled =
        patch_sample_prompts(cache.q_mask, cache.q_negmask, config_.pos_grid, config_.neg_grid, config_.theta);
    prompts.points.insert(prompts.points.end(), sampled.points.begin(), sampled.points.end());
    return segment(*segmenter_, view_image(view), prompts);
}

namespace {

Image mask_image(const Mask& m) {
    Image out(m.width(), m.height(), 1);
    for (size_t i = 0; i < m.pixel_count(); ++i) out[i] = m[i] ? 1.0 : 0.0;
    return out;
}

}  // namespace

ProjectionResult EditSession::project_mask(const Camera& view, const Mask& target, MaskWhich which, int steps,
                                           double lr) {
    const GBuffer g = trace_gbuffer(*scene_, view);
    require(target.same_shape(g.width, g.height), "projection target and view differ in resolution");
    Image& tex = which == MaskWhich::Mask ? masks_.mask : masks_.negmask;
    return project_texture(g, mask_image(mask_and(target, g.coverage)), tex, steps, lr);
}

MaskProjection EditSession::project_selection(const Camera& view, const MaskPair& selection) {
    const GBuffer g = trace_gbuffer(*scene_, view);
    require(selection.mask.same_shape(g.width, g.height) && selection.negmask.same_shape(g.width, g.height),
            "selection and view differ in resolution");
    const Mask sel = mask_and(selection.mask, g.coverage);
    const Mask neg = negmask_initialized_ ? mask_and(selection.negmask, g.coverage) : mask_minus(g.coverage, sel);
    MaskProjection out;
    out.result = project_texture(g, mask_image(sel), masks_.mask, config_.project_steps, config_.project_lr);
    project_texture(g, mask_image(neg), masks_.negmask, config_.project_steps, config_.project_lr);
    negmask_initialized_ = true;
    const Mask rendered = mask_and(threshold(render_texture(g, masks_.mask), 0.5), g.coverage);
    out.iou = mask_iou(rendered, sel);
    return out;
}

ViewPartition EditSession::partition_view(const Camera& view, const Mask& candidate) const {
    const GBuffer g = trace_gbuffer(*scene_, view);
    require(candidate.same_shape(g.width, g.height), "candidate region and view differ in resolution");
    const Mask painted = mask_and(threshold(render_texture(g, painted_), 0.5), g.coverage);
    return partition_masks(candidate, g.coverage, painted, config_.r_open, config_.r_ring);
}

ViewPartition EditSession::partition_view(const Camera& view) const {
    return partition_view(view, render_prompt_cache(view).q_mask);
}

size_t EditSession::apply_local_edit(const Image& edited_view, const Camera& view) {
    const auto material = scene_->material();
    if (!material) fail(ErrorCode::InvalidArgument, "scene has no material to edit");
    const GBuffer g = trace_gbuffer(*scene_, view);
    require(edited_view.channels() == 3 && edited_view.same_shape(g.width, g.height),
            "edited view must be an RGB image of the view's resolution");

    Image edit = material->albedo;
    project_texture(g, edited_view, edit, config_.project_steps, config_.project_lr);

    auto next = std::make_shared<MaterialModel>(*material);
    Image& albedo = next->albedo;
    const int aw = albedo.width(), ah = albedo.height();
    for (int y = 0; y < ah; ++y)
        for (int x = 0; x < aw; ++x) {
            const double m = std::clamp(sample_uv(masks_.mask, {(x + 0.5) / aw, (y + 0.5) / ah}), 0.0, 1.0);
            if (m == 0.0) continue;
            for (int c = 0; c < 3; ++c) albedo.at(x, y, c) = edit.at(x, y, c) * m + albedo.at(x, y, c) * (1.0 - m);
        }

    Image seen(painted_.width(), painted_.height(), 1);
    for (size_t i = 0; i < g.samples.size(); ++i)
        if (g.coverage[i]) splat_uv(seen, g.samples[i].uv, 1.0);
    size_t fresh = 0;
    for (size_t i = 0; i < painted_.pixel_count(); ++i)
        if (seen[i] > 0 && masks_.mask[i] >= 0.5 && painted_[i] < 0.5) {
            painted_[i] = 1.0;
            ++fresh;
        }
    scene_->set_material(std::move(next));
    history_.push_back(view);
    return fresh;
}

PaintResult EditSession::paint(const Camera& view, const std::string& tag) {
    PaintResult out;
    const GBuffer g = trace_gbuffer(*scene_, view);
    if (popcount(g.coverage) == 0) fail(ErrorCode::ZeroCoverage, "the view does not see the mesh");
    const Image z = render_from_gbuffer(*scene_, g, RenderMode::Albedo).pixels;
    const Image normal = render_from_gbuffer(*scene_, g, RenderMode::Normal).pixels;
    out.partition = partition_view(view);
    PaintRequest req{&z, &normal, &out.partition, tag};
    const Image painted =
        painter_->paint(req, [&](const Image& proposal) { return blend_paint(proposal, z, out.partition); });
    out.edited_view = blend_paint(painted, z, out.partition);
    out.texels_painted = apply_local_edit(out.edited_view, view);
    return out;
}

void EditSession::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    write_pfm(dir / "mask.pfm", masks_.mask);
    write_pfm(dir / "negmask.pfm", masks_.negmask);
    write_pfm(dir / "painted.pfm", painted_);
    if (scene_->material()) write_pfm(dir / "albedo.pfm", scene_->material()->albedo);
    nlohmann::json j;
    j["config"] = config_.to_json();
    j["negmask_initialized"] = negmask_initialized_;
    j["history"] = nlohmann::json::array();
    for (const auto& c : history_) j["history"].push_back(camera_to_json(c));
    write_file(dir / "session.json", j.dump(2) + "\n");
}

EditSession EditSession::load(const std::filesystem::path& dir, std::shared_ptr<Scene> scene) {
    const auto j = parse_json_text(read_file(dir / "session.json"), "session file");
    EditSession s(std::move(scene), EditConfig::from_json(j.value("config", nlohmann::json::object())));
    MaskTexturePair masks;
    masks.mask = read_pfm(dir / "mask.pfm");
    masks.negmask = read_pfm(dir / "negmask.pfm");
    s.set_masks(std::move(masks));
    s.set_painted(read_pfm(dir / "painted.pfm"));
    s.negmask_initialized_ = j.value("negmask_initialized", false);
    if (j.contains("history"))
        for (const auto& c : j["history"]) s.history_.push_back(camera_from_json(c));
    if (std::filesystem::exists(dir / "albedo.pfm") && s.scene_->material()) {
        auto m = std::make_shared<MaterialModel>(*s.scene_->material());
        Image albedo = read_pfm(dir / "albedo.pfm");
        require(albedo.same_shape(m->albedo) && albedo.channels() == 3, "saved albedo does not match the scene");
        m->albedo = std::move(albedo);
        s.scene_->set_material(std::move(m));
    }
    return s;
}

}  // namespace matedit
