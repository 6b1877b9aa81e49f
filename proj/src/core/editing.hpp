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

// Interactive texture editing: UV selection masks, prompt caching across
// views, mask projection, view partitioning and mask-blended painting.

#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/render.hpp"

namespace matedit {

/// Soft UV selection state. Both textures are 1-channel, in [0,1], and are
/// thresholded at 0.5 when rendered.
struct MaskTexturePair {
    Image mask;
    Image negmask;

    MaskTexturePair() = default;
    MaskTexturePair(int width, int height) : mask(width, height, 1), negmask(width, height, 1) {}
    void validate() const;
};

struct PointPrompt {
    int x = 0, y = 0;
    bool positive = true;
};

struct PointPromptSet {
    std::vector<PointPrompt> points;

    size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    size_t positives() const;
    void validate(int width, int height) const;
};

nlohmann::json prompts_to_json(const PointPromptSet& prompts);
/// Accepts {"points": [[x, y], ...], "labels": [1, 0, ...]}.
PointPromptSet prompts_from_json(const nlohmann::json& j);

struct ViewPartition {
    Mask fresh;   // M_new
    Mask keep;    // M_keep
    Mask refine;  // M_refine

    /// M_paint: fresh or refine.
    Mask paint_mask() const;
    void validate(const Mask& coverage) const;
};

struct MaskPair {
    Mask mask;     // I_sam
    Mask negmask;  // I_negsam
};

// ---------------------------------------------------------------------------
// Segmenters.

class Segmenter {
public:
    virtual ~Segmenter() = default;
    virtual std::string id() const = 0;
    virtual MaskPair segment(const Image& image, const PointPromptSet& prompts) = 0;
};

/// Seeded region growing. Each negative point floods its 4-connected region
/// of colors within `tolerance` (RGB distance to the seed color); positive
/// points then flood the same way without entering negative regions.
class RegionGrowSegmenter final : public Segmenter {
public:
    explicit RegionGrowSegmenter(double tolerance = 0.08) : tolerance_(tolerance) {}
    std::string id() const override { return "region_grow"; }
    MaskPair segment(const Image& image, const PointPromptSet& prompts) override;

private:
    double tolerance_;
};

/// JSON over HTTP: POST {width, height, image (base64 PFM), points, labels}
/// and expect {mask, negmask} as base64 8-bit PGM.
class HttpSegmenter final : public Segmenter {
public:
    explicit HttpSegmenter(std::string url, double timeout_s = 30.0);
    std::string id() const override { return "http:" + url_; }
    MaskPair segment(const Image& image, const PointPromptSet& prompts) override;

private:
    std::string url_;
    double timeout_s_;
};

/// Runs the segmenter and enforces the mask contract (shape, disjointness).
MaskPair segment(Segmenter& segmenter, const Image& image, const PointPromptSet& prompts);

/// "region_grow", "region_grow:<tolerance>" or "http://host:port/path".
std::unique_ptr<Segmenter> make_segmenter(const std::string& id);

// ---------------------------------------------------------------------------
// Painters.

struct PaintRequest {
    const Image* view = nullptr;    // RGB render being edited
    const Image* normal = nullptr;  // unit normals, 3 channels
    const ViewPartition* partition = nullptr;
    std::string tag;
};

/// Called after every painter step with the proposal; returns the blended
/// image the painter continues from.
using BlendStep = std::function<Image(const Image& proposal)>;

class Painter {
public:
    virtual ~Painter() = default;
    virtual std::string id() const = 0;
    virtual Image paint(const PaintRequest& request, const BlendStep& blend) = 0;
};

/// Deterministic fill keyed by the tag: a color name, "#rrggbb", or any other
/// string hashed to a color. Tags containing "stripes" or "checker" alternate
/// the fill with a darker shade in bands of the normal pass. The fill is
/// approached over `steps` blended iterations.
class ProceduralPainter final : public Painter {
public:
    explicit ProceduralPainter(int steps = 8) : steps_(steps) {}
    std::string id() const override { return "procedural"; }
    Image paint(const PaintRequest& request, const BlendStep& blend) override;

    static Vec3 tag_color(const std::string& tag);

private:
    int steps_;
};

/// POST {width, height, view, normal, partition{new, keep, refine}, tag},
/// expect {image}; the reply is blended once.
class HttpPainter final : public Painter {
public:
    explicit HttpPainter(std::string url, double timeout_s = 120.0);
    std::string id() const override { return "http:" + url_; }
    Image paint(const PaintRequest& request, const BlendStep& blend) override;

private:
    std::string url_;
    double timeout_s_;
};

/// "procedural", "procedural:<steps>" or "http://host:port/path".
std::unique_ptr<Painter> make_painter(const std::string& id);

// ---------------------------------------------------------------------------
// Pure operations.

struct PatchGrid {
    int cols = 25, rows = 25;
};

/// One point per grid patch holding at least `theta` active pixels: the active
/// pixel nearest the patch's active-pixel centroid (first in scan order on
/// ties). Positive points come from `q_mask`, negative from `q_negmask`.
PointPromptSet patch_sample_prompts(const Mask& q_mask, const Mask& q_negmask, PatchGrid pos_grid = {25, 25},
                                    PatchGrid neg_grid = {5, 5}, int theta = 5);

/// z_hat where M_paint is set, z elsewhere.
Image blend_paint(const Image& z_hat, const Image& z, const ViewPartition& partition);

/// Partition of the covered region given the candidate selection and the
/// previously painted pixels of the view.
ViewPartition partition_masks(const Mask& candidate, const Mask& coverage, const Mask& painted, int r_open = 2,
                              int r_ring = 4);

struct ProjectionResult {
    double loss = 0;  // final mean squared residual over covered pixels
    int steps = 0;
    size_t texels_touched = 0;
};

/// Least-squares projection of per-pixel targets into a UV texture through
/// the bilinear render of `gbuffer`. Each texel steps by lr times its
/// gradient over the row sum of the Gauss-Newton matrix, which bounds the
/// diagonal from above, so lr <= 1 never increases the loss before clamping.
/// Texels no pixel reaches are never written. Values are clamped to [lo, hi]
/// after each step.
ProjectionResult project_texture(const GBuffer& gbuffer, const Image& target, Image& texture, int steps, double lr,
                                 double lo = 0.0, double hi = 1.0);

// ---------------------------------------------------------------------------
// Session.

struct EditConfig {
    int mask_width = 256, mask_height = 128;
    PatchGrid pos_grid{25, 25};
    PatchGrid neg_grid{5, 5};
    int theta = 5;
    int r_open = 2;
    int r_ring = 4;
    int project_steps = 60;
    double project_lr = 1.0;
    std::string segmenter = "region_grow";
    std::string painter = "procedural";

    nlohmann::json to_json() const;
    static EditConfig from_json(const nlohmann::json& j);
};

enum class MaskWhich { Mask, NegMask };

struct PromptCache {
    Mask q_mask;
    Mask q_negmask;
    Mask coverage;  // m_t
};

struct MaskProjection {
    ProjectionResult result;
    double iou = 0;  // re-rendered selection vs target, inside coverage
};

struct PaintResult {
    Image edited_view;
    ViewPartition partition;
    size_t texels_painted = 0;
};

/// Selection state and painted coverage for one scene. Mutating calls are
/// not synchronized; callers serialize them.
class EditSession {
public:
    EditSession(std::shared_ptr<Scene> scene, EditConfig config = {});

    const Scene& scene() const { return *scene_; }
    const std::shared_ptr<Scene>& scene_ptr() const { return scene_; }
    const EditConfig& config() const { return config_; }
    const MaskTexturePair& masks() const { return masks_; }
    const Image& painted() const { return painted_; }
    const std::vector<Camera>& history() const { return history_; }
    bool negmask_initialized() const { return negmask_initialized_; }

    void set_masks(MaskTexturePair masks);
    void set_painted(Image painted);

    Segmenter& segmenter();
    Painter& painter();
    void use_segmenter(std::unique_ptr<Segmenter> s);
    void use_painter(std::unique_ptr<Painter> p);

    /// Mask and negmask renders thresholded at 0.5, plus coverage.
    PromptCache render_prompt_cache(const Camera& view) const;
    /// The image shown to segmenters and painters (albedo render).
    Image view_image(const Camera& view) const;

    /// Segments the view from user prompts plus prompts sampled from the
    /// cached masks of earlier views.
    MaskPair segment_view(const Camera& view, const PointPromptSet& user_prompts);

    ProjectionResult project_mask(const Camera& view, const Mask& target, MaskWhich which, int steps, double lr);
    /// Projects I_sam into T_mask and I_negsam into T_negmask. On the first
    /// call T_negmask is fitted to coverage minus I_sam instead.
    MaskProjection project_selection(const Camera& view, const MaskPair& selection);

    ViewPartition partition_view(const Camera& view, const Mask& candidate) const;
    /// Partition with the rendered selection as candidate.
    ViewPartition partition_view(const Camera& view) const;

    /// Projects the edited albedo view into UV, composes it with T_mask and
    /// marks newly painted texels. Appends the view to the history.
    size_t apply_local_edit(const Image& edited_view, const Camera& view);

    /// Painter run with blend_paint per step, followed by apply_local_edit.
    PaintResult paint(const Camera& view, const std::string& tag);

    /// Session directory: mask.pfm, negmask.pfm, painted.pfm, albedo.pfm and
    /// session.json (config, history).
    void save(const std::filesystem::path& dir) const;
    static EditSession load(const std::filesystem::path& dir, std::shared_ptr<Scene> scene);

private:
    std::shared_ptr<Scene> scene_;
    EditConfig config_;
    MaskTexturePair masks_;
    Image painted_;
    std::vector<Camera> history_;
    bool negmask_initialized_ = false;
    std::unique_ptr<Segmenter> segmenter_;
    std::unique_ptr<Painter> painter_;
};

}  // namespace matedit
