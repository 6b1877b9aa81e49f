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

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "core/image.hpp"
#include "core/material.hpp"
#include "core/mesh.hpp"
#include "core/sg.hpp"

namespace matedit {

/// Geometry plus the material and lighting snapshots it is rendered with.
/// Snapshots are immutable and may be shared by concurrent renders.
class Scene {
public:
    Scene(TriangleMesh mesh, std::shared_ptr<const MaterialModel> material,
          std::shared_ptr<const SGMixture> environment);

    const TriangleMesh& mesh() const { return mesh_; }
    const Bvh& bvh() const { return bvh_; }
    const std::shared_ptr<const MaterialModel>& material() const { return material_; }
    const std::shared_ptr<const SGMixture>& environment() const { return environment_; }

    void set_material(std::shared_ptr<const MaterialModel> material);
    void set_environment(std::shared_ptr<const SGMixture> environment);

    /// Bounding-sphere center and radius, for framing cameras.
    Vec3 center() const;
    double radius() const;

    std::optional<SurfaceSample> intersect(const Ray& ray, double* t = nullptr) const;

private:
    TriangleMesh mesh_;
    Bvh bvh_;
    std::shared_ptr<const MaterialModel> material_;
    std::shared_ptr<const SGMixture> environment_;
};

/// Per-pixel primary-ray hits for one camera.
struct GBuffer {
    int width = 0, height = 0;
    Mask coverage;
    std::vector<SurfaceSample> samples;  // valid where coverage is set
    std::vector<Vec3> view_dirs;         // unit, from surface towards camera
    std::vector<double> depth;

    const SurfaceSample& at(int x, int y) const { return samples[static_cast<size_t>(y) * width + x]; }
};

GBuffer trace_gbuffer(const Scene& scene, const Camera& camera);

enum class RenderMode { Shaded, Albedo, Normal, Semantic, Mask, NegMask, Depth };

const char* render_mode_name(RenderMode mode);
RenderMode parse_render_mode(const std::string& name);
int render_mode_channels(RenderMode mode);

struct RenderStats {
    size_t hits = 0;
    size_t clamped = 0;   // channels of closed-form radiance clamped at zero
    size_t grazing = 0;   // covered pixels whose shading normal faces away
    double milliseconds = 0;

    std::string to_json() const;
};

struct RenderPass {
    RenderMode mode = RenderMode::Shaded;
    Image pixels;
    Mask coverage;  // m_t
    RenderStats stats;
};

struct RenderOptions {
    const Image* mask_texture = nullptr;     // sampled in Mask mode
    const Image* negmask_texture = nullptr;  // sampled in NegMask mode
    double mask_threshold = 0.5;
};

RenderPass render(const Scene& scene, const Camera& camera, RenderMode mode, const RenderOptions& options = {});
/// Same as render() but reuses a traced GBuffer.
RenderPass render_from_gbuffer(const Scene& scene, const GBuffer& gbuffer, RenderMode mode,
                               const RenderOptions& options = {});

/// Soft (unthresholded) render of a 1-channel UV texture: the differentiable
/// forward map used by mask projection.
Image render_texture(const GBuffer& gbuffer, const Image& texture);

struct ShadeResult {
    Vec3 radiance;
    int clamped_channels = 0;
};

/// Closed-form SG shading of one point: every light lobe is multiplied with
/// the cosine lobe (diffuse) and with the warped specular lobe and the cosine
/// lobe (specular), and all products are integrated over the full sphere.
ShadeResult shade_point_sg(const SurfaceSample& sample, const Vec3& wo, const MaterialValues& material,
                           const SGMixture& env);

/// Gradient of dot(upstream, shade_point_sg(...)) with respect to every input.
struct ShadeGradient {
    Vec3 d_albedo;
    double d_sharpness = 0;  // lambda_x
    Vec3 d_specular;         // mu_x
    std::vector<Vec3> d_lobe_axis;
    std::vector<double> d_lobe_sharpness;
    std::vector<Vec3> d_lobe_amplitude;
};
ShadeResult shade_point_sg_grad(const SurfaceSample& sample, const Vec3& wo, const MaterialValues& material,
                                const SGMixture& env, const Vec3& upstream, ShadeGradient& grad);
/// Same, with the upstream gradient computed from the (clamped) radiance so
/// that a loss can be differentiated in a single shading pass.
ShadeResult shade_point_sg_grad(const SurfaceSample& sample, const Vec3& wo, const MaterialValues& material,
                                const SGMixture& env, const std::function<Vec3(const Vec3&)>& upstream_of,
                                ShadeGradient& grad);

struct McEstimate {
    Vec3 mean;
    Vec3 std_error;
};

/// Monte-Carlo estimate of the hemispherical lighting integral using cosine
/// weighted sampling and brdf_eval.
McEstimate mc_shade_point(const SurfaceSample& sample, const Vec3& wo, const MaterialValues& material,
                          const SGMixture& env, int n_samples, std::uint64_t seed);

}  // namespace matedit
