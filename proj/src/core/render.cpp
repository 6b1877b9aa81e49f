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

#include "core/render.hpp"

#include <chrono>
#include <random>
#include <sstream>

#include "core/parallel.hpp"
#include "core/texture.hpp"

namespace matedit {

namespace {
constexpr int kBandRows = 8;
}

Scene::Scene(TriangleMesh mesh, std::shared_ptr<const MaterialModel> material,
             std::shared_ptr<const SGMixture> environment)
    : mesh_(std::move(mesh)), material_(std::move(material)), environment_(std::move(environment)) {
    if (mesh_.empty()) fail(ErrorCode::EmptyScene, "scene mesh has no triangles");
    mesh_.validate();
    bvh_ = Bvh(mesh_);
    if (material_) material_->validate();
}

void Scene::set_material(std::shared_ptr<const MaterialModel> material) {
    if (material) material->validate();
    material_ = std::move(material);
}

void Scene::set_environment(std::shared_ptr<const SGMixture> environment) { environment_ = std::move(environment); }

Vec3 Scene::center() const { return bvh_.bounds().center(); }

double Scene::radius() const {
    const Vec3 c = center();
    double r = 0;
    for (const auto& p : mesh_.positions) r = std::max(r, norm(p - c));
    return r;
}

std::optional<SurfaceSample> Scene::intersect(const Ray& ray, double* t) const {
    const auto hit = bvh_.intersect(mesh_, ray);
    if (!hit) return std::nullopt;
    const auto& tri = mesh_.triangles[hit->triangle];
    const double b0 = 1.0 - hit->b1 - hit->b2;
    SurfaceSample s;
    s.position = ray.origin + hit->t * ray.direction;
    const Vec3 n = b0 * mesh_.normals[tri[0]] + hit->b1 * mesh_.normals[tri[1]] + hit->b2 * mesh_.normals[tri[2]];
    const double len = norm(n);
    s.normal = len > 0 ? n / len : normalize(cross(mesh_.positions[tri[1]] - mesh_.positions[tri[0]],
                                                   mesh_.positions[tri[2]] - mesh_.positions[tri[0]]));
    const Vec2 a = mesh_.uvs[tri[0]], b = mesh_.uvs[tri[1]], c = mesh_.uvs[tri[2]];
    s.uv = {std::clamp(b0 * a.x + hit->b1 * b.x + hit->b2 * c.x, 0.0, 1.0),
            std::clamp(b0 * a.y + hit->b1 * b.y + hit->b2 * c.y, 0.0, 1.0)};
    if (material_) s.label = sample_label(material_->label_atlas, s.uv);
    if (t) *t = hit->t;
    return s;
}

GBuffer trace_gbuffer(const Scene& scene, const Camera& camera) {
    camera.validate();
    GBuffer g;
    g.width = camera.width;
    g.height = camera.height;
    g.coverage = Mask(g.width, g.height);
    const size_t n = static_cast<size_t>(g.width) * g.height;
    g.samples.resize(n);
    g.view_dirs.resize(n);
    g.depth.assign(n, 0.0);
    parallel_rows(g.height, kBandRows, [&](int, int y0, int y1) {
        for (int y = y0; y < y1; ++y)
            for (int x = 0; x < g.width; ++x) {
                const Ray ray = camera.primary_ray(x, y);
                double t = 0;
                if (auto s = scene.intersect(ray, &t)) {
                    const size_t i = static_cast<size_t>(y) * g.width + x;
                    g.coverage.at(x, y) = 1;
                    g.samples[i] = *s;
                    g.view_dirs[i] = -ray.direction;
                    g.depth[i] = t;
                }
            }
    });
    return g;
}

const char* render_mode_name(RenderMode mode) {
    switch (mode) {
        case RenderMode::Shaded: return "shaded";
        case RenderMode::Albedo: return "albedo";
        case RenderMode::Normal: return "normal";
        case RenderMode::Semantic: return "semantic";
        case RenderMode::Mask: return "mask";
        case RenderMode::NegMask: return "negmask";
        case RenderMode::Depth: return "depth";
    }
    return "?";
}

RenderMode parse_render_mode(const std::string& name) {
    for (auto m : {RenderMode::Shaded, RenderMode::Albedo, RenderMode::Normal, RenderMode::Semantic, RenderMode::Mask,
                   RenderMode::NegMask, RenderMode::Depth})
        if (name == render_mode_name(m)) return m;
    fail(ErrorCode::InvalidArgument, "unknown render mode '" + name + "'");
}

int render_mode_channels(RenderMode mode) {
    switch (mode) {
        case RenderMode::Shaded:
        case RenderMode::Albedo:
        case RenderMode::Normal: return 3;
        default: return 1;
    }
}

std::string RenderStats::to_json() const {
    std::ostringstream out;
    out << "{\"hits\": " << hits << ", \"clamped\": " << clamped << ", \"grazing\": " << grazing
        << ", \"milliseconds\": " << milliseconds << "}";
    return out.str();
}

RenderPass render(const Scene& scene, const Camera& camera, RenderMode mode, const RenderOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    const GBuffer g = trace_gbuffer(scene, camera);
    RenderPass pass = render_from_gbuffer(scene, g, mode, options);
    pass.stats.milliseconds =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return pass;
}

RenderPass render_from_gbuffer(const Scene& scene, const GBuffer& g, RenderMode mode, const RenderOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    const MaterialModel* material = scene.material().get();
    const SGMixture* env = scene.environment().get();
    if ((mode == RenderMode::Shaded || mode == RenderMode::Albedo || mode == RenderMode::Semantic) && !material)
        fail(ErrorCode::InvalidArgument, std::string("render mode '") + render_mode_name(mode) + "' needs a material");
    if (mode == RenderMode::Shaded && !env) fail(ErrorCode::InvalidArgument, "shaded render needs an environment");
    const Image* mask_tex = mode == RenderMode::Mask ? options.mask_texture
                            : mode == RenderMode::NegMask ? options.negmask_texture
                                                          : nullptr;
    if ((mode == RenderMode::Mask || mode == RenderMode::NegMask) && !mask_tex)
        fail(ErrorCode::InvalidArgument, "mask render needs a mask texture");

    RenderPass pass;
    pass.mode = mode;
    pass.coverage = g.coverage;
    pass.pixels = Image(g.width, g.height, render_mode_channels(mode));
    const int bands = (g.height + kBandRows - 1) / kBandRows;
    std::vector<RenderStats> band_stats(bands);
    parallel_rows(g.height, kBandRows, [&](int band, int y0, int y1) {
        RenderStats& st = band_stats[band];
        for (int y = y0; y < y1; ++y)
            for (int x = 0; x < g.width; ++x) {
                if (!g.coverage.at(x, y)) continue;
                ++st.hits;
                const size_t i = static_cast<size_t>(y) * g.width + x;
                const SurfaceSample& s = g.samples[i];
                switch (mode) {
                    case RenderMode::Shaded: {
                        const Vec3& wo = g.view_dirs[i];
                        if (dot(wo, s.normal) <= 0.0) {
                            ++st.grazing;
                            break;
                        }
                        const ShadeResult r = shade_point_sg(s, wo, material_at(*material, s.uv, s.label), *env);
                        st.clamped += r.clamped_channels;
                        set_rgb(pass.pixels, x, y, r.radiance);
                        break;
                    }
                    case RenderMode::Albedo: set_rgb(pass.pixels, x, y, sample_uv_rgb(material->albedo, s.uv)); break;
                    case RenderMode::Normal: set_rgb(pass.pixels, x, y, s.normal); break;
                    case RenderMode::Semantic: pass.pixels.at(x, y) = s.label; break;
                    case RenderMode::Mask:
                    case RenderMode::NegMask:
                        pass.pixels.at(x, y) = sample_uv(*mask_tex, s.uv) >= options.mask_threshold ? 1.0 : 0.0;
                        break;
                    case RenderMode::Depth: pass.pixels.at(x, y) = g.depth[i]; break;
                }
            }
    });
    for (const auto& st : band_stats) {
        pass.stats.hits += st.hits;
        pass.stats.clamped += st.clamped;
        pass.stats.grazing += st.grazing;
    }
    pass.stats.milliseconds =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return pass;
}

Image render_texture(const GBuffer& g, const Image& texture) {
    Image out(g.width, g.height, 1);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x)
            if (g.coverage.at(x, y)) out.at(x, y) = sample_uv(texture, g.at(x, y).uv);
    return out;
}

// ---------------------------------------------------------------------------
// Closed-form shading.
//
// With unit-amplitude lobes, every term is product_integral(u, s) for the
// summed sharpness-weighted axes u and summed sharpness s. Per light lobe k:
//   diffuse  d_k = A_c K(l xi + l_c n, l + l_c)            + off K(l xi, l)
//   specular s_k = A_c K(l xi + l_w r + l_c n, l + l_w + l_c) + off K(l xi + l_w r, l + l_w)
// and L_o = sum_k mu_k * (albedo/pi * d_k + A * s_k), A = M_x * mu_x.

namespace {

struct SpecularSetup {
    double cos_o;
    Vec3 reflected;
    double warped_sharpness;  // lambda_x / (4 n.wo)
    Vec3 fresnel;             // per channel Schlick term with F0 = mu_x
    double geometry;
    Vec3 amplitude;           // fresnel * geometry * mu_x
};

SpecularSetup specular_setup(const SurfaceSample& s, const Vec3& wo, const MaterialValues& m) {
    SpecularSetup st;
    st.cos_o = dot(wo, s.normal);
    if (!(st.cos_o > 0.0)) fail(ErrorCode::BackFace, "view direction is below the surface");
    st.cos_o = std::min(st.cos_o, 1.0);
    st.reflected = normalize(reflect(wo, s.normal));
    st.warped_sharpness = m.sharpness / (4.0 * st.cos_o);
    st.fresnel = schlick_fresnel(st.cos_o, m.specular);
    st.geometry = smith_geometry(st.cos_o, m.sharpness);
    st.amplitude = st.fresnel * st.geometry * m.specular;
    return st;
}

}  // namespace

ShadeResult shade_point_sg(const SurfaceSample& sample, const Vec3& wo, const MaterialValues& m,
                           const SGMixture& env) {
    const SpecularSetup st = specular_setup(sample, wo, m);
    const Vec3& n = sample.normal;
    const Vec3 cos_u = kCosineSharpness * n;
    const Vec3 spec_u = st.warped_sharpness * st.reflected;
    const Vec3 diffuse_color = m.albedo / kPi;
    Vec3 out;
    for (const auto& lobe : env.lobes()) {
        const Vec3 lu = lobe.sharpness() * lobe.axis();
        const double l = lobe.sharpness();
        const double d = kCosineAmplitude * product_integral(lu + cos_u, l + kCosineSharpness) +
                         kCosineOffset * product_integral(lu, l);
        const double sp =
            kCosineAmplitude *
                product_integral(lu + spec_u + cos_u, l + st.warped_sharpness + kCosineSharpness) +
            kCosineOffset * product_integral(lu + spec_u, l + st.warped_sharpness);
        out += lobe.amplitude() * (diffuse_color * d + st.amplitude * sp);
    }
    ShadeResult r;
    for (int c = 0; c < 3; ++c)
        if (out[c] < 0.0) {
            out[c] = 0.0;
            ++r.clamped_channels;
        }
    r.radiance = out;
    return r;
}

ShadeResult shade_point_sg_grad(const SurfaceSample& sample, const Vec3& wo, const MaterialValues& m,
                                const SGMixture& env, const Vec3& upstream, ShadeGradient& grad) {
    return shade_point_sg_grad(sample, wo, m, env, [&](const Vec3&) { return upstream; }, grad);
}

ShadeResult shade_point_sg_grad(const SurfaceSample& sample, const Vec3& wo, const MaterialValues& m,
                                const SGMixture& env, const std::function<Vec3(const Vec3&)>& upstream_of,
                                ShadeGradient& grad) {
    const SpecularSetup st = specular_setup(sample, wo, m);
    const Vec3& n = sample.normal;
    const Vec3 cos_u = kCosineSharpness * n;
    const Vec3 spec_u = st.warped_sharpness * st.reflected;
    const Vec3 diffuse_color = m.albedo / kPi;

    const size_t k_count = env.size();
    grad.d_albedo = {};
    grad.d_sharpness = 0;
    grad.d_specular = {};
    grad.d_lobe_axis.assign(k_count, {});
    grad.d_lobe_sharpness.assign(k_count, 0.0);
    grad.d_lobe_amplitude.assign(k_count, {});

    struct LobeTerms {
        ProductIntegralGrad d1, d2, s1, s2;
        double d, s;
    };
    std::vector<LobeTerms> terms(k_count);
    Vec3 raw;
    for (size_t k = 0; k < k_count; ++k) {
        const auto& lobe = env.lobes()[k];
        const Vec3 lu = lobe.sharpness() * lobe.axis();
        const double l = lobe.sharpness();
        LobeTerms& t = terms[k];
        t.d1 = product_integral_grad(lu + cos_u, l + kCosineSharpness);
        t.d2 = product_integral_grad(lu, l);
        t.s1 = product_integral_grad(lu + spec_u + cos_u, l + st.warped_sharpness + kCosineSharpness);
        t.s2 = product_integral_grad(lu + spec_u, l + st.warped_sharpness);
        t.d = kCosineAmplitude * t.d1.value + kCosineOffset * t.d2.value;
        t.s = kCosineAmplitude * t.s1.value + kCosineOffset * t.s2.value;
        raw += lobe.amplitude() * (diffuse_color * t.d + st.amplitude * t.s);
    }
    ShadeResult fwd;
    fwd.radiance = raw;
    for (int c = 0; c < 3; ++c)
        if (raw[c] < 0.0) {
            fwd.radiance[c] = 0.0;
            ++fwd.clamped_channels;
        }
    Vec3 g = upstream_of(fwd.radiance);
    for (int c = 0; c < 3; ++c)
        if (raw[c] < 0.0) g[c] = 0.0;

    Vec3 d_amp;  // dL/dA
    double d_warped = 0;
    for (size_t k = 0; k < k_count; ++k) {
        const auto& lobe = env.lobes()[k];
        const LobeTerms& t = terms[k];
        const Vec3 gm = g * lobe.amplitude();
        grad.d_albedo += gm * (t.d / kPi);
        d_amp += gm * t.s;
        grad.d_lobe_amplitude[k] = g * (diffuse_color * t.d + st.amplitude * t.s);

        const double gd = dot(gm, diffuse_color);   // dL/dd_k
        const double gs = dot(gm, st.amplitude);     // dL/ds_k
        const Vec3 du_d = kCosineAmplitude * t.d1.d_u + kCosineOffset * t.d2.d_u;
        const double ds_d = kCosineAmplitude * t.d1.d_s + kCosineOffset * t.d2.d_s;
        const Vec3 du_s = kCosineAmplitude * t.s1.d_u + kCosineOffset * t.s2.d_u;
        const double ds_s = kCosineAmplitude * t.s1.d_s + kCosineOffset * t.s2.d_s;
        const Vec3 du = gd * du_d + gs * du_s;   // dL/du for u = l*xi
        const double ds = gd * ds_d + gs * ds_s;
        grad.d_lobe_axis[k] = lobe.sharpness() * du;
        grad.d_lobe_sharpness[k] = dot(lobe.axis(), du) + ds;
        d_warped += gs * (dot(st.reflected, du_s) + ds_s);
    }

    // A_c = F_c(mu_c) * G(lambda) * mu_c with F_c = mu_c + (1 - mu_c) f5.
    const double om = 1.0 - st.cos_o;
    const double f5 = om * om * om * om * om;
    for (int c = 0; c < 3; ++c) {
        const double mu = m.specular[c];
        grad.d_specular[c] = d_amp[c] * st.geometry * (st.fresnel[c] + mu * (1.0 - f5));
    }
    double d_geom_d_lambda = 0;
    if (m.sharpness > 2.0) {
        const double k = 0.5 * std::sqrt(2.0 / m.sharpness);
        const double c = st.cos_o;
        const double denom = c + k * (1.0 - c);
        const double g1 = c / denom;
        const double dg1_dk = -c * (1.0 - c) / (denom * denom);
        const double dk_dl = -0.25 * std::sqrt(2.0) * std::pow(m.sharpness, -1.5);
        d_geom_d_lambda = 2.0 * g1 * dg1_dk * dk_dl;
    }
    double d_lambda = d_warped / (4.0 * st.cos_o);
    for (int c = 0; c < 3; ++c) d_lambda += d_amp[c] * st.fresnel[c] * m.specular[c] * d_geom_d_lambda;
    grad.d_sharpness = d_lambda;
    return fwd;
}

McEstimate mc_shade_point(const SurfaceSample& sample, const Vec3& wo, const MaterialValues& m, const SGMixture& env,
                          int n_samples, std::uint64_t seed) {
    require(n_samples >= 1, "mc_shade_point: n_samples must be >= 1");
    Vec3 t, b;
    make_frame(sample.normal, t, b);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Vec3 sum, sum_sq;
    for (int i = 0; i < n_samples; ++i) {
        const double u1 = uni(rng);
        const double u2 = uni(rng);
        const double r = std::sqrt(u1);
        const double phi = 2.0 * kPi * u2;
        const Vec3 wi = normalize(r * std::cos(phi) * t + r * std::sin(phi) * b + std::sqrt(1.0 - u1) * sample.normal);
        // pdf = cos / pi, so L f cos / pdf = pi L f
        const Vec3 f = eval_mixture(env, wi) * brdf_eval(wo, wi, m, sample) * kPi;
        sum += f;
        sum_sq += f * f;
    }
    McEstimate e;
    e.mean = sum / n_samples;
    for (int c = 0; c < 3; ++c) {
        const double var = n_samples > 1 ? std::max(0.0, (sum_sq[c] - n_samples * e.mean[c] * e.mean[c]) / (n_samples - 1))
                                         : 0.0;
        e.std_error[c] = std::sqrt(var / n_samples);
    }
    return e;
}

}  // namespace matedit
