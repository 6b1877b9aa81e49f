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

#include "core/optimize.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <Eigen/Dense>

#include "core/parallel.hpp"
#include "core/scene_io.hpp"
#include "core/texture.hpp"

namespace matedit {

// ---------------------------------------------------------------------------
// Albedo library and L_a

AlbedoLibrary update_albedo_library(const AlbedoLibrary& lib, const Image& reference_albedo, const LabelImage& labels) {
    require(reference_albedo.channels() == 3, "reference albedo must be RGB");
    require(lib.ema_decay >= 0 && lib.ema_decay < 1, "ema_decay must lie in [0, 1)");
    const auto avg = region_average(reference_albedo, labels, static_cast<int>(lib.entries.size()));
    AlbedoLibrary out = lib;
    for (size_t i = 0; i < out.entries.size(); ++i) {
        const Vec3 a{avg[i][0], avg[i][1], avg[i][2]};
        // Written as a step toward the average so that fixed points are exact.
        out.entries[i] = lib.entries[i] + (a - lib.entries[i]) * (1.0 - lib.ema_decay);
    }
    return out;
}

std::vector<double> gaussian_taps(double sigma_px) {
    require(sigma_px > 0, "sigma must be positive");
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_px)));
    std::vector<double> taps(radius + 1);
    double total = 0;
    for (int i = 0; i <= radius; ++i) {
        taps[i] = std::exp(-0.5 * i * i / (sigma_px * sigma_px));
        total += i == 0 ? taps[i] : 2 * taps[i];
    }
    for (double& t : taps) t /= total;
    return taps;
}

namespace {

// Separable blur with zero padding; the kernel is symmetric, so this is its
// own adjoint.
void blur_separable(const std::vector<double>& taps, int w, int h, int ch, const std::vector<double>& in,
                    std::vector<double>& out) {
    const int r = static_cast<int>(taps.size()) - 1;
    std::vector<double> tmp(in.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                double s = 0;
                for (int k = -r; k <= r; ++k) {
                    const int xx = x + k;
                    if (xx < 0 || xx >= w) continue;
                    s += taps[std::abs(k)] * in[(static_cast<size_t>(y) * w + xx) * ch + c];
                }
                tmp[(static_cast<size_t>(y) * w + x) * ch + c] = s;
            }
    out.assign(in.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                double s = 0;
                for (int k = -r; k <= r; ++k) {
                    const int yy = y + k;
                    if (yy < 0 || yy >= h) continue;
                    s += taps[std::abs(k)] * tmp[(static_cast<size_t>(yy) * w + x) * ch + c];
                }
                out[(static_cast<size_t>(y) * w + x) * ch + c] = s;
            }
}

}  // namespace

double albedo_regularization(const Image& a_pred, const LabelImage& labels, const AlbedoLibrary& lib, double sigma_px,
                             Image* gradient, AlbedoRegMode mode, bool require_all_labels) {
    require(a_pred.channels() == 3, "albedo must be RGB");
    if (a_pred.width() != labels.width() || a_pred.height() != labels.height())
        fail(ErrorCode::ResolutionMismatch, "albedo and labels differ in resolution");
    const int w = a_pred.width(), h = a_pred.height();
    const size_t n = a_pred.pixel_count();
    const int label_count = static_cast<int>(lib.entries.size());
    if (gradient) *gradient = Image(w, h, 3);

    std::vector<size_t> counts(label_count, 0);
    for (auto l : labels.values()) {
        if (l == kUnlabeled) continue;
        require(l < label_count, "label id outside the albedo library");
        ++counts[l];
    }
    const std::vector<double> taps = mode == AlbedoRegMode::BlurThenMean ? gaussian_taps(sigma_px) : std::vector<double>{};

    double loss = 0;
    std::vector<double> m(n), ma(3 * n), wsum, num, adj;
    for (int label = 0; label < label_count; ++label) {
        if (counts[label] == 0) {
            if (require_all_labels) fail(ErrorCode::EmptyRegion, "label " + std::to_string(label) + " has no pixels");
            continue;
        }
        const double inv_count = 1.0 / static_cast<double>(counts[label]);
        // weight[p]: contribution of pixel p to the label's filtered mean.
        std::vector<double> weight(n, 0.0);
        if (mode == AlbedoRegMode::RegionMean) {
            for (size_t p = 0; p < n; ++p)
                if (labels[p] == label) weight[p] = inv_count;
        } else {
            for (size_t p = 0; p < n; ++p) m[p] = labels[p] == label ? 1.0 : 0.0;
            blur_separable(taps, w, h, 1, m, wsum);
            // F = (1/|R|) sum_{x in R} blur(m a)(x) / W(x) = sum_p a(p) m(p) blur(m / (|R| W))(p)
            std::vector<double> inv(n, 0.0);
            for (size_t p = 0; p < n; ++p)
                if (m[p] > 0) inv[p] = inv_count / wsum[p];
            blur_separable(taps, w, h, 1, inv, adj);
            for (size_t p = 0; p < n; ++p)
                if (m[p] > 0) weight[p] = adj[p];
        }
        Vec3 filtered;
        for (size_t p = 0; p < n; ++p)
            if (weight[p] != 0.0)
                for (int c = 0; c < 3; ++c) filtered[c] += weight[p] * a_pred.values()[3 * p + c];
        const Vec3 diff = filtered - lib.entries[label];
        loss += dot(diff, diff);
        if (gradient)
            for (size_t p = 0; p < n; ++p)
                if (weight[p] != 0.0)
                    for (int c = 0; c < 3; ++c) gradient->values()[3 * p + c] += 2.0 * diff[c] * weight[p];
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Observations and config

std::vector<Observation> load_observations(const std::filesystem::path& dir) {
    const auto j = parse_json_text(read_file(dir / "observations.json"), "observations.json");
    std::vector<Observation> out;
    try {
        for (const auto& v : j.at("views")) {
            Observation o;
            o.camera = camera_from_json(v.at("camera"));
            o.image = read_image(dir / v.at("image").get<std::string>());
            const std::string kind = v.value("kind", "novel");
            require(kind == "reference" || kind == "novel", "view kind must be 'reference' or 'novel'");
            o.reference = kind == "reference";
            if (v.contains("reference_albedo"))
                o.reference_albedo = read_image(dir / v["reference_albedo"].get<std::string>());
            if (v.contains("labels")) o.label_map = load_label_map(dir / v["labels"].get<std::string>());
            if (o.image.width() != o.camera.width || o.image.height() != o.camera.height)
                fail(ErrorCode::ResolutionMismatch, "observation image does not match its camera resolution");
            out.push_back(std::move(o));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("observations.json: ") + e.what());
    }
    return out;
}

void save_observations(const std::filesystem::path& dir, const std::vector<Observation>& views) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["views"] = nlohmann::json::array();
    for (size_t i = 0; i < views.size(); ++i) {
        const auto& o = views[i];
        const std::string stem = "view" + std::to_string(i);
        nlohmann::json v;
        v["camera"] = camera_to_json(o.camera);
        v["image"] = stem + ".pfm";
        write_pfm(dir / (stem + ".pfm"), o.image);
        v["kind"] = o.reference ? "reference" : "novel";
        if (o.reference_albedo) {
            v["reference_albedo"] = stem + "_albedo.pfm";
            write_pfm(dir / (stem + "_albedo.pfm"), *o.reference_albedo);
        }
        if (o.label_map) {
            v["labels"] = stem + "_labels";
            save_label_map(dir / (stem + "_labels"), *o.label_map);
        }
        j["views"].push_back(v);
    }
    write_file(dir / "observations.json", j.dump(2) + "\n");
}

void FitConfig::validate() const {
    require(iterations >= 0, "iterations must be >= 0");
    require(warmup_iterations >= 0, "warmup_iterations must be >= 0");
    for (double lr : {lr_env, lr_albedo, lr_tables, lr_offsets}) require(lr >= 0, "learning rates must be >= 0");
    require(momentum >= 0 && momentum < 1, "momentum must lie in [0, 1)");
    require(adam_beta2 >= 0 && adam_beta2 < 1, "adam_beta2 must lie in [0, 1)");
    for (double wt : {w_data, w_a, w_ref, w_off}) require(wt >= 0, "loss weights must be >= 0");
    require(sigma_gauss > 0, "sigma_gauss must be positive");
    require(lobes >= 1 && lobes <= SGMixture::kMaxLobes, "lobes must lie in [1, 128]");
    require(update_period >= 1, "update_period must be >= 1");
    require(min_region_pixels >= 1, "min_region_pixels must be >= 1");
    require(ema_decay >= 0 && ema_decay < 1, "ema_decay must lie in [0, 1)");
}

FitConfig FitConfig::from_json(const std::string& text) {
    const auto j = parse_json_text(text, "fit config");
    require(j.is_object(), "fit config must be a JSON object");
    FitConfig c;
    try {
        static const char* known[] = {"iterations", "lr_env", "lr_albedo", "lr_tables", "lr_offsets", "momentum",
                                      "w_data", "w_a", "w_ref", "w_off", "sigma_gauss", "lobes", "update_period",
                                      "ema_decay", "assign_threshold", "albedo_reg_mode", "log_every",
                                      "optimizer", "adam_beta2", "min_region_pixels", "warmup_iterations"};
        for (const auto& [key, value] : j.items()) {
            bool ok = false;
            for (const char* k : known) ok = ok || key == k;
            require(ok, "fit config: unknown key '" + key + "'");
        }
        c.iterations = j.value("iterations", c.iterations);
        c.warmup_iterations = j.value("warmup_iterations", c.warmup_iterations);
        c.lr_env = j.value("lr_env", c.lr_env);
        c.lr_albedo = j.value("lr_albedo", c.lr_albedo);
        c.lr_tables = j.value("lr_tables", c.lr_tables);
        c.lr_offsets = j.value("lr_offsets", c.lr_offsets);
        c.momentum = j.value("momentum", c.momentum);
        c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
        const std::string opt = j.value("optimizer", std::string("momentum"));
        if (opt == "momentum") c.optimizer = OptimizerKind::Momentum;
        else if (opt == "adam") c.optimizer = OptimizerKind::Adam;
        else fail(ErrorCode::InvalidArgument, "optimizer must be 'momentum' or 'adam'");
        c.w_data = j.value("w_data", c.w_data);
        c.w_a = j.value("w_a", c.w_a);
        c.w_ref = j.value("w_ref", c.w_ref);
        c.w_off = j.value("w_off", c.w_off);
        c.sigma_gauss = j.value("sigma_gauss", c.sigma_gauss);
        c.lobes = j.value("lobes", c.lobes);
        c.update_period = j.value("update_period", c.update_period);
        c.ema_decay = j.value("ema_decay", c.ema_decay);
        c.assign_threshold = j.value("assign_threshold", c.assign_threshold);
        c.min_region_pixels = j.value("min_region_pixels", c.min_region_pixels);
        c.log_every = j.value("log_every", c.log_every);
        const std::string mode = j.value("albedo_reg_mode", std::string("blur_then_mean"));
        if (mode == "blur_then_mean") c.albedo_reg_mode = AlbedoRegMode::BlurThenMean;
        else if (mode == "region_mean") c.albedo_reg_mode = AlbedoRegMode::RegionMean;
        else fail(ErrorCode::InvalidArgument, "albedo_reg_mode must be 'blur_then_mean' or 'region_mean'");
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("fit config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string FitConfig::to_json() const {
    nlohmann::json j = {{"optimizer", optimizer == OptimizerKind::Adam ? "adam" : "momentum"},
                        {"adam_beta2", adam_beta2},
                        {"iterations", iterations},   {"warmup_iterations", warmup_iterations},
                        {"lr_env", lr_env},
                        {"lr_albedo", lr_albedo},     {"lr_tables", lr_tables},
                        {"lr_offsets", lr_offsets},   {"momentum", momentum},
                        {"w_data", w_data},           {"w_a", w_a},
                        {"w_ref", w_ref},             {"w_off", w_off},
                        {"sigma_gauss", sigma_gauss}, {"lobes", lobes},
                        {"update_period", update_period}, {"ema_decay", ema_decay},
                        {"assign_threshold", assign_threshold},
                        {"min_region_pixels", min_region_pixels},
                        {"albedo_reg_mode", albedo_reg_mode == AlbedoRegMode::BlurThenMean ? "blur_then_mean"
                                                                                            : "region_mean"},
                        {"log_every", log_every}};
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

double softplus(double x) { return x > 30 ? x : std::log1p(std::exp(x)); }
double softplus_inverse(double y) {
    y = std::max(y, 1e-12);
    return y > 30 ? y : std::log(std::expm1(y));
}
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

FitParameters FitParameters::from(const MaterialModel& material, const SGMixture& env) {
    material.validate();
    FitParameters p;
    for (const auto& lobe : env.lobes()) {
        for (int c = 0; c < 3; ++c) p.env_axis.push_back(lobe.axis()[c]);
        p.env_log_sharpness.push_back(std::log(lobe.sharpness()));
        for (int c = 0; c < 3; ++c) p.env_amplitude.push_back(softplus_inverse(lobe.amplitude()[c]));
    }
    p.albedo = material.albedo;
    p.log_sharpness = material.table.log_sharpness;
    for (const auto& s : material.table.specular)
        for (int c = 0; c < 3; ++c) p.specular.push_back(s[c]);
    p.roughness_offset = material.roughness_offset;
    p.specular_offset = material.specular_offset;
    return p;
}

FitParameters FitParameters::zeros_like() const {
    FitParameters z;
    z.env_axis.assign(env_axis.size(), 0.0);
    z.env_log_sharpness.assign(env_log_sharpness.size(), 0.0);
    z.env_amplitude.assign(env_amplitude.size(), 0.0);
    z.albedo = Image(albedo.width(), albedo.height(), albedo.channels());
    z.log_sharpness.assign(log_sharpness.size(), 0.0);
    z.specular.assign(specular.size(), 0.0);
    z.roughness_offset = Image(roughness_offset.width(), roughness_offset.height(), roughness_offset.channels());
    z.specular_offset = Image(specular_offset.width(), specular_offset.height(), specular_offset.channels());
    return z;
}

std::span<double> FitParameters::group(Group g) {
    switch (g) {
        case Group::EnvAxis: return env_axis;
        case Group::EnvSharpness: return env_log_sharpness;
        case Group::EnvAmplitude: return env_amplitude;
        case Group::Albedo: return albedo.values();
        case Group::Roughness: return log_sharpness;
        case Group::Specular: return specular;
        case Group::RoughnessOffset: return roughness_offset.values();
        case Group::SpecularOffset: return specular_offset.values();
    }
    return {};
}

std::span<const double> FitParameters::group(Group g) const { return const_cast<FitParameters*>(this)->group(g); }

const char* group_name(FitParameters::Group g) {
    using G = FitParameters::Group;
    switch (g) {
        case G::EnvAxis: return "env_axis";
        case G::EnvSharpness: return "env_sharpness";
        case G::EnvAmplitude: return "env_amplitude";
        case G::Albedo: return "albedo";
        case G::Roughness: return "roughness";
        case G::Specular: return "specular";
        case G::RoughnessOffset: return "roughness_offset";
        case G::SpecularOffset: return "specular_offset";
    }
    return "?";
}

SGMixture FitParameters::environment() const {
    std::vector<SphericalGaussian> lobes;
    for (size_t k = 0; k < env_log_sharpness.size(); ++k) {
        const Vec3 q{env_axis[3 * k], env_axis[3 * k + 1], env_axis[3 * k + 2]};
        if (!(norm(q) > 1e-12)) fail(ErrorCode::Divergence, "environment lobe axis collapsed to zero");
        const Vec3 mu{softplus(env_amplitude[3 * k]), softplus(env_amplitude[3 * k + 1]),
                      softplus(env_amplitude[3 * k + 2])};
        lobes.emplace_back(normalize(q), std::exp(env_log_sharpness[k]), mu);
    }
    return SGMixture(std::move(lobes));
}

MaterialModel FitParameters::material(const MaterialModel& base) const {
    MaterialModel m = base;
    m.albedo = albedo;
    m.table.log_sharpness = log_sharpness;
    for (size_t l = 0; l < m.table.specular.size(); ++l)
        m.table.specular[l] = {specular[3 * l], specular[3 * l + 1], specular[3 * l + 2]};
    m.roughness_offset = roughness_offset;
    m.specular_offset = specular_offset;
    return m;
}

std::string loss_trace_csv(const std::vector<LossRecord>& trace) {
    std::ostringstream out;
    out << "iter,data,L_a,ref,offset,total\n";
    char line[256];
    for (const auto& r : trace) {
        std::snprintf(line, sizeof line, "%d,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.iteration, r.loss.data,
                      r.loss.albedo_reg, r.loss.reference, r.loss.offset, r.loss.total);
        out << line;
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Objective

FitProblem::FitProblem(const Scene& scene, std::vector<Observation> observations, FitConfig config)
    : scene_(scene), observations_(std::move(observations)), config_(config) {
    config_.validate();
    require(scene.material() != nullptr, "fit needs a scene material");
    if (observations_.empty()) fail(ErrorCode::EmptyInput, "fit needs at least one observation");
    for (size_t v = 0; v < observations_.size(); ++v)
        if (observations_[v].reference && reference_view_ < 0) reference_view_ = static_cast<int>(v);
    require(reference_view_ >= 0, "fit needs a reference observation");

    const MaterialModel& mat = *scene.material();
    texel_weight_ = Image(mat.width(), mat.height(), 1);
    for (const auto& o : observations_) {
        require(o.image.channels() == 3, "observation images must be RGB");
        if (o.image.width() != o.camera.width || o.image.height() != o.camera.height)
            fail(ErrorCode::ResolutionMismatch, "observation image does not match its camera resolution");
        gbuffers_.push_back(trace_gbuffer(scene, o.camera));
        const GBuffer& g = gbuffers_.back();
        size_t covered = 0;
        for (size_t i = 0; i < g.samples.size(); ++i)
            if (g.coverage[i] && dot(g.view_dirs[i], g.samples[i].normal) > 0) ++covered;
        if (covered == 0) fail(ErrorCode::ZeroCoverage, "an observation does not see the mesh");
        covered_.push_back(covered);
        for (size_t i = 0; i < g.samples.size(); ++i)
            if (g.coverage[i]) splat_uv(texel_weight_, g.samples[i].uv, 1.0 / static_cast<double>(covered));
    }

    // Image-space semantic labels: given maps, or pseudo-labels from the
    // reference map's library.
    const auto& ref = observations_[reference_view_];
    view_labels_.resize(observations_.size());
    if (ref.label_map && config_.w_a > 0) {
        for (size_t v = 0; v < observations_.size(); ++v) {
            const auto& o = observations_[v];
            LabelImage labels;
            if (o.label_map) {
                if (o.label_map->labels.width() != o.camera.width || o.label_map->labels.height() != o.camera.height)
                    fail(ErrorCode::ResolutionMismatch, "label map does not match its view");
                labels = o.label_map->labels;
            } else {
                labels = assign_pseudo_labels(o.image, ref.label_map->library, config_.assign_threshold,
                                              &gbuffers_[v].coverage)
                             .labels;
            }
            std::vector<size_t> area(ref.label_map->label_count, 0);
            for (size_t i = 0; i < labels.pixel_count(); ++i) {
                if (!gbuffers_[v].coverage[i]) labels[i] = kUnlabeled;
                if (labels[i] != kUnlabeled) {
                    require(labels[i] < area.size(), "label id outside the reference label map");
                    ++area[labels[i]];
                }
            }
            // Slivers along region borders give unreliable means.
            for (auto& l : labels.values())
                if (l != kUnlabeled && area[l] < static_cast<size_t>(config_.min_region_pixels)) l = kUnlabeled;
            view_labels_[v] = std::move(labels);
        }
        library_.update_period = config_.update_period;
        library_.ema_decay = config_.ema_decay;
        library_.entries.assign(ref.label_map->label_count, Vec3{});
        const Image& source = ref.reference_albedo ? *ref.reference_albedo : render_albedo(mat.albedo, reference_view_);
        const auto avg = region_average(source, *view_labels_[reference_view_], ref.label_map->label_count);
        for (int l = 0; l < ref.label_map->label_count; ++l) library_.entries[l] = {avg[l][0], avg[l][1], avg[l][2]};
    }
}

Image FitProblem::render_albedo(const Image& albedo, size_t view) const {
    const GBuffer& g = gbuffers_[view];
    Image out(g.width, g.height, 3);
    for (size_t i = 0; i < g.samples.size(); ++i)
        if (g.coverage[i]) {
            const Vec3 a = sample_uv_rgb(albedo, g.samples[i].uv);
            for (int c = 0; c < 3; ++c) out.values()[3 * i + c] = a[c];
        }
    return out;
}

void FitProblem::refresh_library(const FitParameters& params) {
    if (library_.entries.empty()) return;
    const auto& ref = observations_[reference_view_];
    const Image source = ref.reference_albedo ? *ref.reference_albedo : render_albedo(params.albedo, reference_view_);
    library_ = update_albedo_library(library_, source, *view_labels_[reference_view_]);
}

LossBreakdown FitProblem::evaluate(const FitParameters& params, FitParameters* gradient) const {
    const SGMixture env = params.environment();
    const MaterialModel mat = params.material(*scene_.material());
    const size_t views = observations_.size();
    const size_t lobes = env.size();

    struct ViewResult {
        double data = 0, reg = 0, ref = 0;
        FitParameters grad;
        std::vector<Vec3> d_axis;
        std::vector<double> d_sharp;
        std::vector<Vec3> d_amp;
    };
    std::vector<ViewResult> results(views);

    parallel_tasks(static_cast<int>(views), [&](int v) {
        ViewResult& R = results[v];
        const Observation& o = observations_[v];
        const GBuffer& g = gbuffers_[v];
        const double inv_n = 1.0 / static_cast<double>(covered_[v]);
        if (gradient) {
            R.grad = params.zeros_like();
            R.d_axis.assign(lobes, {});
            R.d_sharp.assign(lobes, 0.0);
            R.d_amp.assign(lobes, {});
        }
        ShadeGradient sg;
        for (size_t i = 0; i < g.samples.size(); ++i) {
            if (!g.coverage[i]) continue;
            const SurfaceSample& s = g.samples[i];
            const Vec3& wo = g.view_dirs[i];
            if (dot(wo, s.normal) <= 0) continue;
            const Vec3 target{o.image.values()[3 * i], o.image.values()[3 * i + 1], o.image.values()[3 * i + 2]};
            const MaterialValues mv = material_at(mat, s.uv, s.label);
            if (!gradient) {
                const Vec3 r = shade_point_sg(s, wo, mv, env).radiance - target;
                R.data += config_.w_data * inv_n * dot(r, r);
                continue;
            }
            shade_point_sg_grad(
                s, wo, mv, env,
                [&](const Vec3& radiance) {
                    const Vec3 r = radiance - target;
                    R.data += config_.w_data * inv_n * dot(r, r);
                    return r * (2.0 * config_.w_data * inv_n);
                },
                sg);
            splat_uv_rgb(R.grad.albedo, s.uv, sg.d_albedo);
            const double d_log = sg.d_sharpness * mv.sharpness;
            R.grad.log_sharpness[s.label] += d_log;
            splat_uv(R.grad.roughness_offset, s.uv, d_log);
            const Vec3 raw = mat.table.specular[s.label] + sample_uv_rgb(mat.specular_offset, s.uv);
            Vec3 d_spec;
            for (int c = 0; c < 3; ++c)
                if (raw[c] >= 0.0 && raw[c] <= 1.0) {  // one-sided at the bounds so projected values can leave them
                    d_spec[c] = sg.d_specular[c];
                    R.grad.specular[3 * s.label + c] += sg.d_specular[c];
                }
            splat_uv_rgb(R.grad.specular_offset, s.uv, d_spec);
            for (size_t k = 0; k < lobes; ++k) {
                R.d_axis[k] += sg.d_lobe_axis[k];
                R.d_sharp[k] += sg.d_lobe_sharpness[k];
                R.d_amp[k] += sg.d_lobe_amplitude[k];
            }
        }

        if (o.reference && o.reference_albedo && config_.w_ref > 0) {
            const Image& ref = *o.reference_albedo;
            for (size_t i = 0; i < g.samples.size(); ++i) {
                if (!g.coverage[i]) continue;
                const Vec2 uv = g.samples[i].uv;
                const Vec3 r = sample_uv_rgb(params.albedo, uv) -
                               Vec3{ref.values()[3 * i], ref.values()[3 * i + 1], ref.values()[3 * i + 2]};
                R.ref += config_.w_ref * inv_n * dot(r, r);
                if (gradient) splat_uv_rgb(R.grad.albedo, uv, r * (2.0 * config_.w_ref * inv_n));
            }
        }

        if (view_labels_[v] && !library_.entries.empty() && config_.w_a > 0) {
            const Image a_pred = render_albedo(params.albedo, v);
            Image d_pred;
            R.reg = config_.w_a * albedo_regularization(a_pred, *view_labels_[v], library_, config_.sigma_gauss,
                                                        gradient ? &d_pred : nullptr, config_.albedo_reg_mode, false);
            if (gradient)
                for (size_t i = 0; i < g.samples.size(); ++i)
                    if (g.coverage[i]) {
                        const Vec3 d{d_pred.values()[3 * i], d_pred.values()[3 * i + 1], d_pred.values()[3 * i + 2]};
                        splat_uv_rgb(R.grad.albedo, g.samples[i].uv, d * config_.w_a);
                    }
        }
    });

    LossBreakdown loss;
    for (const auto& R : results) {
        loss.data += R.data;
        loss.albedo_reg += R.reg;
        loss.reference += R.ref;
    }
    const double n_ro = static_cast<double>(params.roughness_offset.values().size());
    const double n_so = static_cast<double>(params.specular_offset.values().size());
    for (double v : params.roughness_offset.values()) loss.offset += config_.w_off * v * v / n_ro;
    for (double v : params.specular_offset.values()) loss.offset += config_.w_off * v * v / n_so;
    loss.total = loss.data + loss.albedo_reg + loss.reference + loss.offset;

    if (gradient) {
        *gradient = params.zeros_like();
        std::vector<Vec3> d_axis(lobes);
        std::vector<double> d_sharp(lobes, 0.0);
        std::vector<Vec3> d_amp(lobes);
        for (const auto& R : results) {  // fixed view order
            for (auto grp : FitParameters::kGroups) {
                auto dst = gradient->group(grp);
                const auto src = R.grad.group(grp);
                for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
            }
            for (size_t k = 0; k < lobes; ++k) {
                d_axis[k] += R.d_axis[k];
                d_sharp[k] += R.d_sharp[k];
                d_amp[k] += R.d_amp[k];
            }
        }
        for (size_t k = 0; k < lobes; ++k) {
            const Vec3 q{params.env_axis[3 * k], params.env_axis[3 * k + 1], params.env_axis[3 * k + 2]};
            const double len = norm(q);
            const Vec3 xi = q / len;
            const Vec3 dq = (d_axis[k] - xi * dot(xi, d_axis[k])) / len;
            for (int c = 0; c < 3; ++c) {
                gradient->env_axis[3 * k + c] = dq[c];
                gradient->env_amplitude[3 * k + c] = d_amp[k][c] * sigmoid(params.env_amplitude[3 * k + c]);
            }
            gradient->env_log_sharpness[k] = d_sharp[k] * std::exp(params.env_log_sharpness[k]);
        }
        auto ro = gradient->roughness_offset.values();
        for (size_t i = 0; i < ro.size(); ++i) ro[i] += 2.0 * config_.w_off * params.roughness_offset.values()[i] / n_ro;
        auto so = gradient->specular_offset.values();
        for (size_t i = 0; i < so.size(); ++i) so[i] += 2.0 * config_.w_off * params.specular_offset.values()[i] / n_so;
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Optimizer

FitResult fit(const Scene& scene, const std::vector<Observation>& observations, const FitConfig& config,
              const FitProgress& progress) {
    require(scene.environment() != nullptr, "fit needs an initial environment");
    FitProblem problem(scene, observations, config);
    FitParameters p = FitParameters::from(*scene.material(), *scene.environment());
    FitParameters velocity = p.zeros_like();
    FitParameters second = p.zeros_like();  // Adam only
    FitParameters grad;
    const bool adam = config.optimizer == OptimizerKind::Adam;

    // Texture groups step in units of their observation density.
    const Image& weight = problem.texel_weight();
    double mean_w = 0;
    size_t seen = 0;
    for (double w : weight.values())
        if (w > 0) {
            mean_w += w;
            ++seen;
        }
    mean_w = seen ? mean_w / static_cast<double>(seen) : 1.0;
    std::vector<double> texel_scale(weight.pixel_count());
    for (size_t t = 0; t < texel_scale.size(); ++t) texel_scale[t] = 1.0 / (weight[t] + 1e-3 * mean_w);

    using G = FitParameters::Group;
    auto rate = [&](G g) {
        switch (g) {
            case G::EnvAxis:
            case G::EnvSharpness:
            case G::EnvAmplitude: return config.lr_env;
            case G::Albedo: return config.lr_albedo;
            case G::Roughness:
            case G::Specular: return config.lr_tables;
            case G::RoughnessOffset:
            case G::SpecularOffset: return config.lr_offsets;
        }
        return 0.0;
    };

    FitResult result;
    for (int it = 0; it <= config.iterations; ++it) {
        if (problem.has_albedo_regularizer() && it > 0 && it % config.update_period == 0) problem.refresh_library(p);
        const bool last = it == config.iterations;
        const LossBreakdown loss = problem.evaluate(p, last ? nullptr : &grad);
        if (!std::isfinite(loss.total))
            fail(ErrorCode::Divergence, "fit diverged at iteration " + std::to_string(it));
        result.trace.push_back({it, loss});
        if (progress && (last || (config.log_every > 0 && it % config.log_every == 0))) progress(result.trace.back());
        if (last) break;

        for (auto g : FitParameters::kGroups) {
            const double lr = it < config.warmup_iterations && g != G::Albedo ? 0.0 : rate(g);
            if (lr == 0) continue;
            auto x = p.group(g);
            auto v = velocity.group(g);
            const auto d = grad.group(g);
            if (adam) {
                auto s2 = second.group(g);
                const double b1 = config.momentum, b2 = config.adam_beta2;
                const double c1 = 1.0 - std::pow(b1, it + 1), c2 = 1.0 - std::pow(b2, it + 1);
                for (size_t i = 0; i < x.size(); ++i) {
                    v[i] = b1 * v[i] + (1.0 - b1) * d[i];
                    s2[i] = b2 * s2[i] + (1.0 - b2) * d[i] * d[i];
                    x[i] -= lr * (v[i] / c1) / (std::sqrt(s2[i] / c2) + 1e-12);
                }
                continue;
            }
            const bool texture = g == G::Albedo || g == G::RoughnessOffset || g == G::SpecularOffset;
            const size_t ch = texture ? x.size() / texel_scale.size() : 1;
            for (size_t i = 0; i < x.size(); ++i) {
                const double scale = texture ? texel_scale[i / ch] : 1.0;
                v[i] = config.momentum * v[i] - lr * scale * d[i];
                x[i] += v[i];
            }
        }
        for (double& a : p.albedo.values()) a = std::clamp(a, 0.0, 1.0);
        for (double& s : p.specular) s = std::clamp(s, 0.0, 1.0);
        for (size_t k = 0; k < p.env_log_sharpness.size(); ++k) {
            Vec3 q{p.env_axis[3 * k], p.env_axis[3 * k + 1], p.env_axis[3 * k + 2]};
            const double len = norm(q);
            if (!(len > 1e-12)) fail(ErrorCode::Divergence, "fit diverged at iteration " + std::to_string(it));
            for (int c = 0; c < 3; ++c) p.env_axis[3 * k + c] = q[c] / len;
        }
    }
    result.material = p.material(*scene.material());
    result.environment = p.environment();
    result.library = problem.library();
    return result;
}

double gradient_check(const LossFunction& loss, std::vector<double> x, const std::vector<size_t>& coords, double eps) {
    std::vector<double> g;
    loss(x, &g);
    double worst = 0;
    for (size_t i : coords) {
        require(i < x.size(), "gradient_check: coordinate out of range");
        const double x0 = x[i];
        x[i] = x0 + eps;
        const double fp = loss(x, nullptr);
        x[i] = x0 - eps;
        const double fm = loss(x, nullptr);
        x[i] = x0;
        const double fd = (fp - fm) / (2 * eps);
        worst = std::max(worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-8}));
    }
    return worst;
}

double gradient_check(const FitProblem& problem, const FitParameters& params, FitParameters::Group group, double eps,
                      size_t max_coords) {
    const size_t n = params.group(group).size();
    if (n == 0) return 0.0;
    std::vector<size_t> coords;
    const size_t step = std::max<size_t>(1, n / max_coords);
    for (size_t i = 0; i < n && coords.size() < max_coords; i += step) coords.push_back(i);
    std::vector<double> x0(params.group(group).begin(), params.group(group).end());
    LossFunction f = [&](std::span<const double> x, std::vector<double>* g) {
        FitParameters p = params;
        std::copy(x.begin(), x.end(), p.group(group).begin());
        if (!g) return problem.evaluate(p, nullptr).total;
        FitParameters grad;
        const double v = problem.evaluate(p, &grad).total;
        const auto gg = grad.group(group);
        g->assign(gg.begin(), gg.end());
        return v;
    };
    return gradient_check(f, x0, coords, eps);
}

// ---------------------------------------------------------------------------
// Environment map fitting

namespace {

struct LatLongSamples {
    std::vector<Vec3> dirs;
    std::vector<double> weight;  // solid angle
    std::vector<Vec3> value;
};

// Box-downsamples to at most 64x32 so the normal equations stay small.
LatLongSamples latlong_samples(const Image& img) {
    const int w = std::min(img.width(), 64), h = std::min(img.height(), 32);
    LatLongSamples s;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int x0 = x * img.width() / w, x1 = (x + 1) * img.width() / w;
            const int y0 = y * img.height() / h, y1 = (y + 1) * img.height() / h;
            Vec3 sum;
            double wsum = 0;
            for (int yy = y0; yy < y1; ++yy) {
                const double om = latlong_solid_angle(yy, img.width(), img.height());
                for (int xx = x0; xx < x1; ++xx) {
                    sum += rgb_at(img, xx, yy) * om;
                    wsum += om;
                }
            }
            s.dirs.push_back(latlong_direction(x, y, w, h));
            s.weight.push_back(latlong_solid_angle(y, w, h));
            s.value.push_back(wsum > 0 ? sum / wsum : Vec3{});
        }
    return s;
}

struct LobeParams {
    Vec3 axis;
    double log_sharpness;
    Vec3 amplitude;
};

double env_cost(const LatLongSamples& s, const std::vector<LobeParams>& lobes) {
    double cost = 0;
    for (size_t p = 0; p < s.dirs.size(); ++p) {
        Vec3 f;
        for (const auto& l : lobes)
            f += l.amplitude * std::exp(std::exp(l.log_sharpness) * (dot(l.axis, s.dirs[p]) - 1.0));
        const Vec3 r = f - s.value[p];
        cost += s.weight[p] * dot(r, r);
    }
    return cost;
}

// Non-negative least squares for the amplitudes of fixed lobes (active set).
void fit_amplitudes(const LatLongSamples& s, std::vector<LobeParams>& lobes) {
    const int m = static_cast<int>(lobes.size());
    const int n = static_cast<int>(s.dirs.size());
    Eigen::MatrixXd a(n, m);
    for (int p = 0; p < n; ++p)
        for (int k = 0; k < m; ++k)
            a(p, k) = std::sqrt(s.weight[p]) *
                      std::exp(std::exp(lobes[k].log_sharpness) * (dot(lobes[k].axis, s.dirs[p]) - 1.0));
    for (int c = 0; c < 3; ++c) {
        Eigen::VectorXd b(n);
        for (int p = 0; p < n; ++p) b(p) = std::sqrt(s.weight[p]) * s.value[p][c];
        std::vector<bool> active(m, true);
        Eigen::VectorXd sol = Eigen::VectorXd::Zero(m);
        for (int round = 0; round < m; ++round) {
            std::vector<int> idx;
            for (int k = 0; k < m; ++k)
                if (active[k]) idx.push_back(k);
            if (idx.empty()) break;
            Eigen::MatrixXd sub(n, idx.size());
            for (size_t j = 0; j < idx.size(); ++j) sub.col(j) = a.col(idx[j]);
            const Eigen::MatrixXd ata = sub.transpose() * sub + 1e-12 * Eigen::MatrixXd::Identity(idx.size(), idx.size());
            const Eigen::VectorXd x = ata.ldlt().solve(sub.transpose() * b);
            sol.setZero();
            bool negative = false;
            for (size_t j = 0; j < idx.size(); ++j) {
                if (x(j) < 0) {
                    active[idx[j]] = false;
                    negative = true;
                } else {
                    sol(idx[j]) = x(j);
                }
            }
            if (!negative) break;
        }
        for (int k = 0; k < m; ++k) lobes[k].amplitude[c] = std::max(0.0, sol(k));
    }
}

}  // namespace

EnvFitResult fit_env_map(const Image& latlong, int lobe_count, int iterations) {
    require(lobe_count >= 1 && lobe_count <= SGMixture::kMaxLobes, "lobe count must lie in [1, 128]");
    require(latlong.channels() == 3, "environment image must be RGB");
    require(latlong.width() >= 2 && latlong.height() >= 1, "environment image is too small");
    const LatLongSamples s = latlong_samples(latlong);

    // Uniform sharpness chosen so neighbouring lobes overlap at ~e^-1.
    const double spacing = std::sqrt(4.0 * kPi / lobe_count);
    const double lambda0 = std::max(0.25, 2.0 / (spacing * spacing));
    std::vector<LobeParams> lobes;
    for (const Vec3& d : fibonacci_sphere(lobe_count)) lobes.push_back({d, std::log(lambda0), {}});
    fit_amplitudes(s, lobes);

    // Levenberg-Marquardt over (axis tangent 2, log sharpness, amplitude 3) per lobe.
    const int m = lobe_count, np = 6 * m;
    double cost = env_cost(s, lobes);
    double damping = 1e-3;
    for (int it = 0; it < iterations && cost > 0; ++it) {
        Eigen::MatrixXd jtj = Eigen::MatrixXd::Zero(np, np);
        Eigen::VectorXd jtr = Eigen::VectorXd::Zero(np);
        std::vector<Vec3> tan1(m), tan2(m);
        for (int k = 0; k < m; ++k) make_frame(lobes[k].axis, tan1[k], tan2[k]);
        Eigen::VectorXd row(np);
        for (size_t p = 0; p < s.dirs.size(); ++p) {
            const double sw = std::sqrt(s.weight[p]);
            Vec3 f;
            std::vector<double> gk(m);
            for (int k = 0; k < m; ++k) {
                gk[k] = std::exp(std::exp(lobes[k].log_sharpness) * (dot(lobes[k].axis, s.dirs[p]) - 1.0));
                f += lobes[k].amplitude * gk[k];
            }
            for (int c = 0; c < 3; ++c) {
                row.setZero();
                for (int k = 0; k < m; ++k) {
                    const double lam = std::exp(lobes[k].log_sharpness);
                    const double base = sw * lobes[k].amplitude[c] * gk[k];
                    row(6 * k + 0) = base * lam * dot(tan1[k], s.dirs[p]);
                    row(6 * k + 1) = base * lam * dot(tan2[k], s.dirs[p]);
                    row(6 * k + 2) = base * lam * (dot(lobes[k].axis, s.dirs[p]) - 1.0);
                    row(6 * k + 3 + c) = sw * gk[k];
                }
                const double r = sw * (f[c] - s.value[p][c]);
                jtj.selfadjointView<Eigen::Lower>().rankUpdate(row);
                jtr += row * r;
            }
        }
        jtj = jtj.selfadjointView<Eigen::Lower>();
        bool improved = false;
        for (int attempt = 0; attempt < 10 && !improved; ++attempt) {
            Eigen::MatrixXd a = jtj;
            for (int i = 0; i < np; ++i) a(i, i) += damping * (jtj(i, i) + 1e-12);
            const Eigen::VectorXd delta = a.ldlt().solve(-jtr);
            if (!delta.allFinite()) {
                damping *= 10;
                continue;
            }
            std::vector<LobeParams> trial = lobes;
            for (int k = 0; k < m; ++k) {
                trial[k].axis = normalize(lobes[k].axis + tan1[k] * delta(6 * k) + tan2[k] * delta(6 * k + 1));
                trial[k].log_sharpness = std::clamp(lobes[k].log_sharpness + delta(6 * k + 2), std::log(1e-4), std::log(1e4));
                for (int c = 0; c < 3; ++c) trial[k].amplitude[c] = std::max(0.0, lobes[k].amplitude[c] + delta(6 * k + 3 + c));
            }
            const double trial_cost = env_cost(s, trial);
            if (trial_cost < cost) {
                lobes = std::move(trial);
                improved = cost - trial_cost > 1e-15 * cost;
                cost = trial_cost;
                damping = std::max(damping * 0.3, 1e-9);
                if (!improved) break;
                improved = true;
            } else {
                damping *= 10;
            }
        }
        if (!improved) break;
    }

    std::vector<SphericalGaussian> out;
    for (const auto& l : lobes) out.emplace_back(l.axis, std::exp(l.log_sharpness), l.amplitude);
    EnvFitResult r;
    r.environment = SGMixture(std::move(out));

    // Residual on the full-resolution input.
    double err = 0, mean = 0, total_w = 0;
    for (int y = 0; y < latlong.height(); ++y) {
        const double om = latlong_solid_angle(y, latlong.width(), latlong.height());
        for (int x = 0; x < latlong.width(); ++x) {
            const Vec3 d = latlong_direction(x, y, latlong.width(), latlong.height());
            const Vec3 v = rgb_at(latlong, x, y);
            const Vec3 e = eval_mixture(r.environment, d) - v;
            err += om * dot(e, e) / 3.0;
            mean += om * (v.x + v.y + v.z) / 3.0;
            total_w += om;
        }
    }
    r.residual_rms = std::sqrt(err / total_w);
    r.mean_radiance = mean / total_w;
    return r;
}

}  // namespace matedit
