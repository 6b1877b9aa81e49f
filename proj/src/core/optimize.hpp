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

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/render.hpp"
#include "core/semantics.hpp"

namespace matedit {

struct AlbedoLibrary {
    std::vector<Vec3> entries;  // A_s, one row per semantic label
    int update_period = 10;
    double ema_decay = 0.9;
};

/// A_s <- decay * A_s + (1 - decay) * region_average(reference_albedo).
AlbedoLibrary update_albedo_library(const AlbedoLibrary& lib, const Image& reference_albedo, const LabelImage& labels);

enum class AlbedoRegMode {
    BlurThenMean,  // mask-renormalized Gaussian blur, then region mean
    RegionMean,    // plain region mean
};

/// L_a = sum over labels of |F(A_pred within label) - A_s|^2. Labels with no
/// pixels are skipped unless require_all_labels is set, in which case they
/// raise an empty-region error. When `gradient` is non-null it receives
/// dL_a/dA_pred (same shape as A_pred).
double albedo_regularization(const Image& a_pred, const LabelImage& labels, const AlbedoLibrary& lib, double sigma_px,
                             Image* gradient = nullptr, AlbedoRegMode mode = AlbedoRegMode::BlurThenMean,
                             bool require_all_labels = true);

/// Truncated (3 sigma) normalized Gaussian taps, index 0 at the center.
std::vector<double> gaussian_taps(double sigma_px);

struct Observation {
    Camera camera;
    Image image;  // linear RGB
    bool reference = false;
    std::optional<Image> reference_albedo;
    std::optional<SemanticLabelMap> label_map;
};

/// Reads `observations.json` in `dir`: {"views": [{"camera": {...}, "image": "v0.pfm",
/// "kind": "reference"|"novel", "reference_albedo": "...", "labels": "stem"}]}.
std::vector<Observation> load_observations(const std::filesystem::path& dir);
void save_observations(const std::filesystem::path& dir, const std::vector<Observation>& views);

enum class OptimizerKind {
    Momentum,  // heavy-ball gradient descent, texture groups preconditioned
    Adam,      // per-coordinate adaptive steps; `momentum` is beta1
};

struct FitConfig {
    OptimizerKind optimizer = OptimizerKind::Momentum;
    int iterations = 2000;
    int warmup_iterations = 0;  // albedo-only steps before the other groups start
    double lr_env = 1e-2;
    double lr_albedo = 5e-2;
    double lr_tables = 1e-2;
    double lr_offsets = 1e-2;
    double momentum = 0.9;
    double adam_beta2 = 0.999;
    double w_data = 1.0;
    double w_a = 0.1;
    double w_ref = 1.0;
    double w_off = 1e-3;
    double sigma_gauss = 3.0;
    int lobes = SGMixture::kDefaultLobes;
    int update_period = 10;
    double ema_decay = 0.9;
    double assign_threshold = kDefaultAssignThreshold;
    int min_region_pixels = 16;  // smaller per-view label regions are left out of L_a
    AlbedoRegMode albedo_reg_mode = AlbedoRegMode::BlurThenMean;
    int log_every = 0;  // 0 disables progress output

    void validate() const;
    static FitConfig from_json(const std::string& text);
    std::string to_json() const;
};

/// Unconstrained optimization variables. Environment lobes are stored as
/// raw axis vectors (normalized on use), log-sharpness and softplus-inverse
/// amplitudes; everything else is stored directly.
struct FitParameters {
    std::vector<double> env_axis;       // 3 per lobe
    std::vector<double> env_log_sharpness;
    std::vector<double> env_amplitude;  // 3 per lobe, softplus^-1(mu)
    Image albedo;
    std::vector<double> log_sharpness;  // R_s
    std::vector<double> specular;       // S_s, 3 per label
    Image roughness_offset;
    Image specular_offset;

    enum class Group {
        EnvAxis,
        EnvSharpness,
        EnvAmplitude,
        Albedo,
        Roughness,
        Specular,
        RoughnessOffset,
        SpecularOffset
    };
    static constexpr Group kGroups[] = {Group::EnvAxis,   Group::EnvSharpness, Group::EnvAmplitude,
                                        Group::Albedo,    Group::Roughness,    Group::Specular,
                                        Group::RoughnessOffset, Group::SpecularOffset};

    static FitParameters from(const MaterialModel& material, const SGMixture& env);
    /// Zero-valued parameters with the same shapes.
    FitParameters zeros_like() const;

    std::span<double> group(Group g);
    std::span<const double> group(Group g) const;

    SGMixture environment() const;
    /// Material with this parameter set's fields and `base`'s label atlas.
    MaterialModel material(const MaterialModel& base) const;
};

const char* group_name(FitParameters::Group g);

struct LossBreakdown {
    double data = 0;
    double albedo_reg = 0;
    double reference = 0;
    double offset = 0;
    double total = 0;
};

struct LossRecord {
    int iteration = 0;
    LossBreakdown loss;
};

std::string loss_trace_csv(const std::vector<LossRecord>& trace);

/// The differentiable objective over a fixed scene and set of observations.
/// GBuffers and pseudo-labels are computed once at construction.
class FitProblem {
public:
    FitProblem(const Scene& scene, std::vector<Observation> observations, FitConfig config);

    /// Total loss; fills `gradient` (shaped like `params`) when non-null.
    LossBreakdown evaluate(const FitParameters& params, FitParameters* gradient) const;

    const AlbedoLibrary& library() const { return library_; }
    AlbedoLibrary& library() { return library_; }
    bool has_albedo_regularizer() const { return !library_.entries.empty(); }
    /// Refreshes A_s from the reference albedo (or, without one, from the
    /// reference view's current albedo render).
    void refresh_library(const FitParameters& params);

    /// Per-texel observation weight: sum over views of the bilinear weights
    /// reaching each texel, divided by the view's pixel count.
    const Image& texel_weight() const { return texel_weight_; }

    const FitConfig& config() const { return config_; }
    const std::vector<Observation>& observations() const { return observations_; }
    const std::vector<GBuffer>& gbuffers() const { return gbuffers_; }
    const std::vector<std::optional<LabelImage>>& view_labels() const { return view_labels_; }
    const MaterialModel& base_material() const { return *scene_.material(); }

private:
    Image render_albedo(const Image& albedo, size_t view) const;

    const Scene& scene_;
    std::vector<Observation> observations_;
    FitConfig config_;
    std::vector<GBuffer> gbuffers_;
    std::vector<size_t> covered_;
    std::vector<std::optional<LabelImage>> view_labels_;
    int reference_view_ = -1;
    AlbedoLibrary library_;
    Image texel_weight_;
};

struct FitResult {
    MaterialModel material;
    SGMixture environment;
    std::vector<LossRecord> trace;
    AlbedoLibrary library;
};

using FitProgress = std::function<void(const LossRecord&)>;

/// Gradient descent on all parameter groups (momentum or Adam). Under
/// momentum, texture groups are preconditioned by their per-texel
/// observation weight.
FitResult fit(const Scene& scene, const std::vector<Observation>& observations, const FitConfig& config,
              const FitProgress& progress = {});

/// Central-difference check: max over `coords` of
/// |g_fd - g_an| / max(|g_fd|, |g_an|, 1e-8).
using LossFunction = std::function<double(std::span<const double> x, std::vector<double>* gradient)>;
double gradient_check(const LossFunction& loss, std::vector<double> x, const std::vector<size_t>& coords, double eps);

/// gradient_check on one parameter group of a FitProblem, sampling up to
/// `max_coords` evenly spaced coordinates.
double gradient_check(const FitProblem& problem, const FitParameters& params, FitParameters::Group group, double eps,
                      size_t max_coords = 64);

struct EnvFitResult {
    SGMixture environment;
    double residual_rms = 0;  // solid-angle weighted, per channel
    double mean_radiance = 0;
};

/// Fits an M-lobe mixture to a lat-long radiance image: Fibonacci-sphere
/// initialization with uniform sharpness, non-negative least-squares
/// amplitudes, then Levenberg-Marquardt on all lobe parameters.
EnvFitResult fit_env_map(const Image& latlong, int lobes, int iterations = 100);

}  // namespace matedit
