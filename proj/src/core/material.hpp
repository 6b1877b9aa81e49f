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
#include <filesystem>
#include <string>
#include <vector>

#include "core/image.hpp"
#include "core/sg.hpp"

namespace matedit {

// Cosine-lobe fit: dot(w, n) ~ G(w; n, 0.0315, 32.7080) - 31.7003.
inline constexpr double kCosineSharpness = 0.0315;
inline constexpr double kCosineAmplitude = 32.7080;
inline constexpr double kCosineOffset = -31.7003;

/// Per-label roughness (log of the specular lobe sharpness, one value shared
/// by all color channels) and RGB specular amplitude.
struct SemanticMaterialTable {
    std::vector<double> log_sharpness;
    std::vector<Vec3> specular;

    SemanticMaterialTable() = default;
    SemanticMaterialTable(int label_count, double sharpness, const Vec3& spec);

    int size() const { return static_cast<int>(log_sharpness.size()); }
    void validate() const;
};

std::string to_mtlsem_text(const SemanticMaterialTable& table);
SemanticMaterialTable parse_mtlsem_text(const std::string& text);

/// Spatially varying material over one UV atlas. Offsets are additive fields
/// on top of the semantic table: roughness in log-sharpness space, specular
/// in amplitude space (clamped to [0,1] after the offset).
struct MaterialModel {
    Image albedo;             // 3 channels in [0,1]
    SemanticMaterialTable table;
    Image roughness_offset;   // 1 channel
    Image specular_offset;    // 3 channels
    LabelImage label_atlas;   // nearest-texel label ids

    static MaterialModel uniform(int width, int height, const Vec3& albedo, const SemanticMaterialTable& table);

    int width() const { return albedo.width(); }
    int height() const { return albedo.height(); }
    void validate() const;
};

void save_material(const std::filesystem::path& dir, const MaterialModel& model);
MaterialModel load_material(const std::filesystem::path& dir);

struct SurfaceSample {
    Vec3 position;
    Vec3 normal;
    Vec2 uv;
    std::uint16_t label = 0;
};

struct MaterialValues {
    Vec3 albedo;
    double sharpness = 1;  // specular lobe sharpness lambda_x
    Vec3 specular;         // specular amplitude mu_x
};

MaterialValues material_at(const MaterialModel& model, Vec2 uv, std::uint16_t label);

struct CosineLobe {
    SphericalGaussian lobe;
    double offset;
};
CosineLobe cosine_sg(const Vec3& normal);

double schlick_fresnel(double cos_theta, double f0);
Vec3 schlick_fresnel(double cos_theta, const Vec3& f0);
/// Smith-Schlick masking-shadowing for both directions, with the incident
/// direction frozen at the mirror direction (so both cosines equal n.wo).
/// k = alpha / 2 where alpha = min(1, sqrt(2 / sharpness)).
double smith_geometry(double n_dot_wo, double sharpness);
/// M_x: Fresnel times geometry evaluated at the reflected direction.
Vec3 fresnel_shadow(const Vec3& wo, const Vec3& n, const Vec3& f0, double sharpness);

/// Specular lobe warped from the half-vector domain into an SG over the
/// incident direction. The specular amplitude doubles as F0.
SphericalGaussian specular_sg(const Vec3& wo, const SurfaceSample& sample, double sharpness, const Vec3& specular);

/// Direct BRDF evaluation in half-vector form: albedo/pi + A exp(lambda (h.n - 1)),
/// A = fresnel_shadow(...) * specular.
Vec3 brdf_eval(const Vec3& wo, const Vec3& wi, const MaterialValues& m, const SurfaceSample& sample);

/// Per-label difference between the mean of the top 20% and the bottom 20%
/// of specular values. Labels are 0..label_count-1; every label needs pixels.
std::vector<double> init_specular_from_derendered(const Image& specular_image, const LabelImage& labels,
                                                  int label_count);
/// Maps relative initializations into [0,1] by the per-image maximum.
std::vector<double> normalize_specular_init(const std::vector<double>& relative);

}  // namespace matedit
