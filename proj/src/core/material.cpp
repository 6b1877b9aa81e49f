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

#include "core/material.hpp"

#include <iomanip>
#include <sstream>

#include "core/texture.hpp"

namespace matedit {

SemanticMaterialTable::SemanticMaterialTable(int label_count, double sharpness, const Vec3& spec) {
    require(label_count >= 1, "material table needs at least one label");
    require(sharpness > 0, "material table sharpness must be positive");
    log_sharpness.assign(label_count, std::log(sharpness));
    specular.assign(label_count, spec);
    validate();
}

void SemanticMaterialTable::validate() const {
    require(!log_sharpness.empty(), "material table is empty");
    require(log_sharpness.size() == specular.size(), "material table rows disagree");
    for (size_t i = 0; i < log_sharpness.size(); ++i) {
        require(std::isfinite(log_sharpness[i]) && std::isfinite(std::exp(log_sharpness[i])),
                "roughness entry must be finite");
        for (int c = 0; c < 3; ++c)
            require(specular[i][c] >= 0.0 && specular[i][c] <= 1.0, "specular entries must lie in [0,1]");
    }
}

std::string to_mtlsem_text(const SemanticMaterialTable& table) {
    std::ostringstream out;
    out << "MTL-SEM v1\n" << std::setprecision(17);
    for (int i = 0; i < table.size(); ++i) {
        out << i << ' ' << table.log_sharpness[i] << ' ' << table.specular[i].x << ' ' << table.specular[i].y
            << ' ' << table.specular[i].z << '\n';
    }
    return out.str();
}

SemanticMaterialTable parse_mtlsem_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("MTL-SEM v1", 0) != 0) fail(ErrorCode::Io, "missing 'MTL-SEM v1' header");
    SemanticMaterialTable table;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
        std::istringstream fields(line);
        int label;
        double r, sr, sg, sb;
        if (!(fields >> label >> r >> sr >> sg >> sb)) fail(ErrorCode::Io, "malformed MTL-SEM row: " + line);
        if (label != table.size()) fail(ErrorCode::Io, "MTL-SEM rows must list labels 0..N-1 in order");
        table.log_sharpness.push_back(r);
        table.specular.push_back({sr, sg, sb});
    }
    try {
        table.validate();
    } catch (const Error& e) {
        fail(ErrorCode::Io, std::string("invalid MTL-SEM table: ") + e.what());
    }
    return table;
}

MaterialModel MaterialModel::uniform(int width, int height, const Vec3& albedo, const SemanticMaterialTable& table) {
    MaterialModel m;
    m.albedo = Image(width, height, 3);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) set_rgb(m.albedo, x, y, albedo);
    m.table = table;
    m.roughness_offset = Image(width, height, 1);
    m.specular_offset = Image(width, height, 3);
    m.label_atlas = LabelImage(width, height, 1, 0);
    m.validate();
    return m;
}

void MaterialModel::validate() const {
    table.validate();
    require(albedo.channels() == 3 && !albedo.empty(), "albedo must be a non-empty RGB texture");
    require(roughness_offset.channels() == 1 && roughness_offset.same_shape(albedo),
            "roughness offset must be 1-channel at the albedo resolution");
    require(specular_offset.channels() == 3 && specular_offset.same_shape(albedo),
            "specular offset must be 3-channel at the albedo resolution");
    require(label_atlas.same_shape(albedo), "label atlas must match the albedo resolution");
    for (auto l : label_atlas.values())
        require(l < table.size(), "label atlas references label " + std::to_string(l) + " outside the table");
}

void save_material(const std::filesystem::path& dir, const MaterialModel& model) {
    std::filesystem::create_directories(dir);
    write_pfm(dir / "albedo.pfm", model.albedo);
    write_ppm8(dir / "albedo_preview.ppm", model.albedo);
    write_pfm(dir / "roughness_offset.pfm", model.roughness_offset);
    write_pfm(dir / "specular_offset.pfm", model.specular_offset);
    write_pgm16(dir / "labels.pgm", model.label_atlas);
    write_file(dir / "table.mtlsem", to_mtlsem_text(model.table));
}

MaterialModel load_material(const std::filesystem::path& dir) {
    MaterialModel m;
    m.albedo = read_pfm(dir / "albedo.pfm");
    m.table = parse_mtlsem_text(read_file(dir / "table.mtlsem"));
    m.roughness_offset = std::filesystem::exists(dir / "roughness_offset.pfm")
                             ? read_pfm(dir / "roughness_offset.pfm")
                             : Image(m.albedo.width(), m.albedo.height(), 1);
    m.specular_offset = std::filesystem::exists(dir / "specular_offset.pfm")
                            ? read_pfm(dir / "specular_offset.pfm")
                            : Image(m.albedo.width(), m.albedo.height(), 3);
    m.label_atlas = std::filesystem::exists(dir / "labels.pgm") ? read_pgm16(dir / "labels.pgm")
                                                                : LabelImage(m.albedo.width(), m.albedo.height());
    m.validate();
    return m;
}

MaterialValues material_at(const MaterialModel& model, Vec2 uv, std::uint16_t label) {
    require(uv.x >= 0 && uv.x <= 1 && uv.y >= 0 && uv.y <= 1, "material_at: uv outside [0,1]^2");
    if (label >= model.table.size())
        fail(ErrorCode::UnknownLabel, "unknown semantic label " + std::to_string(label));
    MaterialValues v;
    v.albedo = sample_uv_rgb(model.albedo, uv);
    v.sharpness = std::exp(model.table.log_sharpness[label] + sample_uv(model.roughness_offset, uv));
    v.specular = clamp01(model.table.specular[label] + sample_uv_rgb(model.specular_offset, uv));
    return v;
}

CosineLobe cosine_sg(const Vec3& normal) {
    return {SphericalGaussian(normal, kCosineSharpness, kCosineAmplitude), kCosineOffset};
}

double schlick_fresnel(double cos_theta, double f0) {
    const double m = 1.0 - cos_theta;
    const double m2 = m * m;
    return f0 + (1.0 - f0) * m2 * m2 * m;
}

Vec3 schlick_fresnel(double cos_theta, const Vec3& f0) {
    return {schlick_fresnel(cos_theta, f0.x), schlick_fresnel(cos_theta, f0.y), schlick_fresnel(cos_theta, f0.z)};
}

double smith_geometry(double n_dot_wo, double sharpness) {
    const double alpha = std::min(1.0, std::sqrt(2.0 / sharpness));
    const double k = 0.5 * alpha;
    const double g1 = n_dot_wo / (n_dot_wo * (1.0 - k) + k);
    return g1 * g1;
}

namespace {
double checked_cosine(const Vec3& wo, const Vec3& n) {
    const double c = dot(wo, n);
    if (!(c > 0.0)) fail(ErrorCode::BackFace, "view direction is below the surface");
    return std::min(c, 1.0);
}
}  // namespace

Vec3 fresnel_shadow(const Vec3& wo, const Vec3& n, const Vec3& f0, double sharpness) {
    const double c = checked_cosine(wo, n);
    return schlick_fresnel(c, f0) * smith_geometry(c, sharpness);
}

SphericalGaussian specular_sg(const Vec3& wo, const SurfaceSample& sample, double sharpness, const Vec3& specular) {
    const double c = checked_cosine(wo, sample.normal);
    const Vec3 r = normalize(reflect(wo, sample.normal));
    const Vec3 amp = fresnel_shadow(wo, sample.normal, specular, sharpness) * specular;
    return SphericalGaussian(r, sharpness / (4.0 * c), amp);
}

Vec3 brdf_eval(const Vec3& wo, const Vec3& wi, const MaterialValues& m, const SurfaceSample& sample) {
    checked_cosine(wo, sample.normal);
    const Vec3 diffuse = m.albedo / kPi;
    const Vec3 sum = wo + wi;
    const double len = norm(sum);
    if (len < 1e-12) return diffuse;
    const Vec3 h = sum / len;
    const Vec3 amp = fresnel_shadow(wo, sample.normal, m.specular, m.sharpness) * m.specular;
    return diffuse + amp * std::exp(m.sharpness * (dot(h, sample.normal) - 1.0));
}

std::vector<double> init_specular_from_derendered(const Image& specular_image, const LabelImage& labels,
                                                  int label_count) {
    if (!specular_image.same_shape(labels))
        fail(ErrorCode::ResolutionMismatch, "specular image and labels differ in resolution");
    std::vector<std::vector<double>> members(label_count);
    for (int y = 0; y < labels.height(); ++y)
        for (int x = 0; x < labels.width(); ++x) {
            const auto l = labels.at(x, y);
            if (l < label_count) members[l].push_back(specular_image.at(x, y, 0));
        }
    std::vector<double> out(label_count);
    for (int l = 0; l < label_count; ++l) {
        auto& v = members[l];
        if (v.empty()) fail(ErrorCode::EmptyRegion, "label " + std::to_string(l) + " has no pixels");
        std::sort(v.begin(), v.end());
        const size_t k = std::max<size_t>(1, static_cast<size_t>(std::llround(0.2 * static_cast<double>(v.size()))));
        double lo = 0, hi = 0;
        for (size_t i = 0; i < k; ++i) {
            lo += v[i];
            hi += v[v.size() - 1 - i];
        }
        out[l] = std::max(0.0, (hi - lo) / static_cast<double>(k));
    }
    return out;
}

std::vector<double> normalize_specular_init(const std::vector<double>& relative) {
    const double mx = relative.empty() ? 0.0 : *std::max_element(relative.begin(), relative.end());
    std::vector<double> out(relative.size(), 0.0);
    if (mx > 0)
        for (size_t i = 0; i < relative.size(); ++i) out[i] = relative[i] / mx;
    return out;
}

}  // namespace matedit
