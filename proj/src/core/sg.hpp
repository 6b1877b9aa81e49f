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
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "core/common.hpp"
#include "core/image.hpp"

namespace matedit {

/// Isotropic spherical Gaussian  G(v) = amplitude * exp(sharpness * (dot(v, axis) - 1)).
///
/// Amplitudes carry one or three channels. A single-channel lobe stores its
/// value replicated in all three slots so it broadcasts against RGB lobes.
class SphericalGaussian {
public:
    SphericalGaussian(const Vec3& axis, double sharpness, double amplitude);
    SphericalGaussian(const Vec3& axis, double sharpness, const Vec3& amplitude);
    /// amplitude.size() must be 1 or 3.
    SphericalGaussian(const Vec3& axis, double sharpness, std::span<const double> amplitude);

    const Vec3& axis() const { return axis_; }
    double sharpness() const { return sharpness_; }
    const Vec3& amplitude() const { return amplitude_; }
    int channels() const { return channels_; }

    friend bool operator==(const SphericalGaussian&, const SphericalGaussian&) = default;

private:
    void validate() const;

    Vec3 axis_;
    double sharpness_;
    Vec3 amplitude_;
    int channels_;
};

/// Product of two lobes whose weighted axes cancel: the result is constant
/// over the sphere.
struct ConstantLobe {
    Vec3 value;
    int channels = 3;
};

using SgProduct = std::variant<SphericalGaussian, ConstantLobe>;

class DegenerateLobeError : public Error {
public:
    explicit DegenerateLobeError(const ConstantLobe& c)
        : Error(ErrorCode::DegenerateLobe, "sg product has zero resultant sharpness"), constant_(c) {}
    const ConstantLobe& constant() const { return constant_; }

private:
    ConstantLobe constant_;
};

Vec3 eval_sg(const SphericalGaussian& sg, const Vec3& direction);

/// Exact product; the constant case is returned as a ConstantLobe.
SgProduct multiply(const SphericalGaussian& a, const SphericalGaussian& b);
/// Same as multiply() but throws DegenerateLobeError for the constant case.
SphericalGaussian sg_product(const SphericalGaussian& a, const SphericalGaussian& b);

/// Integral over the full sphere: 2*pi*mu*(1 - exp(-2*lambda))/lambda.
Vec3 sg_integral(const SphericalGaussian& sg);
Vec3 sg_inner_product(const SphericalGaussian& a, const SphericalGaussian& b);

/// Scalar kernel shared by all closed-form integrals: for a product of lobes
/// with unit amplitudes, combined vector u = sum(lambda_i * xi_i) and
/// s = sum(lambda_i), returns exp(|u| - s) * 2*pi*(1 - exp(-2|u|)) / |u|.
double product_integral(const Vec3& u, double s);

/// product_integral with its partial derivatives: d/du and d/ds.
struct ProductIntegralGrad {
    double value;
    Vec3 d_u;
    double d_s;
};
ProductIntegralGrad product_integral_grad(const Vec3& u, double s);

class SGMixture {
public:
    static constexpr int kDefaultLobes = 32;
    static constexpr int kMaxLobes = 128;

    SGMixture() = default;
    explicit SGMixture(std::vector<SphericalGaussian> lobes);

    const std::vector<SphericalGaussian>& lobes() const { return lobes_; }
    size_t size() const { return lobes_.size(); }
    int channels() const { return lobes_.empty() ? 3 : lobes_.front().channels(); }

    /// Concatenation; eval of the result is the sum of both parts.
    SGMixture concat(const SGMixture& other) const;

private:
    std::vector<SphericalGaussian> lobes_;
};

Vec3 eval_mixture(const SGMixture& env, const Vec3& direction);

/// "SGMIX v1" text format, one lobe per line: axis xyz, sharpness, rgb amplitude.
std::string to_sgmix_text(const SGMixture& env);
SGMixture parse_sgmix_text(const std::string& text);
void save_sgmix(const std::filesystem::path& path, const SGMixture& env);
SGMixture load_sgmix(const std::filesystem::path& path);

/// Lat-long layout: column -> azimuth phi in [0, 2pi), row -> polar angle
/// theta in [0, pi) measured from +Y (the scene up axis); samples at pixel
/// centers.
Vec3 latlong_direction(int x, int y, int width, int height);
/// Solid angle covered by a lat-long pixel in row y.
double latlong_solid_angle(int y, int width, int height);
Image rasterize_latlong(const SGMixture& env, int width, int height);

/// Deterministic quasi-uniform points on the unit sphere.
std::vector<Vec3> fibonacci_sphere(int count);

}  // namespace matedit
