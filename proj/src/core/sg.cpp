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

#include "core/sg.hpp"

#include <iomanip>
#include <sstream>

namespace matedit {

namespace {
constexpr double kUnitTolerance = 1e-9;
// Relative size of the resultant below which a product is treated as constant.
constexpr double kDegenerateRatio = 1e-12;
}  // namespace

SphericalGaussian::SphericalGaussian(const Vec3& axis, double sharpness, double amplitude)
    : axis_(axis), sharpness_(sharpness), amplitude_(Vec3::splat(amplitude)), channels_(1) {
    validate();
}

SphericalGaussian::SphericalGaussian(const Vec3& axis, double sharpness, const Vec3& amplitude)
    : axis_(axis), sharpness_(sharpness), amplitude_(amplitude), channels_(3) {
    validate();
}

SphericalGaussian::SphericalGaussian(const Vec3& axis, double sharpness, std::span<const double> amplitude)
    : axis_(axis), sharpness_(sharpness) {
    if (amplitude.size() == 1) {
        amplitude_ = Vec3::splat(amplitude[0]);
        channels_ = 1;
    } else if (amplitude.size() == 3) {
        amplitude_ = {amplitude[0], amplitude[1], amplitude[2]};
        channels_ = 3;
    } else {
        fail(ErrorCode::InvalidArgument, "spherical gaussian amplitude must have 1 or 3 channels, got " +
                                             std::to_string(amplitude.size()));
    }
    validate();
}

void SphericalGaussian::validate() const {
    require(is_unit(axis_, kUnitTolerance), "sg axis must be unit length");
    require(std::isfinite(sharpness_) && sharpness_ > 0.0, "sg sharpness must be positive");
    for (int c = 0; c < 3; ++c)
        require(std::isfinite(amplitude_[c]) && amplitude_[c] >= 0.0, "sg amplitude must be non-negative");
}

Vec3 eval_sg(const SphericalGaussian& sg, const Vec3& direction) {
    require(is_unit(direction, kUnitTolerance), "eval_sg: direction must be unit length");
    return sg.amplitude() * std::exp(sg.sharpness() * (dot(direction, sg.axis()) - 1.0));
}

SgProduct multiply(const SphericalGaussian& a, const SphericalGaussian& b) {
    const Vec3 u = a.sharpness() * a.axis() + b.sharpness() * b.axis();
    const double lambda = norm(u);
    const int channels = std::max(a.channels(), b.channels());
    const Vec3 mu = a.amplitude() * b.amplitude();
    if (lambda <= kDegenerateRatio * (a.sharpness() + b.sharpness())) {
        return ConstantLobe{mu * std::exp(-a.sharpness() - b.sharpness()), channels};
    }
    const Vec3 amp = mu * std::exp(lambda - a.sharpness() - b.sharpness());
    if (channels == 1) return SphericalGaussian(u / lambda, lambda, amp.x);
    return SphericalGaussian(u / lambda, lambda, amp);
}

SphericalGaussian sg_product(const SphericalGaussian& a, const SphericalGaussian& b) {
    SgProduct p = multiply(a, b);
    if (auto* c = std::get_if<ConstantLobe>(&p)) throw DegenerateLobeError(*c);
    return std::get<SphericalGaussian>(p);
}

double product_integral(const Vec3& u, double s) {
    const double m = norm(u);
    const double ratio = m < 1e-8 ? 2.0 - 2.0 * m : -std::expm1(-2.0 * m) / m;
    return std::exp(m - s) * 2.0 * kPi * ratio;
}

ProductIntegralGrad product_integral_grad(const Vec3& u, double s) {
    const double m = norm(u);
    ProductIntegralGrad g;
    g.value = product_integral(u, s);
    g.d_s = -g.value;
    // d/du = u * 4*pi*exp(-s) * (m cosh m - sinh m) / m^3
    double scale;
    if (m < 1e-2) {
        const double m2 = m * m;
        scale = 4.0 * kPi * std::exp(-s) * (1.0 / 3.0 + m2 / 30.0 + m2 * m2 / 840.0);
    } else {
        const double e2 = std::exp(-2.0 * m);
        scale = 2.0 * kPi * std::exp(m - s) * (m * (1.0 + e2) + std::expm1(-2.0 * m)) / (m * m * m);
    }
    g.d_u = u * scale;
    return g;
}

Vec3 sg_integral(const SphericalGaussian& sg) {
    const double l = sg.sharpness();
    return sg.amplitude() * (2.0 * kPi * (-std::expm1(-2.0 * l)) / l);
}

Vec3 sg_inner_product(const SphericalGaussian& a, const SphericalGaussian& b) {
    const Vec3 u = a.sharpness() * a.axis() + b.sharpness() * b.axis();
    return a.amplitude() * b.amplitude() * product_integral(u, a.sharpness() + b.sharpness());
}

// ---------------------------------------------------------------------------

SGMixture::SGMixture(std::vector<SphericalGaussian> lobes) : lobes_(std::move(lobes)) {
    require(!lobes_.empty(), "sg mixture needs at least one lobe");
    for (const auto& l : lobes_)
        require(l.channels() == lobes_.front().channels(), "sg mixture lobes must share a channel count");
}

SGMixture SGMixture::concat(const SGMixture& other) const {
    std::vector<SphericalGaussian> all = lobes_;
    all.insert(all.end(), other.lobes_.begin(), other.lobes_.end());
    return SGMixture(std::move(all));
}

Vec3 eval_mixture(const SGMixture& env, const Vec3& direction) {
    Vec3 sum;
    for (const auto& lobe : env.lobes()) sum += eval_sg(lobe, direction);
    return sum;
}

std::string to_sgmix_text(const SGMixture& env) {
    std::ostringstream out;
    out << "SGMIX v1\n" << std::setprecision(17);
    for (const auto& l : env.lobes()) {
        out << l.axis().x << ' ' << l.axis().y << ' ' << l.axis().z << ' ' << l.sharpness() << ' '
            << l.amplitude().x << ' ' << l.amplitude().y << ' ' << l.amplitude().z << '\n';
    }
    return out.str();
}

SGMixture parse_sgmix_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("SGMIX v1", 0) != 0)
        fail(ErrorCode::Io, "missing 'SGMIX v1' header");
    std::vector<SphericalGaussian> lobes;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
        std::istringstream fields(line);
        double v[7];
        for (double& f : v)
            if (!(fields >> f)) fail(ErrorCode::Io, "sgmix line " + std::to_string(line_no) + ": expected 7 numbers");
        // re-normalize axes written with limited precision
        Vec3 axis{v[0], v[1], v[2]};
        if (!is_unit(axis, 1e-6)) fail(ErrorCode::Io, "sgmix line " + std::to_string(line_no) + ": axis not unit");
        lobes.emplace_back(normalize(axis), v[3], Vec3{v[4], v[5], v[6]});
    }
    if (lobes.size() > static_cast<size_t>(SGMixture::kMaxLobes))
        fail(ErrorCode::Io, "sgmix has more than 128 lobes");
    return SGMixture(std::move(lobes));
}

void save_sgmix(const std::filesystem::path& path, const SGMixture& env) {
    write_file(path, to_sgmix_text(env));
}

SGMixture load_sgmix(const std::filesystem::path& path) { return parse_sgmix_text(read_file(path)); }

Vec3 latlong_direction(int x, int y, int width, int height) {
    const double phi = 2.0 * kPi * (x + 0.5) / width;
    const double theta = kPi * (y + 0.5) / height;
    return {std::sin(theta) * std::cos(phi), std::cos(theta), std::sin(theta) * std::sin(phi)};
}

double latlong_solid_angle(int y, int width, int height) {
    const double t0 = kPi * y / height;
    const double t1 = kPi * (y + 1) / height;
    return (std::cos(t0) - std::cos(t1)) * 2.0 * kPi / width;
}

Image rasterize_latlong(const SGMixture& env, int width, int height) {
    require(width >= 1 && height >= 1, "rasterize_latlong: bad size");
    Image img(width, height, 3);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) set_rgb(img, x, y, eval_mixture(env, latlong_direction(x, y, width, height)));
    return img;
}

std::vector<Vec3> fibonacci_sphere(int count) {
    require(count >= 1, "fibonacci_sphere: count must be >= 1");
    std::vector<Vec3> pts;
    pts.reserve(count);
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / count;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * i;
        pts.push_back(normalize(Vec3{r * std::cos(phi), r * std::sin(phi), z}));
    }
    return pts;
}

}  // namespace matedit
